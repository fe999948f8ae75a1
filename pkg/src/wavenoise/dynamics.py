"""Time integration of the Galerkin wave systems.

Models (v = du/dt, lambda_j = 4 pi^2 |j|^2):

    SWE1         dv = (Delta u + Pi f(u)) dt + sum_c Pi(sigma_c . grad u) dB_c
    SWE2         dv = (Delta u + Pi f(u) + kappa Delta v) dt + sum_c Pi(sigma_c . grad v) dB_c
    WAVE         dv = (Delta u + Pi f(u)) dt
    DAMPED_WAVE  dv = (Delta u + Pi f(u) + kappa Delta v) dt

Schemes:

    EULER_MARUYAMA     explicit Euler in the drift, left-point noise (Ito).
    EXP_EULER          position Verlet for the wave part with the heat factor
                       exp(-kappa lambda dt) applied exactly to v, the forcing
                       and the left-point noise (mild form). With kappa = 0 it
                       is plain Stormer-Verlet plus Ito noise.
    STRATONOVICH_HEUN  predictor-corrector in drift and noise; for SWE2 the
                       kappa Delta v term is left out, since the scheme itself
                       produces the Ito correction.

All kernels work on coefficient arrays with a leading path axis, so an
ensemble advances as one batch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .noise import NoiseBasis, TransportSum, kappa_eff
from .nonlinearity import Nonlinearity, apply_f_coeffs
from .rng import BrownianDriver
from .spectral import FOUR_PI_SQ, LatticeSpec, SpectralField, fft_size, sobolev_norm_sq

BLOWUP_ENERGY = 1e12


class Model(str, enum.Enum):
    SWE1 = "SWE1"
    SWE2 = "SWE2"
    WAVE = "WAVE"
    DAMPED_WAVE = "DAMPED_WAVE"

    @property
    def noisy(self) -> bool:
        return self in (Model.SWE1, Model.SWE2)

    @property
    def damped(self) -> bool:
        return self in (Model.SWE2, Model.DAMPED_WAVE)


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "EULER_MARUYAMA"
    EXP_EULER = "EXP_EULER"
    STRATONOVICH_HEUN = "STRATONOVICH_HEUN"


DEFAULT_SCHEME = Scheme.EXP_EULER


class SimulationBlowup(RuntimeError):
    """Energy left the finite range; most likely a time step that is too large."""

    def __init__(self, t: float, last_energy: float):
        super().__init__(
            f"energy exceeded {BLOWUP_ENERGY:g} or became non-finite at t={t:.6g} "
            f"(last finite energy {last_energy:.6g}); reduce dt"
        )
        self.t = t
        self.last_energy = last_energy


@dataclass(frozen=True)
class ModelSpec:
    model: Model
    f: Nonlinearity | str = Nonlinearity()
    basis: NoiseBasis | None = None
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if isinstance(self.f, str):
            object.__setattr__(self, "f", Nonlinearity.parse(self.f))
        if self.model.noisy and self.basis is None:
            raise ValueError(f"{self.model.value} needs a noise basis")
        if not self.model.noisy and self.basis is not None:
            raise ValueError(f"{self.model.value} is deterministic; do not pass a noise basis")
        if self.model is Model.DAMPED_WAVE and not self.kappa > 0:
            raise ValueError(f"{self.model.value} needs kappa > 0, got {self.kappa}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")

    @classmethod
    def swe(cls, model, basis: NoiseBasis, f: Nonlinearity | str = Nonlinearity()) -> "ModelSpec":
        """SWE1/SWE2 with kappa taken from the constructed covariance."""
        model = Model(model)
        return cls(model, f, basis, kappa_eff(basis) if model is Model.SWE2 else 0.0)

    def limit(self) -> "ModelSpec":
        """Deterministic limit: WAVE for SWE1, DAMPED_WAVE for SWE2."""
        if self.model is Model.SWE1:
            return ModelSpec(Model.WAVE, self.f)
        if self.model is Model.SWE2:
            # a zero-amplitude noise family has kappa_eff = 0 and no damping
            if self.kappa == 0:
                return ModelSpec(Model.WAVE, self.f)
            return ModelSpec(Model.DAMPED_WAVE, self.f, kappa=self.kappa)
        return self


@dataclass(frozen=True)
class GalerkinState:
    t: float
    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.lattice != self.v.lattice:
            raise ValueError("u and v must share one lattice")
        if not (self.u.is_scalar and self.v.is_scalar):
            raise ValueError("u and v must be scalar fields")

    @property
    def lattice(self) -> LatticeSpec:
        return self.u.lattice

    @classmethod
    def zero(cls, lattice: LatticeSpec) -> "GalerkinState":
        z = SpectralField.zeros(lattice)
        return cls(0.0, z, z)

    def project_to(self, lattice: LatticeSpec) -> "GalerkinState":
        """Restrict or zero-pad onto another lattice of the same dimension."""
        if lattice.n <= self.lattice.n:
            return GalerkinState(self.t, self.u.restrict(lattice), self.v.restrict(lattice))
        return GalerkinState(self.t, self.u.embed(lattice), self.v.embed(lattice))


class Integrator:
    """Precomputed operators for one (model, scheme, dt, lattice) combination."""

    def __init__(self, model: ModelSpec, scheme: Scheme | str, dt: float,
                 lattice: LatticeSpec, dealias_level: float = 2.0):
        scheme = Scheme(scheme)
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if scheme is Scheme.STRATONOVICH_HEUN and not model.model.noisy:
            raise ValueError("STRATONOVICH_HEUN is only meaningful for SWE1/SWE2")
        if model.basis is not None and model.basis.d != lattice.d:
            raise ValueError("noise basis and lattice have different dimensions")
        self.model = model
        self.scheme = scheme
        self.dt = float(dt)
        self.lattice = lattice
        self.dealias_level = dealias_level
        self.lam = FOUR_PI_SQ * lattice.norm_sq
        self.kappa = model.kappa if model.model.damped else 0.0
        x = self.kappa * self.lam * self.dt
        self.heat = np.exp(-x)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.phi = np.where(x > 1e-12, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1.0 - x / 2)
        self.transport = TransportSum(model.basis, lattice) if model.model.noisy else None
        self.codes = model.basis.channel_codes if model.model.noisy else np.zeros(0, np.uint64)

    # -- pieces -----------------------------------------------------------

    def force(self, u: np.ndarray) -> np.ndarray:
        """Delta u + Pi f(u)."""
        return -self.lam * u + apply_f_coeffs(self.model.f, u, self.lattice, self.dealias_level)

    def drift(self, u, v, *, ito_damping: bool = True):
        dv = self.force(u)
        if ito_damping and self.kappa:
            dv = dv - self.kappa * self.lam * v
        return v, dv

    def diffusion(self, u, v, incr: np.ndarray) -> np.ndarray:
        if self.transport is None:
            return np.zeros_like(v)
        target = u if self.model.model is Model.SWE1 else v
        return self.transport.apply(incr, target)

    # -- one step -----------------------------------------------------------

    def step(self, u: np.ndarray, v: np.ndarray, incr: np.ndarray | None):
        dt = self.dt
        if incr is None or self.transport is None:
            incr = None
        if self.scheme is Scheme.EULER_MARUYAMA:
            du, dv = self.drift(u, v)
            noise = 0.0 if incr is None else self.diffusion(u, v, incr)
            return u + dt * du, v + dt * dv + noise
        if self.scheme is Scheme.EXP_EULER:
            noise = 0.0 if incr is None else self.diffusion(u, v, incr)
            u_half = u + 0.5 * dt * v
            v_new = self.heat * (v + noise) + self.phi * dt * self.force(u_half)
            return u_half + 0.5 * dt * v_new, v_new
        # Stratonovich Heun: average drift and noise over current and predicted states
        du0, dv0 = self.drift(u, v, ito_damping=False)
        g0 = 0.0 if incr is None else self.diffusion(u, v, incr)
        up, vp = u + dt * du0, v + dt * dv0 + g0
        du1, dv1 = self.drift(up, vp, ito_damping=False)
        g1 = 0.0 if incr is None else self.diffusion(up, vp, incr)
        return u + 0.5 * dt * (du0 + du1), v + 0.5 * dt * (dv0 + dv1) + 0.5 * (g0 + g1)

    def energy(self, u, v) -> np.ndarray:
        return sobolev_norm_sq(u, self.lattice, 1.0) + sobolev_norm_sq(v, self.lattice, 0.0)


def time_grid(T: float, dt: float, save_times: Sequence[float] | None = None):
    """Number of steps and the step index of every save time."""
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a whole number of steps of size {dt}")
    if save_times is None:
        save_times = [T]
    idx = []
    for t in save_times:
        if t < -1e-12 or t > T + 1e-9 * max(1.0, T):
            raise ValueError(f"save time {t} outside [0, {T}]")
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, T):
            raise ValueError(f"save time {t} does not fall on the time grid of step {dt}")
        idx.append(k)
    return steps, idx


def uniform_save_times(T: float, count: int = 65, dt: float | None = None) -> list:
    """``count`` evenly spread times in [0, T], snapped to the step grid when dt is given."""
    if count < 2:
        raise ValueError("need at least two save times")
    if dt is None:
        return [T * i / (count - 1) for i in range(count)]
    steps = int(round(T / dt))
    idx = sorted({int(round(i * steps / (count - 1))) for i in range(count)})
    return [k * dt for k in idx]


Observer = Callable[[int, float, np.ndarray, np.ndarray], None]


def integrate_batch(integrator: Integrator, u0: np.ndarray, v0: np.ndarray, T: float,
                    driver: BrownianDriver | None, save_times, paths,
                    observer: Observer) -> None:
    """Advance a batch of paths, calling ``observer(i, t, u, v)`` at save times.

    ``u0``/``v0`` are (M,) or (B, M); path ``paths[b]`` draws its increments
    from ``driver`` under that path id.
    """
    integrate_lockstep([integrator], [(u0, v0)], T, driver, save_times, paths,
                       lambda i, t, states: observer(i, t, *states[0]))


def integrate_lockstep(integrators: Sequence[Integrator], inits, T: float,
                       driver: BrownianDriver | None, save_times, paths,
                       observer: Callable) -> None:
    """Advance several systems on the same Brownian paths.

    Every integrator draws its increments from ``driver`` by its own channel
    codes, so systems sharing a channel see the same increment. ``observer``
    is called as ``observer(i, t, [(u, v), ...])`` at save time ``i``.
    """
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    b = len(paths)
    dt = integrators[0].dt
    if any(not np.isclose(it.dt, dt, rtol=1e-12) for it in integrators):
        raise ValueError("lockstep integrators must share one time step")
    states = []
    for it, (u0, v0) in zip(integrators, inits):
        shape = (b, it.lattice.size)
        states.append((np.broadcast_to(np.asarray(u0, dtype=complex), shape).copy(),
                       np.broadcast_to(np.asarray(v0, dtype=complex), shape).copy()))
    steps, save_idx = time_grid(T, dt, save_times)
    noisy = any(it.transport is not None for it in integrators)
    if noisy and driver is None:
        raise ValueError("a noisy model needs a Brownian driver")
    if noisy and not np.isclose(driver.dt, dt, rtol=1e-12):
        raise ValueError(f"driver dt {driver.dt} differs from integrator dt {dt}")
    order = sorted(range(len(save_idx)), key=lambda i: save_idx[i])
    pos = 0
    last = max(float(np.max(it.energy(u, v))) for it, (u, v) in zip(integrators, states))
    for k in range(steps + 1):
        while pos < len(order) and save_idx[order[pos]] == k:
            observer(order[pos], k * dt, states)
            pos += 1
        if k == steps:
            break
        top = 0.0
        for j, it in enumerate(integrators):
            incr = (driver.increments(it.codes, k, paths)
                    if it.transport is not None else None)
            u, v = it.step(*states[j], incr)
            states[j] = (u, v)
            top = max(top, float(np.max(it.energy(u, v))))
        if not np.isfinite(top) or top > BLOWUP_ENERGY:
            raise SimulationBlowup((k + 1) * dt, last)
        last = top


# -- public single-path API ---------------------------------------------------------


def drift(model: ModelSpec, state: GalerkinState, dealias_level: float = 2.0):
    """(du/dt, dv/dt) including kappa Delta v for SWE2/DAMPED_WAVE."""
    integ = Integrator(model, Scheme.EULER_MARUYAMA, 1.0, state.lattice, dealias_level)
    du, dv = integ.drift(state.u.coeffs, state.v.coeffs)
    return state.u.with_coeffs(du), state.v.with_coeffs(dv)


def diffusion(model: ModelSpec, state: GalerkinState, increments) -> SpectralField:
    """sum_c Pi(sigma_c . grad u) dB_c (SWE1) or with v (SWE2).

    ``increments`` is an array over the basis channels or a map code -> value.
    """
    if not model.model.noisy:
        raise ValueError(f"{model.model.value} has no noise term")
    basis = model.basis
    if isinstance(increments, dict):
        increments = np.array([increments.get(int(c), 0.0) for c in basis.channel_codes])
    integ = Integrator(model, Scheme.EULER_MARUYAMA, 1.0, state.lattice)
    out = integ.diffusion(state.u.coeffs, state.v.coeffs, np.atleast_2d(increments))
    return state.v.with_coeffs(out[0])


def step(model: ModelSpec, scheme, state: GalerkinState, driver: BrownianDriver | None,
         step_index: int, path: int = 0, dt: float | None = None) -> GalerkinState:
    """One step from ``state``; increments come from ``driver`` at ``step_index``."""
    if dt is None:
        if driver is None:
            raise ValueError("give dt when there is no driver")
        dt = driver.dt
    integ = Integrator(model, scheme, dt, state.lattice)
    incr = None
    if integ.transport is not None:
        if driver is None:
            raise ValueError("a noisy model needs a Brownian driver")
        incr = driver.increments(integ.codes, step_index, (path,))
    u, v = integ.step(state.u.coeffs, state.v.coeffs, incr)
    return GalerkinState(state.t + dt, state.u.with_coeffs(u[0]), state.v.with_coeffs(v[0]))


def run(model: ModelSpec, scheme, init: GalerkinState, T: float,
        driver: BrownianDriver | None, save_times=None, *, dt: float | None = None,
        path: int = 0, dealias_level: float = 2.0) -> list:
    """Trajectory [(t, GalerkinState)] at ``save_times`` (default: [T])."""
    if dt is None:
        if driver is None:
            raise ValueError("give dt when there is no driver")
        dt = driver.dt
    if save_times is None:
        save_times = [T]
    if T == 0:
        return [(0.0, init)]
    integ = Integrator(model, scheme, dt, init.lattice, dealias_level)
    out = [None] * len(save_times)
    lat = init.lattice

    def keep(i, t, u, v):
        out[i] = (init.t + t, GalerkinState(init.t + t, SpectralField(lat, u[0]),
                                             SpectralField(lat, v[0])))

    integrate_batch(integ, init.u.coeffs[0], init.v.coeffs[0], T, driver, save_times,
                    [path], keep)
    return out


def run_ensemble(model: ModelSpec, scheme, init: GalerkinState, T: float,
                 driver: BrownianDriver | None, save_times, paths, observer: Observer,
                 *, dt: float | None = None, batch_size: int = 64,
                 dealias_level: float = 2.0) -> None:
    """Run many paths in batches; ``observer(i, t, u, v, path_ids)`` sees each batch."""
    if dt is None:
        dt = driver.dt
    integ = Integrator(model, scheme, dt, init.lattice, dealias_level)
    paths = list(paths)
    for start in range(0, len(paths), batch_size):
        chunk = paths[start:start + batch_size]
        integrate_batch(integ, init.u.coeffs[0], init.v.coeffs[0], T, driver, save_times,
                        chunk, lambda i, t, u, v, c=chunk: observer(i, t, u, v, c))


def coupled_pair_run(model: ModelSpec, scheme, init: GalerkinState, T: float,
                     driver: BrownianDriver | None, fine: int, coarse: int,
                     save_times=None, *, dt: float | None = None, path: int = 0):
    """Trajectories at truncations ``fine`` > ``coarse`` driven by one Brownian path.

    Both start from the projection of ``init``; returns (fine_traj, coarse_traj).
    """
    if fine <= coarse:
        raise ValueError(f"fine truncation {fine} must exceed coarse truncation {coarse}")
    if fine > init.lattice.n:
        raise ValueError(f"fine truncation {fine} exceeds the initial data lattice {init.lattice.n}")
    d = init.lattice.d
    hi = init.project_to(LatticeSpec(d, fine))
    lo = init.project_to(LatticeSpec(d, coarse))
    return (run(model, scheme, hi, T, driver, save_times, dt=dt, path=path),
            run(model, scheme, lo, T, driver, save_times, dt=dt, path=path))


# -- initial data --------------------------------------------------------------


def initial_state(lattice: LatticeSpec, how: str, seed: int = 0) -> GalerkinState:
    """``single-mode:j1,j2[,j3]`` (u = cos 2 pi j.x, v = 0),
    ``random-h1:amplitude`` or a path to a JSON snapshot {"u": field, "v": field}."""
    from .spectral import field_from_json

    if how.startswith("single-mode:"):
        j = tuple(int(c) for c in how.split(":", 1)[1].split(","))
        if len(j) != lattice.d:
            raise ValueError(f"mode {j} does not have dimension {lattice.d}")
        return GalerkinState(0.0, SpectralField.cosine(lattice, j), SpectralField.zeros(lattice))
    if how.startswith("random-h1:"):
        amp = float(how.split(":", 1)[1])
        rng = np.random.default_rng(seed)
        u = SpectralField.random(lattice, rng, decay=lattice.d / 2 + 2.0)
        v = SpectralField.random(lattice, rng, decay=lattice.d / 2 + 1.0)
        u = u * (amp / np.sqrt(np.sum(sobolev_norm_sq(u.coeffs, lattice, 1.0))))
        v = v * (amp / np.sqrt(np.sum(sobolev_norm_sq(v.coeffs, lattice, 0.0))))
        return GalerkinState(0.0, u, v)
    import json
    from pathlib import Path

    data = json.loads(Path(how).read_text())
    u = field_from_json(data["u"])
    v = field_from_json(data["v"])
    state = GalerkinState(0.0, u, v)
    return state if u.lattice == lattice else state.project_to(lattice)


def product_grid_points(lattice: LatticeSpec, basis: NoiseBasis) -> int:
    return fft_size(2 * lattice.n + basis.spec.max_k_inf + 1)
