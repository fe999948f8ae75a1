"""Energies, difference energies, increment moments and stochastic convolutions."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import GalerkinState
from .noise import NoiseBasis, TransportSum, transport_apply
from .rng import BrownianDriver
from .spectral import (FOUR_PI_SQ, LatticeSpec, SpectralField, heat_factor,
                       sobolev_norm_sq, sobolev_weights)


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    e_u_h1: float
    e_v_l2: float
    total: float


@dataclass(frozen=True)
class DifferenceEnergy:
    t: float
    n_low: int
    n_high: int
    w_l2: float
    z_hm1: float
    total: float


def energy(state: GalerkinState) -> EnergyRecord:
    """||u||_{H^1}^2 + ||v||_{L^2}^2."""
    lat = state.lattice
    eu = float(np.sum(sobolev_norm_sq(state.u.coeffs, lat, 1.0)))
    ev = float(np.sum(sobolev_norm_sq(state.v.coeffs, lat, 0.0)))
    return EnergyRecord(state.t, eu, ev, eu + ev)


def energy_arrays(u: np.ndarray, v: np.ndarray, lattice: LatticeSpec) -> np.ndarray:
    return sobolev_norm_sq(u, lattice, 1.0) + sobolev_norm_sq(v, lattice, 0.0)


def wave_energy(state: GalerkinState) -> float:
    """||grad u||^2 + ||v||^2, conserved by the free wave flow."""
    lat = state.lattice
    grad = FOUR_PI_SQ * lat.norm_sq * np.abs(state.u.coeffs[0]) ** 2
    return float(np.sum(grad) + np.sum(np.abs(state.v.coeffs[0]) ** 2))


def _difference_arrays(fine_u, fine_v, coarse_u, coarse_v, fine: LatticeSpec,
                       coarse: LatticeSpec):
    idx = fine.embed_index(coarse)
    w = np.array(fine_u, dtype=complex, copy=True)
    z = np.array(fine_v, dtype=complex, copy=True)
    w[..., idx] -= coarse_u
    z[..., idx] -= coarse_v
    return sobolev_norm_sq(w, fine, 0.0), sobolev_norm_sq(z, fine, -1.0)


def difference_energy_arrays(fine_u, fine_v, coarse_u, coarse_v, fine: LatticeSpec,
                             coarse: LatticeSpec) -> np.ndarray:
    """N_{m,n} = ||u_m - u_n||_{L^2}^2 + ||v_m - v_n||_{H^-1}^2 on coefficient arrays."""
    w, z = _difference_arrays(fine_u, fine_v, coarse_u, coarse_v, fine, coarse)
    return w + z


def difference_energy(pair) -> tuple:
    """Per-save-time N_{m,n} records for (fine_traj, coarse_traj), plus the sup."""
    fine_traj, coarse_traj = pair
    if len(fine_traj) != len(coarse_traj):
        raise ValueError("trajectories have different numbers of snapshots")
    records = []
    for (tf, sf), (tc, sc) in zip(fine_traj, coarse_traj):
        if not math.isclose(tf, tc, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"misaligned save times {tf} and {tc}")
        big, small = (sf, sc) if sf.lattice.n >= sc.lattice.n else (sc, sf)
        w, z = _difference_arrays(big.u.coeffs[0], big.v.coeffs[0], small.u.coeffs[0],
                                  small.v.coeffs[0], big.lattice, small.lattice)
        records.append(DifferenceEnergy(tf, small.lattice.n, big.lattice.n, float(w),
                                        float(z), float(w + z)))
    return records, max(r.total for r in records)


# -- time regularity ------------------------------------------------------------


def fit_loglog(x, y):
    """Least-squares line through (log x, log y): (slope, intercept, r^2)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class IncrementMoments:
    lags: list
    moments: list
    stderr: list
    slope: float
    intercept: float
    r2: float


def increment_moment(times: Sequence[float], v: np.ndarray, lattice: LatticeSpec, rho: float,
                     lags: Sequence[int]) -> IncrementMoments:
    """Monte Carlo E||v(t) - v(s)||^4_{H^-rho} against the lag t - s.

    ``v`` holds coefficients with shape (paths, times, M); ``lags`` are in
    units of the save-grid spacing. Every admissible pair (s, s + lag) of
    every path contributes. The slope is fitted over the positive lags.
    """
    if rho <= lattice.d / 2 + 1:
        raise ValueError(f"rho must exceed d/2 + 1 = {lattice.d / 2 + 1}, got {rho}")
    lags = [int(l) for l in lags]
    if len(lags) < 2:
        raise ValueError("need at least two lags")
    times = np.asarray(times, float)
    v = np.asarray(v)
    w = sobolev_weights(lattice, -rho)
    out_lags, moments, errs = [], [], []
    for lag in lags:
        if lag == 0:
            out_lags.append(0.0)
            moments.append(0.0)
            errs.append(0.0)
            continue
        diff = v[:, lag:, :] - v[:, :-lag, :]
        norm4 = np.sum(w * np.abs(diff) ** 2, axis=-1) ** 2
        per_path = norm4.mean(axis=1)
        out_lags.append(float(times[lag] - times[0]))
        moments.append(math.fsum(per_path) / len(per_path))
        errs.append(float(np.std(per_path, ddof=1) / math.sqrt(len(per_path)))
                    if len(per_path) > 1 else 0.0)
    pos = [(l, m) for l, m in zip(out_lags, moments) if l > 0 and m > 0]
    if len(pos) >= 2:
        slope, intercept, r2 = fit_loglog(*zip(*pos))
    else:
        slope, intercept, r2 = 0.0, 0.0, 1.0
    return IncrementMoments(out_lags, moments, errs, slope, intercept, r2)


# -- stochastic convolution -------------------------------------------------------


def _as_coeff_series(v_trajectory, lattice: LatticeSpec, steps: int) -> np.ndarray:
    if isinstance(v_trajectory, SpectralField):
        return np.broadcast_to(v_trajectory.coeffs[0], (steps, lattice.size))
    series = [s.coeffs[0] if isinstance(s, SpectralField) else np.asarray(s)
              for s in v_trajectory]
    return np.asarray(series)


def stochastic_convolution(basis: NoiseBasis, v_trajectory, kappa: float, t: float,
                           driver: BrownianDriver, lattice: LatticeSpec | None = None,
                           path: int = 0) -> SpectralField:
    """Left-point sum Z_t = sum_i exp(kappa (t - s_i) Delta) Pi(W_i . grad v_{s_i}).

    ``v_trajectory`` is a single frozen field or the values of v at
    s_i = i * driver.dt for every step i below t/dt. The increments are those
    of ``driver`` for ``path``, replayed by step index.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if lattice is None:
        lattice = (v_trajectory if isinstance(v_trajectory, SpectralField)
                   else v_trajectory[0]).lattice
    steps = int(round(t / driver.dt))
    if abs(steps * driver.dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"t={t} is not on the driver's time grid")
    series = _as_coeff_series(v_trajectory, lattice, steps)
    if len(series) < steps:
        raise ValueError(f"trajectory covers {len(series)} steps, t needs {steps}")
    z = convolution_paths(basis, series[:steps], kappa, driver, lattice, [path],
                          save_steps=[steps])
    return SpectralField(lattice, z[0, 0])


def convolution_paths(basis: NoiseBasis, series: np.ndarray, kappa: float,
                      driver: BrownianDriver, lattice: LatticeSpec, paths,
                      save_steps: Sequence[int]) -> np.ndarray:
    """Z at the given step indices for a batch of paths, shape (B, len(save), M).

    Uses Z_{i+1} = exp(kappa dt Delta) (Z_i + Pi(W_i . grad v_i)), which equals
    the left-point sum.
    """
    paths = np.atleast_1d(paths)
    ts = TransportSum(basis, lattice)
    heat = heat_factor(lattice, kappa, driver.dt)
    z = np.zeros((len(paths), lattice.size), dtype=complex)
    out = np.zeros((len(paths), len(save_steps), lattice.size), dtype=complex)
    wanted = {k: i for i, k in enumerate(save_steps)}
    last = max(save_steps)
    if len(series) < last:
        raise ValueError(f"trajectory covers {len(series)} steps, need {last}")
    for k in range(last + 1):
        if k in wanted:
            out[:, wanted[k]] = z
        if k == last:
            break
        incr = driver.increments(basis.channel_codes, k, paths)
        v_k = np.broadcast_to(series[k], z.shape)
        z = heat * (z + ts.apply(incr, v_k))
    return out


def isometry_value(basis: NoiseBasis, v_trajectory, kappa: float, t: float, dt: float,
                   s: float, lattice: LatticeSpec | None = None) -> float:
    """sum_c sum_i dt ||exp(kappa (t - s_i) Delta) Pi(sigma_c . grad v_{s_i})||^2_{H^s}.

    The left-point quadrature of the Ito isometry integral, evaluated channel
    by channel with the direct shift form of the transport operator.
    """
    if lattice is None:
        lattice = (v_trajectory if isinstance(v_trajectory, SpectralField)
                   else v_trajectory[0]).lattice
    steps = int(round(t / dt))
    series = _as_coeff_series(v_trajectory, lattice, steps)
    w = sobolev_weights(lattice, s)
    total = []
    frozen = isinstance(v_trajectory, SpectralField)
    cache = None
    for i in range(steps):
        if frozen and cache is not None:
            images = cache
        else:
            field = SpectralField(lattice, series[i])
            images = np.array([np.abs(transport_apply(basis, c, field).coeffs[0]) ** 2
                               for c in range(basis.n_channels)]).sum(axis=0)
            cache = images if frozen else None
        decay = heat_factor(lattice, kappa, t - i * dt) ** 2
        total.append(dt * float(np.sum(w * decay * images)))
    return math.fsum(total)


def isometry_integral_frozen(basis: NoiseBasis, v: SpectralField, kappa: float, t: float,
                             s: float) -> float:
    """Exact time integral of the isometry for a time-constant v."""
    lat = v.lattice
    images = np.array([np.abs(transport_apply(basis, c, v).coeffs[0]) ** 2
                       for c in range(basis.n_channels)]).sum(axis=0)
    rate = 2 * FOUR_PI_SQ * kappa * lat.norm_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(rate > 0, -np.expm1(-rate * t) / np.where(rate > 0, rate, 1), t)
    return float(np.sum(sobolev_weights(lat, s) * factor * images))


@dataclass(frozen=True)
class ConvolutionScaling:
    l1_norms: list
    values: list
    stderr: list
    slope: float
    intercept: float
    r2: float
    target: float


def convolution_bound_report(bases: Sequence[NoiseBasis], v: SpectralField, kappa: float,
                             T: float, driver: BrownianDriver, eps: float, a: float,
                             paths: int = 64, save_count: int = 17,
                             l1_norms: Sequence[float] | None = None) -> ConvolutionScaling:
    """E sup_t ||Z_t||^2_{H^-a} per noise family member with a frozen v.

    The fitted log-log slope against ||Q||_{L^1} is compared with 2(a - eps)/d.
    """
    from .noise import covariance_norms

    bases = list(bases)
    if len(bases) < 3:
        raise ValueError("need a family of at least three noise bases")
    steps = int(round(T / driver.dt))
    save = sorted({int(round(i * steps / (save_count - 1))) for i in range(save_count)})
    if l1_norms is None:
        l1_norms = [covariance_norms(b).l1_norm for b in bases]
    lat = v.lattice
    series = np.broadcast_to(v.coeffs[0], (steps, lat.size))
    weights = sobolev_weights(lat, -a)
    values, errs = [], []
    for basis in bases:
        z = convolution_paths(basis, series, kappa, driver, lat, np.arange(paths), save)
        sup = np.max(np.sum(weights * np.abs(z) ** 2, axis=-1), axis=1)
        values.append(math.fsum(sup) / len(sup))
        errs.append(float(np.std(sup, ddof=1) / math.sqrt(len(sup))))
    positive = all(x > 0 for x in values)
    slope, intercept, r2 = fit_loglog(l1_norms, values) if positive else (0.0, 0.0, 0.0)
    return ConvolutionScaling(list(map(float, l1_norms)), values, errs, slope, intercept, r2,
                              2 * (a - eps) / lat.d)


# -- CSV output ---------------------------------------------------------------------


def write_energy_csv(records: Sequence[EnergyRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["t", "e_u_h1", "e_v_l2", "total"])
        writer.writeheader()
        for r in records:
            writer.writerow(asdict(r))


def write_difference_csv(records: Sequence[DifferenceEnergy], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["t", "w_l2", "z_hm1", "total"])
        writer.writeheader()
        for r in records:
            writer.writerow({"t": r.t, "w_l2": r.w_l2, "z_hm1": r.z_hm1, "total": r.total})


def read_csv(path) -> list:
    with open(Path(path), newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
