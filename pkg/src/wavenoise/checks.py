"""Fast invariant suites behind ``wavenoise verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dynamics import Model, ModelSpec, initial_state, run
from .noise import (TransportSum, build_basis, covariance_at, covariance_norms, ito_correction,
                    l2_norm_closed_form, make_scaling_family, transport_apply, uniform_shell)
from .rng import philox4x32
from .spectral import FOUR_PI_SQ, LatticeSpec, SpectralField, gradient, laplacian, sobolev_norm_sq


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.tolerance = float(self.tolerance)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name}: {self.value:.3e} (tol {self.tolerance:.1e})"


PHILOX_VECTORS = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


def check_philox() -> CheckResult:
    bad = 0
    for ctr, key, want in PHILOX_VECTORS:
        got = philox4x32(np.array(ctr, dtype=np.uint64), np.array(key, dtype=np.uint64))
        bad += int(tuple(int(g) for g in got) != want)
    return CheckResult("philox4x32-10 known answers", bad == 0, float(bad), 0.0)


def _interior_field(lattice: LatticeSpec, radius: float, rng) -> SpectralField:
    return SpectralField.random(lattice, rng, radius=radius, decay=1.0)


def check_covariance(d: int, shells=(1.0, 2.0, 3.0)) -> list:
    out = []
    for N in shells:
        spec = uniform_shell(d, 1.0, N)
        basis = build_basis(spec)
        rep = covariance_norms(basis)
        exact = l2_norm_closed_form(spec)
        rel = abs(rep.l2_norm - exact) / exact
        out.append(CheckResult(f"||Q||_L2 closed form d={d} N={N:g}", rel < 1e-8, rel, 1e-8))
        q0 = covariance_at(basis, np.zeros(d))
        off = np.abs(q0 - np.trace(q0) / d * np.eye(d)).max() / np.trace(q0)
        out.append(CheckResult(f"Q(0) isotropic d={d} N={N:g}", off < 1e-10, off, 1e-10))
    kappas = [covariance_norms(build_basis(s)).kappa_eff
              for s in make_scaling_family(d, 1.0, list(shells))]
    spread = max(kappas) - min(kappas)
    out.append(CheckResult(f"kappa_eff constant over shells d={d}", spread < 1e-10, spread, 1e-10))
    return out


def check_transport_identities(d: int = 2, n: int = 10, N: float = 2.0, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    basis = build_basis(uniform_shell(d, 1.0, N))
    kappa = covariance_norms(basis).kappa_eff
    lat = LatticeSpec(d, n)
    u = _interior_field(lat, n - 2 * basis.spec.max_k, rng)
    grad_sq = float(np.sum(sobolev_norm_sq(gradient(u).coeffs, lat, 0.0)))
    lhs = sum(float(np.sum(sobolev_norm_sq(transport_apply(basis, c, u).coeffs, lat, 0.0)))
              for c in range(basis.n_channels))
    rel_qv = abs(lhs - 2 * kappa * grad_sq) / (2 * kappa * grad_sq)
    corr = ito_correction(basis, u)
    target = laplacian(u) * kappa
    rel_ito = float(np.abs(corr.coeffs - target.coeffs).max() / np.abs(target.coeffs).max())
    # FFT transport agrees with the direct shift form
    weights = rng.standard_normal((1, basis.n_channels))
    fast = TransportSum(basis, lat).apply(weights, u.coeffs)[0]
    slow = sum(w * transport_apply(basis, c, u).coeffs[0] for c, w in enumerate(weights[0]))
    rel_fft = float(np.abs(fast - slow).max() / np.abs(slow).max())
    return [CheckResult("quadratic variation = 2 kappa_eff ||grad u||^2", rel_qv < 1e-8, rel_qv, 1e-8),
            CheckResult("Ito correction = kappa_eff Laplacian", rel_ito < 1e-8, rel_ito, 1e-8),
            CheckResult("FFT transport = direct transport", rel_fft < 1e-10, rel_fft, 1e-10)]


def oscillator_exact(lam: float, kappa: float, t: float, a0: float = 1.0, b0: float = 0.0):
    """(a, a') at t for a'' = -lam a - kappa lam a'."""
    A = np.array([[0.0, 1.0], [-lam, -kappa * lam]])
    return expm(A * t) @ np.array([a0, b0])


def check_deterministic(dt: float = 1e-3, T: float = 1.0, j=(1, 0)) -> list:
    lat = LatticeSpec(len(j), max(2, int(np.ceil(np.linalg.norm(j)))))
    init = initial_state(lat, "single-mode:" + ",".join(map(str, j)))
    idx = int(lat.index_of(np.array([j]))[0])
    lam = FOUR_PI_SQ * float(np.dot(j, j))
    out = []
    for model, kappa in ((ModelSpec(Model.WAVE), 0.0),
                         (ModelSpec(Model.DAMPED_WAVE, kappa=0.1), 0.1)):
        (_, state), = run(model, "EXP_EULER", init, T, None, [T], dt=dt)
        a, b = oscillator_exact(lam, kappa, T)
        err = max(abs(2 * state.u.coeffs[0, idx].real - a) / 1.0,
                  abs(2 * state.v.coeffs[0, idx].real - b) / np.sqrt(lam))
        out.append(CheckResult(f"{model.model.value} single mode vs closed form", err <= 5 * dt * T,
                               err, 5 * dt * T))
    return out


def run_all() -> list:
    results = [check_philox()]
    for d in (2, 3):
        results += check_covariance(d)
    results += check_transport_identities()
    results += check_deterministic()
    return results
