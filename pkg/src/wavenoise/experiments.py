"""Ensemble studies: Galerkin-Cauchy convergence and the two scaling limits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics import difference_energy_arrays, fit_loglog
from .dynamics import (GalerkinState, Integrator, Model, ModelSpec, Scheme,
                       initial_state, integrate_batch, integrate_lockstep, uniform_save_times)
from .noise import NoiseBasis, build_basis, covariance_norms, make_scaling_family
from .nonlinearity import Nonlinearity
from .rng import BrownianDriver
from .spectral import LatticeSpec, sobolev_weights


# n >= 2 * max shell + margin keeps boundary leakage common to every shell
SHELL_MARGIN = 8


def fit_rate(x: Sequence[float], y: Sequence[float]):
    """Least squares on (log x, log y) -> (slope, intercept, r^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be one-dimensional and of equal length")
    if len(x) < 3:
        raise ValueError(f"need at least 3 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise ValueError("all x and y values must be positive and finite")
    dx = np.diff(x)
    if not (np.all(dx > 0) or np.all(dx < 0)):
        raise ValueError("x must be strictly monotone")
    return fit_loglog(x, y)


def ensemble_mean(values) -> tuple:
    """Mean (exactly rounded, order independent) and standard error."""
    values = np.asarray(values, dtype=float)
    mean = math.fsum(values) / len(values)
    err = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, err


@dataclass
class ScalingStudyConfig:
    model: str = "SWE2"
    d: int = 2
    kappa: float = 0.2
    shells: list = field(default_factory=lambda: [1, 2, 4, 8])
    paths: int = 64
    n: int = 32
    dt: float = 5e-4
    T: float = 0.5
    f: str = "sin:1"
    gamma: float = 0.25
    a: float = 0.4
    eps: float | None = None
    seed: int = 0
    init: str = "single-mode:1,0"
    save_count: int = 65
    scheme: str = "EXP_EULER"
    batch_size: int = 64

    def __post_init__(self):
        self.model = Model(self.model).value
        self.shells = [int(s) if float(s).is_integer() else float(s) for s in self.shells]
        if self.eps is None:
            self.eps = self.a / 4
        if any(b <= a for a, b in zip(self.shells, self.shells[1:])):
            raise ValueError(f"shells must be strictly increasing, got {self.shells}")
        if self.model == "SWE2":
            if not 0 < self.a < 0.5:
                raise ValueError(f"a must lie in (0, 1/2), got {self.a}")
            if not 0 < self.eps <= self.a:
                raise ValueError(f"eps must lie in (0, a], got {self.eps}")
        elif self.model == "SWE1":
            if not 0 < self.gamma < 0.5:
                raise ValueError(f"gamma must lie in (0, 1/2), got {self.gamma}")
        else:
            raise ValueError("scaling studies run SWE1 or SWE2")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.n < 2 * max(self.shells) + SHELL_MARGIN:
            raise ValueError(f"truncation n={self.n} is below 2 * max shell + {SHELL_MARGIN}; "
                             "boundary leakage would differ across shells")
        if self.paths < 2:
            raise ValueError("need at least two paths")

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingStudyConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scaling-study keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RateReport:
    quantity: str
    x: list
    y: list
    stderr: list
    slope: float
    intercept: float
    r2: float
    target: float
    tolerance: float
    passed: bool
    config: dict
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RateReport":
        return cls(**data)


def check_family(bases: Sequence[NoiseBasis], tol: float = 1e-10):
    """kappa_eff constant and ||Q||_{L^1} strictly decreasing along a family.

    A family of zero-amplitude bases is let through: it has nothing to scale
    and every error must vanish.
    """
    reports = [covariance_norms(b) for b in bases]
    kappas = [r.kappa_eff for r in reports]
    if max(kappas) - min(kappas) > tol:
        raise ValueError(f"kappa_eff varies across the family: {kappas}")
    l1 = [r.l1_norm for r in reports]
    if any(l1) and any(b >= a for a, b in zip(l1, l1[1:])):
        raise ValueError(f"||Q||_L1 is not strictly decreasing across the family: {l1}")
    return reports


def _reference(model: ModelSpec, scheme, init: GalerkinState, cfg, times) -> np.ndarray:
    # raw integrator arrays, so a zero-noise shell run matches it bitwise
    integ = Integrator(model, scheme, cfg.dt, init.lattice)
    out = np.zeros((len(times), init.lattice.size), dtype=complex)

    def keep(i, t, u, v):
        out[i] = u[0]

    integrate_batch(integ, init.u.coeffs[0], init.v.coeffs[0], cfg.T, None, times, [0], keep)
    return out


def _shell_errors(cfg, basis: NoiseBasis, init: GalerkinState, times, refs, weights,
                  squared: bool) -> list:
    """Per-path sup over save times of ||u - ref||_{H^s} for each reference."""
    f = Nonlinearity.parse(cfg.f)
    model = ModelSpec.swe(cfg.model, basis, f)
    integ = Integrator(model, cfg.scheme, cfg.dt, init.lattice)
    driver = BrownianDriver(cfg.seed, cfg.dt)
    sups = [np.zeros(cfg.paths) for _ in refs]
    for start in range(0, cfg.paths, cfg.batch_size):
        chunk = np.arange(start, min(start + cfg.batch_size, cfg.paths))

        def observe(i, t, states, chunk=chunk):
            u = states[0][0]
            for r, ref in enumerate(refs):
                e = np.sum(weights * np.abs(u - ref[i]) ** 2, axis=-1)
                if not squared:
                    e = np.sqrt(e)
                sups[r][chunk] = np.maximum(sups[r][chunk], e)

        integrate_lockstep([integ], [(init.u.coeffs[0], init.v.coeffs[0])], cfg.T, driver,
                           times, chunk, observe)
    return sups


def _family(cfg):
    specs = make_scaling_family(cfg.d, cfg.kappa, cfg.shells)
    bases = [build_basis(s) for s in specs]
    reports = check_family(bases)
    return bases, reports


def run_scaling_swe1(cfg: ScalingStudyConfig) -> RateReport:
    """E sup_t ||u^N - u_wave||^2_{H^(1-gamma)} across the shell family.

    No rate is claimed for this limit, so the pass flag only asks for a
    strictly decreasing sequence.
    """
    if cfg.model != "SWE1":
        raise ValueError("run_scaling_swe1 needs model SWE1")
    bases, reports = _family(cfg)
    lat = LatticeSpec(cfg.d, cfg.n)
    init = initial_state(lat, cfg.init, cfg.seed)
    times = uniform_save_times(cfg.T, cfg.save_count, cfg.dt)
    f = Nonlinearity.parse(cfg.f)
    ref = _reference(ModelSpec(Model.WAVE, f), cfg.scheme, init, cfg, times)
    weights = sobolev_weights(lat, 1.0 - cfg.gamma)
    y, err = [], []
    for basis in bases:
        (sup,) = _shell_errors(cfg, basis, init, times, [ref], weights, squared=True)
        m, e = ensemble_mean(sup)
        y.append(m)
        err.append(e)
    x = [r.l1_norm for r in reports]
    decreasing = all(b < a for a, b in zip(y, y[1:]))
    if all(v > 0 for v in x + y) and len(y) >= 3:
        slope, intercept, r2 = fit_rate(x, y)
    else:
        slope, intercept, r2 = 0.0, 0.0, 0.0
    return RateReport(
        quantity=f"E sup_t ||u^N - u_wave||^2_H^{1 - cfg.gamma:g}",
        x=x, y=y, stderr=err, slope=slope, intercept=intercept, r2=r2,
        target=0.0, tolerance=0.0, passed=bool(decreasing), config=cfg.to_dict(),
        extra={"shells": list(cfg.shells), "kappa_eff": reports[0].kappa_eff,
               "final_over_first": y[-1] / y[0] if y[0] > 0 else 0.0},
    )


def run_scaling_swe2(cfg: ScalingStudyConfig, tolerance: float = 0.05) -> RateReport:
    """E sup_t ||u^N - u_damped||_{H^-a} against ||Q^N||_{L^1}; target slope (a-eps)/d.

    Errors against the undamped wave solution are recorded alongside
    (``extra["wrong_target"]``) to expose the emergent damping.
    """
    if cfg.model != "SWE2":
        raise ValueError("run_scaling_swe2 needs model SWE2")
    f = Nonlinearity.parse(cfg.f)
    if not f.cb2:
        raise ValueError(f"the rate study needs f in C_b^2; {f} is not")
    if cfg.d not in (2, 3):
        raise ValueError("the rate study covers d = 2, 3")
    bases, reports = _family(cfg)
    kappa = reports[0].kappa_eff
    lat = LatticeSpec(cfg.d, cfg.n)
    init = initial_state(lat, cfg.init, cfg.seed)
    times = uniform_save_times(cfg.T, cfg.save_count, cfg.dt)
    ref_damped = _reference(ModelSpec.swe(Model.SWE2, bases[0], f).limit(), cfg.scheme, init,
                            cfg, times)
    ref_wave = _reference(ModelSpec(Model.WAVE, f), cfg.scheme, init, cfg, times)
    weights = sobolev_weights(lat, -cfg.a)
    y, err, wrong, wrong_err = [], [], [], []
    for basis in bases:
        sup_d, sup_w = _shell_errors(cfg, basis, init, times, [ref_damped, ref_wave], weights,
                                     squared=False)
        m, e = ensemble_mean(sup_d)
        y.append(m)
        err.append(e)
        m, e = ensemble_mean(sup_w)
        wrong.append(m)
        wrong_err.append(e)
    x = [r.l1_norm for r in reports]
    if all(v > 0 for v in x + y):
        slope, intercept, r2 = fit_rate(x, y)
    else:
        slope, intercept, r2 = 0.0, 0.0, 0.0
    target = (cfg.a - cfg.eps) / cfg.d
    return RateReport(
        quantity=f"E sup_t ||u^N - u_damped||_H^-{cfg.a:g}",
        x=x, y=y, stderr=err, slope=slope, intercept=intercept, r2=r2,
        target=target, tolerance=tolerance, passed=bool(slope >= target - tolerance),
        config=cfg.to_dict(),
        extra={"shells": list(cfg.shells), "kappa_eff": kappa, "wrong_target": wrong,
               "wrong_target_stderr": wrong_err,
               "contrast": [w / v if v > 0 else math.inf for w, v in zip(wrong, y)]},
    )


@dataclass
class CauchyTable:
    truncations: list
    reference: int
    mean_sup: list
    stderr: list
    slope: float
    intercept: float
    r2: float
    config: dict

    def to_json(self) -> dict:
        return asdict(self)


def run_cauchy_study(d: int, truncations: Sequence[int], reference: int, dt: float, T: float,
                     f: Nonlinearity | str, basis: NoiseBasis | None, seed: int, *,
                     paths: int = 32, init: str = "single-mode:1,0",
                     scheme: str = "EXP_EULER", save_count: int = 65,
                     batch_size: int = 32) -> CauchyTable:
    """E sup_t N_{m,n} between truncation ``reference`` = m and each n.

    All truncations are advanced in lockstep on the same Brownian paths.
    ``basis=None`` runs the deterministic wave equation.
    """
    truncations = [int(n) for n in truncations]
    if any(b <= a for a, b in zip(truncations, truncations[1:])):
        raise ValueError(f"truncations must be increasing, got {truncations}")
    if reference <= max(truncations):
        raise ValueError(f"reference {reference} must exceed every truncation")
    f = Nonlinearity.parse(f) if isinstance(f, str) else f
    model = ModelSpec.swe(Model.SWE1, basis, f) if basis is not None else ModelSpec(Model.WAVE, f)
    fine = LatticeSpec(d, reference)
    start_state = initial_state(fine, init, seed)
    lattices = [fine] + [LatticeSpec(d, n) for n in truncations]
    integrators = [Integrator(model, scheme, dt, lat) for lat in lattices]
    inits = []
    for lat in lattices:
        s = start_state.project_to(lat)
        inits.append((s.u.coeffs[0], s.v.coeffs[0]))
    times = uniform_save_times(T, save_count, dt)
    driver = BrownianDriver(seed, dt)
    sups = np.zeros((len(truncations), paths))
    for start in range(0, paths, batch_size):
        chunk = np.arange(start, min(start + batch_size, paths))

        def observe(i, t, states, chunk=chunk):
            uf, vf = states[0]
            for r, (uc, vc) in enumerate(states[1:]):
                nmn = difference_energy_arrays(uf, vf, uc, vc, fine, lattices[r + 1])
                sups[r, chunk] = np.maximum(sups[r, chunk], nmn)

        integrate_lockstep(integrators, inits, T, driver, times, chunk, observe)
    means, errs = zip(*(ensemble_mean(row) for row in sups))
    x = [1.0 / n**2 for n in truncations]
    if len(truncations) >= 3 and all(m > 0 for m in means):
        slope, intercept, r2 = fit_rate(x, means)
    else:
        slope, intercept, r2 = 0.0, 0.0, 0.0
    config = {"d": d, "truncations": truncations, "reference": reference, "dt": dt, "T": T,
              "f": str(f), "seed": seed, "paths": paths, "init": init, "scheme": scheme,
              "save_count": save_count, "batch_size": batch_size,
              "noise": None if basis is None else _spec_echo(basis)}
    return CauchyTable(truncations, reference, list(means), list(errs), slope, intercept, r2,
                       config)


def _spec_echo(basis: NoiseBasis) -> dict:
    from .noise import spec_to_json

    return spec_to_json(basis.spec)


def persist_study(report, path) -> Path:
    """Write ``report`` as JSON at ``path`` and a CSV companion next to it."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"cannot write {path}: directory {path.parent} does not exist")
    data = report.to_json() if hasattr(report, "to_json") else dict(report)
    data = dict(data, kind=type(report).__name__)
    try:
        path.write_text(json.dumps(data, indent=2))
        csv_path = path.with_suffix(".csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if isinstance(report, CauchyTable):
                writer.writerow(["n", "mean_sup_N", "stderr"])
                writer.writerows(zip(report.truncations, report.mean_sup, report.stderr))
            else:
                writer.writerow(["x", "y", "stderr"])
                writer.writerows(zip(report.x, report.y, report.stderr))
    except OSError as exc:
        raise OSError(f"failed to write study report to {path}: {exc}") from exc
    return path


def load_study(path):
    data = json.loads(Path(path).read_text())
    kind = data.pop("kind", "RateReport")
    if kind == "CauchyTable":
        return CauchyTable(**data)
    return RateReport.from_json(data)


def rerun_study(report):
    """Repeat a study from its echoed config."""
    if isinstance(report, CauchyTable):
        from .noise import spec_from_json

        c = dict(report.config)
        noise = c.pop("noise")
        basis = None if noise is None else build_basis(spec_from_json(noise))
        return run_cauchy_study(c.pop("d"), c.pop("truncations"), c.pop("reference"),
                                c.pop("dt"), c.pop("T"), c.pop("f"), basis, c.pop("seed"), **c)
    cfg = ScalingStudyConfig.from_dict(report.config)
    if cfg.model == "SWE1":
        return run_scaling_swe1(cfg)
    return run_scaling_swe2(cfg, report.tolerance)
