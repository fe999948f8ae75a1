"""Command line entry point: ``wavenoise <subcommand> --config run.toml``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .dynamics import SimulationBlowup

log = logging.getLogger("wavenoise")

SUBCOMMANDS = ("simulate", "cauchy", "scaling-swe1", "scaling-swe2", "verify", "covariance")


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _noise_spec(cfg: dict, d: int):
    from .noise import spec_from_json, uniform_shell

    noise = cfg.get("noise")
    if noise is None:
        shell = cfg.get("shell")
        if shell is None:
            return None
        return uniform_shell(d, float(cfg.get("kappa", 1.0)), float(shell))
    if isinstance(noise, str):
        return spec_from_json(json.loads(Path(noise).read_text()))
    return spec_from_json(dict(noise, d=noise.get("d", d)))


def cmd_simulate(cfg: dict, out: Path) -> bool:
    from .diagnostics import energy, write_energy_csv
    from .dynamics import DEFAULT_SCHEME, Model, ModelSpec, initial_state, run, uniform_save_times
    from .noise import build_basis
    from .nonlinearity import Nonlinearity
    from .rng import BrownianDriver
    from .spectral import LatticeSpec, field_to_json

    d, n = int(cfg.get("d", 2)), int(cfg.get("n", 16))
    dt, T = float(cfg.get("dt", 1e-3)), float(cfg.get("T", 1.0))
    seed = int(cfg.get("seed", 0))
    model = Model(cfg.get("model", "WAVE"))
    f = Nonlinearity.parse(cfg.get("f", "zero"))
    lat = LatticeSpec(d, n)
    if model.noisy:
        spec = _noise_spec(cfg, d)
        if spec is None:
            raise ValueError(f"{model.value} needs a 'noise' table or a 'shell' radius")
        ms = ModelSpec.swe(model, build_basis(spec), f)
    elif model.damped:
        ms = ModelSpec(model, f, kappa=float(cfg["kappa"]))
    else:
        ms = ModelSpec(model, f)
    init = initial_state(lat, cfg.get("init", "single-mode:" + ",".join(["1"] + ["0"] * (d - 1))),
                         seed)
    times = cfg.get("save_times") or uniform_save_times(T, int(cfg.get("save_count", 65)), dt)
    driver = BrownianDriver(seed, dt) if model.noisy else None
    traj = run(ms, cfg.get("scheme", DEFAULT_SCHEME.value), init, T, driver, times, dt=dt,
               path=int(cfg.get("path", 0)))
    records = [energy(s) for _, s in traj]
    write_energy_csv(records, out / "energy.csv")
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for i, (t, s) in enumerate(traj):
        (snaps / f"state_{i:04d}.json").write_text(json.dumps(
            {"t": t, "u": field_to_json(s.u), "v": field_to_json(s.v)}))
    (out / "config.json").write_text(json.dumps(cfg, indent=2))
    log.info("wrote %d snapshots to %s", len(traj), snaps)
    return True


def cmd_cauchy(cfg: dict, out: Path) -> bool:
    from .experiments import persist_study, run_cauchy_study
    from .noise import build_basis

    d = int(cfg.get("d", 2))
    spec = _noise_spec(cfg, d)
    table = run_cauchy_study(
        d, cfg.get("truncations", [4, 8, 16]), int(cfg.get("reference", 32)),
        float(cfg.get("dt", 1e-3)), float(cfg.get("T", 0.5)), cfg.get("f", "sin:1"),
        None if spec is None else build_basis(spec), int(cfg.get("seed", 0)),
        paths=int(cfg.get("paths", 32)), init=cfg.get("init", "single-mode:1,0"),
        scheme=cfg.get("scheme", "EXP_EULER"), save_count=int(cfg.get("save_count", 65)))
    persist_study(table, out / "cauchy.json")
    m = table.mean_sup
    ok = all(b <= 1.2 * a for a, b in zip(m, m[1:])) and m[-1] <= 0.5 * m[0]
    for n, v, e in zip(table.truncations, m, table.stderr):
        print(f"n={n:3d}  E sup N = {v:.4e} +- {e:.1e}")
    return ok


def _scaling(cfg: dict, out: Path, model: str) -> bool:
    from .experiments import ScalingStudyConfig, persist_study, run_scaling_swe1, run_scaling_swe2

    keys = {k: v for k, v in cfg.items() if k in ScalingStudyConfig.__dataclass_fields__}
    sc = ScalingStudyConfig.from_dict(dict(keys, model=model))
    report = run_scaling_swe1(sc) if model == "SWE1" else run_scaling_swe2(sc)
    persist_study(report, out / f"scaling_{model.lower()}.json")
    for x, y, e in zip(report.x, report.y, report.stderr):
        print(f"||Q||_L1 = {x:.4e}  {y:.4e} +- {e:.1e}")
    print(f"slope {report.slope:.3f} (target {report.target:.3f}), r2 {report.r2:.3f}, "
          f"pass={report.passed}")
    return report.passed


def cmd_verify(cfg: dict, out: Path) -> bool:
    from .checks import run_all

    results = run_all()
    for r in results:
        print(r.line())
    (out / "verify.json").write_text(json.dumps([r.__dict__ for r in results], indent=2))
    return all(r.passed for r in results)


def cmd_covariance(cfg: dict, out: Path) -> bool:
    from .noise import build_basis, covariance_norms, make_scaling_family

    d = int(cfg.get("d", 2))
    shells = cfg.get("shells", [1, 2, 4, 8])
    rows = []
    for N, spec in zip(shells, make_scaling_family(d, float(cfg.get("kappa", 1.0)), shells)):
        rep = covariance_norms(build_basis(spec))
        rows.append(dict(rep.to_json(), N=N))
        print(f"N={N:<4g} kappa_eff={rep.kappa_eff:.12f}  "
              f"L1={rep.l1_norm:.6e}  L2={rep.l2_norm:.6e}")
    (out / "covariance.json").write_text(json.dumps(rows, indent=2))
    return True


COMMANDS = {
    "simulate": cmd_simulate,
    "cauchy": cmd_cauchy,
    "scaling-swe1": lambda cfg, out: _scaling(cfg, out, "SWE1"),
    "scaling-swe2": lambda cfg, out: _scaling(cfg, out, "SWE2"),
    "verify": cmd_verify,
    "covariance": cmd_covariance,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavenoise",
                                description="Galerkin simulations of wave equations with transport noise")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML or JSON run config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out-dir", default=".", help="directory for reports (must exist)")
    p.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        from . import spectral

        spectral.FFT_WORKERS = max(1, args.threads)
        os.environ["OMP_NUM_THREADS"] = str(args.threads)
    out = Path(args.out_dir)
    if not out.is_dir():
        print(f"error: output directory {out} does not exist", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        ok = COMMANDS[args.command](cfg, out)
    except SimulationBlowup as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
