"""Command-line front end: ``optstab <subcommand>``.

Exit codes: 0 success, 1 verification failure, 2 validation or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from . import bounds, config, regions, spectral, suites
from .harness import classify, dumps, json_safe
from .optimizers import (
    InvalidHyperparameter,
    OptimizerKind,
    run_trajectory,
    trajectory_csv,
)
from .problems import DimensionMismatch, reference_target

SEED_ENV = "OPTIM_STABILITY_SEED"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def resolve_seed(flag: Optional[int], configured: Optional[int] = None) -> int:
    """``--seed`` wins, then the config file, then the environment, then 0."""
    if flag is not None:
        return flag
    if configured is not None:
        return configured
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            value = int(env, 0)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
        if not 0 <= value < 2**64:
            raise UsageError(f"{SEED_ENV} must be an unsigned 64-bit integer")
        return value
    return 0


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _write(path: Optional[str], text: str, out) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def _load(path: str) -> dict:
    try:
        return config.load_json(path)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------


def cmd_simulate(args, out) -> int:
    cfg = config.SimulateConfig.model_validate(_load(args.config))
    seed = resolve_seed(args.seed, cfg.run.seed)
    spec = cfg.optimizer.build()
    problem = cfg.problem.build(seed)
    schedule = cfg.schedule.build(spec.alpha)
    run = cfg.run.build(seed)
    traj = run_trajectory(spec, problem, cfg.theta0, schedule, run.steps, run.escape_radius, cfg.problem.convention)
    out_path = args.out or cfg.output.path
    if out_path:
        if cfg.output.format == "json":
            doc = {
                "header": ["step", *[f"theta_{i}" for i in range(1, traj.dim + 1)], "update_norm", "sup_norm"],
                "rows": list(csv.reader(io.StringIO(trajectory_csv(traj))))[1:],
            }
            Path(out_path).write_text(dumps(doc), encoding="utf-8")
        else:
            Path(out_path).write_text(trajectory_csv(traj), encoding="utf-8")
    if run.steps >= 100:
        report = classify(traj, run, reference_target(problem)).to_dict()
    else:
        report = {"verdict": None, "note": "classification needs at least 100 steps"}
    report["status"] = traj.status.value
    out.write(dumps(report))
    return EXIT_OK


def cmd_region_sweep(args, out) -> int:
    cfg = config.SweepConfig.model_validate(_load(args.config))
    seed = resolve_seed(args.seed, cfg.run.seed)
    spec = cfg.optimizer.build()
    thresh = regions.spectral_threshold(spec.kind, spec.alpha) if cfg.threshold == "spectral" else None
    rows = regions.region_sweep(
        spec,
        regions.log_grid(cfg.gamma_grid.min, cfg.gamma_grid.max, cfg.gamma_grid.count),
        regions.log_grid(cfg.lambda_grid.min, cfg.lambda_grid.max, cfg.lambda_grid.count),
        cfg.run.build(seed),
        cfg.problem.eig_profile,
        cfg.problem.target,
        cfg.problem.theta0,
        jobs=args.jobs,
        thresh=thresh,
    )
    if cfg.output.format == "json":
        text = dumps([dict(zip(regions.SWEEP_HEADER, r.csv_fields())) for r in rows])
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(regions.SWEEP_HEADER)
        w.writerows(r.csv_fields() for r in rows)
        text = buf.getvalue()
    _write(args.out or cfg.output.path, text, out)
    return EXIT_OK


def cmd_spectrum(args, out) -> int:
    kind = spectral.SpectralKind(args.kind)
    if not 0.0 <= args.alpha < 1.0:
        raise UsageError("--alpha must satisfy 0 <= alpha < 1")
    if not (args.gamma > 0 and args.K > 0):
        raise UsageError("--gamma and --K must be > 0")
    build = spectral.momentum_companion if kind is spectral.SpectralKind.MOMENTUM else spectral.nesterov_companion
    A = build(args.alpha, args.gamma, args.K)
    pair = spectral.eigenvalues_closed_form(kind, args.alpha, args.gamma, args.K)
    doc = {
        "kind": kind.value,
        "alpha": args.alpha,
        "gamma": args.gamma,
        "K": args.K,
        "matrix": [[A.a11, A.a12], [A.a21, A.a22]],
        **spectral.pair_to_json(pair),
        "sr": spectral.spectral_radius(pair),
        "class": spectral.classify_sr(kind, args.alpha, args.gamma * args.K).value,
    }
    _write(args.out, dumps(doc), out)
    return EXIT_OK


def _certificate(case: config.BoundCase, seed: int) -> bounds.BoundCertificate:
    spec = case.optimizer.build()
    problem = case.problem.build(seed)
    schedule = case.schedule.build(spec.alpha)
    conv = case.problem.convention
    traj = run_trajectory(spec, problem, case.theta0, schedule, case.steps, float("inf"), conv)
    if spec.kind is OptimizerKind.GD:
        return bounds.certify_gd(traj, problem, schedule, case.delta, case.c, conv)
    if spec.kind is OptimizerKind.MOMENTUM:
        return bounds.certify_momentum(traj, problem, spec, schedule, conv)
    return bounds.certify_adam(traj, problem, spec, schedule, conv)


def cmd_bounds(args, out) -> int:
    doc = _load(args.config)
    cfg = config.load_bounds(doc)
    seed = resolve_seed(args.seed)
    certs = [_certificate(case, seed) for case in cfg.configurations]
    text = "".join(json.dumps(json_safe(c.to_dict()), allow_nan=False) + "\n" for c in certs)
    _write(args.out, text, out)
    return EXIT_OK if all(c.holds for c in certs) else EXIT_FAIL


def cmd_verify(args, out) -> int:
    seed = resolve_seed(args.seed)
    if args.suite == "regions":
        report = suites.regions_suite(count=args.grid, reference=args.reference, jobs=args.jobs)
    elif args.suite == "bounds":
        report = suites.bounds_suite(seed=seed)
    else:
        report = suites.equivalence_suite(seed=seed)
    report["seed"] = seed
    _write(args.out, dumps(report), out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="optstab", description="Stability regions and bounds for first-order optimizers.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--seed", type=_u64, default=None, help=f"64-bit seed (fallback: ${SEED_ENV})")
        sp.add_argument("--out", default=None, help="output path (default: stdout or the config's output.path)")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads")

    common(sub.add_parser("simulate", help="run one trajectory, write CSV, print a verdict"))
    common(sub.add_parser("region-sweep", help="closed-form vs empirical verdicts on a log grid"))
    sp = sub.add_parser("spectrum", help="companion-matrix eigenvalues")
    sp.add_argument("--kind", choices=[k.value for k in spectral.SpectralKind], required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--K", type=float, required=True)
    sp.add_argument("--out", default=None)
    common(sub.add_parser("bounds", help="a-priori bound certificates, one JSON line per configuration"))
    sp = sub.add_parser("verify", help="run a named verification suite")
    sp.add_argument("--suite", choices=sorted(suites.SUITES), required=True)
    sp.add_argument("--grid", type=int, default=20, help="grid points per axis for the regions suite")
    sp.add_argument("--reference", choices=["theorem", "spectral"], default="theorem",
                    help="threshold compared against in the regions suite")
    common(sp, config_required=False)
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "region-sweep": cmd_region_sweep,
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
}


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "invalid configuration: " + "; ".join(parts)


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        err.write("error: --jobs must be >= 1\n")
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except ValidationError as exc:
        err.write(f"error: {_validation_message(exc)}\n")
    except (UsageError, InvalidHyperparameter, DimensionMismatch, bounds.HypothesisViolation) as exc:
        err.write(f"error: {exc}\n")
    except ValueError as exc:
        err.write(f"error: {exc}\n")
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_FAIL
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
