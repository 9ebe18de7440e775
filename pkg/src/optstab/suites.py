"""Named verification suites shared by ``optstab verify`` and the test-suite.

Each suite returns a JSON-ready report with a top-level ``passed`` flag. Random
configurations come from ``numpy.random.default_rng(seed)`` so a suite is a
pure function of its arguments.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bounds, regions
from .harness import RunConfig, StochasticTargets, convergent_schedule_batch, simulate_batch
from .optimizers import (
    ConstantRate,
    OptimizerKind,
    OptimizerSpec,
    TableRate,
    init_state,
    nesterov_three_forms,
    phi_full_history,
    run_trajectory,
    step_recursive,
)
from .problems import DataLaw, QuadraticProblem, StochasticQuadraticProblem

REGION_SPECS = (
    OptimizerSpec.gd(),
    OptimizerSpec.momentum(0.5),
    OptimizerSpec.momentum(0.8),
    OptimizerSpec.momentum(0.9),
    OptimizerSpec.nesterov(0.5),
    OptimizerSpec.nesterov(0.8),
    OptimizerSpec.nesterov(0.9),
)


def _loguniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


# ---------------------------------------------------------------------------
# regions


def region_map(
    spec: OptimizerSpec,
    count: int = 40,
    steps: int = 20_000,
    reference: str = "theorem",
    jobs: int = 1,
) -> dict:
    """Empirical vs closed-form verdicts on a log grid gamma in [1e-2, 1e2], lambda in [1e-1, 1e2]."""
    cfg = RunConfig(steps=steps)
    thr = (
        regions.threshold(spec.kind, spec.alpha)
        if reference == "theorem"
        else regions.spectral_threshold(spec.kind, spec.alpha)
    )
    rows = regions.region_sweep(
        spec,
        regions.log_grid(1e-2, 1e2, count),
        regions.log_grid(1e-1, 1e2, count),
        cfg,
        jobs=jobs,
        thresh=thr,
    )
    a = regions.agreement(rows)
    return {
        "optimizer": spec.label(),
        "threshold": thr,
        "reference": reference,
        "points": len(rows),
        "compared": a.compared,
        "agreeing": a.agreeing,
        "excluded_band": a.excluded_band,
        "inconclusive": a.inconclusive,
        "mismatches": len(a.mismatches),
        "first_mismatches": [[r.gamma, r.lambda_max, r.closed_form.value, r.empirical.value] for r in a.mismatches[:5]],
        "passed": a.perfect,
    }


def adaptive_grid(spec: OptimizerSpec, count: int = 10, steps: int = 20_000) -> dict:
    """Adaptive methods must stay bounded for all (gamma, lambda) up to 1e3."""
    rows = regions.region_sweep(spec, regions.log_grid(1e-3, 1e3, count), regions.log_grid(1e-3, 1e3, count), RunConfig(steps=steps))
    diverged = sum(r.empirical.value == "diverged" for r in rows)
    return {"optimizer": spec.label(), "points": len(rows), "diverged": diverged, "passed": diverged == 0}


def regions_suite(count: int = 20, steps: int = 20_000, reference: str = "theorem", jobs: int = 1) -> dict:
    parts = [region_map(s, count, steps, reference, jobs) for s in REGION_SPECS]
    parts += [adaptive_grid(s, 8, steps) for s in (OptimizerSpec.adam(0.9, 0.999), OptimizerSpec.rmsprop(0.99))]
    return {"suite": "regions", "parts": parts, "passed": all(p["passed"] for p in parts)}


# ---------------------------------------------------------------------------
# equivalences


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(b), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / scale))


def full_vs_recursive(spec: OptimizerSpec, stream: np.ndarray) -> float:
    """Largest per-coordinate relative deviation over every prefix of ``stream``."""
    state = init_state(stream.shape[1])
    worst = 0.0
    for n in range(stream.shape[0]):
        state, u = step_recursive(spec, state, stream[n])
        worst = max(worst, _rel(u, phi_full_history(spec, stream[: n + 1])))
    return worst


EQUIVALENCE_SPECS = (
    OptimizerSpec.gd(),
    OptimizerSpec.momentum(0.0),
    OptimizerSpec.momentum(0.9),
    OptimizerSpec.nesterov(0.7),
    OptimizerSpec.rmsprop(0.99, 1e-8),
    OptimizerSpec.adam(0.9, 0.999, 1e-8),
    OptimizerSpec.adam(0.0, 0.5, 1e-3),
)


def equivalence_suite(seed: int = 0, cases: int = 10, steps: int = 500, nesterov_steps: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    identical = defaultdict(lambda: True)
    for _ in range(cases):
        d = int(rng.integers(1, 4))
        prob = QuadraticProblem(rng.uniform(-3, 3, d), _loguniform(rng, 1e-2, 1e2, d))
        th0 = rng.uniform(-5, 5, d)
        sched = ConstantRate(float(_loguniform(rng, 1e-3, 1.0)))
        gd = run_trajectory(OptimizerSpec.gd(), prob, th0, sched, steps).iterates
        for name, spec in (("momentum0_gd", OptimizerSpec.momentum(0.0)), ("nesterov0_gd", OptimizerSpec.nesterov(0.0))):
            identical[name] &= bool(np.array_equal(run_trajectory(spec, prob, th0, sched, steps).iterates, gd))
        beta, eps = float(rng.uniform(0.5, 0.999)), float(_loguniform(rng, 1e-8, 1.0))
        rms = run_trajectory(OptimizerSpec.rmsprop(beta, eps), prob, th0, sched, steps).iterates
        adam0 = run_trajectory(OptimizerSpec.adam(0.0, beta, eps), prob, th0, sched, steps).iterates
        identical["rmsprop_adam0"] &= bool(np.array_equal(rms, adam0))

    stream_dev = {}
    for spec in EQUIVALENCE_SPECS:
        stream = rng.normal(size=(steps, 3)) * _loguniform(rng, 1e-3, 1e3)
        stream_dev[spec.label()] = full_vs_recursive(spec, stream)

    nest_dev = 0.0
    for _ in range(cases):
        d = int(rng.integers(1, 4))
        alpha = float(rng.uniform(0.0, 0.95))
        lam = _loguniform(rng, 1e-2, 1e2, d)
        gamma = float(rng.uniform(0.05, 0.9) * regions.spectral_threshold(OptimizerKind.NESTEROV, alpha) / (1 - alpha) / lam.max())
        prob = QuadraticProblem(rng.uniform(-3, 3, d), lam)
        forms = nesterov_three_forms(alpha, gamma, prob, rng.uniform(-5, 5, d), nesterov_steps)
        lhs = forms.classic.iterates
        rhs = forms.phi_form.iterates + gamma * alpha * forms.lookahead_momentum
        dev = np.max(np.abs(lhs - rhs) / (1.0 + np.abs(lhs)))
        dev = max(dev, np.max(np.abs(lhs - forms.lookahead.iterates) / (1.0 + np.abs(lhs))))
        nest_dev = max(nest_dev, float(dev))

    checks = {
        "momentum0_is_gd": identical["momentum0_gd"],
        "nesterov0_is_gd": identical["nesterov0_gd"],
        "rmsprop_is_adam0": identical["rmsprop_adam0"],
        "full_vs_recursive_max_rel": max(stream_dev.values()),
        "nesterov_three_form_max_rel": nest_dev,
    }
    passed = (
        checks["momentum0_is_gd"]
        and checks["nesterov0_is_gd"]
        and checks["rmsprop_is_adam0"]
        and checks["full_vs_recursive_max_rel"] <= 1e-9
        and checks["nesterov_three_form_max_rel"] <= 1e-9
    )
    return {"suite": "equivalence", "checks": checks, "per_spec": stream_dev, "passed": bool(passed)}


# ---------------------------------------------------------------------------
# bounds


@dataclass(frozen=True)
class AdamCase:
    spec: OptimizerSpec
    problem: object
    theta0: np.ndarray
    gamma: float


def adam_cases(count: int, seed: int) -> list[AdamCase]:
    """Random Adam configurations inside the boundedness hypotheses.

    Half deterministic, half stochastic with uniform data, ``c <= 10`` and batch
    sizes 1 to 32.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for j in range(count):
        d = int(rng.integers(1, 6))
        alpha = float(rng.uniform(0.0, 0.95))
        lo = alpha * alpha
        beta = float(lo + (1.0 - lo) * rng.uniform(1e-3, 1.0 - 1e-3))
        eps = float(_loguniform(rng, 1e-8, 1.0))
        gamma = float(_loguniform(rng, 1e-3, 1e3))
        lam = _loguniform(rng, 1e-3, 1e3, d)
        theta0 = rng.uniform(-10, 10, d)
        if j % 2 == 0:
            prob = QuadraticProblem(rng.uniform(-10, 10, d), lam)
        else:
            base = QuadraticProblem(np.zeros(d), lam)
            prob = StochasticQuadraticProblem(
                base, float(rng.uniform(0.0, 10.0)), int(rng.integers(1, 33)), DataLaw.UNIFORM, int(rng.integers(0, 2**63))
            )
        cases.append(AdamCase(OptimizerSpec.adam(alpha, beta, eps), prob, theta0, gamma))
    return cases


def run_adam_cases(cases: Sequence[AdamCase], steps: int) -> list[dict]:
    """Simulate in batches grouped by dimension and data kind; one record per case."""
    cfg = RunConfig(steps=steps)
    groups = defaultdict(list)
    for i, c in enumerate(cases):
        groups[(c.problem.dim, isinstance(c.problem, StochasticQuadraticProblem))].append(i)
    out: list[Optional[dict]] = [None] * len(cases)
    for (d, stochastic), idx in sorted(groups.items()):
        sel = [cases[i] for i in idx]
        theta = np.stack([c.theta0 for c in sel])
        eigs = np.stack([c.problem.eigs for c in sel])
        targets = StochasticTargets([c.problem for c in sel]) if stochastic else np.stack([c.problem.target for c in sel])
        summ = simulate_batch(
            OptimizerKind.ADAM,
            theta,
            np.array([c.gamma for c in sel]),
            eigs,
            targets,
            cfg,
            alpha=np.array([c.spec.alpha for c in sel]),
            beta=np.array([c.spec.beta for c in sel]),
            eps=np.array([c.spec.eps for c in sel]),
        )
        for k, i in enumerate(idx):
            c = cases[i]
            bound = bounds.adam_bound(bounds.adam_inputs_for(c.problem, c.spec, c.gamma, c.theta0))
            out[i] = {
                "case": i,
                "dim": d,
                "stochastic": stochastic,
                "escaped": bool(summ.escape_step[k] >= 0),
                "sup": float(summ.sup[k]),
                "bound": bound,
                "holds": bool(summ.sup[k] <= bound),
            }
    return out  # type: ignore[return-value]


def gd_cases(count: int, seed: int, steps: int) -> list[bounds.BoundCertificate]:
    """GD runs with effective rates in [0, 1] and bounded stochastic data."""
    rng = np.random.default_rng(seed)
    certs = []
    for _ in range(count):
        d = int(rng.integers(1, 4))
        lam = _loguniform(rng, 1e-2, 1e2, d)
        c = float(rng.uniform(0.1, 5.0))
        prob = StochasticQuadraticProblem(
            QuadraticProblem(np.zeros(d), lam), c, int(rng.integers(1, 9)), DataLaw.UNIFORM, int(rng.integers(0, 2**63))
        )
        sched = TableRate(tuple(rng.uniform(0.0, 1.0, steps) / lam.max()))
        th0 = rng.uniform(-20, 20, d)
        traj = run_trajectory(OptimizerSpec.gd(), prob, th0, sched, steps)
        certs.append(bounds.certify_gd(traj, prob, sched, delta=int(rng.integers(1, 4)), c=c))
    return certs


def momentum_cases(count: int, seed: int, steps: int) -> list[bounds.BoundCertificate]:
    """Momentum runs under the learning-rate cap with bounded stochastic data."""
    rng = np.random.default_rng(seed)
    certs = []
    for _ in range(count):
        d = int(rng.integers(1, 4))
        alpha = float(rng.uniform(0.0, 0.95))
        lam = _loguniform(rng, 1e-2, 1e2, d)
        prob = StochasticQuadraticProblem(
            QuadraticProblem(np.zeros(d), lam),
            float(rng.uniform(0.0, 5.0)),
            int(rng.integers(1, 9)),
            DataLaw.UNIFORM,
            int(rng.integers(0, 2**63)),
        )
        cap = bounds.momentum_lr_cap(alpha, float(lam.max()))
        spec = OptimizerSpec.momentum(alpha)
        sched = ConstantRate(float(cap * rng.uniform(0.05, 1.0)))
        traj = run_trajectory(spec, prob, rng.uniform(-20, 20, d), sched, steps)
        certs.append(bounds.certify_momentum(traj, prob, spec, sched))
    return certs


def hoelder_streams(count: int, seed: int) -> dict:
    """Worst ratio of the empirical increment to its bound over random streams."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = 0
    for t in range(count):
        n = int(rng.integers(1, 201))
        alpha = float(rng.uniform(0.0, 0.99))
        beta = float(alpha * alpha + (1 - alpha * alpha) * rng.uniform(1e-3, 1 - 1e-3))
        ell = float(_loguniform(rng, 1e-3, 1e3))
        eps = float(_loguniform(rng, 1e-8, 1.0))
        kind = t % 4
        if kind == 0:
            g = rng.normal(size=n)
        elif kind == 1:
            g = np.full(n, rng.normal())
        elif kind == 2:
            g = rng.standard_cauchy(n)
        else:  # aligned with the Cauchy-Schwarz extremal direction
            g = (alpha / beta) ** np.arange(n - 1, -1, -1, dtype=float)
        ratio = bounds.hoelder_ratio(alpha, beta, ell, eps, g) / bounds.hoelder_increment_bound(alpha, beta, ell)
        worst = max(worst, ratio)
        violations += ratio > 1.0
    return {"streams": count, "worst_ratio_to_bound": worst, "violations": int(violations), "passed": violations == 0}


def bounds_suite(seed: int = 0, adam_count: int = 40, steps: int = 5000, count: int = 40, streams: int = 2000) -> dict:
    adam = run_adam_cases(adam_cases(adam_count, seed), steps)
    gd = gd_cases(count, seed + 1, min(steps, 1000))
    mom = momentum_cases(count, seed + 2, min(steps, 1000))
    hol = hoelder_streams(streams, seed + 3)
    parts = {
        "adam": {
            "cases": len(adam),
            "escapes": sum(r["escaped"] for r in adam),
            "violations": sum(not r["holds"] for r in adam),
        },
        "gd": {"cases": len(gd), "violations": sum(not c.holds for c in gd)},
        "momentum": {"cases": len(mom), "violations": sum(not c.holds for c in mom)},
        "hoelder": hol,
    }
    passed = (
        parts["adam"]["escapes"] == 0
        and parts["adam"]["violations"] == 0
        and parts["gd"]["violations"] == 0
        and parts["momentum"]["violations"] == 0
        and hol["passed"]
    )
    return {"suite": "bounds", "parts": parts, "passed": bool(passed)}


# ---------------------------------------------------------------------------
# bias-adjusted momentum


def bias_adjusted_cases(count: int, seed: int, steps: int) -> list[dict]:
    """Bias-adjusted momentum at interior rates; each record reports the limsup."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(count):
        d = int(rng.integers(1, 4))
        alpha = float(rng.uniform(0.05, 0.95))
        lam_max = float(_loguniform(rng, 1e-1, 1e2))
        lam = lam_max * np.concatenate([[1.0], rng.uniform(0.2, 1.0, d - 1)])
        frac = float(rng.uniform(0.05, 0.9))
        gamma = frac * regions.threshold(OptimizerKind.MOMENTUM, alpha) / lam_max
        target = rng.uniform(-5, 5, d)
        theta0 = target + rng.uniform(-5, 5, d)
        rates = np.array([gamma / (1.0 - alpha**n) for n in range(1, steps + 1)])
        # the early rates gamma/(1-alpha^n) can amplify transiently far past 1e8
        # before the iteration contracts, so only overflow counts as divergence
        cfg = RunConfig(steps=steps, escape_radius=math.inf)
        summ = convergent_schedule_batch(
            np.full((steps, 1), alpha), rates[:, None], lam[None, :], target[None, :], theta0[None, :], cfg
        )
        rep = summ.report(0, cfg)
        records.append(
            {
                "alpha": alpha,
                "gamma_lambda_max": gamma * lam_max,
                "threshold": regions.threshold(OptimizerKind.MOMENTUM, alpha),
                "transient_peak": rep.sup_estimate,
                "limsup": rep.limsup_estimate,
                "converged": rep.converged_to_target,
            }
        )
    return records


SUITES = {
    "regions": regions_suite,
    "bounds": bounds_suite,
    "equivalence": equivalence_suite,
}
