"""Batched trajectory simulation, boundedness verdicts and Monte-Carlo runs.

``simulate_batch`` advances many independent trajectories at once, one row per
trajectory, with per-row hyperparameters, learning-rate schedules, eigenvalues
and targets. It keeps only summary statistics, so long runs need O(B d) memory.
The arithmetic per row is exactly that of :func:`optimizers.run_trajectory`.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .optimizers import (
    LearningRateSchedule,
    OptimizerKind,
    OptimizerSpec,
    Trajectory,
    TrajectoryStatus,
    advance,
    init_state,
    row_norms,
)
from .problems import (
    GradientConvention,
    Problem,
    StochasticQuadraticProblem,
    batch_means,
    effective_eigs,
    reference_target,
    _check_dim,
)

CHUNK = 1024


@dataclass(frozen=True)
class RunConfig:
    steps: int = 20_000
    escape_radius: float = 1e8
    stabilization_window: float = 0.25
    limsup_window: float = 0.10
    seed: int = 0
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be > 0")
        for name in ("stabilization_window", "limsup_window"):
            w = getattr(self, name)
            if not 0.0 < w < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    @property
    def stabilization_steps(self) -> int:
        return max(1, int(round(self.stabilization_window * self.steps)))

    @property
    def limsup_steps(self) -> int:
        return max(1, int(round(self.limsup_window * self.steps)))


class Verdict(str, Enum):
    BOUNDED = "bounded"
    DIVERGED = "diverged"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class VerdictReport:
    verdict: Verdict
    escape_step: Optional[int]
    sup_estimate: float
    limsup_estimate: float
    converged_to_target: bool
    diverged_numeric: bool = False
    steps_run: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def json_safe(obj):
    """Replace non-finite floats by strings so output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(json_safe(obj), indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# per-step inputs


class StepSource:
    """Provides an ``(S, B, d)`` block of per-step values for steps ``n0 <= n < n1``."""

    def chunk(self, n0: int, n1: int) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class Static(StepSource):
    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.float64)

    def chunk(self, n0, n1):
        return np.broadcast_to(self.values, (n1 - n0, *self.values.shape))


class Table(StepSource):
    """Precomputed values of shape ``(N, B, d)`` indexed by ``n - 1``."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.float64)

    def chunk(self, n0, n1):
        return self.values[n0 - 1 : n1 - 1]


class StochasticTargets(StepSource):
    """Minibatch means, one stochastic problem per row."""

    def __init__(self, problems: Sequence[StochasticQuadraticProblem]):
        self.problems = list(problems)

    def chunk(self, n0, n1):
        return np.stack([batch_means(p, n0, n1) for p in self.problems], axis=1)


Source = Union[np.ndarray, StepSource]


def _source(x: Source) -> StepSource:
    return x if isinstance(x, StepSource) else Static(x)


# ---------------------------------------------------------------------------
# batched engine


@dataclass
class BatchSummary:
    sup: np.ndarray  # running sup of ||theta_n|| over computed iterates
    last_increase: np.ndarray  # last step at which the running sup grew (0 = never)
    escape_step: np.ndarray  # -1 if none
    numeric: np.ndarray  # bool: stopped on a non-finite iterate
    limsup: np.ndarray  # max ||theta_n - reference|| over the final window
    final: np.ndarray  # last computed iterate, (B, d)
    steps: int

    def report(self, i: int, cfg: RunConfig) -> VerdictReport:
        esc = int(self.escape_step[i])
        numeric = bool(self.numeric[i])
        if esc >= 0:
            verdict = Verdict.DIVERGED
            limsup = math.inf
        else:
            stable = self.last_increase[i] <= self.steps - cfg.stabilization_steps
            verdict = Verdict.BOUNDED if stable else Verdict.INCONCLUSIVE
            limsup = float(self.limsup[i])
        return VerdictReport(
            verdict=verdict,
            escape_step=esc if esc >= 0 else None,
            sup_estimate=float(self.sup[i]),
            limsup_estimate=limsup,
            converged_to_target=bool(esc < 0 and limsup < cfg.convergence_tol),
            diverged_numeric=numeric,
            steps_run=(esc - 1 if numeric else esc) if esc >= 0 else self.steps,
        )

    def reports(self, cfg: RunConfig) -> list[VerdictReport]:
        return [self.report(i, cfg) for i in range(self.sup.size)]


def _column(x, rows: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=np.float64), (rows,)).reshape(rows, 1).copy()


def simulate_batch(
    kind: OptimizerKind,
    theta0: np.ndarray,
    rates: np.ndarray,
    eigs: Source,
    targets: Source,
    cfg: RunConfig,
    alpha=0.0,
    beta=0.0,
    eps=0.0,
    reference: Optional[np.ndarray] = None,
) -> BatchSummary:
    """Advance ``B`` trajectories for ``cfg.steps`` steps.

    ``rates`` is ``(B,)`` for constant rates or ``(N, B)`` per step. ``eigs`` are
    the effective gradient slopes (already converted for the convention).
    Rows that escape or overflow are frozen at their last finite iterate.
    """
    kind = OptimizerKind(kind)
    theta = np.array(theta0, dtype=np.float64)
    B, d = theta.shape
    N = cfg.steps
    rates = np.asarray(rates, dtype=np.float64)
    per_step = rates.ndim == 2
    if per_step and rates.shape[0] < N:
        raise ValueError("rate table shorter than the run")
    const_rate = None if per_step else _column(rates, B)
    a, b, e = _column(alpha, B), _column(beta, B), _column(eps, B)
    eig_src, tgt_src = _source(eigs), _source(targets)
    ref = np.zeros((B, d)) if reference is None else np.broadcast_to(reference, (B, d))

    state = init_state(d, rows=B)
    sup = row_norms(theta)
    last_inc = np.zeros(B, dtype=np.int64)
    escape = np.full(B, -1, dtype=np.int64)
    numeric = np.zeros(B, dtype=bool)
    active = np.ones(B, dtype=bool)
    limsup = np.zeros(B)
    lim_start = N - cfg.limsup_steps + 1
    radius = cfg.escape_radius

    with np.errstate(all="ignore"):
        for n0 in range(1, N + 1, CHUNK):
            n1 = min(N + 1, n0 + CHUNK)
            lam_blk = eig_src.chunk(n0, n1)
            tgt_blk = tgt_src.chunk(n0, n1)
            for n in range(n0, n1):
                g = lam_blk[n - n0] * (theta - tgt_blk[n - n0])
                state, u = advance(kind, a, b, e, state, g)
                rate = rates[n - 1][:, None] if per_step else const_rate
                new = theta - rate * u
                norms = row_norms(new)
                finite = np.isfinite(norms)
                exits = active & ~(finite & (norms <= radius))
                if exits.any():
                    bad = exits & ~finite
                    escape[exits] = n
                    numeric |= bad
                    keep = active & ~exits
                    moved = keep | (exits & finite)
                else:
                    keep = moved = active
                grow = moved & (norms > sup)
                if grow.any():
                    sup = np.where(grow, norms, sup)
                    last_inc[grow] = n
                theta = np.where(moved[:, None], new, theta)
                active = keep
                if n >= lim_start:
                    dist = row_norms(theta - ref)
                    limsup = np.maximum(limsup, dist)
    return BatchSummary(sup, last_inc, escape, numeric, limsup, theta, N)


def simulate_spec(
    spec: OptimizerSpec,
    theta0: np.ndarray,
    rates: np.ndarray,
    eigs: Source,
    targets: Source,
    cfg: RunConfig,
    reference: Optional[np.ndarray] = None,
    jobs: int = 1,
) -> BatchSummary:
    """``simulate_batch`` for a single optimizer spec, optionally split over threads."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    B = theta0.shape[0]
    if jobs <= 1 or B < 2 * jobs or isinstance(eigs, StepSource) or isinstance(targets, StepSource):
        return simulate_batch(
            spec.kind, theta0, rates, eigs, targets, cfg, spec.alpha, spec.beta, spec.eps, reference
        )
    bounds = np.linspace(0, B, jobs + 1).astype(int)
    rates = np.asarray(rates, dtype=np.float64)
    ref = None if reference is None else np.broadcast_to(reference, theta0.shape)

    def rows(x, lo, hi, axis=0):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            return x
        if axis == 1:
            return x[:, lo:hi]
        return x[lo:hi] if x.shape[0] == B else x

    def part(k):
        lo, hi = bounds[k], bounds[k + 1]
        r = rows(rates, lo, hi, axis=1 if rates.ndim == 2 else 0)
        return simulate_batch(
            spec.kind,
            theta0[lo:hi],
            r,
            rows(np.broadcast_to(eigs, theta0.shape), lo, hi),
            rows(np.broadcast_to(targets, theta0.shape), lo, hi),
            cfg,
            spec.alpha,
            spec.beta,
            spec.eps,
            None if ref is None else ref[lo:hi],
        )

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(part, range(jobs)))
    return BatchSummary(
        np.concatenate([p.sup for p in parts]),
        np.concatenate([p.last_increase for p in parts]),
        np.concatenate([p.escape_step for p in parts]),
        np.concatenate([p.numeric for p in parts]),
        np.concatenate([p.limsup for p in parts]),
        np.concatenate([p.final for p in parts]),
        cfg.steps,
    )


# ---------------------------------------------------------------------------
# single trajectories


def classify(traj: Trajectory, cfg: RunConfig, reference=None) -> VerdictReport:
    """Verdict for a recorded trajectory; ``cfg.steps`` is the planned length."""
    N = cfg.steps
    if N < 100:
        raise ValueError("classification needs at least 100 steps")
    if traj.steps_run > N:
        raise ValueError("trajectory is longer than cfg.steps")
    ref = np.zeros(traj.dim) if reference is None else np.asarray(reference, dtype=np.float64)
    escaped = traj.status is not TrajectoryStatus.COMPLETED
    norms = row_norms(traj.iterates)
    sup = traj.running_sup
    grew = np.nonzero(sup[1:] > sup[:-1])[0]
    last_inc = int(grew[-1] + 1) if grew.size else 0
    if escaped or norms[-1] > cfg.escape_radius:
        esc = traj.escape_step if traj.escape_step is not None else traj.steps_run
        return VerdictReport(
            Verdict.DIVERGED,
            esc,
            float(sup[-1]),
            math.inf,
            False,
            traj.status is TrajectoryStatus.DIVERGED_NUMERIC,
            traj.steps_run,
        )
    if traj.steps_run < N:
        raise ValueError("trajectory stopped early without escaping")
    tail = traj.iterates[N - cfg.limsup_steps + 1 :]
    limsup = float(np.max(row_norms(tail - ref)))
    stable = last_inc <= N - cfg.stabilization_steps
    return VerdictReport(
        Verdict.BOUNDED if stable else Verdict.INCONCLUSIVE,
        None,
        float(sup[-1]),
        limsup,
        limsup < cfg.convergence_tol,
        False,
        N,
    )


def run_and_classify(
    spec: OptimizerSpec,
    problem: Problem,
    theta0,
    schedule: LearningRateSchedule,
    cfg: RunConfig,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> VerdictReport:
    """Summary-only run of one trajectory (no iterate history kept)."""
    return run_many(spec, [problem], [theta0], schedule, cfg, convention)[0]


def run_many(
    spec: OptimizerSpec,
    problems: Sequence[Problem],
    theta0s: Sequence,
    schedule: LearningRateSchedule,
    cfg: RunConfig,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> list[VerdictReport]:
    """Simulate several problems of equal dimension under one spec and schedule."""
    d = problems[0].dim
    theta = np.stack([_check_dim(t, d, "theta0") for t in theta0s])
    eigs = np.stack([effective_eigs(p.eigs, convention) for p in problems])
    stochastic = [isinstance(p, StochasticQuadraticProblem) for p in problems]
    if any(stochastic) and not all(stochastic):
        raise ValueError("cannot mix deterministic and stochastic problems in one batch")
    if all(stochastic):
        targets: Source = StochasticTargets(problems)
    else:
        targets = np.stack([p.target for p in problems])
    ref = np.stack([reference_target(p) for p in problems])
    rates = schedule.rates(cfg.steps)[:, None].repeat(len(problems), axis=1)
    summary = simulate_spec(spec, theta, rates, eigs, targets, cfg, ref)
    return summary.reports(cfg)


@dataclass(frozen=True)
class MonteCarloReport:
    max_sup: float
    all_bounded: bool  # no trial escaped or overflowed
    reports: tuple

    def to_dict(self) -> dict:
        return {
            "max_sup": self.max_sup,
            "all_bounded": self.all_bounded,
            "reports": [r.to_dict() for r in self.reports],
        }


def monte_carlo(
    problem: StochasticQuadraticProblem,
    spec: OptimizerSpec,
    schedule: LearningRateSchedule,
    cfg: RunConfig,
    trials: int,
    theta0,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> MonteCarloReport:
    """Run ``trials`` independent data streams with seeds ``cfg.seed + t``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    probs = [replace(problem, seed=cfg.seed + t) for t in range(trials)]
    reports = run_many(spec, probs, [theta0] * trials, schedule, cfg, convention)
    return MonteCarloReport(
        max(r.sup_estimate for r in reports),
        all(r.verdict is not Verdict.DIVERGED for r in reports),
        tuple(reports),
    )


# ---------------------------------------------------------------------------
# time-varying momentum


ScheduleLike = Union[np.ndarray, Sequence[float], Callable[[int], float]]


def _per_step(x: ScheduleLike, N: int) -> np.ndarray:
    if callable(x):
        return np.array([float(x(n)) for n in range(1, N + 1)])
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(N, float(arr))
    if arr.shape[0] < N:
        raise ValueError("schedule shorter than the run")
    return arr[:N]


def convergent_schedule_batch(
    momentum: np.ndarray,
    rates: np.ndarray,
    eigs: np.ndarray,
    targets: np.ndarray,
    theta0: np.ndarray,
    cfg: RunConfig,
) -> BatchSummary:
    """Momentum with per-step ``a_n`` and ``lambda_n``, both ``(N, B)``.

    ``m_n = a_n m + (1 - a_n) g_n``, ``theta_n = theta_{n-1} - lambda_n m_n``.
    """
    theta = np.array(theta0, dtype=np.float64)
    B, d = theta.shape
    N = cfg.steps
    m = np.zeros((B, d))
    sup = row_norms(theta)
    last_inc = np.zeros(B, dtype=np.int64)
    escape = np.full(B, -1, dtype=np.int64)
    numeric = np.zeros(B, dtype=bool)
    active = np.ones(B, dtype=bool)
    limsup = np.zeros(B)
    lim_start = N - cfg.limsup_steps + 1
    with np.errstate(all="ignore"):
        for n in range(1, N + 1):
            a = momentum[n - 1][:, None]
            g = eigs * (theta - targets)
            m = a * m + (1.0 - a) * g
            new = theta - rates[n - 1][:, None] * m
            norms = row_norms(new)
            bad = active & ~np.isfinite(norms)
            out = active & np.isfinite(norms) & (norms > cfg.escape_radius)
            escape[bad | out] = n
            numeric |= bad
            grow = (active & ~bad) & (norms > sup)
            sup = np.where(grow, norms, sup)
            last_inc[grow] = n
            theta = np.where((active & ~bad)[:, None], new, theta)
            active &= ~(bad | out)
            if n >= lim_start:
                limsup = np.maximum(limsup, row_norms(theta - targets))
    return BatchSummary(sup, last_inc, escape, numeric, limsup, theta, N)


def convergent_schedule_run(
    momentum: ScheduleLike,
    rates: ScheduleLike,
    problem: Problem,
    theta0,
    cfg: RunConfig,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> VerdictReport:
    """Time-varying momentum run with ``a_n -> alpha`` and ``lambda_n -> gamma``."""
    if isinstance(problem, StochasticQuadraticProblem):
        raise TypeError("convergent_schedule_run expects a deterministic problem")
    N = cfg.steps
    a = _per_step(momentum, N)[:, None]
    r = _per_step(rates, N)[:, None]
    if np.any((a < 0) | (a >= 1)):
        raise ValueError("momentum schedule must lie in [0, 1)")
    theta = _check_dim(theta0, problem.dim, "theta0")[None, :]
    lam = effective_eigs(problem.eigs, convention)[None, :]
    summary = convergent_schedule_batch(a, r, lam, problem.target[None, :], theta, cfg)
    return summary.report(0, cfg)
