"""Closed-form stability regions and their empirical counterparts.

A tuple ``(gamma, lambda_1, ..., lambda_d)`` lies in the stability region of an
optimizer when every trajectory on the quadratic with those eigenvalues stays
bounded. For the optimizers here the region is ``max_i gamma lambda_i <= T``
with an optimizer-specific threshold ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .harness import RunConfig, Verdict, VerdictReport, Table, simulate_spec
from .optimizers import OptimizerKind, OptimizerSpec, fmt
from .rng import uniforms

BOUNDARY_TOL = 1e-9
AGREEMENT_BAND = 1e-3


def threshold(kind: OptimizerKind, alpha: float = 0.0) -> float:
    """Largest admissible ``max_i gamma lambda_i`` as stated by the stability theorem.

    GD 2, momentum ``2(1+a)/(1-a)``, Nesterov ``2(1-a^2)/(1+2a)``, adaptive
    methods unbounded.
    """
    kind = OptimizerKind(kind)
    if kind is OptimizerKind.GD:
        return 2.0
    if kind is OptimizerKind.MOMENTUM:
        return 2.0 * (1.0 + alpha) / (1.0 - alpha)
    if kind is OptimizerKind.NESTEROV:
        return 2.0 * (1.0 - alpha * alpha) / (1.0 + 2.0 * alpha)
    return math.inf


def spectral_threshold(kind: OptimizerKind, alpha: float = 0.0) -> float:
    """Threshold at which the companion matrix of the update recursion reaches
    spectral radius one.

    Coincides with :func:`threshold` except for Nesterov, where the recursion
    ``q_n = a q + g_n``, ``theta_n = theta - gamma (g_n + a q_n)`` has trace
    ``(1+a)(1-gamma lambda)`` and determinant ``a(1-gamma lambda)`` and therefore
    turns unstable at ``2(1+a)/(1+2a)``; the stated theorem value is smaller by a
    factor ``1-a``.
    """
    kind = OptimizerKind(kind)
    if kind is OptimizerKind.NESTEROV:
        return 2.0 * (1.0 + alpha) / (1.0 + 2.0 * alpha)
    return threshold(kind, alpha)


class Membership(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class RegionQuery:
    spec: OptimizerSpec
    gamma: float
    eigs: tuple

    def __post_init__(self):
        eigs = tuple(float(x) for x in np.atleast_1d(self.eigs))
        if not eigs:
            raise ValueError("eigs must be non-empty")
        vals = (float(self.gamma), *eigs)
        if not all(math.isfinite(x) and x >= 0 for x in vals):
            raise ValueError("gamma and eigs must be finite and >= 0")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "eigs", eigs)

    @property
    def product(self) -> float:
        return max(self.gamma * lam for lam in self.eigs)


@dataclass(frozen=True)
class RegionVerdict:
    membership: Membership
    threshold: float
    margin: float  # (threshold - max gamma lambda) / threshold, positive inside

    @property
    def admissible(self) -> bool:
        return self.membership is not Membership.EXTERIOR


def classify_product(x: float, thr: float, tol: float = BOUNDARY_TOL) -> RegionVerdict:
    if math.isinf(thr):
        return RegionVerdict(Membership.INTERIOR, thr, 1.0)
    margin = (thr - x) / thr
    if abs(x - thr) <= tol * thr:
        return RegionVerdict(Membership.BOUNDARY, thr, margin)
    return RegionVerdict(Membership.INTERIOR if x < thr else Membership.EXTERIOR, thr, margin)


def in_stability_region(query: RegionQuery) -> RegionVerdict:
    return classify_product(query.product, threshold(query.spec.kind, query.spec.alpha))


@dataclass(frozen=True)
class NestingReport:
    nesterov: float
    gd: float
    momentum: float
    adam: float

    @property
    def ordered(self) -> bool:
        return self.nesterov < self.gd < self.momentum < self.adam

    def as_tuple(self) -> tuple:
        return (self.nesterov, self.gd, self.momentum, self.adam)


def region_nesting_check(alpha: float) -> NestingReport:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rep = NestingReport(
        threshold(OptimizerKind.NESTEROV, alpha),
        threshold(OptimizerKind.GD),
        threshold(OptimizerKind.MOMENTUM, alpha),
        threshold(OptimizerKind.ADAM, alpha),
    )
    if not rep.ordered:
        raise AssertionError(f"thresholds not strictly increasing: {rep.as_tuple()}")
    return rep


def empirical_region_verdict(
    spec: OptimizerSpec,
    gamma: float,
    eigs,
    target=None,
    theta0=None,
    cfg: RunConfig = RunConfig(),
) -> VerdictReport:
    """Simulate one trajectory at constant rate and classify it."""
    return empirical_verdicts(spec, [gamma], [eigs], target, theta0, cfg)[0]


def empirical_verdicts(
    spec: OptimizerSpec,
    gammas: Sequence[float],
    eigs: Sequence,
    target=None,
    theta0=None,
    cfg: RunConfig = RunConfig(),
    jobs: int = 1,
) -> list[VerdictReport]:
    """Batch version of :func:`empirical_region_verdict`, one row per ``(gamma, eigs)``."""
    lam = np.atleast_2d(np.asarray(eigs, dtype=np.float64))
    B, d = lam.shape
    tgt = np.zeros(d) if target is None else np.asarray(target, dtype=np.float64).reshape(d)
    th0 = tgt + 1.0 if theta0 is None else np.asarray(theta0, dtype=np.float64).reshape(d)
    if np.array_equal(th0, tgt):
        raise ValueError("theta0 must differ from the target")
    theta = np.broadcast_to(th0, (B, d))
    summary = simulate_spec(
        spec, theta, np.asarray(gammas, dtype=np.float64), lam, np.broadcast_to(tgt, (B, d)), cfg, tgt, jobs
    )
    return summary.reports(cfg)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    lambda_max: float
    closed_form: Membership
    empirical: Verdict
    margin: float
    steps_run: int

    def agrees(self, band: float = AGREEMENT_BAND) -> Optional[bool]:
        """``None`` for points excluded by the band or with inconclusive runs."""
        if abs(self.margin) <= band or self.empirical is Verdict.INCONCLUSIVE:
            return None
        expected = Verdict.BOUNDED if self.margin > 0 else Verdict.DIVERGED
        return self.empirical is expected

    def csv_fields(self) -> list[str]:
        return [
            fmt(self.gamma),
            fmt(self.lambda_max),
            self.closed_form.value,
            self.empirical.value,
            fmt(self.margin),
            str(self.steps_run),
        ]


SWEEP_HEADER = ["gamma", "lambda_max", "closed_form", "empirical", "margin", "steps_run"]


def log_grid(lo: float, hi: float, count: int) -> np.ndarray:
    if count < 2 or not (0 < lo < hi):
        raise ValueError("log grid needs 0 < min < max and count >= 2")
    return np.geomspace(lo, hi, count)


def region_sweep(
    spec: OptimizerSpec,
    gammas: Sequence[float],
    lambdas: Sequence[float],
    cfg: RunConfig = RunConfig(),
    eig_profile: Sequence[float] = (1.0,),
    target=None,
    theta0=None,
    jobs: int = 1,
    thresh: Optional[float] = None,
) -> list[SweepRow]:
    """Evaluate every grid point, gamma-major; eigenvalues are ``lambda_max * profile``.

    ``thresh`` overrides the closed-form threshold (for example with
    :func:`spectral_threshold`).
    """
    profile = np.asarray(eig_profile, dtype=np.float64)
    if profile.max() != 1.0 or profile.min() < 0:
        raise ValueError("eig_profile must be non-negative with maximum exactly 1")
    thr = threshold(spec.kind, spec.alpha) if thresh is None else thresh
    G, L = np.meshgrid(np.asarray(gammas, float), np.asarray(lambdas, float), indexing="ij")
    g, lm = G.ravel(), L.ravel()
    reports = empirical_verdicts(spec, g, lm[:, None] * profile[None, :], target, theta0, cfg, jobs)
    rows = []
    for gi, li, rep in zip(g, lm, reports):
        verdict = classify_product(gi * li, thr)
        rows.append(SweepRow(float(gi), float(li), verdict.membership, rep.verdict, verdict.margin, rep.steps_run))
    return rows


@dataclass(frozen=True)
class AgreementSummary:
    compared: int
    agreeing: int
    excluded_band: int
    inconclusive: int
    mismatches: tuple

    @property
    def rate(self) -> float:
        return self.agreeing / self.compared if self.compared else 1.0

    @property
    def perfect(self) -> bool:
        return self.compared > 0 and self.agreeing == self.compared


def agreement(rows: Sequence[SweepRow], band: float = AGREEMENT_BAND) -> AgreementSummary:
    compared = agreeing = excluded = inconclusive = 0
    bad = []
    for r in rows:
        if abs(r.margin) <= band:
            excluded += 1
            continue
        if r.empirical is Verdict.INCONCLUSIVE:
            inconclusive += 1
            continue
        compared += 1
        if r.agrees(band):
            agreeing += 1
        else:
            bad.append(r)
    return AgreementSummary(compared, agreeing, excluded, inconclusive, tuple(bad))


# ---------------------------------------------------------------------------
# sampled falsifiers for strong and super-strong stability


SCHEDULE_FAMILIES = ("random", "alternating", "bang-bang", "geometric", "constant")


def _bang_bang(u_switch: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Switch between ``lo`` and ``hi`` after random dwell times of 1..50 steps."""
    N = u_switch.size
    out = np.empty(N)
    level, i, j = hi, 0, 0
    while i < N:
        dwell = 1 + int(u_switch[j % N] * 50)
        out[i : i + dwell] = level
        level = lo if level == hi else hi
        i += dwell
        j += 1
    return out


def sample_schedule(family: str, lo: float, hi: float, steps: int, seed: int, trial: int) -> np.ndarray:
    """One per-step sequence in ``[lo, hi]`` from the named family."""
    u = uniforms(seed, np.array([trial + 1]), steps + 1)[0]
    if family == "random":
        return lo + (hi - lo) * u[:steps]
    if family == "alternating":
        return np.where(np.arange(steps) % 2 == 0, hi, lo)
    if family == "bang-bang":
        return _bang_bang(u[:steps], lo, hi)
    if family == "geometric":
        # repeated sweeps from hi down to a small fraction of hi
        period = 10 + int(u[-1] * 90)
        k = np.arange(steps) % period
        floor = max(lo, hi * 1e-3)
        if hi <= 0:
            return np.full(steps, lo)
        return np.maximum(lo, hi * (floor / hi) ** (k / (period - 1)))
    if family == "constant":
        return np.full(steps, lo + (hi - lo) * u[-1])
    raise ValueError(f"unknown schedule family {family!r}")


@dataclass(frozen=True)
class FalsificationReport:
    trials: int
    escapes: tuple  # (trial, family, escape_step)
    max_sup: float
    families: tuple

    @property
    def falsified(self) -> bool:
        return bool(self.escapes)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "escapes": [list(e) for e in self.escapes],
            "max_sup": self.max_sup,
            "families": list(self.families),
        }


def _families(families: Sequence[str]) -> tuple:
    fams = tuple(families)
    for f in fams:
        if f not in SCHEDULE_FAMILIES:
            raise ValueError(f"unknown schedule family {f!r}")
    return fams


def sample_strong_stability(
    spec: OptimizerSpec,
    gamma_max: float,
    eigs,
    trials: int,
    seed: int,
    cfg: RunConfig = RunConfig(steps=5000),
    families: Sequence[str] = ("random", "alternating", "bang-bang", "geometric"),
    target=None,
    theta0=None,
) -> FalsificationReport:
    """Run schedules ``gamma_n in [0, gamma_max]`` at fixed eigenvalues; report escapes."""
    fams = _families(families)
    lam = np.asarray(eigs, dtype=np.float64).reshape(-1)
    d = lam.size
    N = cfg.steps
    rates = np.empty((N, trials))
    for t in range(trials):
        rates[:, t] = sample_schedule(fams[t % len(fams)], 0.0, gamma_max, N, seed, t)
    tgt = np.zeros(d) if target is None else np.asarray(target, float)
    th0 = tgt + 1.0 if theta0 is None else np.asarray(theta0, float)
    summary = simulate_spec(
        spec, np.broadcast_to(th0, (trials, d)), rates, np.broadcast_to(lam, (trials, d)),
        np.broadcast_to(tgt, (trials, d)), cfg, tgt,
    )
    return _falsification(summary, fams, trials)


def sample_super_strong_stability(
    spec: OptimizerSpec,
    gamma_max: float,
    lambda_min,
    lambda_max,
    trials: int,
    seed: int,
    cfg: RunConfig = RunConfig(steps=5000),
    families: Sequence[str] = ("random", "alternating", "bang-bang", "geometric"),
    target=None,
    theta0=None,
) -> FalsificationReport:
    """Both ``gamma_n`` and every ``lambda_n^(i)`` vary per step inside the box."""
    fams = _families(families)
    lo = np.asarray(lambda_min, dtype=np.float64).reshape(-1)
    hi = np.asarray(lambda_max, dtype=np.float64).reshape(-1)
    if lo.shape != hi.shape or np.any(lo <= 0) or np.any(hi < lo):
        raise ValueError("need 0 < lambda_min <= lambda_max per coordinate")
    d, N = lo.size, cfg.steps
    rates = np.empty((N, trials))
    lam = np.empty((N, trials, d))
    for t in range(trials):
        fam = fams[t % len(fams)]
        rates[:, t] = sample_schedule(fam, 0.0, gamma_max, N, seed, t)
        for i in range(d):
            lam[:, t, i] = sample_schedule(fam, lo[i], hi[i], N, seed + 1 + i, t)
    tgt = np.zeros(d) if target is None else np.asarray(target, float)
    th0 = tgt + 1.0 if theta0 is None else np.asarray(theta0, float)
    summary = simulate_spec(
        spec, np.broadcast_to(th0, (trials, d)), rates, Table(lam), np.broadcast_to(tgt, (trials, d)), cfg, tgt
    )
    return _falsification(summary, fams, trials)


def _falsification(summary, fams, trials) -> FalsificationReport:
    escapes = tuple(
        (t, fams[t % len(fams)], int(summary.escape_step[t]))
        for t in range(trials)
        if summary.escape_step[t] >= 0
    )
    return FalsificationReport(trials, escapes, float(np.max(summary.sup)), fams)
