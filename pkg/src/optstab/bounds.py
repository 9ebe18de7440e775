"""A-priori bounds on optimizer trajectories and their verification.

The formulas are evaluated exactly as stated; verification re-checks the
checkable hypotheses on a concrete run and compares the observed running sup
against the bound with zero tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .optimizers import (
    LearningRateSchedule,
    OptimizerKind,
    OptimizerSpec,
    Trajectory,
    TrajectoryStatus,
    row_norms,
)
from .problems import (
    GradientConvention,
    Problem,
    StochasticQuadraticProblem,
    data_bound_of,
    effective_eigs,
    targets_for_steps,
)


class HypothesisViolation(ValueError):
    """A bound was requested for a run that does not satisfy its hypotheses."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        super().__init__(f"hypothesis violated: {hypothesis}" + (f" ({detail})" if detail else ""))


def _finite(**values):
    for k, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{k} must be finite")


# ---------------------------------------------------------------------------
# gradient descent


@dataclass(frozen=True)
class GdBoundInputs:
    Gamma: float
    delta: int
    c: float
    theta0_abs: float
    supX: float

    def __post_init__(self):
        _finite(Gamma=self.Gamma, c=self.c, theta0_abs=self.theta0_abs, supX=self.supX)
        if self.Gamma < 0 or self.delta < 1 or self.c <= 0:
            raise ValueError("need Gamma >= 0, delta >= 1, c > 0")


def gd_bound(inp: GdBoundInputs) -> float:
    """``(1 + Gamma)^delta (max(c, |theta_0|) + sup |X_n|)``."""
    return (1.0 + inp.Gamma) ** inp.delta * (max(inp.c, inp.theta0_abs) + inp.supX)


# ---------------------------------------------------------------------------
# momentum


@dataclass(frozen=True)
class MomentumBoundInputs:
    alpha: float
    c: float
    cst: float
    Cst: float
    history_max: float
    prev_abs: float

    def __post_init__(self):
        _finite(c=self.c, cst=self.cst, Cst=self.Cst, history_max=self.history_max, prev_abs=self.prev_abs)
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must satisfy 0 <= alpha < 1")
        if self.c < 0 or self.cst < 0 or self.cst > self.Cst:
            raise ValueError("need c >= 0 and 0 <= cst <= Cst")
        if self.prev_abs > self.history_max:
            raise ValueError("prev_abs cannot exceed history_max")


def momentum_bound(inp: MomentumBoundInputs) -> float:
    """``4c + 3 c alpha Cst / ((1 - alpha) cst) + 3 history_max``."""
    if inp.alpha > 0 and inp.c > 0:
        if inp.cst == 0:
            raise ZeroDivisionError("cst = 0 with alpha > 0 and c > 0")
        middle = 3.0 * inp.c * inp.alpha * inp.Cst / ((1.0 - inp.alpha) * inp.cst)
    else:
        middle = 0.0
    return 4.0 * inp.c + middle + 3.0 * inp.history_max


def momentum_lr_cap(alpha: float, lambda_max: float) -> float:
    """Largest admissible learning rate ``(1-alpha) / ((1+2 alpha) max(1, lambda_max))``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must satisfy 0 <= alpha < 1")
    return (1.0 - alpha) / ((1.0 + 2.0 * alpha) * max(1.0, lambda_max))


# ---------------------------------------------------------------------------
# adaptive methods


def hoelder_increment_bound(alpha: float, beta: float, ell: float) -> float:
    """Bound ``ell^(-1/2) (1 - alpha^2 / beta)^(-1/2)`` on the momentum/RMS ratio."""
    if not 0.0 <= alpha < 1.0 or not 0.0 < beta < 1.0:
        raise ValueError("need 0 <= alpha < 1 and 0 < beta < 1")
    if beta <= alpha * alpha:
        raise HypothesisViolation("beta > alpha^2", f"alpha={alpha}, beta={beta}")
    if not ell > 0:
        raise ValueError("ell must be > 0")
    return ell**-0.5 * (1.0 - alpha * alpha / beta) ** -0.5


def hoelder_ratio(alpha: float, beta: float, ell: float, eps: float, grads) -> float:
    """``|sum a^(n-k) g_k| / (eps + (ell sum b^(n-k) g_k^2)^(1/2))`` for a scalar stream."""
    g = np.asarray(grads, dtype=np.float64)
    expo = np.arange(g.size - 1, -1, -1, dtype=np.float64)
    num = abs(np.power(alpha, expo) @ g)
    return num / (eps + math.sqrt(ell * (np.power(beta, expo) @ (g * g))))


@dataclass(frozen=True)
class AdamBoundInputs:
    alpha: float
    beta: float
    eps: float
    gamma_sup: float
    lambda_sup: float
    lambda_inf_tail: float
    N: int
    c: float
    d: int
    theta0_norm: float

    def __post_init__(self):
        _finite(
            eps=self.eps, gamma_sup=self.gamma_sup, lambda_sup=self.lambda_sup,
            lambda_inf_tail=self.lambda_inf_tail, c=self.c, theta0_norm=self.theta0_norm,
        )
        if not 0.0 <= self.alpha < 1.0 or not 0.0 < self.beta < 1.0:
            raise ValueError("need 0 <= alpha < 1 and 0 < beta < 1")
        if self.beta <= self.alpha * self.alpha:
            raise HypothesisViolation("beta > alpha^2", f"alpha={self.alpha}, beta={self.beta}")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.N < 1 or self.d < 1:
            raise ValueError("need N >= 1 and d >= 1")
        if self.c <= 0 or self.lambda_sup < self.lambda_inf_tail:
            raise ValueError("need c > 0 and lambda_sup >= lambda_inf_tail")


def adam_D(inp: AdamBoundInputs) -> float:
    """``((1+G)^(N+1) / G) (1-alpha)^N eps^(1-N) (1+lambda_sup)^N (C+2)/C``."""
    if inp.gamma_sup <= 0:
        raise ValueError("gamma_sup must be > 0")
    G, N, C = inp.gamma_sup, inp.N, inp.c
    return (
        (1.0 + G) ** (N + 1) / G
        * (1.0 - inp.alpha) ** N
        * inp.eps ** (1 - N)
        * (1.0 + inp.lambda_sup) ** N
        * ((C + 2.0) / C)
    )


def adam_bound_constant(inp: AdamBoundInputs) -> float:
    """The multiplier of ``(||theta_0|| + 1)`` in :func:`adam_bound`."""
    if math.sqrt(inp.beta) <= inp.alpha:
        raise HypothesisViolation("sqrt(beta) > alpha")
    if inp.lambda_inf_tail <= 0:
        raise HypothesisViolation("inf lambda > 0")
    a, c = inp.alpha, inp.c
    num = (3.0 + a) * (1.0 + c) * (1.0 + c * (1.0 + 1.0 / inp.eps)) ** 2 * (1.0 + inp.lambda_sup)
    den = (1.0 - inp.beta) ** 0.5 * (math.sqrt(inp.beta) - a) ** 2 * inp.lambda_inf_tail
    return 4.0 * adam_D(inp) * math.sqrt(inp.d) * num / den


def adam_bound(inp: AdamBoundInputs) -> float:
    return adam_bound_constant(inp) * (inp.theta0_norm + 1.0)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class BoundCertificate:
    bound_value: float
    observed_sup: float
    holds: bool
    margin: float
    hypotheses: dict = field(default_factory=dict)

    @classmethod
    def make(cls, bound: float, observed: float, hypotheses: dict) -> "BoundCertificate":
        return cls(bound, observed, bool(observed <= bound), bound - observed, hypotheses)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "bound": d["bound_value"],
            "observed_sup": d["observed_sup"],
            "holds": d["holds"],
            "margin": d["margin"],
            "hypotheses": d["hypotheses"],
        }


def _completed(traj: Trajectory) -> None:
    if traj.status is TrajectoryStatus.DIVERGED_NUMERIC:
        raise HypothesisViolation("finite trajectory", "run overflowed")


def certify_gd_scalar(thetas, rates, data, delta: int, c: float) -> BoundCertificate:
    """Certificate for ``theta_n = theta_{n-1} - r_n (theta_{n-1} - X_n)`` in one dimension.

    ``rates`` are the effective rates ``gamma_n lambda``. Whenever the previous
    ``delta`` iterates all exceed ``c`` in absolute value the step must have
    ``0 <= r_n <= 1`` and ``|X_n| <= c``.
    """
    th = np.asarray(thetas, dtype=np.float64)
    r = np.asarray(rates, dtype=np.float64)
    x = np.asarray(data, dtype=np.float64)
    N = r.size
    if th.size < N + 1 or x.size < N:
        raise ValueError("need N+1 iterates, N rates and N data points")
    if np.any(r < 0):
        raise HypothesisViolation("gamma_n >= 0")
    big = np.abs(th) >= c
    for n in range(delta, N + 1):
        if big[n - delta : n].all():
            if r[n - 1] > 1.0:
                raise HypothesisViolation("gamma_n <= 1 while the last delta iterates exceed c", f"step {n}")
            if abs(x[n - 1]) > c:
                raise HypothesisViolation("|X_n| <= c while the last delta iterates exceed c", f"step {n}")
    inp = GdBoundInputs(float(r.max(initial=0.0)), delta, c, abs(float(th[0])), float(np.abs(x).max(initial=0.0)))
    hyp = {"Gamma": inp.Gamma, "delta": delta, "c": c, "supX": inp.supX}
    return BoundCertificate.make(gd_bound(inp), float(np.abs(th[: N + 1]).max()), hyp)


def _stream_targets(problem: Problem, steps: int) -> np.ndarray:
    return np.asarray(targets_for_steps(problem, 1, steps + 1))


def _combine(certs: list, traj: Trajectory, hyp: dict) -> BoundCertificate:
    bound = math.sqrt(sum(ct.bound_value**2 for ct in certs))
    hyp = dict(hyp, per_coordinate_bounds=[ct.bound_value for ct in certs])
    return BoundCertificate.make(bound, float(traj.running_sup[-1]), hyp)


def certify_gd(
    traj: Trajectory,
    problem: Problem,
    schedule: LearningRateSchedule,
    delta: int = 1,
    c: Optional[float] = None,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> BoundCertificate:
    """Norm-level GD certificate from per-coordinate scalar bounds."""
    _completed(traj)
    N = traj.steps_run
    c = data_bound_of(problem) if c is None else c
    if c <= 0:
        raise HypothesisViolation("c > 0")
    lam = effective_eigs(problem.eigs, convention)
    rates = schedule.rates(max(N, 1))[:N]
    X = _stream_targets(problem, N)
    certs = [certify_gd_scalar(traj.iterates[:, i], rates * lam[i], X[:, i], delta, c) for i in range(traj.dim)]
    return _combine(certs, traj, {"delta": delta, "c": c, "Gamma": float(max(ct.hypotheses["Gamma"] for ct in certs))})


def certify_momentum(
    traj: Trajectory,
    problem: Problem,
    spec: OptimizerSpec,
    schedule: LearningRateSchedule,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> BoundCertificate:
    """Norm-level momentum certificate (zero initial momentum, burn-in ``N = 1``)."""
    if spec.kind is not OptimizerKind.MOMENTUM:
        raise HypothesisViolation("momentum optimizer", spec.kind.value)
    _completed(traj)
    N = traj.steps_run
    lam = effective_eigs(problem.eigs, convention)
    if lam.min() <= 0 and spec.alpha > 0:
        raise HypothesisViolation("min lambda > 0")
    cap = momentum_lr_cap(spec.alpha, float(lam.max()))
    rates = schedule.rates(max(N, 1))[:N]
    if N and rates.max() > cap:
        raise HypothesisViolation("sup gamma_n <= (1-alpha)/((1+2 alpha) max(1, lambda))", f"cap {cap}")
    c = data_bound_of(problem)
    certs = []
    for i in range(traj.dim):
        h = abs(float(traj.iterates[0, i]))
        inp = MomentumBoundInputs(spec.alpha, c, float(lam.min()), float(lam.max()), h, h)
        certs.append(BoundCertificate.make(momentum_bound(inp), 0.0, {}))
    return _combine(certs, traj, {"alpha": spec.alpha, "c": c, "lr_cap": cap, "m0": 0.0})


def adam_inputs_for(
    problem: Problem,
    spec: OptimizerSpec,
    gamma_sup: float,
    theta0,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> AdamBoundInputs:
    """Bound inputs for a constant-eigenvalue problem; RMSprop is Adam with alpha 0."""
    if spec.kind not in (OptimizerKind.ADAM, OptimizerKind.RMSPROP):
        raise HypothesisViolation("adaptive optimizer", spec.kind.value)
    lam = effective_eigs(problem.eigs, convention)
    if lam.min() <= 0:
        raise HypothesisViolation("inf lambda > 0")
    if spec.beta <= spec.alpha**2:
        raise HypothesisViolation("beta > alpha^2", f"alpha={spec.alpha}, beta={spec.beta}")
    if not gamma_sup > 0:
        raise HypothesisViolation("sup gamma_n > 0")
    c = max(1.0, data_bound_of(problem))
    return AdamBoundInputs(
        alpha=spec.alpha,
        beta=spec.beta,
        eps=spec.eps,
        gamma_sup=float(gamma_sup),
        lambda_sup=float(lam.max()),
        lambda_inf_tail=float(lam.min()),
        N=1,
        c=c,
        d=problem.dim,
        theta0_norm=float(np.linalg.norm(np.asarray(theta0, dtype=np.float64))),
    )


def certify_adam(
    traj: Trajectory,
    problem: Problem,
    spec: OptimizerSpec,
    schedule: LearningRateSchedule,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> BoundCertificate:
    _completed(traj)
    gsup = float(schedule.rates(max(traj.steps_run, 1)).max())
    inp = adam_inputs_for(problem, spec, gsup, traj.iterates[0], convention)
    hyp = {k: v for k, v in asdict(inp).items()}
    hyp["stochastic"] = isinstance(problem, StochasticQuadraticProblem)
    return BoundCertificate.make(adam_bound(inp), float(traj.running_sup[-1]), hyp)


def observed_sup(traj: Trajectory) -> float:
    return float(row_norms(traj.iterates).max())
