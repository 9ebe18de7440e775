"""GD, momentum, Nesterov, RMSprop and Adam.

Each optimizer is available in two forms: the full-history update map
``Phi_n(g_1, ..., g_n)`` evaluated by direct summation (used as a test oracle)
and a constant-state recursion used for simulation. Iterates follow
``theta_n = theta_{n-1} - gamma_n * Phi_n`` with ``g_k`` evaluated at
``theta_{k-1}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .problems import (
    GradientConvention,
    Problem,
    QuadraticProblem,
    effective_eigs,
    targets_for_steps,
    _check_dim,
)


class InvalidHyperparameter(ValueError):
    def __init__(self, name: str, value, requirement: str):
        self.name = name
        self.value = value
        super().__init__(f"{name}={value!r}: {requirement}")


class OptimizerKind(str, Enum):
    GD = "gd"
    MOMENTUM = "momentum"
    NESTEROV = "nesterov"
    RMSPROP = "rmsprop"
    ADAM = "adam"


_USES_ALPHA = {OptimizerKind.MOMENTUM, OptimizerKind.NESTEROV, OptimizerKind.ADAM}
_USES_BETA = {OptimizerKind.RMSPROP, OptimizerKind.ADAM}


@dataclass(frozen=True)
class OptimizerSpec:
    kind: OptimizerKind
    alpha: float = 0.0
    beta: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        kind = OptimizerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("alpha", "beta", "eps"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if kind in _USES_ALPHA and not 0.0 <= self.alpha < 1.0:
            raise InvalidHyperparameter("alpha", self.alpha, "must satisfy 0 <= alpha < 1")
        if kind not in _USES_ALPHA and self.alpha != 0.0:
            raise InvalidHyperparameter("alpha", self.alpha, f"not used by {kind.value}")
        if kind in _USES_BETA:
            if not 0.0 < self.beta < 1.0:
                raise InvalidHyperparameter("beta", self.beta, "must satisfy 0 < beta < 1")
            if not (self.eps > 0.0 and math.isfinite(self.eps)):
                raise InvalidHyperparameter("eps", self.eps, "must be a positive finite number")
        elif self.beta != 0.0 or self.eps != 0.0:
            raise InvalidHyperparameter("beta", self.beta, f"beta/eps not used by {kind.value}")

    @classmethod
    def gd(cls) -> "OptimizerSpec":
        return cls(OptimizerKind.GD)

    @classmethod
    def momentum(cls, alpha: float) -> "OptimizerSpec":
        return cls(OptimizerKind.MOMENTUM, alpha=alpha)

    @classmethod
    def nesterov(cls, alpha: float) -> "OptimizerSpec":
        return cls(OptimizerKind.NESTEROV, alpha=alpha)

    @classmethod
    def rmsprop(cls, beta: float, eps: float = 1e-8) -> "OptimizerSpec":
        return cls(OptimizerKind.RMSPROP, beta=beta, eps=eps)

    @classmethod
    def adam(cls, alpha: float = 0.9, beta: float = 0.999, eps: float = 1e-8) -> "OptimizerSpec":
        return cls(OptimizerKind.ADAM, alpha=alpha, beta=beta, eps=eps)

    def label(self) -> str:
        k = self.kind
        if k is OptimizerKind.GD:
            return "gd"
        if k in (OptimizerKind.MOMENTUM, OptimizerKind.NESTEROV):
            return f"{k.value}(alpha={self.alpha:g})"
        if k is OptimizerKind.RMSPROP:
            return f"rmsprop(beta={self.beta:g},eps={self.eps:g})"
        return f"adam(alpha={self.alpha:g},beta={self.beta:g},eps={self.eps:g})"


# ---------------------------------------------------------------------------
# full-history oracle


def phi_full_history(spec: OptimizerSpec, grads) -> np.ndarray:
    """Update direction ``Phi_n`` by direct summation over ``g_1..g_n``."""
    G = np.asarray(grads, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None] if G.size else G.reshape(0, 1)
    if G.ndim != 2:
        raise ValueError("grads must be a sequence of vectors")
    n = G.shape[0]
    if n == 0:
        raise ValueError("gradient sequence is empty")
    k = spec.kind
    expo = np.arange(n - 1, -1, -1, dtype=np.float64)  # n - k for k = 1..n
    if k is OptimizerKind.GD:
        return G[-1].copy()
    if k is OptimizerKind.MOMENTUM:
        w = np.power(spec.alpha, expo)
        return (1.0 - spec.alpha) * (w @ G)
    if k is OptimizerKind.NESTEROV:
        w = np.power(spec.alpha, expo + 1.0)
        return G[-1] + w @ G
    wb = np.power(spec.beta, expo)
    ell = (1.0 - spec.beta) / (1.0 - spec.beta**n)
    denom = spec.eps + np.sqrt(ell * (wb @ (G * G)))
    if k is OptimizerKind.RMSPROP:
        return G[-1] / denom
    if spec.alpha == 0.0:
        num = G[-1].copy()
    else:
        wa = np.power(spec.alpha, expo)
        num = (1.0 - spec.alpha) / (1.0 - spec.alpha**n) * (wa @ G)
    return num / denom


# ---------------------------------------------------------------------------
# recursive form


@dataclass(frozen=True)
class OptimizerState:
    step_count: int
    m: np.ndarray
    v: np.ndarray
    alpha_pow: np.ndarray
    beta_pow: np.ndarray


def init_state(dim: int, rows: Optional[int] = None) -> OptimizerState:
    """Zero accumulators; ``rows`` gives a batched state of shape ``(rows, dim)``."""
    shape = (dim,) if rows is None else (rows, dim)
    pshape = (1,) if rows is None else (rows, 1)
    return OptimizerState(0, np.zeros(shape), np.zeros(shape), np.ones(pshape), np.ones(pshape))


def advance(kind: OptimizerKind, alpha, beta, eps, state: OptimizerState, g: np.ndarray):
    """One recursive step. Hyperparameters may be scalars or per-row columns."""
    m, v, apow, bpow = state.m, state.v, state.alpha_pow, state.beta_pow
    if kind is OptimizerKind.GD:
        u = g
    elif kind is OptimizerKind.MOMENTUM:
        m = alpha * m + (1.0 - alpha) * g
        u = m
    elif kind is OptimizerKind.NESTEROV:
        m = alpha * m + g
        u = g + alpha * m
    else:
        bpow = bpow * beta
        v = beta * v + (1.0 - beta) * (g * g)
        denom = eps + np.sqrt(v / (1.0 - bpow))
        if kind is OptimizerKind.ADAM:
            apow = apow * alpha
            m = alpha * m + (1.0 - alpha) * g
            u = (m / (1.0 - apow)) / denom
        else:
            u = g / denom
    return OptimizerState(state.step_count + 1, m, v, apow, bpow), u


def step_recursive(spec: OptimizerSpec, state: OptimizerState, g_n) -> tuple[OptimizerState, np.ndarray]:
    g = np.asarray(g_n, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} does not match state shape {state.m.shape}")
    return advance(spec.kind, spec.alpha, spec.beta, spec.eps, state, g)


# ---------------------------------------------------------------------------
# learning-rate schedules


@dataclass(frozen=True)
class ConstantRate:
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and >= 0")

    def rates(self, steps: int) -> np.ndarray:
        return np.full(steps, float(self.gamma))


@dataclass(frozen=True)
class TableRate:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(x) for x in self.values)
        if not all(math.isfinite(x) and x >= 0 for x in vals):
            raise ValueError("table rates must be finite and >= 0")
        object.__setattr__(self, "values", vals)

    def rates(self, steps: int) -> np.ndarray:
        if steps > len(self.values):
            raise ValueError(f"rate table has {len(self.values)} entries, {steps} steps requested")
        return np.array(self.values[:steps])


@dataclass(frozen=True)
class BiasAdjustedRate:
    """``gamma_n = gamma / (1 - alpha^n)``."""

    gamma: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and >= 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must satisfy 0 <= alpha < 1")

    def rates(self, steps: int) -> np.ndarray:
        out = np.empty(steps)
        p = 1.0
        for i in range(steps):
            p *= self.alpha
            out[i] = self.gamma / (1.0 - p)
        return out


LearningRateSchedule = Union[ConstantRate, TableRate, BiasAdjustedRate]


# ---------------------------------------------------------------------------
# trajectories


class TrajectoryStatus(str, Enum):
    COMPLETED = "completed"
    ESCAPED = "escaped"
    DIVERGED_NUMERIC = "diverged-numeric"


@dataclass
class Trajectory:
    iterates: np.ndarray  # (steps_run + 1, d)
    updates: np.ndarray  # (steps_run, d): the directions Phi_n
    running_sup: np.ndarray  # (steps_run + 1,)
    status: TrajectoryStatus = TrajectoryStatus.COMPLETED
    escape_step: Optional[int] = None
    steps_planned: int = 0

    @property
    def steps_run(self) -> int:
        return self.iterates.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.iterates.shape[1]


def row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def run_trajectory(
    spec: OptimizerSpec,
    problem: Problem,
    theta0,
    schedule: LearningRateSchedule,
    steps: int,
    escape_radius: float = 1e8,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> Trajectory:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not escape_radius > 0:
        raise ValueError("escape_radius must be > 0")
    theta = _check_dim(theta0, problem.dim, "theta0")[None, :].copy()
    lam = effective_eigs(problem.eigs, convention)[None, :]
    rates = schedule.rates(steps)
    targets = targets_for_steps(problem, 1, steps + 1)
    iterates = np.empty((steps + 1, problem.dim))
    updates = np.empty((steps, problem.dim))
    sup = np.empty(steps + 1)
    iterates[0] = theta[0]
    sup[0] = row_norms(theta)[0]
    state = init_state(problem.dim, rows=1)
    status, escape = TrajectoryStatus.COMPLETED, None
    n_done = steps
    with np.errstate(all="ignore"):
        for n in range(1, steps + 1):
            g = lam * (theta - targets[n - 1])
            state, u = advance(spec.kind, spec.alpha, spec.beta, spec.eps, state, g)
            new = theta - rates[n - 1] * u
            norm = row_norms(new)[0]
            if not math.isfinite(norm):
                status, escape, n_done = TrajectoryStatus.DIVERGED_NUMERIC, n, n - 1
                break
            theta = new
            iterates[n] = theta[0]
            updates[n - 1] = u[0]
            sup[n] = max(sup[n - 1], norm)
            if norm > escape_radius:
                status, escape, n_done = TrajectoryStatus.ESCAPED, n, n
                break
    return Trajectory(
        iterates[: n_done + 1].copy(),
        updates[:n_done].copy(),
        sup[: n_done + 1].copy(),
        status,
        escape,
        steps,
    )


# ---------------------------------------------------------------------------
# Nesterov in three formulations


@dataclass
class NesterovForms:
    classic: Trajectory
    lookahead: Trajectory
    phi_form: Trajectory
    lookahead_momentum: np.ndarray  # m_n of the lookahead form, (N+1, d)
    phi_momentum: np.ndarray  # accumulator of the Phi form, (N+1, d)
    classic_extrapolation: np.ndarray  # M_n of the classic form, (N+1, d)


def _as_trajectory(iterates: np.ndarray, rate: float) -> Trajectory:
    norms = row_norms(iterates)
    diffs = iterates[:-1] - iterates[1:]
    upd = diffs / rate if rate > 0 else np.zeros_like(diffs)
    return Trajectory(iterates, upd, np.maximum.accumulate(norms), steps_planned=len(iterates) - 1)


def nesterov_three_forms(
    alpha: float,
    gamma: float,
    problem: QuadraticProblem,
    theta0,
    steps: int,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> NesterovForms:
    """Run Nesterov momentum as lookahead, classic and full-history recursions.

    * lookahead: ``m_n = a m + (1-a) G(theta - gamma a m)``, ``theta_n = theta - gamma m_n``
    * classic: ``x_n = M - Gamma G(M)``, ``M_n = (1+a) x_n - a x_{n-1}``
    * Phi form at rate ``Gamma = gamma (1-a)``, accumulator ``q_n = a q + G(psi)``

    The three agree through ``theta_n = psi_n + gamma a m_n = x_n``.
    """
    if not 0.0 <= alpha < 1.0:
        raise InvalidHyperparameter("alpha", alpha, "must satisfy 0 <= alpha < 1")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    lam = effective_eigs(problem.eigs, convention)
    tgt = problem.target
    x0 = _check_dim(theta0, problem.dim, "theta0")

    def G(x):
        return lam * (x - tgt)

    rate = gamma * (1.0 - alpha)
    d = problem.dim
    look = np.empty((steps + 1, d))
    look_m = np.zeros((steps + 1, d))
    classic = np.empty((steps + 1, d))
    extra = np.empty((steps + 1, d))
    psi = np.empty((steps + 1, d))
    q = np.zeros((steps + 1, d))
    look[0] = classic[0] = extra[0] = psi[0] = x0
    for n in range(1, steps + 1):
        look_m[n] = alpha * look_m[n - 1] + (1.0 - alpha) * G(look[n - 1] - gamma * alpha * look_m[n - 1])
        look[n] = look[n - 1] - gamma * look_m[n]

        classic[n] = extra[n - 1] - rate * G(extra[n - 1])
        extra[n] = (1.0 + alpha) * classic[n] - alpha * classic[n - 1]

        g = G(psi[n - 1])
        q[n] = alpha * q[n - 1] + g
        psi[n] = psi[n - 1] - rate * (g + alpha * q[n])
    return NesterovForms(
        _as_trajectory(classic, rate),
        _as_trajectory(look, gamma),
        _as_trajectory(psi, rate),
        look_m,
        q,
        extra,
    )


# ---------------------------------------------------------------------------
# CSV export


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, out: TextIO) -> None:
    d = traj.dim
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["step", *[f"theta_{i}" for i in range(1, d + 1)], "update_norm", "sup_norm"])
    unorm = np.concatenate([[0.0], row_norms(traj.updates)])
    for n in range(traj.steps_run + 1):
        w.writerow([n, *map(fmt, traj.iterates[n]), fmt(unorm[n]), fmt(traj.running_sup[n])])


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def read_trajectory_csv(text: str) -> tuple[list[str], np.ndarray]:
    """Parse an exported trajectory into ``(header, rows)``."""
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64)
    return header, data.reshape(len(rows) - 1, len(header))


def emit_rows(header: Sequence[str], data: np.ndarray) -> str:
    """Re-emit parsed rows; the step column is written as an integer."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in data:
        w.writerow([int(r[0]), *map(fmt, r[1:])])
    return buf.getvalue()


def with_target(problem: QuadraticProblem, target) -> QuadraticProblem:
    return replace(problem, target=np.asarray(target, dtype=np.float64))
