"""Quadratic problems and their gradient oracles.

The deterministic problem is ``L(theta) = 1/2 sum_i lambda_i (theta_i - target_i)^2``
with gradient stream ``diag(lambda)(theta - target)``. The stochastic variant
replaces the target at step ``n`` by the mean of a minibatch of bounded data
points drawn from a counter-keyed stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

from . import rng


class DimensionMismatch(ValueError):
    """Raised when a vector does not match the problem dimension."""

    def __init__(self, what: str, expected: int, got: int):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what} has length {got}, expected {expected}")


class GradientConvention(str, Enum):
    HALF_QUADRATIC = "half_quadratic"
    SQUARED_NORM = "squared_norm"


class DataLaw(str, Enum):
    UNIFORM = "uniform"
    RADEMACHER = "rademacher"


def effective_eigs(eigs: np.ndarray, convention: GradientConvention) -> np.ndarray:
    """Per-coordinate gradient slopes: ``lambda`` or ``2 lambda^2``."""
    eigs = np.asarray(eigs, dtype=np.float64)
    if GradientConvention(convention) is GradientConvention.SQUARED_NORM:
        return 2.0 * eigs * eigs
    return eigs


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


def _check_dim(vec, dim: int, what: str = "theta") -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64).reshape(-1)
    if arr.size != dim:
        raise DimensionMismatch(what, dim, arr.size)
    return arr


@dataclass(frozen=True)
class QuadraticProblem:
    target: np.ndarray
    eigs: np.ndarray

    def __post_init__(self):
        target = _frozen_vector(self.target, "target")
        eigs = _frozen_vector(self.eigs, "eigs")
        if eigs.size != target.size:
            raise DimensionMismatch("eigs", target.size, eigs.size)
        if np.any(eigs < 0):
            raise ValueError("eigs must be >= 0")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "eigs", eigs)

    @property
    def dim(self) -> int:
        return int(self.target.size)


BatchSizes = Union[int, Sequence[int]]


@dataclass(frozen=True)
class StochasticQuadraticProblem:
    """Quadratic problem whose target at step ``n`` is a minibatch mean.

    ``batch_sizes`` is either a constant or a table ``(m_1, m_2, ...)``; queries
    past the end of a table reuse its last entry.
    """

    base: QuadraticProblem
    data_bound: float
    batch_sizes: BatchSizes = 1
    data_law: DataLaw = DataLaw.UNIFORM
    seed: int = 0
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = float(self.data_bound)
        if not np.isfinite(c) or c < 0:
            raise ValueError("data_bound must be finite and >= 0")
        object.__setattr__(self, "data_bound", c)
        object.__setattr__(self, "data_law", DataLaw(self.data_law))
        object.__setattr__(self, "seed", rng.normalize_seed(self.seed))
        if isinstance(self.batch_sizes, (int, np.integer)):
            table = np.array([int(self.batch_sizes)], dtype=np.int64)
            object.__setattr__(self, "batch_sizes", int(self.batch_sizes))
        else:
            table = np.array(list(self.batch_sizes), dtype=np.int64)
            object.__setattr__(self, "batch_sizes", tuple(int(m) for m in table))
        if table.size == 0 or np.any(table < 1):
            raise ValueError("batch sizes must be >= 1")
        table.flags.writeable = False
        object.__setattr__(self, "_table", table)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def eigs(self) -> np.ndarray:
        return self.base.eigs

    def batch_size(self, n: int) -> int:
        if n < 1:
            raise ValueError("step index must be >= 1")
        return int(self._table[min(n, self._table.size) - 1])

    def batch_size_array(self, n_start: int, n_stop: int) -> np.ndarray:
        """Batch sizes for steps ``n_start <= n < n_stop``."""
        n = np.arange(n_start, n_stop)
        return self._table[np.minimum(n, self._table.size) - 1]


Problem = Union[QuadraticProblem, StochasticQuadraticProblem]


def _draw(problem: StochasticQuadraticProblem, steps: np.ndarray, m: int) -> np.ndarray:
    """Data of shape ``(len(steps), m, d)`` for steps sharing batch size ``m``."""
    d = problem.dim
    u = rng.uniforms(problem.seed, steps, m * d).reshape(len(steps), m, d)
    c = problem.data_bound
    if problem.data_law is DataLaw.RADEMACHER:
        return np.where(u < 0.5, -c, c)
    return c * (2.0 * u - 1.0)


def sample_data(problem: StochasticQuadraticProblem, n: int) -> np.ndarray:
    """The minibatch ``X_{n,1..m_n}`` as an ``(m_n, d)`` array."""
    return _draw(problem, np.array([n]), problem.batch_size(n))[0]


def batch_means(problem: StochasticQuadraticProblem, n_start: int, n_stop: int) -> np.ndarray:
    """Minibatch means for steps ``n_start <= n < n_stop`` as an ``(S, d)`` array."""
    if n_start < 1 or n_stop < n_start:
        raise ValueError("need 1 <= n_start <= n_stop")
    sizes = problem.batch_size_array(n_start, n_stop)
    out = np.empty((sizes.size, problem.dim))
    steps = np.arange(n_start, n_stop)
    for m in np.unique(sizes):
        sel = sizes == m
        out[sel] = _draw(problem, steps[sel], int(m)).mean(axis=1)
    return out


def grad_deterministic(
    problem: QuadraticProblem,
    theta,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> np.ndarray:
    theta = _check_dim(theta, problem.dim)
    return effective_eigs(problem.eigs, convention) * (theta - problem.target)


def sample_minibatch_gradient(
    problem: StochasticQuadraticProblem,
    theta,
    n: int,
    convention: GradientConvention = GradientConvention.HALF_QUADRATIC,
) -> np.ndarray:
    """Mean of per-sample gradients over the step-``n`` minibatch.

    For a quadratic loss this equals the gradient at the batch mean.
    """
    theta = _check_dim(theta, problem.dim)
    xbar = batch_means(problem, n, n + 1)[0]
    return effective_eigs(problem.eigs, convention) * (theta - xbar)


def targets_for_steps(problem: Problem, n_start: int, n_stop: int) -> np.ndarray:
    """Gradient-stream targets for steps ``n_start <= n < n_stop``."""
    if isinstance(problem, StochasticQuadraticProblem):
        return batch_means(problem, n_start, n_stop)
    return np.broadcast_to(problem.target, (n_stop - n_start, problem.dim))


def reference_target(problem: Problem) -> np.ndarray:
    """The point the limsup is measured against."""
    if isinstance(problem, StochasticQuadraticProblem):
        return np.zeros(problem.dim)
    return problem.target


def data_bound_of(problem: Problem) -> float:
    """Bound ``c`` on every target coordinate seen by the gradient stream."""
    if isinstance(problem, StochasticQuadraticProblem):
        return problem.data_bound
    return float(np.max(np.abs(problem.target)))
