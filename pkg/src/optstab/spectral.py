"""Companion matrices of momentum and Nesterov on a one-dimensional quadratic.

The loss is ``K (theta - target)^2`` so the gradient is ``2K (theta - target)``;
in the gradient-stream convention used elsewhere this is ``lambda = 2K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np


class DivergedNumeric(ArithmeticError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite state at step {step}")


class SpectralKind(str, Enum):
    MOMENTUM = "momentum"
    NESTEROV = "nesterov"


class SrClass(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Matrix2:
    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.a11, self.a12, self.a21, self.a22)):
            raise ValueError("matrix entries must be finite")

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def apply(self, v: tuple[float, float]) -> tuple[float, float]:
        return (self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1])


@dataclass(frozen=True)
class EigenPair:
    mu_minus: complex
    mu_plus: complex


def k_from_lambda(lam: float) -> float:
    """Stream slope ``lambda`` to loss curvature ``K`` (``lambda = 2K``)."""
    return 0.5 * lam


def _check(alpha: float, gamma: float, K: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must satisfy 0 <= alpha < 1")
    if not (gamma > 0 and K > 0):
        raise ValueError("gamma and K must be > 0")


def momentum_companion(alpha: float, gamma: float, K: float) -> Matrix2:
    """Propagates ``(m, theta - target)`` one momentum step."""
    _check(alpha, gamma, K)
    return Matrix2(alpha, 2.0 * (1.0 - alpha) * K, -gamma * alpha, 1.0 - 2.0 * (1.0 - alpha) * gamma * K)


def nesterov_companion(alpha: float, gamma: float, K: float) -> Matrix2:
    """Propagates ``(M, theta - target)`` one step of classic Nesterov at rate ``gamma``."""
    _check(alpha, gamma, K)
    s = 1.0 - 2.0 * gamma * K
    return Matrix2((1.0 + alpha) * s, -alpha, s, 0.0)


def quadratic_roots(half_trace: float, det: float) -> EigenPair:
    """Roots of ``mu^2 - 2 h mu + det``, computed without cancellation.

    The larger-magnitude root comes from the quadratic formula with the sign of
    ``h``; the other one is ``det`` divided by it.
    """
    disc = half_trace * half_trace - det
    if disc < 0:
        r = math.sqrt(-disc)
        return EigenPair(complex(half_trace, -r), complex(half_trace, r))
    r = math.sqrt(disc)
    big = half_trace + math.copysign(r, half_trace)
    small = det / big if big != 0.0 else 0.0
    lo, hi = sorted((big, small))
    return EigenPair(complex(lo, 0.0), complex(hi, 0.0))


def eigenvalues_closed_form(kind: SpectralKind, alpha: float, gamma: float, K: float) -> EigenPair:
    kind = SpectralKind(kind)
    _check(alpha, gamma, K)
    if kind is SpectralKind.MOMENTUM:
        h = 0.5 * (1.0 + alpha - 2.0 * (1.0 - alpha) * gamma * K)
        det = alpha
    else:
        s = 1.0 - 2.0 * gamma * K
        h = 0.5 * (1.0 + alpha) * s
        det = alpha * s
    return quadratic_roots(h, det)


def numeric_eigenvalues(A: Matrix2) -> EigenPair:
    """Generic eigen-solve from trace and determinant of the matrix entries."""
    return quadratic_roots(0.5 * A.trace, A.det)


def spectral_radius(pair: EigenPair) -> float:
    return max(abs(pair.mu_minus), abs(pair.mu_plus))


def critical_gamma_k(kind: SpectralKind, alpha: float) -> float:
    if SpectralKind(kind) is SpectralKind.MOMENTUM:
        return (1.0 + alpha) / (1.0 - alpha)
    return (1.0 + alpha) / (1.0 + 2.0 * alpha)


def classify_sr(kind: SpectralKind, alpha: float, gamma_k: float) -> SrClass:
    c = critical_gamma_k(kind, alpha)
    if gamma_k < c:
        return SrClass.SUBCRITICAL
    if gamma_k == c:
        return SrClass.CRITICAL
    return SrClass.SUPERCRITICAL


MatrixSource = Union[Matrix2, Sequence[Matrix2], Callable[[int], Matrix2]]


def propagate(matrices: MatrixSource, v0, n: int) -> np.ndarray:
    """``A_n ... A_1 v0``; a single matrix is reused for every step."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if isinstance(matrices, Matrix2):
        get = lambda k: matrices  # noqa: E731
    elif callable(matrices):
        get = matrices
    else:
        seq = list(matrices)
        if len(seq) < n:
            raise ValueError(f"{len(seq)} matrices supplied, {n} steps requested")
        get = lambda k: seq[k - 1]  # noqa: E731
    v = (float(v0[0]), float(v0[1]))
    for k in range(1, n + 1):
        v = get(k).apply(v)
        if not (math.isfinite(v[0]) and math.isfinite(v[1])):
            raise DivergedNumeric(k)
    return np.array(v)


def pair_to_json(pair: EigenPair) -> dict:
    return {
        "mu_minus": {"re": pair.mu_minus.real, "im": pair.mu_minus.imag},
        "mu_plus": {"re": pair.mu_plus.real, "im": pair.mu_plus.imag},
    }


