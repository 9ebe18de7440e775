"""JSON configuration documents for the command-line tool.

Unknown keys are rejected everywhere so that a misspelled hyperparameter cannot
silently fall back to a default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import harness, optimizers, problems


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OptimizerConfig(Strict):
    kind: optimizers.OptimizerKind
    alpha: float = Field(0.0, ge=0.0, lt=1.0)
    beta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)

    @model_validator(mode="after")
    def _needs(self):
        k = self.kind
        if k in (optimizers.OptimizerKind.RMSPROP, optimizers.OptimizerKind.ADAM) and self.beta is None:
            raise ValueError(f"beta is required for {k.value}")
        if k in (optimizers.OptimizerKind.GD, optimizers.OptimizerKind.RMSPROP) and self.alpha != 0.0:
            raise ValueError(f"alpha is not used by {k.value}")
        return self

    def build(self) -> optimizers.OptimizerSpec:
        k = self.kind
        if k in (optimizers.OptimizerKind.RMSPROP, optimizers.OptimizerKind.ADAM):
            return optimizers.OptimizerSpec(k, alpha=self.alpha, beta=self.beta, eps=self.eps)
        return optimizers.OptimizerSpec(k, alpha=self.alpha)


class ProblemConfig(Strict):
    dim: Optional[int] = Field(None, ge=1)
    target: List[float]
    eigs: List[float]
    data_bound: Optional[float] = Field(None, ge=0.0)
    batch_size: Union[Annotated[int, Field(ge=1)], List[Annotated[int, Field(ge=1)]]] = 1
    data_law: problems.DataLaw = problems.DataLaw.UNIFORM
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    convention: problems.GradientConvention = problems.GradientConvention.HALF_QUADRATIC

    @field_validator("eigs")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("eigenvalues must be >= 0")
        return v

    @model_validator(mode="after")
    def _dims(self):
        if len(self.target) != len(self.eigs):
            raise ValueError(f"target has length {len(self.target)} but eigs has length {len(self.eigs)}")
        if self.dim is not None and self.dim != len(self.eigs):
            raise ValueError(f"dim={self.dim} does not match eigs length {len(self.eigs)}")
        if isinstance(self.batch_size, list) and not self.batch_size:
            raise ValueError("batch_size table must be non-empty")
        return self

    def build(self, seed: int) -> problems.Problem:
        base = problems.QuadraticProblem(self.target, self.eigs)
        if self.data_bound is None:
            return base
        return problems.StochasticQuadraticProblem(
            base, self.data_bound, self.batch_size, self.data_law, seed if self.seed is None else self.seed
        )


class ScheduleConfig(Strict):
    kind: Literal["constant", "table", "bias_adjusted"] = "constant"
    gamma: Optional[float] = Field(None, ge=0.0)
    rates: Optional[List[Annotated[float, Field(ge=0.0)]]] = None

    @model_validator(mode="after")
    def _fields(self):
        if self.kind == "table" and not self.rates:
            raise ValueError("rates are required for a table schedule")
        if self.kind != "table" and self.gamma is None:
            raise ValueError(f"gamma is required for a {self.kind} schedule")
        return self

    def build(self, alpha: float) -> optimizers.LearningRateSchedule:
        if self.kind == "constant":
            return optimizers.ConstantRate(self.gamma)
        if self.kind == "table":
            return optimizers.TableRate(tuple(self.rates))
        return optimizers.BiasAdjustedRate(self.gamma, alpha)


class RunSection(Strict):
    steps: int = Field(20_000, ge=1)
    escape_radius: float = Field(1e8, gt=0.0)
    stabilization_window: float = Field(0.25, gt=0.0, lt=1.0)
    limsup_window: float = Field(0.10, gt=0.0, lt=1.0)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    convergence_tol: float = Field(1e-8, gt=0.0)

    def build(self, seed: int) -> harness.RunConfig:
        return harness.RunConfig(
            self.steps, self.escape_radius, self.stabilization_window, self.limsup_window, seed, self.convergence_tol
        )


class OutputSection(Strict):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class SimulateConfig(Strict):
    optimizer: OptimizerConfig
    problem: ProblemConfig
    theta0: List[float]
    schedule: ScheduleConfig
    run: RunSection = RunSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _theta(self):
        if len(self.theta0) != len(self.problem.eigs):
            raise ValueError(f"theta0 has length {len(self.theta0)}, expected {len(self.problem.eigs)}")
        return self


class GridSpec(Strict):
    min: float = Field(gt=0.0)
    max: float = Field(gt=0.0)
    count: int = Field(ge=2)

    @model_validator(mode="after")
    def _order(self):
        if not self.min < self.max:
            raise ValueError("grid min must be below max")
        return self


class SweepProblem(Strict):
    target: List[float] = [0.0]
    theta0: Optional[List[float]] = None
    eig_profile: List[float] = [1.0]

    @model_validator(mode="after")
    def _shape(self):
        d = len(self.eig_profile)
        if len(self.target) != d or (self.theta0 is not None and len(self.theta0) != d):
            raise ValueError("target, theta0 and eig_profile must have equal lengths")
        if max(self.eig_profile) != 1.0 or min(self.eig_profile) < 0:
            raise ValueError("eig_profile must be non-negative with maximum 1")
        return self


class SweepConfig(Strict):
    optimizer: OptimizerConfig
    gamma_grid: GridSpec
    lambda_grid: GridSpec
    run: RunSection = RunSection()
    problem: SweepProblem = SweepProblem()
    output: OutputSection = OutputSection()
    threshold: Literal["theorem", "spectral"] = "theorem"


class BoundCase(Strict):
    optimizer: OptimizerConfig
    problem: ProblemConfig
    theta0: List[float]
    schedule: ScheduleConfig
    steps: int = Field(1000, ge=1)
    delta: int = Field(1, ge=1)
    c: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _kind(self):
        if self.optimizer.kind is optimizers.OptimizerKind.NESTEROV:
            raise ValueError("no a-priori bound is available for nesterov")
        if len(self.theta0) != len(self.problem.eigs):
            raise ValueError(f"theta0 has length {len(self.theta0)}, expected {len(self.problem.eigs)}")
        return self


class BoundsConfig(Strict):
    configurations: List[BoundCase] = Field(min_length=1)


def load_json(path: Union[str, Path]) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_bounds(doc: dict) -> BoundsConfig:
    """Accept either ``{"configurations": [...]}`` or a single case."""
    if isinstance(doc, dict) and "configurations" in doc:
        return BoundsConfig.model_validate(doc)
    return BoundsConfig(configurations=[BoundCase.model_validate(doc)])
