import math

import numpy as np
import pytest

from optstab.bounds import (
    AdamBoundInputs,
    GdBoundInputs,
    HypothesisViolation,
    MomentumBoundInputs,
    adam_D,
    adam_bound,
    certify_adam,
    certify_gd,
    certify_gd_scalar,
    certify_momentum,
    gd_bound,
    hoelder_increment_bound,
    hoelder_ratio,
    momentum_bound,
    momentum_lr_cap,
    observed_sup,
)
from optstab.optimizers import ConstantRate, OptimizerSpec, run_trajectory
from optstab.problems import QuadraticProblem, StochasticQuadraticProblem


@pytest.mark.parametrize(
    "args,value",
    [
        ((0.0, 3, 1.0, 5.0, 2.0), 7.0),
        ((1.0, 1, 1.0, 0.0, 1.0), 4.0),
        ((0.5, 2, 2.0, 1.0, 3.0), 11.25),
    ],
)
def test_gd_bound_examples(args, value):
    assert gd_bound(GdBoundInputs(*args)) == value


def test_gd_inputs_validated():
    with pytest.raises(ValueError):
        GdBoundInputs(0.0, 0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        GdBoundInputs(-1.0, 1, 1.0, 0.0, 0.0)


def test_momentum_bound_examples():
    assert momentum_bound(MomentumBoundInputs(0.0, 1.0, 1.0, 1.0, 2.0, 2.0)) == 10.0
    assert momentum_bound(MomentumBoundInputs(0.5, 1.0, 1.0, 1.0, 0.0, 0.0)) == 7.0
    assert momentum_bound(MomentumBoundInputs(0.7, 0.0, 0.5, 3.0, 4.5, 1.0)) == 3 * 4.5


def test_momentum_bound_zero_cst():
    with pytest.raises(ZeroDivisionError):
        momentum_bound(MomentumBoundInputs(0.5, 1.0, 0.0, 1.0, 0.0, 0.0))


def test_momentum_lr_cap():
    assert momentum_lr_cap(0.0, 1.0) == 1.0
    assert momentum_lr_cap(0.5, 2.0) == 0.125
    assert momentum_lr_cap(1 - 1e-12, 1.0) < 1e-12
    assert momentum_lr_cap(0.0, 0.25) == 1.0


def test_hoelder_examples():
    assert hoelder_increment_bound(0.0, 0.3, 1.0) == 1.0
    assert hoelder_increment_bound(0.5, 0.5, 1.0) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert hoelder_increment_bound(0.0, 0.9, 4.0) == 0.5
    with pytest.raises(HypothesisViolation):
        hoelder_increment_bound(0.8, 0.6, 1.0)


def test_hoelder_ratio_single_term():
    # one gradient: |g| / (eps + sqrt(ell) |g|)
    assert hoelder_ratio(0.5, 0.5, 1.0, 0.0, [3.0]) == 1.0
    assert hoelder_ratio(0.5, 0.5, 4.0, 1.0, [2.0]) == 0.4


ONES = dict(alpha=0.0, beta=0.5, eps=1.0, gamma_sup=1.0, lambda_sup=1.0, lambda_inf_tail=1.0, N=1, c=1.0, d=1, theta0_norm=0.0)


def test_adam_regression_values():
    inp = AdamBoundInputs(**ONES)
    assert adam_D(inp) == 24.0
    assert adam_bound(inp) == 29325.132429368492


@pytest.mark.parametrize(
    "field,lo,hi",
    [("gamma_sup", 1.0, 2.0), ("c", 1.0, 3.0), ("lambda_sup", 1.0, 5.0), ("theta0_norm", 0.0, 1.0), ("d", 1, 4)],
)
def test_adam_bound_monotone(field, lo, hi):
    a = adam_bound(AdamBoundInputs(**{**ONES, field: lo}))
    b = adam_bound(AdamBoundInputs(**{**ONES, field: hi}))
    assert b >= a


def test_adam_hypotheses():
    with pytest.raises(HypothesisViolation):
        AdamBoundInputs(**{**ONES, "alpha": 0.9, "beta": 0.5})
    with pytest.raises(HypothesisViolation):
        adam_bound(AdamBoundInputs(**{**ONES, "lambda_inf_tail": 0.0}))
    with pytest.raises(ValueError):
        adam_bound(AdamBoundInputs(**{**ONES, "gamma_sup": 0.0}))


def test_certify_gd_zero_rate_holds():
    prob = QuadraticProblem([0.5], [1.0])
    traj = run_trajectory(OptimizerSpec.gd(), prob, [3.0], ConstantRate(0.0), 50)
    cert = certify_gd(traj, prob, ConstantRate(0.0))
    assert cert.holds and cert.observed_sup == 3.0
    assert cert.bound_value == 3.0 + 0.5


def test_certify_gd_stochastic():
    prob = StochasticQuadraticProblem(QuadraticProblem([0.0, 0.0], [1.0, 0.5]), 2.0, seed=7)
    traj = run_trajectory(OptimizerSpec.gd(), prob, [10.0, -4.0], ConstantRate(0.8), 2000)
    cert = certify_gd(traj, prob, ConstantRate(0.8))
    assert cert.holds and cert.observed_sup == pytest.approx(math.hypot(10, 4))


def test_certify_gd_rejects_large_rate():
    prob = QuadraticProblem([0.0], [1.0])
    traj = run_trajectory(OptimizerSpec.gd(), prob, [10.0], ConstantRate(1.5), 10, float("inf"))
    with pytest.raises(HypothesisViolation, match="gamma_n <= 1"):
        certify_gd(traj, prob, ConstantRate(1.5), c=1.0)


def test_certify_gd_scalar_data_hypothesis():
    with pytest.raises(HypothesisViolation, match=r"\|X_n\|"):
        certify_gd_scalar([5.0, 5.0], [0.5], [3.0], 1, 1.0)


def test_certify_momentum_cap_enforced():
    prob = StochasticQuadraticProblem(QuadraticProblem([0.0], [2.0]), 1.0, seed=1)
    spec = OptimizerSpec.momentum(0.5)
    ok = ConstantRate(0.125)
    traj = run_trajectory(spec, prob, [3.0], ok, 3000)
    assert certify_momentum(traj, prob, spec, ok).holds
    with pytest.raises(HypothesisViolation):
        bad = ConstantRate(0.2)
        certify_momentum(run_trajectory(spec, prob, [3.0], bad, 10), prob, spec, bad)


def test_certify_adam_holds_and_serializes():
    prob = StochasticQuadraticProblem(QuadraticProblem([0.0, 0.0], [3.0, 0.2]), 1.5, seed=11)
    spec = OptimizerSpec.adam(0.9, 0.999)
    sched = ConstantRate(0.5)
    traj = run_trajectory(spec, prob, [4.0, 1.0], sched, 5000)
    cert = certify_adam(traj, prob, spec, sched)
    assert cert.holds and cert.margin > 0
    d = cert.to_dict()
    assert set(d) == {"bound", "observed_sup", "holds", "margin", "hypotheses"}
    assert d["hypotheses"]["stochastic"] is True
    assert observed_sup(traj) == cert.observed_sup


def test_certify_adam_refuses_low_beta():
    prob = QuadraticProblem([0.0], [1.0])
    spec = OptimizerSpec.adam(0.9, 0.5)
    traj = run_trajectory(spec, prob, [1.0], ConstantRate(0.1), 10)
    with pytest.raises(HypothesisViolation, match="beta > alpha"):
        certify_adam(traj, prob, spec, ConstantRate(0.1))


def test_certificate_zero_tolerance():
    from optstab.bounds import BoundCertificate

    assert BoundCertificate.make(1.0, 1.0, {}).holds
    assert not BoundCertificate.make(1.0, np.nextafter(1.0, 2.0), {}).holds
