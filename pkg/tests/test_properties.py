"""Property-based checks of the invariants that hold for every input."""

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from optstab.bounds import (
    AdamBoundInputs,
    GdBoundInputs,
    adam_bound,
    gd_bound,
    hoelder_increment_bound,
    hoelder_ratio,
)
from optstab.harness import RunConfig, classify
from optstab.optimizers import (
    ConstantRate,
    OptimizerSpec,
    init_state,
    phi_full_history,
    run_trajectory,
    step_recursive,
)
from optstab.problems import (
    QuadraticProblem,
    StochasticQuadraticProblem,
    grad_deterministic,
    sample_minibatch_gradient,
)
from optstab.regions import Membership, RegionQuery, in_stability_region, threshold

finite = st.floats(-1e3, 1e3, allow_nan=False)
unit = st.floats(0.0, 0.99)
eig = st.floats(0.0, 1e3)
dims = st.integers(1, 4)


def vectors(d, elems=finite):
    return st.lists(elems, min_size=d, max_size=d)


@st.composite
def problems(draw):
    d = draw(dims)
    return QuadraticProblem(draw(vectors(d)), draw(vectors(d, eig)))


@st.composite
def adaptive_specs(draw):
    alpha = draw(st.floats(0.0, 0.95))
    beta = draw(st.floats(min(alpha * alpha + 1e-3, 0.999), 0.999))
    eps = draw(st.floats(1e-8, 1.0))
    return OptimizerSpec.adam(alpha, beta, eps)


@st.composite
def specs(draw):
    kind = draw(st.sampled_from(["gd", "momentum", "nesterov", "rmsprop", "adam"]))
    if kind == "gd":
        return OptimizerSpec.gd()
    if kind in ("momentum", "nesterov"):
        return getattr(OptimizerSpec, kind)(draw(unit))
    if kind == "rmsprop":
        return OptimizerSpec.rmsprop(draw(st.floats(0.01, 0.999)), draw(st.floats(1e-8, 1.0)))
    return draw(adaptive_specs())


@given(problems(), st.floats(-10, 10), st.data())
def test_gradient_is_linear_in_offset(prob, s, data):
    v = np.asarray(data.draw(vectors(prob.dim)))
    lhs = grad_deterministic(prob, prob.target + s * v)
    rhs = s * grad_deterministic(prob, prob.target + v)
    scale = np.abs(prob.eigs) * (np.abs(prob.target) + abs(s) * np.abs(v)) + 1.0
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale * max(1.0, abs(s)))


@given(problems(), st.floats(0.0, 10.0), st.integers(1, 8), st.integers(0, 2**64 - 1), st.integers(1, 500), st.data())
def test_minibatch_perturbation_bound(base, c, m, seed, n, data):
    prob = StochasticQuadraticProblem(base, c, m, seed=seed)
    theta = np.asarray(data.draw(vectors(base.dim)))
    g = sample_minibatch_gradient(prob, theta, n)
    g0 = np.asarray(base.eigs) * theta
    assert np.max(np.abs(g - g0)) <= np.max(base.eigs) * c * (1 + 1e-12) + 1e-9 * np.max(np.abs(g0), initial=0)


@given(problems(), st.integers(0, 2**64 - 1), st.integers(1, 100))
def test_gradient_stream_deterministic(base, seed, n):
    a = StochasticQuadraticProblem(base, 1.0, 3, seed=seed)
    b = StochasticQuadraticProblem(base, 1.0, 3, seed=seed)
    th = np.ones(base.dim)
    assert np.array_equal(sample_minibatch_gradient(a, th, n), sample_minibatch_gradient(b, th, n))


@settings(max_examples=60, deadline=None)
@given(specs(), st.integers(1, 300), st.integers(0, 2**32))
def test_recursive_matches_full_history(spec, n, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, 2)) * rng.uniform(0.1, 10)
    state = init_state(2)
    for g in G:
        state, u = step_recursive(spec, state, g)
    full = phi_full_history(spec, G)
    assert np.all(np.abs(u - full) <= 1e-9 * np.maximum(np.abs(full), 1e-300) + 1e-15 * np.abs(G).max())


@settings(max_examples=200, deadline=None)
@given(adaptive_specs(), st.integers(1, 200), st.integers(0, 2**32))
def test_adam_update_magnitude_bound(spec, n, seed):
    a, b = spec.alpha, spec.beta
    G = np.random.default_rng(seed).standard_cauchy(size=(n, 1))
    u = phi_full_history(spec, G)
    bound = (1 - a) / (1 - a**n) * math.sqrt((1 - b**n) / (1 - b)) * (1 - a * a / b) ** -0.5
    assert abs(u[0]) <= bound * (1 + 1e-12)


# tiny entries are filtered out: their squares underflow and the ratio turns into 0/0
@given(st.floats(0, 0.95), st.floats(0.01, 0.999), st.floats(0.01, 100), st.floats(0, 1),
       st.lists(st.floats(-1e6, 1e6).filter(lambda x: x == 0 or abs(x) > 1e-100), min_size=1, max_size=200))
def test_hoelder_dominates(alpha, beta, ell, eps, grads):
    assume(beta > alpha * alpha * 1.0001)
    assume(any(grads))
    assert hoelder_ratio(alpha, beta, ell, eps, grads) <= hoelder_increment_bound(alpha, beta, ell) * (1 + 1e-12)


@given(specs(), problems(), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_region_scale_invariance(spec, prob, gamma, s):
    q1 = in_stability_region(RegionQuery(spec, gamma, tuple(prob.eigs)))
    q2 = in_stability_region(RegionQuery(spec, gamma / s, tuple(float(x) * s for x in prob.eigs)))
    t = q1.threshold
    top = gamma * max(prob.eigs)
    # products can round across the 1e-9 boundary band only when they sit on it
    if math.isinf(t) or abs(top - t) > 1e-8 * t:
        assert q1.membership is q2.membership


@given(specs(), problems(), st.floats(1e-3, 1e3), st.integers(0, 3), st.floats(1.0, 100.0))
def test_enlarging_eigenvalue_never_enters_region(spec, prob, gamma, i, factor):
    eigs = list(prob.eigs)
    i %= len(eigs)
    before = in_stability_region(RegionQuery(spec, gamma, tuple(eigs))).membership
    eigs[i] *= factor
    after = in_stability_region(RegionQuery(spec, gamma, tuple(eigs))).membership
    if before is Membership.EXTERIOR:
        assert after is Membership.EXTERIOR


@given(st.floats(0.0, 0.999), st.floats(0.0, 0.999))
def test_threshold_monotone(a1, a2):
    assume(a2 - a1 > 1e-9)
    assert threshold("momentum", a1) < threshold("momentum", a2)
    assert threshold("nesterov", a1) > threshold("nesterov", a2)


@given(st.floats(0, 10), st.integers(1, 5), st.floats(0.01, 10), st.floats(0, 10), st.floats(0, 10))
def test_gd_bound_monotone(G, delta, c, th, x):
    base = gd_bound(GdBoundInputs(G, delta, c, th, x))
    assert gd_bound(GdBoundInputs(G * 1.5 + 0.1, delta, c, th, x)) >= base
    assert gd_bound(GdBoundInputs(G, delta + 1, c, th, x)) >= base
    assert gd_bound(GdBoundInputs(G, delta, c, th, x + 1)) >= base


@given(adaptive_specs(), st.floats(0.01, 100), st.floats(1.0, 10), st.floats(0.0, 100))
def test_adam_bound_affine_in_theta0(spec, gsup, c, t):
    assume(math.sqrt(spec.beta) > spec.alpha)
    kw = dict(alpha=spec.alpha, beta=spec.beta, eps=spec.eps, gamma_sup=gsup, lambda_sup=2.0,
              lambda_inf_tail=0.5, N=1, c=c, d=2)
    b0, b1, b2 = (adam_bound(AdamBoundInputs(**kw, theta0_norm=x)) for x in (0.0, t, 2 * t))
    assume(math.isfinite(b2))
    assert math.isclose(b2 - b1, b1 - b0, rel_tol=1e-9, abs_tol=1e-9 * b0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(-10, 10).filter(lambda x: abs(x) > 1e-3), st.integers(100, 600))
def test_gd_contraction_rate(r, theta0, N):
    prob = QuadraticProblem([0.0], [r])
    cfg = RunConfig(steps=N)
    rep = classify(run_trajectory(OptimizerSpec.gd(), prob, [theta0], ConstantRate(1.0), N), cfg)
    assert rep.limsup_estimate <= 10 * abs(1 - r) ** (0.9 * N) * abs(theta0) + 1e-300


@settings(max_examples=30, deadline=None)
@given(specs(), problems(), st.floats(0.0, 2.0), st.data())
def test_translation_equivariance(spec, prob, gamma, data):
    shift = np.asarray(data.draw(vectors(prob.dim, st.integers(-8, 8).map(float))))
    theta0 = np.asarray(data.draw(vectors(prob.dim, st.integers(-8, 8).map(float))))
    eigs = np.round(np.asarray(prob.eigs) / 100, 0) / 4  # dyadic so shifts stay exact
    p1 = QuadraticProblem(np.zeros(prob.dim), eigs)
    p2 = QuadraticProblem(shift, eigs)
    g = round(gamma * 4) / 4
    a = run_trajectory(spec, p1, theta0, ConstantRate(g), 20, math.inf)
    b = run_trajectory(spec, p2, theta0 + shift, ConstantRate(g), 20, math.inf)
    assume(a.status.value == "completed" and b.status.value == "completed")
    assume(np.all(np.abs(a.iterates) < 1e6))
    assert np.allclose(b.iterates - shift, a.iterates, rtol=1e-9, atol=1e-9 * (1 + np.abs(shift).max()))
