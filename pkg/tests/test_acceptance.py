"""Acceptance criteria at full size. Each test records one PASS/FAIL line."""

import io
import json
import math

import numpy as np
import pytest

from optstab import suites
from optstab.bounds import hoelder_increment_bound
from optstab.cli import main
from optstab.harness import RunConfig, Verdict, dumps, run_and_classify
from optstab.optimizers import ConstantRate, OptimizerSpec
from optstab.problems import QuadraticProblem
from optstab.regions import spectral_threshold
from optstab.spectral import (
    SpectralKind,
    SrClass,
    classify_sr,
    eigenvalues_closed_form,
    momentum_companion,
    nesterov_companion,
    numeric_eigenvalues,
    spectral_radius,
)

pytestmark = pytest.mark.acceptance

SEED = 20240601


@pytest.mark.parametrize("spec", suites.REGION_SPECS, ids=lambda s: s.label())
def test_c1_region_map(spec, criterion):
    rep = suites.region_map(spec, count=40, steps=20_000, jobs=4)
    detail = (
        f"{rep['optimizer']} threshold {rep['threshold']:.7g}: {rep['agreeing']}/{rep['compared']} agree "
        f"({rep['excluded_band']} in band, {rep['inconclusive']} inconclusive)"
    )
    if rep["mismatches"]:
        detail += f", first mismatch (gamma, lambda, closed, empirical) {rep['first_mismatches'][0]}"
    assert criterion(f"1[{spec.label()}]", rep["passed"], detail)


@pytest.mark.parametrize("alpha", [0.5, 0.8, 0.9])
def test_c1_nesterov_companion_threshold(alpha, criterion):
    # not a stated criterion: the same grid against the companion-matrix threshold
    rep = suites.region_map(OptimizerSpec.nesterov(alpha), count=40, reference="spectral", jobs=4)
    detail = f"nesterov({alpha}) vs companion threshold {rep['threshold']:.7g}: {rep['agreeing']}/{rep['compared']} agree"
    assert criterion(f"1-supplementary[nesterov {alpha}]", rep["passed"], detail)


def _spectral_samples(n, seed):
    rng = np.random.default_rng(seed)
    lg = lambda: np.exp(rng.uniform(math.log(1e-3), math.log(1e3), n))
    a = rng.uniform(0.0, 1.0, n)
    return a, lg(), lg()


def test_c2_spectral_agreement(criterion):
    worst_eig = worst_det = worst_tr = 0.0
    worst_det_abs = 0.0
    class_mismatch = 0
    for kind, build, seed in ((SpectralKind.MOMENTUM, momentum_companion, 1), (SpectralKind.NESTEROV, nesterov_companion, 2)):
        for a, g, K in zip(*_spectral_samples(10_000, SEED + seed)):
            A = build(a, g, K)
            p, q = eigenvalues_closed_form(kind, a, g, K), numeric_eigenvalues(A)
            worst_eig = max(worst_eig, abs(p.mu_minus - q.mu_minus), abs(p.mu_plus - q.mu_plus))
            if kind is SpectralKind.MOMENTUM:
                det, tr = a, 1.0 + a - 2.0 * (1.0 - a) * g * K
            else:
                det, tr = a * (1.0 - 2.0 * g * K), (1.0 + a) * (1.0 - 2.0 * g * K)
            # relative to the rounding scale of the stored entries
            det_scale = abs(A.a11 * A.a22) + abs(A.a12 * A.a21)
            tr_scale = max(abs(A.a11) + abs(A.a22), 1.0)
            worst_det = max(worst_det, abs(A.det - det) / det_scale)
            worst_det_abs = max(worst_det_abs, abs(A.det - det))
            worst_tr = max(worst_tr, abs(A.trace - tr) / tr_scale)
            sr = spectral_radius(p)
            if abs(sr - 1.0) > 1e-8:
                expected = SrClass.SUBCRITICAL if sr < 1 else SrClass.SUPERCRITICAL
                class_mismatch += classify_sr(kind, a, g * K) is not expected
    ok = worst_eig <= 1e-10 and worst_det <= 1e-12 and worst_tr <= 1e-12 and class_mismatch == 0
    detail = (
        f"2x10^4 samples: max |closed - numeric| {worst_eig:.2e}, det identity {worst_det:.2e} "
        f"(scale-relative; absolute {worst_det_abs:.2e}), trace identity {worst_tr:.2e}, "
        f"classify_sr mismatches {class_mismatch}"
    )
    assert criterion("2", ok, detail)


def test_c3_critical_eigenvalues(criterion):
    alphas = np.concatenate([[0.0, 0.1, 0.25, 0.5, 0.8, 0.9, 0.99], np.random.default_rng(SEED).uniform(0, 1, 1000)])
    worst = 0.0
    for a in alphas:
        # powers of two keep gamma * K exactly equal to the critical value
        for g in (1.0, 0.25, 16.0):
            m = eigenvalues_closed_form(SpectralKind.MOMENTUM, a, g, (1 + a) / (1 - a) / g)
            n = eigenvalues_closed_form(SpectralKind.NESTEROV, a, g, (1 + a) / (1 + 2 * a) / g)
            worst = max(
                worst,
                abs(m.mu_minus + 1), abs(m.mu_plus + a),
                abs(n.mu_minus + 1), abs(n.mu_plus - a / (1 + 2 * a)),
            )
    assert criterion("3", worst <= 1e-12, f"{3 * alphas.size} critical points per kind, max deviation {worst:.2e}")


def test_c4_adam_uniform_stability(criterion):
    cases = suites.adam_cases(500, SEED)
    recs = suites.run_adam_cases(cases, 20_000)
    escapes = sum(r["escaped"] for r in recs)
    violations = sum(not r["holds"] for r in recs)
    stochastic = sum(r["stochastic"] for r in recs)
    ratio = max(r["sup"] / r["bound"] for r in recs)
    detail = (
        f"{len(recs)} cases ({stochastic} stochastic), N=20000: {escapes} escapes, "
        f"{violations} bound violations, max sup/bound {ratio:.2e}"
    )
    assert criterion("4", len(recs) == 500 and escapes == 0 and violations == 0, detail)


def test_c5_bound_suites(criterion):
    gd = suites.gd_cases(200, SEED + 1, 2000)
    mom = suites.momentum_cases(200, SEED + 2, 2000)
    hol = suites.hoelder_streams(10_000, SEED + 3)
    gd_bad = sum(not c.holds for c in gd)
    mom_bad = sum(not c.holds for c in mom)
    ok = gd_bad == 0 and mom_bad == 0 and hol["violations"] == 0 and len(gd) == len(mom) == 200
    detail = (
        f"gd {gd_bad}/200 violations, momentum {mom_bad}/200 violations, "
        f"hoelder {hol['violations']}/{hol['streams']} violations (worst ratio {hol['worst_ratio_to_bound']:.10f})"
    )
    assert criterion("5", ok, detail)


def test_c6_equivalences(criterion):
    rep = suites.equivalence_suite(seed=SEED, cases=20, steps=500, nesterov_steps=1000)
    c = rep["checks"]
    detail = (
        f"momentum(0)=GD {c['momentum0_is_gd']}, nesterov(0)=GD {c['nesterov0_is_gd']}, "
        f"rmsprop=adam(0) {c['rmsprop_is_adam0']}, full vs recursive {c['full_vs_recursive_max_rel']:.2e}, "
        f"three-form identity {c['nesterov_three_form_max_rel']:.2e}"
    )
    assert criterion("6", rep["passed"], detail)


def test_c7_boundary_behavior(criterion):
    spec = OptimizerSpec.momentum(0.5)
    target, theta0 = [1.0], [3.0]
    offset = 2.0

    def run(lam, steps):
        return run_and_classify(spec, QuadraticProblem(target, [lam]), theta0, ConstantRate(1.0), RunConfig(steps=steps))

    on = run(6.0, 20_000)
    out = run(6.0 * 1.01, 20_000)
    inside = run(6.0 * 0.99, 100_000)
    ok_on = on.verdict is Verdict.BOUNDED and 1e-3 * offset < on.limsup_estimate < 1e3 * offset and not on.converged_to_target
    ok = ok_on and out.verdict is Verdict.DIVERGED and inside.verdict is Verdict.BOUNDED and inside.converged_to_target
    detail = (
        f"on threshold {on.verdict.value} limsup {on.limsup_estimate:.6g}; "
        f"+1% {out.verdict.value} at step {out.escape_step}; -1% converged={inside.converged_to_target}"
    )
    assert criterion("7", ok, detail)


def test_c8_bias_adjusted(criterion):
    recs = suites.bias_adjusted_cases(50, SEED, 20_000)
    good = sum(r["converged"] for r in recs)
    worst = max(r["limsup"] for r in recs)
    detail = f"{good}/50 converged, worst limsup {worst:.2e}, largest transient {max(r['transient_peak'] for r in recs):.2e}"
    assert criterion("8", good == 50 and worst < 1e-8, detail)


def _cli(argv):
    out = io.StringIO()
    code = main(argv, out, io.StringIO())
    return code, out.getvalue()


def test_c9_determinism(criterion, tmp_path):
    same = {}
    same["equivalence"] = dumps(suites.equivalence_suite(seed=7, cases=3)) == dumps(suites.equivalence_suite(seed=7, cases=3))
    small = dict(seed=7, adam_count=10, steps=1000, count=10, streams=500)
    same["bounds"] = dumps(suites.bounds_suite(**small)) == dumps(suites.bounds_suite(**small))
    same["region_map"] = dumps(suites.region_map(OptimizerSpec.momentum(0.8), count=10, steps=2000)) == dumps(
        suites.region_map(OptimizerSpec.momentum(0.8), count=10, steps=2000, jobs=4)
    )
    sim = {
        "optimizer": {"kind": "adam", "alpha": 0.9, "beta": 0.999},
        "problem": {"target": [0.5, -0.5], "eigs": [2.0, 30.0], "data_bound": 3.0, "batch_size": [1, 2, 4]},
        "theta0": [4.0, 4.0],
        "schedule": {"gamma": 0.7},
        "run": {"steps": 3000},
    }
    sweep = {
        "optimizer": {"kind": "nesterov", "alpha": 0.8},
        "gamma_grid": {"min": 0.01, "max": 100, "count": 12},
        "lambda_grid": {"min": 0.1, "max": 100, "count": 12},
        "run": {"steps": 2000},
    }
    (tmp_path / "sim.json").write_text(json.dumps(sim))
    (tmp_path / "sweep.json").write_text(json.dumps(sweep))
    outs = []
    for i in range(2):
        a = _cli(["simulate", "--config", str(tmp_path / "sim.json"), "--seed", "11", "--out", str(tmp_path / f"t{i}.csv")])
        b = _cli(["region-sweep", "--config", str(tmp_path / "sweep.json"), "--jobs", str(1 + 3 * i), "--out", str(tmp_path / f"s{i}.csv")])
        c = _cli(["verify", "--suite", "equivalence", "--seed", "3"])
        outs.append((a, b, c, (tmp_path / f"t{i}.csv").read_bytes(), (tmp_path / f"s{i}.csv").read_bytes()))
    same["cli"] = outs[0] == outs[1]
    failed = [k for k, v in same.items() if not v]
    assert criterion("9", not failed, "byte-identical reruns: " + ", ".join(f"{k}={v}" for k, v in same.items()))
