"""One test per acceptance criterion.

Each test records a pass/fail line before asserting; the lines are printed in
the terminal summary under "acceptance criteria".  Tolerances are the ones
pinned by the criteria and are not loosened here.
"""

import itertools
import json
import time
import warnings

import numpy as np

from conftest import ACCEPTANCE, CONFIGS
from sasakilab import dsl
from sasakilab.chern_weil import (
    chern_pontryagin_forms,
    gauss_bonnet_integral,
    non_conformally_flat_4d,
    p1_naturality_residual,
    tangent_curvature,
    ttm_euler_norm,
)
from sasakilab.cli import main
from sasakilab.geometry import ChartedManifold, ConnectionSpec
from sasakilab.homothety import (
    ISOMETRY,
    NOT_HOMOTHETY,
    HomothetySpec,
    pushforward_closed_form,
    pushforward_numeric,
    reciprocal_radius_spec,
    srm_homothety_verdict,
    tm_samples,
    truth_table,
    verdict,
)
from sasakilab.sampling import generator
from sasakilab.sphere import (
    SphereBundleChart,
    UnreachableSignError,
    base_einstein_residual,
    einstein_residual,
    find_radius_for_sign,
    sample_spaceform_chart,
    scal_formula_spaceform,
    scal_report,
    spaceform,
    srm_scalar_curvature,
)
from sasakilab.tangent import (
    WeightedSasakiMetric,
    bundle_samples,
    dmu_residual,
    integrability_matrix,
    integrability_scan,
    predict_integrability,
    product_torsion_residual,
)

SIGNS, DIMS, VALUES = (1, -1), (2, 3), (0.5, 1.0, 2.0)
GRID = list(itertools.product(DIMS, SIGNS, VALUES, VALUES, VALUES, VALUES))  # m, sign, R, s, f1, f2


def record(n, title, passed, detail):
    ACCEPTANCE[n] = (title, bool(passed), detail)
    return bool(passed)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


def tm_points(M, count, key):
    return bundle_samples(M, generator(0, key), count)


def test_01_spaceform_scal_cross_validation():
    start = time.perf_counter()
    worst_gap = worst_spread = 0.0
    for m, sign, R, s, f1, f2 in GRID:
        q = sample_spaceform_chart(sign, m, R, s, generator(0, "c1", str(m), str(sign), str(R), str(s)), 20)
        rep = scal_report(sign, m, R, s, f1, f2, q)
        worst_gap = max(worst_gap, rep.discrepancy)
        worst_spread = max(worst_spread, rep.spread)
    elapsed = time.perf_counter() - start
    ok = worst_gap < 1e-4 and worst_spread < 1e-5 and elapsed < 120
    record(1, "space-form Scal cross-validation", ok,
           f"{len(GRID)} configs, max gap {worst_gap:.2e} (<1e-4), max spread {worst_spread:.2e} (<1e-5), {elapsed:.1f} s")
    assert ok


def test_02_anchor_values():
    got = {}
    for m, want in ((2, 1.5), (3, 7.0)):
        M = ChartedManifold.sphere(m, 1.0)
        chart = SphereBundleChart.over(M, 1.0)
        brute = srm_scalar_curvature(chart, WeightedSasakiMetric.sasaki(ConnectionSpec(M)), chart.sample(generator(0, "c2"), 10))
        got[f"sphere n={m - 1}"] = (scal_formula_spaceform(1, 1.0, 1.0, 1.0, 1.0, m - 1), float(np.max(np.abs(brute - want))), want)
    E3 = ChartedManifold.euclidean(3)
    chart = SphereBundleChart.over(E3, 1.0)
    brute = srm_scalar_curvature(chart, WeightedSasakiMetric.sasaki(ConnectionSpec(E3)), chart.sample(generator(0, "c2"), 10))
    got["flat m=3"] = (None, float(np.max(np.abs(brute - 2.0))), 2.0)
    ok = all((f is None or f == want) and gap < 1e-4 for f, gap, want in got.values())
    detail = ", ".join(f"{k}: {w:g} (brute-force gap {g:.1e})" for k, (_, g, w) in got.items())
    record(2, "anchor values", ok, detail)
    assert ok


def test_03_reciprocal_radius_isometry():
    parts, ok = [], True
    for name, M in (("sphere", ChartedManifold.sphere(3, 1.0)), ("euclidean", ChartedManifold.euclidean(3))):
        rep = srm_homothety_verdict(reciprocal_radius_spec(M), 100)
        off = srm_homothety_verdict(reciprocal_radius_spec(M, exponent=4.1), 100)
        ok &= rep.verdict == ISOMETRY and rep.max_deviation < 1e-8 and rep.samples >= 100
        ok &= off.verdict == NOT_HOMOTHETY
        parts.append(f"{name}: {rep.verdict} dev {rep.max_deviation:.1e}, r^4.1 -> {off.verdict}")
    record(3, "reciprocal-radius isometry", ok, "; ".join(parts))
    assert ok


def test_04_homothety_truth_table():
    start = time.perf_counter()
    table = truth_table()
    wrong = []
    for spec in table:
        rep = quiet(verdict, spec)
        if not rep.matches(spec.expected) or (spec.expected == NOT_HOMOTHETY and rep.witness is None):
            wrong.append(spec.label)
    elapsed = time.perf_counter() - start
    ok = len(table) == 12 and not wrong and elapsed < 60
    record(4, "homothety truth table", ok, f"{len(table) - len(wrong)}/{len(table)} classified, {elapsed:.1f} s"
           + (f", wrong: {wrong}" if wrong else ""))
    assert ok


def test_05_pushforward_oracle():
    rng = np.random.default_rng(5)
    bases = [ChartedManifold.sphere(3, 1.0), ChartedManifold.hyperbolic(3, 1.5),
             ChartedManifold.euclidean(2), ChartedManifold.sphere(2, 0.7)]
    worst = 0.0
    for k in range(100):
        M = bases[k % len(bases)]
        c = [float(v) for v in rng.uniform(-0.5, 0.5, size=4)]
        spec = HomothetySpec.build(
            M,
            lam=f"exp({c[0]!r}*x1 + {c[1]!r}*x2^2)",
            source_lambda=f"1+{abs(c[3])!r}*x2^2",
            t=f"1.5+{c[2]!r}*sin(x1)",
        )
        p = tm_samples(M, 1, seed=k, key="c5")[0]
        X = rng.normal(size=2 * M.dim)
        num = pushforward_numeric(spec, p, X)
        worst = max(worst, float(np.abs(num - pushforward_closed_form(spec, p, X)).max() / np.abs(num).max()))
    ok = worst < 1e-6
    record(5, "pushforward oracle", ok, f"100 draws, sup relative deviation {worst:.2e} (<1e-6)")
    assert ok


def test_06_integrability_matrix():
    cases = integrability_matrix()
    bad, kahler = [], []
    for case in cases:
        pts = tm_points(case.metric.manifold, 10, case.label)
        pred = predict_integrability(case.metric, pts[:, : case.metric.dim])
        nij, dom = integrability_scan(case.metric, pts)
        if (nij < 1e-8) != pred.integrable or (dom < 1e-8) != pred.symplectic:
            bad.append(case.label)
        if (not pred.integrable and nij <= 1e-3) or (not pred.symplectic and dom <= 1e-3):
            bad.append(case.label + " (weak)")
        if nij < 1e-8 and dom < 1e-8:
            kahler.append(case.label)
    ok = len(cases) == 8 and not bad and kahler == ["flat-torsion-free-constant"]
    record(6, "integrability matrix", ok, f"{len(cases)} configs, mismatches {bad}, both vanish in {kahler}")
    assert ok


def test_07_dmu_identity():
    worst = {}
    for name, C in (
        ("torsion-free", ConnectionSpec(ChartedManifold.sphere(3, 1.0))),
        ("vectorial", ConnectionSpec(ChartedManifold.hyperbolic(3, 1.0), None, dsl.parse("0.3*x1-x3"))),
    ):
        W = WeightedSasakiMetric.sasaki(C)
        worst[name] = max(dmu_residual(W, q) for q in tm_points(C.manifold, 100, "c7"))
    ok = all(v < 1e-8 for v in worst.values())
    record(7, "dmu identity", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<1e-8, 100 samples)")
    assert ok


def test_08_product_torsion():
    rng = np.random.default_rng(8)
    worst = {}
    for name, C in (
        ("sphere", ConnectionSpec(ChartedManifold.sphere(3, 1.4), None, dsl.parse("0.3*x2"))),
        ("sphere torsion-free", ConnectionSpec(ChartedManifold.sphere(2, 1.0))),
        ("euclidean", ConnectionSpec(ChartedManifold.euclidean(3), None, dsl.parse("x1"))),
    ):
        m = C.dim
        worst[name] = max(product_torsion_residual(C, q, *rng.normal(size=(2, m))) for q in tm_points(C.manifold, 20, "c8"))
    ok = all(v < 1e-8 for v in worst.values())
    record(8, "product-connection torsion", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<1e-8)")
    assert ok


def test_09_chern_weil():
    S2 = ChartedManifold.sphere(2, 1.0)
    euler = max(ttm_euler_norm(S2, None, p) for p in tm_points(S2, 20, "c9"))
    gb = {R: gauss_bonnet_integral(ChartedManifold.sphere(2, R)).value for R in (1.0, 2.0)}
    M4 = non_conformally_flat_4d()
    nat = max(p1_naturality_residual(M4, None, p)[0] for p in tm_points(M4, 10, "c9"))
    rng = generator(0, "c9-p1")
    const = max(
        chern_pontryagin_forms(tangent_curvature(M, None, x), 1)["p"].norm()
        for M in (ChartedManifold.sphere(4, 1.0), ChartedManifold.hyperbolic(4, 2.0))
        for x in M.sample(rng, 10, 0.8)
    )
    ok = euler < 1e-10 and all(abs(v - 2) < 1e-3 for v in gb.values()) and nat < 1e-10 and const < 1e-10
    record(9, "Chern-Weil", ok, f"TTM Euler {euler:.1e}, Gauss-Bonnet {gb[1.0]:.6f}/{gb[2.0]:.6f}, "
           f"p1 naturality {nat:.1e}, constant-curvature p1 {const:.1e}")
    assert ok


def test_10_radius_search():
    failures, checked = [], 0
    for m, sign, R, f1, f2 in itertools.product(DIMS, SIGNS, VALUES, VALUES, VALUES):
        for target in ("positive", "negative"):
            try:
                s = find_radius_for_sign(sign, R, f1, f2, m - 1, target)
            except UnreachableSignError:
                failures.append(f"m={m} sign={sign:+d} R={R:g} f1={f1:g} f2={f2:g} {target}: unreachable")
                continue
            want = 1 if target == "positive" else -1
            formula = scal_formula_spaceform(sign, R, s, f1, f2, m - 1)
            q = sample_spaceform_chart(sign, m, R, s, generator(0, "c10"), 3)
            brute = scal_report(sign, m, R, s, f1, f2, q).brute_force
            checked += 1
            if np.sign(formula) != want or np.sign(brute) != want or abs(brute - formula) > 1e-4 * max(1.0, abs(formula)):
                failures.append(f"m={m} sign={sign:+d} R={R:g} f1={f1:g} f2={f2:g} {target}: formula {formula:g} brute {brute:g}")
    ok = not failures
    record(10, "radius search", ok, f"{checked} radii verified, {len(failures)} failures"
           + (f", first: {failures[0]}" if failures else ""))
    assert ok, failures


def test_11_einstein_residual():
    lowest, einstein = np.inf, []
    for m, sign, R, s, f1, f2 in GRID:
        M = spaceform(sign, m, R)
        chart = SphereBundleChart.over(M, s)
        W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), f1, f2)
        res = float(np.max(einstein_residual(chart, W, chart.sample(generator(0, "c11"), 3))))
        lowest = min(lowest, res)
        if res <= 1e-3:
            einstein.append(f"m={m} sign={sign:+d} R={R:g} s={s:g} f1={f1:g} f2={f2:g} ({res:.1e})")
    control = max(
        base_einstein_residual(spaceform(sign, m, R), x)
        for m, sign, R in itertools.product(DIMS, SIGNS, VALUES)
        for x in spaceform(sign, m, R).sample(generator(0, "c11-base"), 5, 0.8)
    )
    ok = not einstein and control < 1e-8
    record(11, "Einstein residual", ok, f"{len(GRID)} bundles, {len(einstein)} with residual <= 1e-3 "
           f"(lowest {lowest:.1e}), base control {control:.1e}" + (f", first: {einstein[0]}" if einstein else ""))
    assert ok, einstein


def test_12_determinism(capsys):
    outs = []
    for _ in range(2):
        code = main(["--config", str(CONFIGS / "all.toml"), "--format", "json", "--samples", "20", "--seed", "42"])
        outs.append((code, capsys.readouterr().out))
    ok = outs[0] == outs[1] and json.loads(outs[0][1])["report_version"] == 1
    record(12, "determinism", ok, f"two runs of configs/all.toml, {len(outs[0][1])} bytes, identical={outs[0] == outs[1]}")
    assert ok
