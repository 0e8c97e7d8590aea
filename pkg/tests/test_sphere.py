import itertools

import numpy as np
import pytest

from sasakilab import dsl
from sasakilab.geometry import ChartedManifold, ConnectionSpec, metric_curvature
from sasakilab.sampling import generator
from sasakilab.sphere import (
    SphereBundleChart,
    SphereBundleError,
    UnreachableSignError,
    base_einstein_residual,
    chain_scal_values,
    einstein_residual,
    embedding_jacobian,
    find_radius_for_sign,
    hyperspherical,
    induced_metric,
    induced_metric_jet,
    scal_formula_general,
    scal_formula_spaceform,
    scal_report,
    spaceform,
    srm_scalar_curvature,
    tangency_residual,
)
from sasakilab.tangent import WeightedSasakiMetric


def chart_samples(chart, count=20, key="srm"):
    return chart.sample(generator(0, key), count)


def sasaki(M):
    return WeightedSasakiMetric.sasaki(ConnectionSpec(M))


class TestChart:
    def test_hyperspherical_unit(self, rng):
        a = rng.uniform(0, 3, size=(10, 3))
        np.testing.assert_allclose(np.linalg.norm(hyperspherical(a), axis=-1), 1.0, rtol=1e-15)

    def test_fiber_norm_is_radius(self):
        M = ChartedManifold.hyperbolic(3, 1.2)
        chart = SphereBundleChart(ConnectionSpec(M), dsl.parse("1+0.3*sin(x1)"))
        for q in chart_samples(chart, 10):
            x, u = chart.point(q)
            g = M.metric_field(x)
            assert np.sqrt(u @ g @ u) == pytest.approx(1 + 0.3 * np.sin(x[0]), rel=1e-13)

    @pytest.mark.parametrize("r", ["1", "1+0.3*sin(x1)", "exp(0.2*x1*x2)"])
    def test_tangency(self, r):
        M = ChartedManifold.sphere(3, 1.0)
        chart = SphereBundleChart(ConnectionSpec(M), dsl.parse(r))
        assert max(tangency_residual(chart, q) for q in chart_samples(chart, 20)) < 1e-10

    def test_jacobian_full_rank(self):
        chart = SphereBundleChart.over(ChartedManifold.sphere(3, 1.0), 0.5)
        J = embedding_jacobian(chart, chart_samples(chart, 1)[0])
        assert np.linalg.matrix_rank(J) == 5

    def test_rank_deficiency_names_point(self):
        chart = SphereBundleChart.over(ChartedManifold.sphere(3, 1.0), 1.0)
        q = np.array([0.1, 0.2, 0.3, 0.0, 1.0])  # polar angle at a pole
        with pytest.raises(SphereBundleError, match="rank deficient"):
            induced_metric(chart, sasaki(chart.manifold), q)

    def test_needs_two_dimensional_base(self):
        chart = SphereBundleChart.over(ChartedManifold.euclidean(1), 1.0)
        with pytest.raises(SphereBundleError):
            chart.sample(np.random.default_rng(0), 1)


class TestBruteForce:
    def test_plane_circle_bundle_is_flat(self):
        M = ChartedManifold.euclidean(2)
        chart = SphereBundleChart.over(M, 1.0)
        h = induced_metric_jet(chart, sasaki(M), chart_samples(chart, 10))
        riem, _, scal = metric_curvature(h)
        assert np.abs(riem).max() < 1e-12 and np.abs(scal).max() < 1e-12

    @pytest.mark.parametrize("s, f1, f2", [(1.0, 1.0, 1.0), (0.5, 2.0, 0.5), (2.0, 0.5, 3.0)])
    def test_flat_surface_base_vanishes(self, s, f1, f2):
        M = ChartedManifold.euclidean(2)
        chart = SphereBundleChart.over(M, s)
        W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), f1, f2)
        assert np.abs(srm_scalar_curvature(chart, W, chart_samples(chart))).max() < 1e-10

    def test_flat_three_base(self):
        M = ChartedManifold.euclidean(3)
        chart = SphereBundleChart.over(M, 1.0)
        np.testing.assert_allclose(srm_scalar_curvature(chart, sasaki(M), chart_samples(chart)), 2.0, atol=1e-10)

    @pytest.mark.parametrize("m, expected", [(2, 1.5), (3, 7.0)])
    def test_unit_sphere_anchors(self, m, expected):
        M = ChartedManifold.sphere(m, 1.0)
        chart = SphereBundleChart.over(M, 1.0)
        np.testing.assert_allclose(srm_scalar_curvature(chart, sasaki(M), chart_samples(chart)), expected, atol=1e-10)

    def test_hyperbolic_anchor(self):
        M = ChartedManifold.hyperbolic(3, 1.0)
        chart = SphereBundleChart.over(M, 1.0)
        np.testing.assert_allclose(srm_scalar_curvature(chart, sasaki(M), chart_samples(chart)), -5.0, atol=1e-10)


class TestFormulas:
    def test_spaceform_values(self):
        assert scal_formula_spaceform(1, 1, 1, 1, 1, 1) == pytest.approx(1.5)
        assert scal_formula_spaceform(1, 1, 1, 1, 1, 2) == pytest.approx(7.0)
        assert scal_formula_spaceform(-1, 1, 1, 1, 1, 2) == pytest.approx(-5.0)

    def test_flat_general(self, rng):
        M = ChartedManifold.euclidean(4)
        W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), 1.7, 0.6)
        assert scal_formula_general(M, W, 0.8, rng.normal(size=4), rng.normal(size=4)) == pytest.approx(
            2 * 3 / (0.6 * 0.64)
        )

    @pytest.mark.parametrize("sign, m", [(1, 3), (-1, 3), (1, 2)])
    def test_general_reduces_to_spaceform(self, sign, m, rng):
        M = spaceform(sign, m, 1.3)
        W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), 0.7, 1.9)
        x = M.sample(rng, 1, 0.8)[0]
        want = scal_formula_spaceform(sign, 1.3, 0.6, 0.7, 1.9, m - 1)
        assert scal_formula_general(M, W, 0.6, x, rng.normal(size=m)) == pytest.approx(want, rel=1e-12)

    def test_general_matches_brute_force_off_space_forms(self):
        M = ChartedManifold.conformally_flat(3, "exp(0.3*x1+0.2*x2^2)")
        W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), 1.5, 0.7)
        chart = SphereBundleChart.over(M, 0.8)
        q = chart_samples(chart, 10)
        brute = srm_scalar_curvature(chart, W, q)
        for qi, b in zip(q, brute):
            x, u = chart.point(qi)
            assert scal_formula_general(M, W, 0.8, x, u) == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("sign, R, n", list(itertools.product((1, -1), (0.5, 2.0, 3.0), (1, 2))))
    def test_chain_values_agree(self, sign, R, n):
        vals = chain_scal_values(sign, R, n)
        np.testing.assert_allclose(vals, vals[0], rtol=1e-13)

    @pytest.mark.parametrize("sign, m, R, s, f1, f2", [(1, 3, 2.0, 0.5, 0.5, 2.0), (-1, 2, 0.5, 2.0, 2.0, 1.0)])
    def test_report_constant(self, sign, m, R, s, f1, f2):
        chart = SphereBundleChart.over(spaceform(sign, m, R), s)
        rep = scal_report(sign, m, R, s, f1, f2, chart_samples(chart))
        assert rep.discrepancy < 1e-4 and rep.spread < 1e-5

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            scal_formula_spaceform(1, -1.0, 1, 1, 1, 2)
        with pytest.raises(ValueError):
            scal_formula_spaceform(0, 1.0, 1, 1, 1, 2)


class TestRadiusSearch:
    def test_positive_sphere_negative_target_is_large(self):
        s = find_radius_for_sign(1, 1.0, 1.0, 1.0, 2, "negative")
        assert s > 1 and scal_formula_spaceform(1, 1.0, s, 1.0, 1.0, 2) < 0

    def test_hyperbolic_positive_target_is_small(self):
        s = find_radius_for_sign(-1, 1.0, 1.0, 1.0, 2, "positive")
        assert s < 1 and scal_formula_spaceform(-1, 1.0, s, 1.0, 1.0, 2) > 0

    def test_positive_target_on_sphere(self):
        s = find_radius_for_sign(1, 1.0, 1.0, 1.0, 2, "positive")
        assert scal_formula_spaceform(1, 1.0, s, 1.0, 1.0, 2) > 0
        assert scal_formula_spaceform(1, 1.0, 1.0, 1.0, 1.0, 2) == 7.0

    @pytest.mark.parametrize(
        "sign, target, R, f1, f2",
        list(itertools.product((1, -1), ("positive", "negative"), (0.5, 1.0, 2.0), (0.5, 1.0, 2.0), (0.5, 1.0, 2.0))),
    )
    def test_all_combinations_reach_sign(self, sign, target, R, f1, f2):
        s = find_radius_for_sign(sign, R, f1, f2, 2, target)
        val = scal_formula_spaceform(sign, R, s, f1, f2, 2)
        assert (val > 0) if target == "positive" else (val < 0)

    def test_hyperbolic_surface_cannot_be_positive(self):
        with pytest.raises(UnreachableSignError):
            find_radius_for_sign(-1, 1.0, 1.0, 1.0, 1, "positive")

    def test_bad_target(self):
        with pytest.raises(ValueError):
            find_radius_for_sign(1, 1.0, 1.0, 1.0, 2, "zero")


class TestEinstein:
    def test_unit_sphere_surface_bundle(self):
        """Known failure, kept as stated: this bundle has constant curvature 1/4 (see the decisions ledger)."""
        M = ChartedManifold.sphere(2, 1.0)
        chart = SphereBundleChart.over(M, 1.0)
        assert np.max(einstein_residual(chart, sasaki(M), chart_samples(chart))) > 1e-3

    def test_flat_three_base_product(self):
        M = ChartedManifold.euclidean(3)
        chart = SphereBundleChart.over(M, 1.0)
        assert np.max(einstein_residual(chart, sasaki(M), chart_samples(chart))) > 1e-3

    @pytest.mark.parametrize("sign, m, R", [(1, 3, 1.0), (-1, 3, 2.0), (1, 2, 0.5)])
    def test_round_base_control(self, sign, m, R, rng):
        M = spaceform(sign, m, R)
        assert max(base_einstein_residual(M, x) for x in M.sample(rng, 10, 0.8)) < 1e-8

    def test_generic_cell_not_einstein(self):
        M = ChartedManifold.sphere(3, 1.0)
        chart = SphereBundleChart.over(M, 1.0)
        assert np.max(einstein_residual(chart, sasaki(M), chart_samples(chart))) > 1e-3
