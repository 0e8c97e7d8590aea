import warnings

import numpy as np
import pytest

from sasakilab import dsl
from sasakilab.geometry import ChartedManifold
from sasakilab.homothety import (
    HOMOTHETY,
    ISOMETRY,
    NOT_HOMOTHETY,
    HomothetyError,
    HomothetySpec,
    decomposition_residual,
    perturbations,
    pushforward_closed_form,
    pushforward_numeric,
    reciprocal_radius_spec,
    spaceform_isometry_check,
    srm_homothety_verdict,
    srm_samples,
    tangency_preservation_residual,
    tm_homothety_verdict,
    tm_samples,
    truth_table,
    verdict,
)

S3 = ChartedManifold.sphere(3, 1.0)
E2 = ChartedManifold.euclidean(2)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


class TestPushforward:
    def test_identity(self, rng):
        spec = HomothetySpec.build(S3)
        p = tm_samples(S3, 1)[0]
        X = rng.normal(size=6)
        np.testing.assert_allclose(pushforward_numeric(spec, p, X), X)
        np.testing.assert_allclose(pushforward_closed_form(spec, p, X), X, atol=1e-14)

    def test_fiber_scaling(self, rng):
        spec = HomothetySpec.build(E2, t=2)
        X = rng.normal(size=4)
        p = tm_samples(E2, 1)[0]
        want = np.concatenate([X[:2], 2 * X[2:]])
        np.testing.assert_allclose(pushforward_numeric(spec, p, X), want)
        np.testing.assert_allclose(pushforward_closed_form(spec, p, X), want)

    def test_vertical_vectors_scale_by_hhat(self, rng):
        spec = HomothetySpec.build(S3, lam="exp(0.4*x2)", t="2+0.3*x1")
        for p in tm_samples(S3, 10):
            X = np.concatenate([np.zeros(3), rng.normal(size=3)])
            hh = float(dsl.evaluate(spec.hhat, p[:3]))
            np.testing.assert_allclose(pushforward_closed_form(spec, p, X), hh * X, atol=1e-13)

    def test_closed_form_matches_jacobian(self):
        rng = np.random.default_rng(2024)
        bases = [S3, ChartedManifold.hyperbolic(3, 1.5), ChartedManifold.euclidean(2), ChartedManifold.sphere(2, 0.7)]
        worst = 0.0
        for k in range(100):
            M = bases[k % len(bases)]
            c = rng.uniform(-0.5, 0.5, size=3)
            spec = HomothetySpec.build(
                M,
                lam=f"exp({c[0]:.3f}*x1 + {c[1]:.3f}*x2^2)",
                source_lambda="1+0.2*x2^2" if k % 3 == 0 else 1.0,
                t=f"1.5+{c[2]:.3f}*sin(x1)",
            )
            p = tm_samples(M, 1, seed=k)[0]
            X = rng.normal(size=2 * M.dim)
            num = pushforward_numeric(spec, p, X)
            closed = pushforward_closed_form(spec, p, X)
            worst = max(worst, np.abs(num - closed).max() / np.abs(num).max())
        assert worst < 1e-6

    def test_decomposition(self, rng):
        spec = HomothetySpec.build(S3, lam="exp(0.3*x1-0.2*x3)", source_lambda="1+0.1*x2^2")
        for p in tm_samples(S3, 20):
            assert decomposition_residual(spec, p, rng.normal(size=6)) < 1e-8

    @pytest.mark.parametrize(
        "kw",
        [
            dict(lam="exp(0.3*x1)", r="1+0.2*x2", s="2+0.1*x1"),
            dict(lam=4, r=1, s=2),
            dict(lam=1, r="1+0.3*sin(x1)", s="1/(1+0.3*sin(x1))"),
        ],
    )
    def test_tangency_preserved(self, kw):
        spec = HomothetySpec.build(S3, **kw)
        assert max(tangency_preservation_residual(spec, q) for q in srm_samples(spec, 20)) < 1e-8

    def test_nonpositive_scale_rejected(self):
        spec = HomothetySpec.build(E2, t="x1")
        with pytest.raises(HomothetyError):
            pushforward_numeric(spec, np.array([-0.5, 0.1, 0.3, 0.2]), np.ones(4))


class TestTangentBundleVerdicts:
    def test_constant_homothety(self):
        spec = HomothetySpec.build(S3, lam=4, t=3, f1p=1, f2p=4 / 9)
        rep = tm_homothety_verdict(spec)
        assert rep.verdict == HOMOTHETY and rep.psi == pytest.approx(4.0, rel=1e-12)
        assert rep.max_deviation < 1e-8

    def test_nonconstant_lambda(self):
        spec = HomothetySpec.build(S3, lam="exp(2*0.3*x1)", t=3, f2p=4 / 9)
        rep = tm_homothety_verdict(spec)
        assert rep.verdict == NOT_HOMOTHETY
        assert rep.witness is not None and len(rep.witness["vectors"]) == 2

    def test_two_conformal_changes(self):
        # lambda1 = 2 on the source, lambda2 = 8 on the target: relative factor 4
        spec = HomothetySpec.build(S3, source_lambda=2, lam=4, t=2, f1p=1, f2p=1)
        rep = tm_homothety_verdict(spec)
        assert rep.verdict == HOMOTHETY and rep.psi == pytest.approx(4.0)

    def test_sphere_spec_rejected(self):
        with pytest.raises(HomothetyError):
            tm_homothety_verdict(HomothetySpec.build(S3, r=1, s=2))


class TestSphereBundleVerdicts:
    def test_different_radii_sasaki(self):
        rep = srm_homothety_verdict(HomothetySpec.build(S3, r=1, s=2))
        assert rep.verdict == NOT_HOMOTHETY and rep.witness is not None

    @pytest.mark.parametrize("r, s", [(0.5, 2.0), (1.5, 0.8)])
    def test_inverse_square_weights(self, r, s):
        spec = HomothetySpec.build(S3, r=r, s=s, f1=1, f2=r**-2, f1p=1, f2p=s**-2)
        rep = srm_homothety_verdict(spec)
        assert rep.verdict == ISOMETRY and rep.psi == pytest.approx(1.0, abs=1e-12)

    def test_surface_base_is_flagged(self):
        spec = HomothetySpec.build(ChartedManifold.sphere(2, 1.0), r=1, s=1)
        with pytest.warns(UserWarning, match="dimension"):
            rep = srm_homothety_verdict(spec, 10)
        assert not rep.theorem_backed and rep.notes

    @pytest.mark.parametrize("M", [S3, ChartedManifold.euclidean(3)])
    def test_reciprocal_radius_isometry(self, M):
        rep = srm_homothety_verdict(reciprocal_radius_spec(M), 100)
        assert rep.verdict == ISOMETRY and rep.max_deviation < 1e-8 and rep.samples >= 100
        off = srm_homothety_verdict(reciprocal_radius_spec(M, exponent=4.1), 100)
        assert off.verdict == NOT_HOMOTHETY


@pytest.mark.parametrize("spec", truth_table(), ids=lambda s: s.label)
def test_truth_table(spec):
    rep = quiet(verdict, spec)
    assert rep.matches(spec.expected), (rep.verdict, rep.max_deviation)
    if spec.expected == NOT_HOMOTHETY:
        assert rep.witness is not None
    elif spec.expected_psi is not None:
        assert rep.psi == pytest.approx(spec.expected_psi, rel=1e-10)


@pytest.mark.parametrize("spec", [s for s in truth_table() if s.expected != NOT_HOMOTHETY], ids=lambda s: s.label)
def test_perturbations_flip(spec):
    for bad in perturbations(spec):
        assert quiet(verdict, bad).verdict == NOT_HOMOTHETY, bad.label


class TestSpaceForms:
    def test_same_radius_is_identity(self):
        rep = spaceform_isometry_check(1.3, 1.3, 0.7, chain=False)
        assert rep.verdict == ISOMETRY

    @pytest.mark.parametrize("R, sign", [(2.0, 1), (0.5, 1), (1.5, -1)])
    def test_chain(self, R, sign):
        rep = spaceform_isometry_check(1.0, R, 1.0, m=3, samples=30, sign=sign)
        assert rep.verdict == ISOMETRY
        assert [link.verdict for link in rep.links] == [ISOMETRY] * 3

    def test_bad_radius(self):
        with pytest.raises(HomothetyError):
            spaceform_isometry_check(1.0, -1.0, 1.0)


def test_report_serializes():
    rep = tm_homothety_verdict(HomothetySpec.build(S3, lam="exp(0.6*x1)"), 5)
    d = rep.to_dict()
    assert d["verdict"] == NOT_HOMOTHETY and isinstance(d["witness"]["point"], list)


def test_spec_describe():
    d = HomothetySpec.build(S3, lam=4, r="1+0.2*x1", s=2).describe()
    assert d["r"] == "1.0 + 0.2 * x1" and d["manifold"]["metric"] == "sphere-stereographic"
