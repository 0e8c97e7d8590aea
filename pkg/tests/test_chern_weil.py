import itertools
import math

import numpy as np
import pytest

from sasakilab.chern_weil import (
    ChernWeilError,
    CurvatureTwoForm,
    Form,
    chern_forms,
    chern_pontryagin_forms,
    euler_density,
    euler_form,
    frame_independence,
    gauss_bonnet_integral,
    non_conformally_flat_4d,
    p1_naturality_residual,
    p1_trace_formula,
    pfaffian,
    pullback_curvature,
    tangent_curvature,
    ttm_euler_norm,
    ttm_product_curvature,
)
from sasakilab.geometry import ChartedManifold
from sasakilab.sampling import generator
from sasakilab.tangent import bundle_samples

M4 = non_conformally_flat_4d()


def random_curvature(rng, r, n):
    w = rng.normal(size=(r, r, n, n))
    w = w - np.swapaxes(w, 0, 1)
    return CurvatureTwoForm(w - np.swapaxes(w, 2, 3))


def random_form(rng, degree, dim):
    return Form(degree, dim, {I: rng.normal() for I in itertools.combinations(range(dim), degree)})


def brute_pfaffian(entries):
    """(1 / 2^k k!) Σ_σ sgn(σ) Ω_{σ1σ2} ∧ ... over all permutations."""
    r = len(entries)
    k = r // 2
    dim = entries[0][0].dim
    total = Form.zero(r, dim)
    for perm in itertools.permutations(range(r)):
        inv = sum(1 for i in range(r) for j in range(i + 1, r) if perm[i] > perm[j])
        term = Form.scalar((-1.0) ** inv, dim)
        for i in range(k):
            term = term.wedge(entries[perm[2 * i]][perm[2 * i + 1]])
        total = total + term
    return total * (1.0 / (2**k * math.factorial(k)))


def tm_points(M, count=10):
    return bundle_samples(M, generator(0, "cw"), count)


class TestForms:
    def test_graded_commutativity(self, rng):
        for p, q in [(1, 1), (1, 2), (2, 2), (2, 3)]:
            a, b = random_form(rng, p, 6), random_form(rng, q, 6)
            assert (a.wedge(b) - b.wedge(a) * ((-1) ** (p * q))).norm() < 1e-12

    def test_associativity(self, rng):
        a, b, c = (random_form(rng, d, 6) for d in (1, 2, 2))
        assert (a.wedge(b).wedge(c) - a.wedge(b.wedge(c))).norm() < 1e-12

    def test_basis_anticommutes(self):
        dx = [Form(1, 3, {(i,): 1.0}) for i in range(3)]
        assert dx[0].wedge(dx[0]).norm() == 0
        assert dx[1].wedge(dx[0]).coefficient((0, 1)) == -1.0

    def test_type_mismatch(self):
        with pytest.raises(ChernWeilError):
            Form(1, 3) + Form(2, 3)


class TestPfaffian:
    @pytest.mark.parametrize("r, n", [(2, 3), (4, 4), (4, 6), (6, 6)])
    def test_matches_permutation_sum(self, r, n, rng):
        curv = random_curvature(rng, r, n)
        got = pfaffian(curv.entries())
        assert (got - brute_pfaffian(curv.entries())).norm() < 1e-10 * max(1.0, got.norm())

    def test_odd_rank(self, rng):
        with pytest.raises(ChernWeilError):
            euler_form(random_curvature(rng, 3, 4))

    def test_flat_bundle(self, rng):
        curv = tangent_curvature(ChartedManifold.euclidean(4), None, rng.normal(size=4))
        assert euler_form(curv).norm() == 0
        assert all(c.norm() == 0 for c in chern_forms(curv)[1:])


class TestSurfaces:
    @pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
    def test_sphere_euler_density(self, R, rng):
        M = ChartedManifold.sphere(2, R)
        for x in M.sample(rng, 5, 0.8):
            sqrtg = 4 * R**4 / (R**2 + x @ x) ** 2
            want = sqrtg / R**2 / (2 * math.pi)
            e = euler_form(tangent_curvature(M, None, x)).coefficient((0, 1))
            assert e == pytest.approx(want, rel=1e-12)
            assert euler_density(M, None, x)[0] == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("R", [1.0, 2.0])
    def test_gauss_bonnet_sphere(self, R):
        assert gauss_bonnet_integral(ChartedManifold.sphere(2, R)).value == pytest.approx(2.0, abs=1e-3)

    def test_gauss_bonnet_flat_patch(self):
        assert abs(gauss_bonnet_integral(ChartedManifold.euclidean(2)).value) < 1e-14

    def test_coarse_grid_warns(self):
        with pytest.warns(UserWarning, match="coarse"):
            gauss_bonnet_integral(ChartedManifold.sphere(2, 1.0), rho_max=5.0, panels=2, nodes=2, n_theta=4)

    def test_needs_surface(self):
        with pytest.raises(ChernWeilError):
            gauss_bonnet_integral(ChartedManifold.sphere(3, 1.0))


class TestTangentBundle:
    @pytest.mark.parametrize(
        "M",
        [
            ChartedManifold.explicit([["1+x1^2"]]),
            ChartedManifold.sphere(2, 1.0),
            ChartedManifold.hyperbolic(2, 0.8),
            ChartedManifold.conformally_flat(2, "exp(0.5*x1*x2)"),
        ],
    )
    def test_euler_form_vanishes(self, M):
        assert max(ttm_euler_norm(M, None, p) for p in tm_points(M)) < 1e-10

    def test_product_curvature_is_antisymmetric(self):
        M = ChartedManifold.sphere(2, 1.0)
        curv = ttm_product_curvature(M, None, tm_points(M, 1)[0])
        assert curv.form_antisymmetry() < 1e-13 and curv.frame_antisymmetry() < 1e-13

    @pytest.mark.parametrize("M", [M4, ChartedManifold.sphere(2, 1.0)])
    def test_p1_naturality(self, M):
        worst = max(p1_naturality_residual(M, None, p)[0] for p in tm_points(M, 5))
        assert worst < 1e-10

    def test_pullback_has_no_fiber_legs(self):
        p = tm_points(M4, 1)[0]
        curv = pullback_curvature(M4, None, p)
        assert np.abs(curv.omega[..., 4:, :]).max() == 0 and np.abs(curv.omega[..., :, 4:]).max() == 0


class TestPontryagin:
    def test_trace_formula_agrees(self, rng):
        for x in M4.sample(rng, 3, 0.8):
            curv = tangent_curvature(M4, None, x)
            p1 = chern_pontryagin_forms(curv, 1)["p"]
            assert p1.norm() > 1e-6
            assert (p1 - p1_trace_formula(curv)).norm() < 1e-12

    def test_odd_chern_forms_vanish(self, rng):
        c = chern_forms(random_curvature(rng, 4, 6))
        assert c[1].norm() < 1e-12 and c[3].norm() < 1e-12

    @pytest.mark.parametrize(
        "M",
        [ChartedManifold.sphere(4, 1.0), ChartedManifold.hyperbolic(4, 2.0), ChartedManifold.conformally_flat(4, "exp(0.3*x1*x2+0.2*x3)")],
    )
    def test_conformally_flat_p1_vanishes(self, M, rng):
        for x in M.sample(rng, 5, 0.8):
            assert chern_pontryagin_forms(tangent_curvature(M, None, x), 1)["p"].norm() < 1e-10

    def test_degree_range(self, rng):
        with pytest.raises(ChernWeilError):
            chern_pontryagin_forms(random_curvature(rng, 2, 4), 2)


@pytest.mark.parametrize("make", [lambda x: tangent_curvature(M4, None, x[:4]), lambda x: ttm_product_curvature(M4, None, x)])
def test_frame_independence(make):
    rng = generator(0, "frames")
    for p in tm_points(M4, 3):
        assert frame_independence(make(p), rng) < 1e-10
