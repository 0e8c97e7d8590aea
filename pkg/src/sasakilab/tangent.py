"""Geometry of the tangent bundle TM in coordinates (x, u).

A tangent vector of TM is a 2m-vector X = (a, b) meaning a^i ∂/∂x^i + b^k ∂/∂u^k.
For a metric connection with coefficients Γ, write K(x, u)^k_i = Γ^k_ij u^j.
Then

* dπ X = a and the vertical part is X^v = b + K a (in the ∂/∂u basis),
* the horizontal lift of a is (a, −K a); δ_i is the lift of ∂/∂x^i,
* θ X = (0, a) and θ^t X = (c, −K c) with c = b + K a,
* ξ = (0, u) and the spray θ^t ξ = (u, −K u),
* G = g^{f1,f2} gives G(X, Y) = f1 g(a, a') + f2 g(c, c').

Forms are full antisymmetric coefficient arrays with α(X, Y) = X^i α_ij Y^j,
(α∧β)(X, Y) = α(X)β(Y) − α(Y)β(X) and dα(X, Y) = Xα(Y) − Yα(X) − α([X, Y]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import dsl, jets
from .dsl import Expr
from .geometry import ChartedManifold, ConnectionSpec, curvature, metric_curvature
from .jets import Jet
from .sampling import fiber_vectors


@dataclass(frozen=True)
class BundlePoint:
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if self.x.shape != self.u.shape or self.x.ndim != 1:
            raise ValueError("x and u must be vectors of the same length")

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.x, self.u])

    @classmethod
    def from_coords(cls, q) -> "BundlePoint":
        q = np.asarray(q, dtype=float)
        m = q.shape[-1] // 2
        return cls(q[:m], q[m:])


def _as_point(p) -> BundlePoint:
    return p if isinstance(p, BundlePoint) else BundlePoint.from_coords(p)


@dataclass(frozen=True)
class WeightedSasakiMetric:
    """G = f1 π*g ⊕ f2 π*g on H ⊕ V, where H comes from ``connection``.

    Here g is the connection's own metric.  Weights are positive scalar
    fields f1 = e^{2φ1}, f2 = e^{2φ2}.
    """

    connection: ConnectionSpec
    f1: Expr = dsl.Num(1.0)
    f2: Expr = dsl.Num(1.0)

    @classmethod
    def sasaki(cls, connection: ConnectionSpec) -> "WeightedSasakiMetric":
        return cls(connection)

    @classmethod
    def from_weights(cls, connection: ConnectionSpec, f1=1.0, f2=1.0) -> "WeightedSasakiMetric":
        return cls(connection, dsl.as_expr(f1), dsl.as_expr(f2))

    @classmethod
    def from_potentials(cls, connection: ConnectionSpec, phi1=0.0, phi2=0.0) -> "WeightedSasakiMetric":
        phi1, phi2 = dsl.as_expr(phi1), dsl.as_expr(phi2)
        return cls(connection, dsl.Call("exp", 2 * phi1), dsl.Call("exp", 2 * phi2))

    @property
    def manifold(self) -> ChartedManifold:
        return self.connection.manifold

    @property
    def dim(self) -> int:
        return self.connection.dim

    @property
    def phi1(self) -> Expr:
        return _half_log(self.f1)

    @property
    def phi2(self) -> Expr:
        return _half_log(self.f2)

    @property
    def psi(self) -> Expr:
        """ψ = φ2 − φ1."""
        return self.phi2 - self.phi1

    @property
    def psi_bar(self) -> Expr:
        """ψ̄ = φ2 + φ1."""
        return self.phi2 + self.phi1

    def with_connection(self, connection: ConnectionSpec) -> "WeightedSasakiMetric":
        return WeightedSasakiMetric(connection, self.f1, self.f2)


def _half_log(f: Expr) -> Expr:
    if isinstance(f, dsl.Call) and f.name == "exp":
        return 0.5 * f.arg
    return 0.5 * dsl.Call("ln", f)


# -- jet-level structure ------------------------------------------------------


class Structure(NamedTuple):
    """Pointwise data on TM as jets (one order below the base-coordinate jet)."""

    gamma: Jet
    K: Jet
    g: Jet
    f1: Jet
    f2: Jet
    u: Jet


def structure(W: WeightedSasakiMetric, xj: Jet, uj: Jet) -> Structure:
    """Assemble Γ, K = Γu, g, f1, f2 from base jets.

    ``xj`` must have the base coordinates as its leading seed variables.
    ``uj`` is any jet over the same seeds.
    """
    conn = W.connection
    gamma = conn.coefficients(xj)
    order = gamma.order
    u = uj.truncate(order)
    K = jets.einsum("...kij,...j->...ki", gamma, u)
    g = conn.metric(xj).truncate(order)
    f1 = _positive(dsl.evaluate(W.f1, xj), "f1").truncate(order)
    f2 = _positive(dsl.evaluate(W.f2, xj), "f2").truncate(order)
    return Structure(gamma, K, g, f1, f2, u)


def _positive(v, name):
    if np.any(jets.value_of(v) <= 0):
        raise ValueError(f"weight {name} must be positive on the sampled domain")
    return v


def _split_coords(pj: Jet) -> tuple[Jet, Jet]:
    m = pj.shape[-1] // 2
    return pj[..., :m], pj[..., m:]


def _eye_like(s: Structure):
    m = s.g.shape[-1]
    return Jet.constant(np.broadcast_to(np.eye(m), s.g.shape), s.g.nvars, s.g.order)


def _zero_like(s: Structure):
    return Jet.constant(np.zeros(s.g.shape), s.g.nvars, s.g.order)


def _scalar_mat(f: Jet) -> Jet:
    return f.reshape(f.shape + (1, 1))


def sasaki_metric_jet(s: Structure) -> Jet:
    """G in (x, u) coordinates: A^T diag(f1 g, f2 g) A with A = [[I, 0], [K, I]]."""
    g1 = _scalar_mat(s.f1) * s.g
    g2 = _scalar_mat(s.f2) * s.g
    kt_g2 = jets.einsum("...ki,...kl->...il", s.K, g2)
    top_left = g1 + jets.matmul(kt_g2, s.K)
    return jets.block([[top_left, kt_g2], [kt_g2.mT, g2]])


def theta_jets(s: Structure) -> tuple[Jet, Jet]:
    """(θ, θ^t) as 2m×2m coordinate matrices."""
    eye, zero = _eye_like(s), _zero_like(s)
    theta = jets.block([[zero, zero], [eye, zero]])
    kk = jets.matmul(s.K, s.K)
    theta_t = jets.block([[s.K, eye], [-kk, -s.K]])
    return theta, theta_t


def complex_structure_jet(s: Structure, psi: Optional[Jet]) -> Jet:
    """I^G = e^ψ θ^t − e^{−ψ} θ (ψ = None gives I^S)."""
    theta, theta_t = theta_jets(s)
    if psi is None:
        return theta_t - theta
    e = jets.exp(psi)
    return _scalar_mat(e) * theta_t - _scalar_mat(e.reciprocal()) * theta


def mu_jet(s: Structure) -> Jet:
    """μ = (θ^t ξ)♭ = ξ♭ ∘ θ: coefficients (g u, 0)."""
    gu = jets.matvec(s.g, s.u)
    return jets.concatenate([gu, 0.0 * gu], axis=-1)


def eta_jet(s: Structure) -> Jet:
    """η = ξ♭ (Sasaki): coefficients (K^T g u, g u)."""
    gu = jets.matvec(s.g, s.u)
    return jets.concatenate([jets.einsum("...ki,...k->...i", s.K, gu), gu], axis=-1)


def _pj_structure(W: WeightedSasakiMetric, pj: Jet) -> Structure:
    xj, uj = _split_coords(pj)
    return structure(W, xj, uj)


def _point_jet(p, order: int) -> Jet:
    return Jet.variables(_as_point(p).coords, order)


# -- splitting -------------------------------------------------------------


@dataclass
class SplittingFrame:
    """H ⊕ V data at a point of TM, all as coordinate matrices/vectors."""

    point: BundlePoint
    horizontal: np.ndarray  # columns δ_i
    vertical: np.ndarray  # columns ∂/∂u^i
    theta: np.ndarray
    theta_t: np.ndarray
    proj_h: np.ndarray
    proj_v: np.ndarray
    xi: np.ndarray
    spray: np.ndarray

    def vertical_part(self, X) -> np.ndarray:
        """X^v in the ∂/∂u basis, i.e. π*∇_X ξ."""
        m = self.point.x.size
        return (self.proj_v @ np.asarray(X, dtype=float))[m:]

    def horizontal_lift(self, a) -> np.ndarray:
        return self.horizontal @ np.asarray(a, dtype=float)


def splitting_frame(M: ChartedManifold, C: Optional[ConnectionSpec], p) -> SplittingFrame:
    p = _as_point(p)
    C = C or ConnectionSpec(M)
    W = WeightedSasakiMetric(C)
    s = structure(W, Jet.variables(p.x, 1), Jet.constant(p.u, p.x.size, 1))
    K = s.K.value
    m = p.x.size
    eye, zero = np.eye(m), np.zeros((m, m))
    theta, theta_t = (t.value for t in theta_jets(s))
    proj_h = np.block([[eye, zero], [-K, zero]])
    proj_v = np.block([[zero, zero], [K, eye]])
    return SplittingFrame(
        point=p,
        horizontal=np.vstack([eye, -K]),
        vertical=np.vstack([zero, eye]),
        theta=theta,
        theta_t=theta_t,
        proj_h=proj_h,
        proj_v=proj_v,
        xi=np.concatenate([np.zeros(m), p.u]),
        spray=np.concatenate([p.u, -K @ p.u]),
    )


def sasaki_metric_matrix(W: WeightedSasakiMetric, p) -> np.ndarray:
    p = _as_point(p)
    s = structure(W, Jet.variables(p.x, 1), Jet.constant(p.u, p.x.size, 1))
    G = sasaki_metric_jet(s).value
    np.linalg.cholesky(G)  # raises if not SPD
    return G


@dataclass
class CanonicalForms:
    eta: np.ndarray
    mu: np.ndarray
    omega_S: np.ndarray
    omega_G: np.ndarray
    I_S: np.ndarray
    I_G: np.ndarray


def canonical_forms(W: WeightedSasakiMetric, p) -> CanonicalForms:
    p = _as_point(p)
    xj = Jet.variables(p.x, 1)
    s = structure(W, xj, Jet.constant(p.u, p.x.size, 1))
    psi = dsl.evaluate(W.psi, xj).truncate(0)
    I_S = complex_structure_jet(s, None).value
    I_G = complex_structure_jet(s, psi).value
    G = sasaki_metric_jet(s).value
    GS = sasaki_metric_jet(s._replace(f1=s.f1 * 0 + 1.0, f2=s.f2 * 0 + 1.0)).value
    return CanonicalForms(
        eta=eta_jet(s).value,
        mu=mu_jet(s).value,
        omega_S=I_S.T @ GS,
        omega_G=I_G.T @ G,
        I_S=I_S,
        I_G=I_G,
    )


# -- fields and exterior calculus ----------------------------------------------

FormField = Callable[[Jet], Jet]


def exterior_derivative(form: FormField, p) -> np.ndarray:
    """Coordinate exterior derivative of a 1- or 2-form field at p.

    ``form`` maps a jet of TM coordinates to the coefficient jet of the form
    (shape (N,) or (N, N)).  Fields built from connection data lose one
    order, so the coordinate jet is seeded at order 2.
    """
    pj = _point_jet(p, 2)
    c = form(pj)
    dc = c.grad().value  # trailing axis = derivative index
    if c.ndim == 1:
        return dc.T - dc  # (dα)_ij = ∂_i α_j − ∂_j α_i
    if c.ndim == 2:
        # (dω)_ijk = ∂_i ω_jk + ∂_j ω_ki + ∂_k ω_ij
        return (
            np.einsum("jki->ijk", dc) + np.einsum("kij->ijk", dc) + dc
        )
    raise ValueError("only 1- and 2-forms are supported")


def mu_field(W: WeightedSasakiMetric) -> FormField:
    return lambda pj: mu_jet(_pj_structure(W, pj))


def omega_field(W: WeightedSasakiMetric, weighted: bool = True) -> FormField:
    def field(pj: Jet) -> Jet:
        xj, _ = _split_coords(pj)
        s = _pj_structure(W, pj)
        if weighted:
            psi = dsl.evaluate(W.psi, xj).truncate(s.g.order)
            I = complex_structure_jet(s, psi)
            G = sasaki_metric_jet(s)
        else:
            I = complex_structure_jet(s, None)
            ones = jets.Jet.constant(np.ones(s.f1.shape), s.f1.nvars, s.f1.order)
            G = sasaki_metric_jet(s._replace(f1=ones, f2=ones))
        return jets.einsum("...ai,...aj->...ij", I, G)

    return field


def mu_torsion_form(W: WeightedSasakiMetric, p) -> np.ndarray:
    """(X, Y) ↦ μ(π*T(X, Y)) = g(T(a, a'), u); zero on vertical slots."""
    p = _as_point(p)
    m = p.x.size
    s = structure(W, Jet.variables(p.x, 1), Jet.constant(p.u, m, 1))
    gamma = s.gamma.value
    T = gamma - np.swapaxes(gamma, -1, -2)
    gu = s.g.value @ p.u
    out = np.zeros((2 * m, 2 * m))
    out[:m, :m] = np.einsum("kij,k->ij", T, gu)
    return out


def dmu_residual(W: WeightedSasakiMetric, p) -> float:
    """max |dμ − ω^S − μ∘T^∇| at p."""
    dmu = exterior_derivative(mu_field(W), p)
    forms = canonical_forms(W, p)
    return float(np.abs(dmu - forms.omega_S - mu_torsion_form(W, p)).max())


def nijenhuis_tensor(W: WeightedSasakiMetric, p) -> np.ndarray:
    """N[a, i, j] = N(∂_i, ∂_j)^a for constant coordinate fields ∂_i, ∂_j.

    With constant extensions [X, Y] = 0 and brackets reduce to derivatives
    of the I^G matrix field:
    N(X,Y) = [IX, IY] − I[IX, Y] − I[X, IY].
    """
    pj = _point_jet(p, 2)
    xj, _ = _split_coords(pj)
    s = _pj_structure(W, pj)
    psi = dsl.evaluate(W.psi, xj).truncate(s.g.order)
    Ij = complex_structure_jet(s, psi)
    I = Ij.value
    dI = Ij.grad().value  # dI[a, b, c] = ∂_c I^a_b
    # (I e_i)^c ∂_c I^a_j, indexed [a, i, j]
    t = np.einsum("ci,ajc->aij", I, dI)
    bracket_IX_IY = t - np.swapaxes(t, 1, 2)
    bracket_IX_Y = -dI  # [I e_i, e_j]^a = −∂_j I^a_i
    bracket_X_IY = np.swapaxes(dI, 1, 2)  # [e_i, I e_j]^a = ∂_i I^a_j
    return bracket_IX_IY - np.einsum("ab,bij->aij", I, bracket_IX_Y + bracket_X_IY)


def nijenhuis(W: WeightedSasakiMetric, p, X, Y) -> np.ndarray:
    N = nijenhuis_tensor(W, p)
    return np.einsum("aij,i,j->a", N, np.asarray(X, float), np.asarray(Y, float))


def symplectic_residual(W: WeightedSasakiMetric, p) -> float:
    """sup-norm of the coordinate 3-form dω^G at p."""
    return float(np.abs(exterior_derivative(omega_field(W), p)).max())


def tm_scalar_curvature(W: WeightedSasakiMetric, p) -> float:
    """Scalar curvature of (TM, G) at p, brute force on the 2m-chart."""
    pj = _point_jet(p, 3)
    G = sasaki_metric_jet(_pj_structure(W, pj))
    return metric_curvature(G)[2]


def tm_metric_function(W: WeightedSasakiMetric) -> Callable[[np.ndarray], np.ndarray]:
    """Plain float evaluation of G at coordinates (x, u) (for finite differences)."""

    def G(q):
        p = BundlePoint.from_coords(q)
        return sasaki_metric_matrix(W, p)

    return G


# -- product connection torsion -------------------------------------------------


def _lift_h(K: Jet, w: Jet) -> Jet:
    return jets.concatenate([w, -jets.matvec(K, w)], axis=-1)


def product_connection_torsion(C: ConnectionSpec, p, X_field, Y_field) -> np.ndarray:
    """Torsion of ∇*⊕∇* on TTM for two vector fields given as jet maps.

    ``X_field(pj)`` returns the coordinate components (shape (2m,)) of a
    vector field on TM.  D_X Y lifts ∇*_X(dπY) horizontally and ∇*_X(Y^v)
    vertically; T^D(X, Y) = D_X Y − D_Y X − [X, Y].
    """
    p = _as_point(p)
    m = p.x.size
    pj = _point_jet(p, 2)
    W = WeightedSasakiMetric(C)
    s = _pj_structure(W, pj)
    K = s.K
    gamma0 = s.gamma.value
    K0 = K.value

    def parts(F):
        Y = F(pj).truncate(1)
        a = Y[..., :m]
        v = Y[..., m:] + jets.matvec(K.truncate(1), a)
        return Y, a, v

    def D(Xv, F):
        _, a, v = parts(F)
        xa = Xv[:m]
        da = a.grad().value @ Xv + np.einsum("kij,i,j->k", gamma0, xa, a.value)
        dv = v.grad().value @ Xv + np.einsum("kij,i,j->k", gamma0, xa, v.value)
        return np.concatenate([da, -K0 @ da]) + np.concatenate([np.zeros(m), dv])

    Xj, _, _ = parts(X_field)
    Yj, _, _ = parts(Y_field)
    X0, Y0 = Xj.value, Yj.value
    bracket = Yj.grad().value @ X0 - Xj.grad().value @ Y0
    return D(X0, Y_field) - D(Y0, X_field) - bracket


def horizontal_lift_field(C: ConnectionSpec, a) -> Callable[[Jet], Jet]:
    """The field (x, u) ↦ a^i δ_i(x, u) for a constant coefficient vector a."""
    a = np.asarray(a, dtype=float)
    W = WeightedSasakiMetric(C)

    def field(pj: Jet) -> Jet:
        s = _pj_structure(W, pj)
        aj = Jet.constant(np.broadcast_to(a, s.u.shape), s.u.nvars, s.u.order)
        return _lift_h(s.K, aj)

    return field


def prop_torsion_expected(C: ConnectionSpec, p, a, b) -> np.ndarray:
    """π*T(a, b) lifted horizontally plus R(a, b)ξ vertically."""
    p = _as_point(p)
    m = p.x.size
    data = curvature(C.manifold, C, p.x)
    T = np.einsum("kij,i,j->k", data.torsion, a, b)
    Ru = np.einsum("ijkl,i,j,k->l", data.riemann, a, b, p.u)
    K0 = np.einsum("kij,j->ki", data.christoffels, p.u)
    return np.concatenate([T, -K0 @ T]) + np.concatenate([np.zeros(m), Ru])


def product_torsion_residual(C: ConnectionSpec, p, a, b) -> float:
    got = product_connection_torsion(C, p, horizontal_lift_field(C, a), horizontal_lift_field(C, b))
    want = prop_torsion_expected(C, p, a, b)
    return float(np.abs(got - want).max())



# -- integrability scan ----------------------------------------------------------

TORSION_POTENTIAL = "0.4*x1"


@dataclass
class IntegrabilityCase:
    label: str
    metric: WeightedSasakiMetric
    flat_base: bool
    torsion: bool
    constant_weights: bool


def integrability_matrix() -> list[IntegrabilityCase]:
    """Flat/curved base × torsion-free/vectorial × constant/non-constant weights.

    The vectorial potential is linear, hence harmonic, so the flat base keeps
    a flat connection.  Non-constant weights have ψ equal to that potential
    while ψ̄ is independent of it.
    """
    cases = []
    for flat, M in ((True, ChartedManifold.euclidean(2)), (False, ChartedManifold.sphere(2, 1.0))):
        for tors in (False, True):
            C = ConnectionSpec(M, None, dsl.parse(TORSION_POTENTIAL) if tors else None)
            for const in (True, False):
                if const:
                    W = WeightedSasakiMetric.from_weights(C, 1.0, 2.0)
                else:
                    W = WeightedSasakiMetric.from_potentials(C, "0.3*x2", f"0.3*x2+{TORSION_POTENTIAL}")
                label = "{}-{}-{}".format(
                    "flat" if flat else "curved",
                    "vectorial" if tors else "torsion-free",
                    "constant" if const else "nonconstant",
                )
                cases.append(IntegrabilityCase(label, W, flat, tors, const))
    return cases


def _grad(e: Optional[Expr], x: np.ndarray) -> np.ndarray:
    if e is None:
        return np.zeros_like(x)
    return dsl.evaluate(e, Jet.variables(x, 1)).grad().value


class IntegrabilityPrediction(NamedTuple):
    integrable: bool
    symplectic: bool


def predict_integrability(W: WeightedSasakiMetric, xs: np.ndarray, tol: float = 1e-10) -> IntegrabilityPrediction:
    """Evaluate the hypotheses of the integrability theorem at base samples.

    I^G integrable iff ∇ is flat and T = dψ∧1; ω^G closed iff T = −dψ̄∧1
    (torsion written dψ̃∧1 with the potential of the connection).
    """
    C = W.connection
    flat = all(np.abs(curvature(C.manifold, C, x).riemann).max() < tol for x in xs)
    tors = [(_grad(C.torsion, x), _grad(W.psi, x), _grad(W.psi_bar, x)) for x in xs]
    integrable = flat and all(np.abs(t - p).max() < tol for t, p, _ in tors)
    symplectic = all(np.abs(t + pb).max() < tol for t, _, pb in tors)
    return IntegrabilityPrediction(integrable, symplectic)


def bundle_samples(M: ChartedManifold, rng: np.random.Generator, count: int, fiber=(0.3, 1.2)) -> np.ndarray:
    x = M.sample(rng, count, 0.8)
    return np.concatenate([x, fiber_vectors(rng, count, M.dim, fiber)], axis=-1)


def integrability_scan(W: WeightedSasakiMetric, points: np.ndarray) -> tuple[float, float]:
    """(sup |N|, sup |dω^G|) over TM sample coordinates."""
    nij = max(float(np.abs(nijenhuis_tensor(W, p)).max()) for p in points)
    dom = max(symplectic_residual(W, p) for p in points)
    return nij, dom
