"""Conformal maps between tangent (sphere) bundles and sampled homothety verdicts.

A :class:`HomothetySpec` describes the fiberwise map h(u) = ĥ u, ĥ = e^{−φ} t,
from TM with G = (λ_s g)^{f1,f2} to TM with G' = (λ λ_s g)^{f1',f2'}, where
λ = e^{2φ} is the relative conformal factor and λ_s an optional conformal
factor already applied on the source side.  For sphere bundles t = s/r and h
maps S_rM onto S'_sM (radii measured in the respective base metrics).

Verdicts compare h^*G' with ψ G on sampled tangent spaces.  ψ is fitted on
vertical directions (generalized eigenvalues of the two forms there), its
spread is checked, then every entry of h^*G' in a G-orthonormal frame is
compared with ψ δ_ij.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import dsl, jets
from .dsl import Expr
from .geometry import ChartedManifold, ConnectionSpec
from .jets import Jet
from .sampling import fiber_vectors, generator
from .sphere import SphereBundleChart, spaceform
from .tangent import BundlePoint, WeightedSasakiMetric, sasaki_metric_jet, structure

DEFAULT_TOL = 1e-8

HOMOTHETY, ISOMETRY, NOT_HOMOTHETY = "homothety", "isometry", "not-homothety"


class HomothetyError(ValueError):
    pass


def _log_half(lam: Expr) -> Optional[Expr]:
    """φ with λ = e^{2φ}, or None for λ ≡ 1."""
    if isinstance(lam, dsl.Num) and lam.value == 1.0:
        return None
    if isinstance(lam, dsl.Num):
        return dsl.Num(0.5 * math.log(lam.value)) if lam.value > 0 else 0.5 * dsl.Call("ln", lam)
    return 0.5 * dsl.Call("ln", lam)


@dataclass(frozen=True)
class HomothetySpec:
    manifold: ChartedManifold
    lam: Expr = dsl.Num(1.0)
    t: Optional[Expr] = None
    f1: Expr = dsl.Num(1.0)
    f2: Expr = dsl.Num(1.0)
    f1p: Expr = dsl.Num(1.0)
    f2p: Expr = dsl.Num(1.0)
    r: Optional[Expr] = None
    s: Optional[Expr] = None
    source_lambda: Expr = dsl.Num(1.0)
    expected: Optional[str] = None
    expected_psi: Optional[float] = None
    label: str = ""

    @classmethod
    def build(cls, manifold, **kw) -> "HomothetySpec":
        """Convenience constructor accepting strings and numbers for every field."""
        exprs = ("lam", "t", "f1", "f2", "f1p", "f2p", "r", "s", "source_lambda")
        for k in exprs:
            if k in kw and kw[k] is not None:
                kw[k] = dsl.as_expr(kw[k])
        return cls(manifold, **kw)

    def __post_init__(self):
        if self.is_sphere and self.s is None:
            raise HomothetyError("a sphere-bundle spec needs both r and s")
        if not self.is_sphere and self.t is None:
            object.__setattr__(self, "t", dsl.Num(1.0))
        for e in (self.lam, self.t, self.f1, self.f2, self.f1p, self.f2p, self.r, self.s, self.source_lambda):
            if e is not None and dsl.max_variable(e) > self.manifold.dim:
                raise dsl.VariableIndexError(f"{dsl.to_source(e)} uses a variable beyond x{self.manifold.dim}")

    @property
    def is_sphere(self) -> bool:
        return self.r is not None

    @property
    def scale(self) -> Expr:
        """t (TM case) or s/r (sphere case)."""
        if self.is_sphere:
            return self.s / self.r
        return self.t

    @property
    def phi(self) -> Expr:
        p = _log_half(self.lam)
        return dsl.Num(0.0) if p is None else p

    @property
    def hhat(self) -> Expr:
        if isinstance(self.lam, dsl.Num) and self.lam.value == 1.0:
            return self.scale
        return self.scale / dsl.Call("sqrt", self.lam)

    def source_connection(self) -> ConnectionSpec:
        return ConnectionSpec(self.manifold, _log_half(self.source_lambda))

    def target_connection(self) -> ConnectionSpec:
        lam_total = self.source_lambda * self.lam
        if isinstance(self.source_lambda, dsl.Num) and isinstance(self.lam, dsl.Num):
            lam_total = dsl.Num(self.source_lambda.value * self.lam.value)
        return ConnectionSpec(self.manifold, _log_half(lam_total))

    def source_metric(self) -> WeightedSasakiMetric:
        return WeightedSasakiMetric(self.source_connection(), self.f1, self.f2)

    def target_metric(self) -> WeightedSasakiMetric:
        return WeightedSasakiMetric(self.target_connection(), self.f1p, self.f2p)

    def source_chart(self) -> SphereBundleChart:
        if not self.is_sphere:
            raise HomothetyError("not a sphere-bundle spec")
        return SphereBundleChart(self.source_connection(), self.r)

    def describe(self) -> dict:
        src = lambda e: None if e is None else dsl.to_source(e)  # noqa: E731
        return {
            "label": self.label,
            "manifold": self.manifold.describe(),
            "lambda": src(self.lam),
            "source_lambda": src(self.source_lambda),
            "t": src(self.scale),
            "f1": src(self.f1),
            "f2": src(self.f2),
            "f1p": src(self.f1p),
            "f2p": src(self.f2p),
            "r": src(self.r),
            "s": src(self.s),
        }


# -- the map and its differential ---------------------------------------------------


def map_coords(spec: HomothetySpec, pj):
    """h in coordinates: (x, u) ↦ (x, ĥ(x) u), over arrays or jets."""
    m = spec.manifold.dim
    x, u = pj[..., :m], pj[..., m:]
    hh = dsl.evaluate(spec.hhat, x)
    if np.any(jets.value_of(hh) <= 0):
        raise HomothetyError("the fiber scale e^{-φ}t must be positive")
    if isinstance(pj, Jet):
        return jets.concatenate([x, u * hh.reshape(hh.shape + (1,))], axis=-1)
    return np.concatenate([x, u * np.asarray(hh)[..., None]], axis=-1)


def pushforward_numeric(spec: HomothetySpec, p, X) -> np.ndarray:
    """Jacobian of the coordinate map applied to X."""
    p = p if isinstance(p, BundlePoint) else BundlePoint.from_coords(p)
    J = map_coords(spec, Jet.variables(p.coords, 1)).grad().value
    return J @ np.asarray(X, dtype=float)


def _base_data(spec: HomothetySpec, x):
    xj = Jet.variables(np.asarray(x, dtype=float), 1)
    gamma = spec.source_connection().coefficients(xj).value
    gamma_p = spec.target_connection().coefficients(xj).value
    g = np.asarray(spec.source_connection().metric(np.asarray(x, dtype=float)))
    phi = dsl.evaluate(spec.phi, xj)
    t = dsl.evaluate(spec.scale, xj)
    return gamma, gamma_p, g, phi, t


def _correction(g, dphi, a, u):
    """C(a, u) = dφ(a)u + dφ(u)a − g(a, u) grad φ."""
    grad = np.linalg.solve(g, dphi)
    return (dphi @ a) * u + (dphi @ u) * a - (a @ g @ u) * grad


def pushforward_closed_form(spec: HomothetySpec, p, X) -> np.ndarray:
    """h_*X = X^{h'} + ĥ((X(t)/t)ξ + X^v + ∂φ·θX − μ(X) θ grad φ) in coordinates at h(p)."""
    p = p if isinstance(p, BundlePoint) else BundlePoint.from_coords(p)
    X = np.asarray(X, dtype=float)
    m = p.x.size
    a, b = X[:m], X[m:]
    gamma, gamma_p, g, phi, t = _base_data(spec, p.x)
    u = p.u
    dphi = phi.grad().value
    t0, dt = float(t.value), t.grad().value
    hh = t0 * math.exp(-float(phi.value))
    c = b + np.einsum("kij,i,j->k", gamma, a, u)
    grad_phi = np.linalg.solve(g, dphi)
    E = (dt @ a) / t0 * u + c + (dphi @ u) * a - (a @ g @ u) * grad_phi
    Kp = np.einsum("kij,j->ki", gamma_p, hh * u)
    return np.concatenate([a, -Kp @ a + hh * E])


def decomposition_residual(spec: HomothetySpec, p, X) -> float:
    """|X^{h'} + X^{v'} − X| with X^{v'} = X^v + ∂φ·θX + X(φ)ξ − μ(X) θ grad φ."""
    p = p if isinstance(p, BundlePoint) else BundlePoint.from_coords(p)
    X = np.asarray(X, dtype=float)
    m = p.x.size
    a, b = X[:m], X[m:]
    gamma, gamma_p, g, phi, _ = _base_data(spec, p.x)
    u = p.u
    dphi = phi.grad().value
    xv = b + np.einsum("kij,i,j->k", gamma, a, u)
    xv_prime = xv + _correction(g, dphi, a, u)
    Kp = np.einsum("kij,j->ki", gamma_p, u)
    recon = np.concatenate([a, -Kp @ a]) + np.concatenate([np.zeros(m), xv_prime])
    return float(np.abs(recon - X).max())


def tangency_preservation_residual(spec: HomothetySpec, q) -> float:
    """max over TS_rM chart columns X of |s (h_*X)(s) − ⟨h_*X, ĥξ⟩'|."""
    chart = spec.source_chart()
    m = spec.manifold.dim
    q = np.asarray(q, dtype=float)
    E = chart.embedding(Jet.variables(q, 1))
    p = BundlePoint.from_coords(E.value)
    J = E.grad().value
    xj = Jet.variables(p.x, 1)
    s = dsl.evaluate(spec.s, xj)
    hh = float(dsl.evaluate(spec.hhat, p.x))
    target = spec.target_connection()
    gamma_p = target.coefficients(xj).value
    gp = np.asarray(target.metric(p.x))
    hu = hh * p.u
    Kp = np.einsum("kij,j->ki", gamma_p, hu)
    worst = 0.0
    for col in J.T:
        Y = pushforward_closed_form(spec, p, col)
        lhs = float(s.value) * (s.grad().value @ Y[:m])
        cY = Y[m:] + Kp @ Y[:m]
        rhs = cY @ gp @ hu
        worst = max(worst, abs(lhs - rhs))
    return worst


# -- verdicts -----------------------------------------------------------------------


@dataclass
class VerdictReport:
    verdict: str
    psi: float
    max_deviation: float
    spread: float
    samples: int
    tolerance: float
    witness: Optional[dict] = None
    per_sample_deviation: list = field(default_factory=list)
    theorem_backed: bool = True
    notes: list = field(default_factory=list)
    label: str = ""
    expected: Optional[str] = None
    links: list = field(default_factory=list)

    @property
    def is_positive(self) -> bool:
        return self.verdict in (HOMOTHETY, ISOMETRY)

    def matches(self, expected: str) -> bool:
        """isometry counts as homothety when only a homothety is expected."""
        if expected == HOMOTHETY:
            return self.is_positive
        return self.verdict == expected

    def to_dict(self) -> dict:
        d = asdict(self)
        d["links"] = [link.to_dict() if isinstance(link, VerdictReport) else link for link in self.links]
        return d


def compare_forms(A: np.ndarray, B: np.ndarray, vertical, tol: float = DEFAULT_TOL, points=None) -> VerdictReport:
    """Decide whether A = ψ B on every sample for one constant ψ.

    ``A`` is the pulled-back target form and ``B`` the source form, both of
    shape (N, d, d).  ``vertical`` lists the coordinate directions used to fit ψ.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 2:
        A, B = A[None], B[None]
    try:
        chol = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise HomothetyError("source metric is degenerate at a sample") from exc
    E = np.swapaxes(np.linalg.inv(chol), -1, -2)  # B-orthonormal columns
    P = np.swapaxes(E, -1, -2) @ A @ E
    vertical = list(vertical)
    Bv = B[:, vertical][:, :, vertical]
    Av = A[:, vertical][:, :, vertical]
    Lv = np.linalg.cholesky(Bv)
    Li = np.linalg.inv(Lv)
    ratios = np.linalg.eigvalsh(Li @ Av @ np.swapaxes(Li, -1, -2))
    psi = float(np.median(ratios))
    if not psi > 0:
        raise HomothetyError("fitted ratio is not positive")
    spread = float((ratios.max() - ratios.min()) / psi)
    d = A.shape[-1]
    dev = np.abs(P - psi * np.eye(d)) / psi
    per_sample = dev.reshape(dev.shape[0], -1).max(axis=1)
    max_dev = float(per_sample.max())
    witness = None
    if max_dev >= tol or spread >= tol:
        k, i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        witness = {
            "sample": int(k),
            "point": None if points is None else np.asarray(points)[k].tolist(),
            "vectors": [E[k, :, i].tolist(), E[k, :, j].tolist()],
            "pulled_back": float(P[k, i, j]),
            "expected": psi if i == j else 0.0,
            "ratio_range": [float(ratios.min()), float(ratios.max())],
        }
        verdict = NOT_HOMOTHETY
    elif abs(psi - 1.0) < tol:
        verdict = ISOMETRY
    else:
        verdict = HOMOTHETY
    return VerdictReport(
        verdict=verdict,
        psi=psi,
        max_deviation=max_dev,
        spread=spread,
        samples=int(A.shape[0]),
        tolerance=tol,
        witness=witness,
        per_sample_deviation=per_sample.tolist(),
    )


def _tm_metric(W: WeightedSasakiMetric, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    m = x.shape[-1]
    s = structure(W, Jet.variables(x, 1), Jet.constant(u, m, 1))
    return sasaki_metric_jet(s).value


def tm_samples(M: ChartedManifold, count: int, seed: int = 0, key: str = "tm") -> np.ndarray:
    rng = generator(seed, key)
    x = M.sample(rng, count, 0.8)
    u = fiber_vectors(rng, count, M.dim)
    return np.concatenate([x, u], axis=-1)


def tm_pullback(spec: HomothetySpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(h^*G', G) on the coordinate basis at each TM sample."""
    m = spec.manifold.dim
    points = np.atleast_2d(np.asarray(points, dtype=float))
    hp = map_coords(spec, Jet.variables(points, 1))
    J = hp.grad().value
    target = hp.value
    Gp = _tm_metric(spec.target_metric(), target[:, :m], target[:, m:])
    G = _tm_metric(spec.source_metric(), points[:, :m], points[:, m:])
    _check_weights(spec, points[:, :m])
    return np.swapaxes(J, -1, -2) @ Gp @ J, G


def _check_weights(spec: HomothetySpec, x):
    for name in ("lam", "f1", "f2", "f1p", "f2p", "source_lambda", "r", "s"):
        e = getattr(spec, name)
        if e is None:
            continue
        if np.any(np.asarray(dsl.evaluate(e, x)) <= 0):
            raise HomothetyError(f"{name} must be positive on the sampled domain")


def tm_homothety_verdict(spec: HomothetySpec, samples=100, seed: int = 0, tol: float = DEFAULT_TOL) -> VerdictReport:
    if spec.is_sphere:
        raise HomothetyError("use srm_homothety_verdict for sphere-bundle specs")
    m = spec.manifold.dim
    pts = tm_samples(spec.manifold, samples, seed) if np.isscalar(samples) else np.asarray(samples, dtype=float)
    A, B = tm_pullback(spec, pts)
    rep = compare_forms(A, B, range(m, 2 * m), tol, pts)
    rep.label, rep.expected = spec.label, spec.expected
    return rep


def srm_samples(spec: HomothetySpec, count: int, seed: int = 0, key: str = "srm") -> np.ndarray:
    return spec.source_chart().sample(generator(seed, key), count)


def srm_pullback(spec: HomothetySpec, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(h^*G', G) restricted to S_rM, in the chart basis at each sample."""
    m = spec.manifold.dim
    q = np.atleast_2d(np.asarray(q, dtype=float))
    chart = spec.source_chart()
    E = chart.embedding(Jet.variables(q, 1))
    JE = E.grad().value
    p = E.value
    hp = map_coords(spec, E)
    JhE = hp.grad().value
    target = hp.value
    _check_weights(spec, p[:, :m])
    Gp = _tm_metric(spec.target_metric(), target[:, :m], target[:, m:])
    G = _tm_metric(spec.source_metric(), p[:, :m], p[:, m:])
    T = np.swapaxes
    return T(JhE, -1, -2) @ Gp @ JhE, T(JE, -1, -2) @ G @ JE


def srm_homothety_verdict(spec: HomothetySpec, samples=100, seed: int = 0, tol: float = DEFAULT_TOL) -> VerdictReport:
    """Sampled verdict for h : S_rM → S'_sM.

    For base dimension 2 the verdict is still computed but flagged as not
    backed by the theorem, and a warning is emitted.
    """
    if not spec.is_sphere:
        raise HomothetyError("use tm_homothety_verdict for tangent-bundle specs")
    m = spec.manifold.dim
    q = srm_samples(spec, samples, seed) if np.isscalar(samples) else np.asarray(samples, dtype=float)
    A, B = srm_pullback(spec, q)
    rep = compare_forms(A, B, range(m, 2 * m - 1), tol, q)
    rep.label, rep.expected = spec.label, spec.expected
    if m == 2:
        msg = "base dimension 2: the classification is only established for dimension at least 3"
        warnings.warn(msg, stacklevel=2)
        rep.theorem_backed = False
        rep.notes.append(msg)
    return rep


def verdict(spec: HomothetySpec, samples=100, seed: int = 0, tol: float = DEFAULT_TOL) -> VerdictReport:
    fn = srm_homothety_verdict if spec.is_sphere else tm_homothety_verdict
    return fn(spec, samples, seed, tol)


# -- space forms ---------------------------------------------------------------------


def spaceform_pullback(R1: float, R: float, r: float, q: np.ndarray, sign: int = 1):
    """(F^*G^S, g^{f,f}) on S_s M_{R1}, f = R²/R1², s = R1 r/R, F = (R/R1)·id."""
    k = R / R1
    f = k * k
    s = r / k
    M1, MR = spaceform(sign, _dim_of(q), R1), spaceform(sign, _dim_of(q), R)
    m = M1.dim
    chart = SphereBundleChart.over(M1, s)
    E = chart.embedding(Jet.variables(np.atleast_2d(q), 1))
    JE = E.grad().value
    p = E.value
    Fp = k * p
    JF = k * JE
    G_target = _tm_metric(WeightedSasakiMetric(ConnectionSpec(MR)), Fp[:, :m], Fp[:, m:])
    G_source = _tm_metric(WeightedSasakiMetric.from_weights(ConnectionSpec(M1), f, f), p[:, :m], p[:, m:])
    T = np.swapaxes
    return T(JF, -1, -2) @ G_target @ JF, T(JE, -1, -2) @ G_source @ JE


def _dim_of(q) -> int:
    return (np.atleast_2d(q).shape[-1] + 1) // 2


def spaceform_chain_specs(R: float, m: int, sign: int = 1) -> list[HomothetySpec]:
    """The two conformal links of the space-form isometry chain, over M_1.

    (S_{1/R} M_1, g^{R²,R²}) → (S'_{1/R} M_1, (R²g)^{1,R²}) → (S'_1 M_1, (R²g)^S)
    """
    M1 = spaceform(sign, m, 1.0)
    R2 = R * R
    link2 = HomothetySpec.build(
        M1, lam=R2, f1=R2, f2=R2, f1p=1.0, f2p=R2, r=1.0 / R, s=1.0 / R,
        expected=ISOMETRY, label="S_{1/R}M_1 g^{R^2,R^2} -> S'_{1/R}M_1 (R^2g)^{1,R^2}",
    )
    link3 = HomothetySpec.build(
        M1, source_lambda=R2, lam=1.0, f1=1.0, f2=R2, f1p=1.0, f2p=1.0, r=1.0 / R, s=1.0,
        expected=ISOMETRY, label="S'_{1/R}M_1 (R^2g)^{1,R^2} -> S'_1M_1 (R^2g)^S",
    )
    return [link2, link3]


def spaceform_isometry_check(
    R1: float, R: float, r: float, m: int = 3, samples=100, seed: int = 0, tol: float = DEFAULT_TOL,
    sign: int = 1, chain: bool = True,
) -> VerdictReport:
    """Check F^*g^S = g^{f,f} on S_s M_{R1}; optionally re-verify the isometry chain for M_R."""
    for v in (R1, R, r):
        if not v > 0:
            raise HomothetyError("radii must be positive")
    k = R / R1
    chart = SphereBundleChart.over(spaceform(sign, m, R1), r / k)
    q = chart.sample(generator(seed, "spaceform"), samples) if np.isscalar(samples) else np.asarray(samples)
    A, B = spaceform_pullback(R1, R, r, q, sign)
    rep = compare_forms(A, B, range(m, 2 * m - 1), tol, q)
    rep.label = f"F: S_{{{r / k:g}}}M_{{{R1:g}}} -> S_{{{r:g}}}M_{{{R:g}}}, f={k * k:g}"
    rep.expected = ISOMETRY
    if chain:
        first = spaceform_isometry_check(1.0, R, 1.0, m, samples, seed, tol, sign, chain=False)
        first.label = "S_1M_R g^S <- S_{1/R}M_1 g^{R^2,R^2}"
        links = [first]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for spec in spaceform_chain_specs(R, m, sign):
                links.append(srm_homothety_verdict(spec, samples, seed, tol))
        rep.links = links
    if m == 2:
        rep.notes.append("base dimension 2: chain links are outside the theorem's range")
    return rep


# -- the truth table --------------------------------------------------------------------


def truth_table(m: int = 3, R: float = 1.0) -> list[HomothetySpec]:
    """Twelve configurations with their classified outcome (sphere base)."""
    M = ChartedManifold.sphere(m, R)
    b = HomothetySpec.build
    return [
        b(M, lam=4, t=3, f1=1, f2=1, f1p=1, f2p=4 / 9, expected=HOMOTHETY, expected_psi=4.0,
          label="TM: constant lambda and t with matching weights"),
        b(M, lam="exp(0.6*x1)", t=3, f1=1, f2=1, f1p=1, f2p=4 / 9, expected=NOT_HOMOTHETY,
          label="TM: non-constant lambda"),
        b(M, source_lambda=2, lam=4, t=2, f1=1, f2=1, f1p=1, f2p=1, expected=HOMOTHETY, expected_psi=4.0,
          label="TM: two conformal changes, lambda2/lambda1 = 4"),
        b(M, lam=1, r="1+0.2*x1", s="2*(1+0.2*x1)", f1=1, f2=1, f1p=4, f2p=1, expected=HOMOTHETY,
          expected_psi=4.0, label="S_rM case (i): s/r constant"),
        b(M, lam=1, r="1+0.2*x1", s=1, f1=1, f2=1, f1p=1, f2p=1, expected=NOT_HOMOTHETY,
          label="S_rM: neither s/r nor rs constant"),
        b(M, lam=4, r="1+0.2*x1", s="2/(1+0.2*x1)", f1=1, f2=1, f1p=1, f2p="(1+0.2*x1)^4",
          expected=HOMOTHETY, expected_psi=4.0, label="S_rM case (ii): rs constant"),
        b(M, lam=1, r="1+0.2*x1", s="1/(1+0.2*x1)^2", f1=1, f2=1, f1p=1, f2p="(1+0.2*x1)^6",
          expected=NOT_HOMOTHETY, label="S_rM: rs and s/r both non-constant"),
        b(M, lam=4, r=1, s=2, f1=1, f2=1, f1p=1, f2p=1, expected=HOMOTHETY, expected_psi=4.0,
          label="S_rM identity: lambda = t^2, equal weight ratios"),
        b(M, lam=4, r=1, s=2, f1=1, f2=1, f1p=1, f2p=2, expected=NOT_HOMOTHETY,
          label="S_rM identity: unequal weight ratios"),
        b(M, lam=1, r=1, s=2, expected=NOT_HOMOTHETY,
          label="Sasaki on both sides, different radii"),
        b(M, lam=2, r="1+0.2*x1", s="1+0.2*x1", f1=2, f2=1.5, f1p=1, f2p=1.5, expected=ISOMETRY,
          label="f1 = lambda constant, same radius"),
        b(M, lam=1, r=0.5, s=2, f1=1, f2=4, f1p=1, f2p=0.25, expected=ISOMETRY,
          label="g^{1,r^-2} and g^{1,s^-2} with constant radii"),
    ]


def reciprocal_radius_spec(M: ChartedManifold, r="1+0.3*sin(x1)", exponent: float = 4.0) -> HomothetySpec:
    """(S_rM, g^S) → (S_{1/r}M, g^{1,r^k}); an isometry for k = 4."""
    r = dsl.as_expr(r)
    return HomothetySpec(
        M, r=r, s=1 / r, f2p=r ** dsl.Num(float(exponent)),
        expected=ISOMETRY if exponent == 4.0 else NOT_HOMOTHETY,
        label=f"(S_rM, g^S) -> (S_1/r M, g^(1,r^{exponent:g}))",
    )


def perturbations(spec: HomothetySpec, eps: float = 1e-2) -> list[HomothetySpec]:
    """Copies of a positive spec with one constant hypothesis broken by eps."""
    from dataclasses import replace

    bump = dsl.parse(f"1+{eps!r}*x1")
    out = [replace(spec, lam=spec.lam * bump, expected=NOT_HOMOTHETY, label=spec.label + " [lambda perturbed]")]
    if spec.is_sphere:
        out.append(replace(spec, s=spec.s * bump, expected=NOT_HOMOTHETY, label=spec.label + " [s perturbed]"))
    else:
        out.append(replace(spec, t=spec.t * bump, expected=NOT_HOMOTHETY, label=spec.label + " [t perturbed]"))
    out.append(
        replace(spec, f2p=spec.f2p * dsl.Num(1 + eps), expected=NOT_HOMOTHETY, label=spec.label + " [f2' perturbed]")
    )
    return out
