"""Chart-based Riemannian metrics, metric connections and brute-force curvature.

Index conventions, fixed everywhere in the package:

* ``gamma[..., k, i, j]`` is Γ^k_ij with ∇_{∂i} ∂j = Γ^k_ij ∂k.
* ``torsion[..., k, i, j]`` is T^k_ij with T(X, Y) = ∇_X Y − ∇_Y X − [X, Y].
* ``riemann[..., i, j, k, l]`` is the ∂l-component of R(∂i, ∂j)∂k with
  R(X, Y) = ∇_X ∇_Y − ∇_Y ∇_X − ∇_[X,Y].
* Ric(Y, Z) = tr(X ↦ R(X, Y)Z), so the round sphere has positive Ricci.

Getting a sign wrong here flips the ±1/R² space-form checks, which is what
the test suite uses as the convention guard.

Every field is evaluated through :mod:`sasakilab.jets`.  Functions taking a
``Jet`` argument ``xj`` assume the base coordinates are the *leading* seed
variables, so ∂/∂x^i is the i-th jet derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dsl, jets
from .dsl import Expr
from .jets import Jet

METRIC_FAMILIES = ("euclidean", "conformally-flat", "sphere-stereographic", "hyperbolic-ball", "explicit")


class GeometryError(ValueError):
    pass


def _radius_sq(m: int) -> Expr:
    out: Expr = dsl.Var(1) ** 2
    for i in range(2, m + 1):
        out = out + dsl.Var(i) ** 2
    return out


@dataclass(frozen=True)
class ChartedManifold:
    """A single coordinate chart with a Riemannian metric.

    ``metric`` is one of :data:`METRIC_FAMILIES`.  Space forms use the
    stereographic chart 4R⁴/(R² + |x|²)² δ (curvature +1/R²) and the Poincaré
    ball 4R⁴/(R² − |x|²)² δ (curvature −1/R²).
    """

    dim: int
    metric: str = "euclidean"
    factor: Optional[Expr] = None
    radius: Optional[float] = None
    matrix: Optional[tuple] = None
    domain: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise GeometryError("dimension must be positive")
        if self.metric not in METRIC_FAMILIES:
            raise GeometryError(f"unknown metric family {self.metric!r}")
        if self.metric in ("sphere-stereographic", "hyperbolic-ball"):
            if self.radius is None or self.radius <= 0:
                raise GeometryError(f"{self.metric} needs a positive radius R")
        if self.metric == "conformally-flat" and self.factor is None:
            raise GeometryError("conformally-flat metric needs a factor expression")
        if self.metric == "explicit":
            if self.matrix is None or len(self.matrix) != self.dim:
                raise GeometryError("explicit metric needs a dim x dim matrix of expressions")
            if any(len(row) != self.dim for row in self.matrix):
                raise GeometryError("explicit metric matrix must be square")
        for e in self._expressions():
            if dsl.max_variable(e) > self.dim:
                raise dsl.VariableIndexError(
                    f"metric expression {dsl.to_source(e)} uses a variable beyond x{self.dim}"
                )
        if self.domain is None:
            object.__setattr__(self, "domain", self.default_domain())
        if len(self.domain) != self.dim:
            raise GeometryError("domain needs one interval per coordinate")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def euclidean(cls, dim: int, domain=None) -> "ChartedManifold":
        return cls(dim, "euclidean", domain=domain)

    @classmethod
    def sphere(cls, dim: int, R: float = 1.0, domain=None) -> "ChartedManifold":
        return cls(dim, "sphere-stereographic", radius=float(R), domain=domain)

    @classmethod
    def hyperbolic(cls, dim: int, R: float = 1.0, domain=None) -> "ChartedManifold":
        return cls(dim, "hyperbolic-ball", radius=float(R), domain=domain)

    @classmethod
    def conformally_flat(cls, dim: int, factor, domain=None) -> "ChartedManifold":
        return cls(dim, "conformally-flat", factor=dsl.as_expr(factor), domain=domain)

    @classmethod
    def explicit(cls, matrix: Sequence[Sequence], domain=None) -> "ChartedManifold":
        rows = tuple(tuple(dsl.as_expr(e) for e in row) for row in matrix)
        return cls(len(rows), "explicit", matrix=rows, domain=domain)

    def default_domain(self) -> tuple:
        if self.metric == "hyperbolic-ball":
            # keep the box well inside the ball |x| < R
            half = 0.6 * self.radius / np.sqrt(self.dim)
        elif self.metric == "sphere-stereographic":
            half = self.radius
        else:
            half = 1.0
        return tuple((-half, half) for _ in range(self.dim))

    def _expressions(self):
        if self.factor is not None:
            yield self.factor
        if self.matrix is not None:
            for row in self.matrix:
                yield from row

    @property
    def conformal_factor(self) -> Optional[Expr]:
        """Factor c with g = c δ, or None for explicit metrics."""
        if self.metric == "euclidean":
            return dsl.Num(1.0)
        if self.metric == "conformally-flat":
            return self.factor
        if self.metric == "sphere-stereographic":
            R = self.radius
            return 4 * R**4 / (R**2 + _radius_sq(self.dim)) ** 2
        if self.metric == "hyperbolic-ball":
            R = self.radius
            return 4 * R**4 / (R**2 - _radius_sq(self.dim)) ** 2
        return None

    @property
    def is_flat_family(self) -> bool:
        return self.metric == "euclidean"

    @property
    def curvature_sign(self) -> int:
        return {"sphere-stereographic": 1, "hyperbolic-ball": -1}.get(self.metric, 0)

    def metric_field(self, x):
        """Metric matrix over any carrier (array or jet), shape (..., m, m)."""
        c = self.conformal_factor
        m = self.dim
        eye = np.eye(m)
        if c is not None:
            val = dsl.evaluate(c, x)
            if isinstance(val, Jet):
                return val.reshape(val.shape + (1, 1)) * eye
            return np.asarray(val)[..., None, None] * eye
        rows = [[dsl.evaluate(self.matrix[i][j], x) for j in range(m)] for i in range(m)]
        if isinstance(x, Jet):
            return jets.stack([jets.stack(r, axis=-1) for r in rows], axis=-2)
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    def describe(self) -> dict:
        d = {"dim": self.dim, "metric": self.metric}
        if self.radius is not None:
            d["R"] = self.radius
        if self.factor is not None:
            d["factor"] = dsl.to_source(self.factor)
        if self.matrix is not None:
            d["matrix"] = [[dsl.to_source(e) for e in row] for row in self.matrix]
        d["domain"] = [list(iv) for iv in self.domain]
        return d

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.domain))

    def sample(self, rng: np.random.Generator, count: int, shrink: float = 1.0) -> np.ndarray:
        lo = np.array([a for a, _ in self.domain])
        hi = np.array([b for _, b in self.domain])
        mid, half = (lo + hi) / 2, (hi - lo) / 2 * shrink
        return rng.uniform(mid - half, mid + half, size=(count, self.dim))


def metric_at(M: ChartedManifold, x) -> np.ndarray:
    """Metric matrix at one point; positive definiteness is checked by Cholesky."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(M.metric_field(x), dtype=float)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-12):
        raise GeometryError(f"metric is not symmetric at x={x.tolist()}")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise GeometryError(f"metric is not positive definite at x={x.tolist()}") from None
    return g


# -- connections ---------------------------------------------------------------


@dataclass(frozen=True)
class ConnectionSpec:
    """A metric connection on M.

    The connection's own metric is λg with λ = exp(2·conformal) (g itself when
    ``conformal`` is None).  Without ``torsion`` it is the Levi-Civita
    connection of that metric, written as ∇^g + C with

        C(X, Y) = X(φ)Y + Y(φ)X − ⟨X, Y⟩ grad φ.

    With a torsion potential ψ̃ it gains A_X Y = ⟨X, Y⟩ grad ψ̃ − dψ̃(Y) X,
    the metric connection with torsion exactly dψ̃ ∧ 1.
    """

    manifold: ChartedManifold
    conformal: Optional[Expr] = None
    torsion: Optional[Expr] = None

    def __post_init__(self):
        for e in (self.conformal, self.torsion):
            if e is not None and dsl.max_variable(e) > self.manifold.dim:
                raise dsl.VariableIndexError(
                    f"expression {dsl.to_source(e)} uses a variable beyond x{self.manifold.dim}"
                )

    @classmethod
    def levi_civita(cls, M: ChartedManifold) -> "ConnectionSpec":
        return cls(M)

    def with_torsion(self, potential) -> "ConnectionSpec":
        return ConnectionSpec(self.manifold, self.conformal, dsl.as_expr(potential))

    def torsion_free(self) -> "ConnectionSpec":
        return ConnectionSpec(self.manifold, self.conformal, None)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def metric(self, xj):
        """The connection's own metric λg over any carrier."""
        g = self.manifold.metric_field(xj)
        if self.conformal is None:
            return g
        lam = jets.exp(2 * dsl.evaluate(self.conformal, xj))
        if isinstance(lam, Jet):
            return lam.reshape(lam.shape + (1, 1)) * g
        return np.asarray(lam)[..., None, None] * g

    def coefficients(self, xj: Jet) -> Jet:
        """Γ^k_ij as a jet one order below ``xj``."""
        m = self.dim
        g = self.manifold.metric_field(xj)
        gamma = christoffel(g, m)
        ginv = jets.inv(g.truncate(gamma.order))
        if self.conformal is not None:
            dphi = dsl.evaluate(self.conformal, xj).grad()[..., :m]
            gamma = gamma + conformal_delta(dphi, g.truncate(gamma.order), ginv)
        if self.torsion is not None:
            dpsi = dsl.evaluate(self.torsion, xj).grad()[..., :m]
            gamma = gamma + vectorial_delta(dpsi, g.truncate(gamma.order), ginv)
        return gamma


def christoffel(g: Jet, m: Optional[int] = None) -> Jet:
    """Levi-Civita Γ^k_ij of a metric jet (derivatives over the first m seeds)."""
    n = g.shape[-1]
    m = n if m is None else m
    if m != n:
        raise GeometryError("metric size must match the number of coordinates")
    dg = g.grad()[..., :m]  # dg[..., a, b, l] = ∂_l g_ab
    ginv = jets.inv(g.truncate(dg.order))
    return 0.5 * jets.einsum("...kl,...lij->...kij", ginv, _lower_first_kind(dg))


def _lower_first_kind(dg: Jet) -> Jet:
    # dg[a, b, c] = ∂_c g_ab ; want L[l, i, j] = ∂_i g_lj + ∂_j g_li − ∂_l g_ij
    t1 = jets.einsum("...ljc->...lcj", dg)  # ∂_i g_lj with i=c
    t2 = dg  # [l, i, j] = ∂_j g_li
    t3 = jets.einsum("...ijl->...lij", dg)  # ∂_l g_ij
    return t1 + t2 - t3


def conformal_delta(dphi: Jet, g: Jet, ginv: Jet) -> Jet:
    """C^k_ij = ∂_iφ δ^k_j + ∂_jφ δ^k_i − g_ij (grad φ)^k."""
    m = g.shape[-1]
    eye = np.eye(m)
    grad = jets.matvec(ginv, dphi)
    t1 = jets.einsum("...i,kj->...kij", dphi, eye)
    t2 = jets.einsum("...j,ki->...kij", dphi, eye)
    t3 = jets.einsum("...k,...ij->...kij", grad, g)
    return t1 + t2 - t3


def vectorial_delta(dpsi: Jet, g: Jet, ginv: Jet) -> Jet:
    """A^k_ij = g_ij (grad ψ)^k − ∂_jψ δ^k_i  (torsion dψ ∧ 1)."""
    m = g.shape[-1]
    grad = jets.matvec(ginv, dpsi)
    t1 = jets.einsum("...k,...ij->...kij", grad, g)
    t2 = jets.einsum("...j,ki->...kij", dpsi, np.eye(m))
    return t1 - t2


def riemann_from_christoffel(gamma: Jet, m: Optional[int] = None) -> Jet:
    """R(∂i,∂j)∂k components ``[..., i, j, k, l]`` as a jet one order below Γ."""
    n = gamma.shape[-1]
    m = n if m is None else m
    dg = gamma.grad()[..., :m]  # dg[l, j, k, i] = ∂_i Γ^l_jk
    g0 = gamma.truncate(dg.order)
    d1 = jets.einsum("...ljki->...ijkl", dg)  # ∂_i Γ^l_jk
    d2 = jets.einsum("...likj->...ijkl", dg)  # ∂_j Γ^l_ik
    q1 = jets.einsum("...lip,...pjk->...ijkl", g0, g0)
    q2 = jets.einsum("...ljp,...pik->...ijkl", g0, g0)
    return d1 - d2 + q1 - q2


def torsion_from_christoffel(gamma) -> np.ndarray:
    g = jets.value_of(gamma)
    return g - np.swapaxes(g, -1, -2)


def ricci_from_riemann(riem: np.ndarray) -> np.ndarray:
    return np.einsum("...ijki->...jk", riem)


def lower_riemann(riem: np.ndarray, g: np.ndarray) -> np.ndarray:
    """⟨R(∂i,∂j)∂k, ∂l⟩."""
    return np.einsum("...ijkp,...pl->...ijkl", riem, g)


@dataclass
class CurvatureData:
    """Curvature of a connection at one point (see module docs for indices)."""

    point: np.ndarray
    metric: np.ndarray
    christoffels: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    torsion: np.ndarray = field(default=None)


def _point_jet(x, order: int) -> Jet:
    return Jet.variables(np.asarray(x, dtype=float), order)


def connection_coeffs(M: ChartedManifold, C: Optional[ConnectionSpec], x) -> np.ndarray:
    C = C or ConnectionSpec(M)
    return C.coefficients(_point_jet(x, 1)).value


def torsion_tensor(M: ChartedManifold, C: ConnectionSpec, x) -> np.ndarray:
    return torsion_from_christoffel(connection_coeffs(M, C, x))


def curvature(M: ChartedManifold, C: Optional[ConnectionSpec], x) -> CurvatureData:
    C = C or ConnectionSpec(M)
    xj = _point_jet(x, 2)
    gamma = C.coefficients(xj)
    riem = riemann_from_christoffel(gamma, M.dim).value
    g = np.asarray(C.metric(np.asarray(x, dtype=float)))
    ric = ricci_from_riemann(riem)
    scal = float(np.einsum("jk,jk->", np.linalg.inv(g), ric))
    return CurvatureData(
        point=np.asarray(x, dtype=float),
        metric=g,
        christoffels=gamma.value,
        riemann=riem,
        ricci=ric,
        scalar=scal,
        torsion=torsion_from_christoffel(gamma),
    )


def metric_curvature(h: Jet) -> tuple[np.ndarray, np.ndarray, float]:
    """(riemann, ricci, scalar) of the Levi-Civita connection of a metric jet.

    ``h`` must be an order-2 (or higher) jet of a metric in *all* of its seed
    variables; this is the engine behind every brute-force scalar curvature.
    Batch axes are allowed, in which case the scalar is an array.
    """
    gamma = christoffel(h)
    riem = riemann_from_christoffel(gamma).value
    ric = ricci_from_riemann(riem)
    scal = np.einsum("...jk,...jk->...", np.linalg.inv(h.value), ric)
    return riem, ric, float(scal) if scal.ndim == 0 else scal


def sectional_curvature(M: ChartedManifold, C: Optional[ConnectionSpec], x, X, Y) -> float:
    """K = ⟨R(X,Y)Y, X⟩ / (|X|²|Y|² − ⟨X,Y⟩²) for the connection's own metric."""
    data = curvature(M, C, x)
    g = data.metric
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    area = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    if area <= 1e-14 * (X @ g @ X) * (Y @ g @ Y):
        raise GeometryError("degenerate plane: vectors are (nearly) dependent")
    rxyy = np.einsum("i,j,k,ijkl->l", X, Y, Y, data.riemann)
    return float(rxyy @ g @ X / area)


def metric_compatibility(C: ConnectionSpec, x) -> float:
    """max |∇(λg)| at x: ∂_k g_ij − Γ^l_ki g_lj − Γ^l_kj g_il."""
    xj = _point_jet(x, 1)
    g = C.metric(xj)
    dg = g.grad().value  # [i, j, k] = ∂_k g_ij
    gamma = C.coefficients(_point_jet(x, 1)).value
    g0 = g.value
    nabla = dg - np.einsum("lki,lj->ijk", gamma, g0) - np.einsum("lkj,il->ijk", gamma, g0)
    return float(np.abs(nabla).max())


def first_bianchi_residual(riem: np.ndarray) -> float:
    """max |R(X,Y)Z + R(Y,Z)X + R(Z,X)Y| in components."""
    s = riem + np.einsum("jkil->ijkl", riem) + np.einsum("kijl->ijkl", riem)
    return float(np.abs(s).max())


def orthonormal_frame(g: np.ndarray) -> np.ndarray:
    """Columns form a g-orthonormal frame: E = C^{-T} with g = C C^T."""
    c = np.linalg.cholesky(g)
    return np.linalg.inv(c).T
