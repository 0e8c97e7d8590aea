"""Tangent sphere bundles S_rM = {u : |u|_g = r(x)} as charted submanifolds of TM.

Chart parameters are q = (x, a) with n = m − 1 fiber angles.  The embedding is
u = r(x) L(x) σ(a), where g = C Cᵀ (Cholesky) and L = C^{-T}, so |u|_g = r
holds by construction.  σ is the hyperspherical parametrization of the unit
n-sphere; the first n − 1 angles live in (0, π), the last in [0, 2π).

Every metric quantity is an exact jet: the embedding is seeded at order 3,
its Jacobian is then known to order 2 and so is the induced metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dsl, jets
from .dsl import Expr
from .geometry import ChartedManifold, ConnectionSpec, curvature, metric_curvature
from .jets import Jet
from .tangent import WeightedSasakiMetric, sasaki_metric_jet, structure

ANGLE_MARGIN = 0.1


class SphereBundleError(ValueError):
    pass


def hyperspherical(a):
    """Unit vector in R^{n+1} from n angles (works on arrays and jets)."""
    n = a.shape[-1]
    parts = []
    prod = None
    for i in range(n):
        ai = a[..., i]
        c = jets.cos(ai)
        parts.append(c if prod is None else prod * c)
        s = jets.sin(ai)
        prod = s if prod is None else prod * s
    parts.append(prod)
    if isinstance(a, Jet):
        return jets.stack(parts, axis=-1)
    return np.stack(parts, axis=-1)


@dataclass(frozen=True)
class SphereBundleChart:
    """Chart of S_rM over the base chart of ``connection``'s manifold.

    The fiber norm is taken in the connection's own metric, so a chart built on
    a conformal connection describes the sphere bundle of λg.
    """

    connection: ConnectionSpec
    radius: Expr = dsl.Num(1.0)

    @classmethod
    def over(cls, M: ChartedManifold, radius=1.0, connection: Optional[ConnectionSpec] = None):
        return cls(connection or ConnectionSpec(M), dsl.as_expr(radius))

    @property
    def manifold(self) -> ChartedManifold:
        return self.connection.manifold

    @property
    def base_dim(self) -> int:
        return self.connection.dim

    @property
    def fiber_dim(self) -> int:
        return self.base_dim - 1

    @property
    def dim(self) -> int:
        return 2 * self.base_dim - 1

    def angle_box(self) -> list[tuple[float, float]]:
        n = self.fiber_dim
        box = [(ANGLE_MARGIN, math.pi - ANGLE_MARGIN)] * (n - 1)
        return box + [(0.0, 2 * math.pi)]

    def sample(self, rng: np.random.Generator, count: int, shrink: float = 0.8) -> np.ndarray:
        """Chart parameters q = (x, a), shape (count, 2m − 1)."""
        if self.fiber_dim < 1:
            raise SphereBundleError("sphere bundles need base dimension at least 2")
        x = self.manifold.sample(rng, count, shrink)
        lo, hi = np.array(self.angle_box()).T
        a = rng.uniform(lo, hi, size=(count, self.fiber_dim))
        return np.concatenate([x, a], axis=-1)

    def embedding(self, qj):
        """(x, u) as a jet (or array) of the chart parameters."""
        m = self.base_dim
        x, a = qj[..., :m], qj[..., m:]
        g = self.connection.metric(x)
        sigma = hyperspherical(a)
        r = dsl.evaluate(self.radius, x)
        if np.any(jets.value_of(r) <= 0):
            raise SphereBundleError("radius field must be positive")
        if isinstance(qj, Jet):
            c = jets.cholesky(g)
            L = jets.inv(c).mT
            u = jets.matvec(L, sigma) * r.reshape(r.shape + (1,))
            return jets.concatenate([x, u], axis=-1)
        c = np.linalg.cholesky(g)
        L = np.swapaxes(np.linalg.inv(c), -1, -2)
        u = np.einsum("...ij,...j->...i", L, sigma) * np.asarray(r)[..., None]
        return np.concatenate([x, np.broadcast_to(u, x.shape)], axis=-1)

    def point(self, q) -> tuple[np.ndarray, np.ndarray]:
        p = self.embedding(np.asarray(q, dtype=float))
        m = self.base_dim
        return p[..., :m], p[..., m:]


def _embedding_data(chart: SphereBundleChart, q, order: int):
    """(embedding jet, Jacobian jet) at chart parameters q."""
    qj = Jet.variables(np.asarray(q, dtype=float), order + 1)
    E = chart.embedding(qj)
    return qj, E, E.grad()


def _check_rank(J: np.ndarray, q):
    s = np.linalg.svd(J, compute_uv=False)
    bad = s[..., -1] <= 1e-10 * s[..., 0]
    if np.any(bad):
        where = np.asarray(q)[bad] if np.ndim(bad) else np.asarray(q)
        raise SphereBundleError(f"embedding Jacobian is rank deficient at q={where.tolist()}")


def induced_metric_jet(chart: SphereBundleChart, W: WeightedSasakiMetric, q, order: int = 2) -> Jet:
    """h = Jᵀ G J as a jet of the chart parameters (batch allowed)."""
    m = chart.base_dim
    qj, E, J = _embedding_data(chart, q, order)
    _check_rank(J.value, q)
    x = qj[..., :m]
    s = structure(W, x, E[..., m:])
    G = sasaki_metric_jet(s)
    return jets.einsum("...ai,...aj->...ij", J.truncate(order), jets.matmul(G, J.truncate(order)))


def induced_metric(chart: SphereBundleChart, W: WeightedSasakiMetric, q) -> np.ndarray:
    return induced_metric_jet(chart, W, q, order=0).value


def embedding_jacobian(chart: SphereBundleChart, q) -> np.ndarray:
    return _embedding_data(chart, q, 0)[2].value


def tangency_residual(chart: SphereBundleChart, q) -> float:
    """max over Jacobian columns X of |⟨X, ξ⟩ − r X(r)| (vertical pairing in g)."""
    m = chart.base_dim
    q = np.asarray(q, dtype=float)
    qj = Jet.variables(q, 2)
    E = chart.embedding(qj)
    J = E.grad().value
    W = WeightedSasakiMetric(chart.connection)
    s = structure(W, qj[..., :m], E[..., m:])
    K, g, u = s.K.value, s.g.value, s.u.value
    a, b = J[..., :m, :], J[..., m:, :]
    c = b + np.einsum("...ki,...ij->...kj", K, a)
    lhs = np.einsum("...kj,...kl,...l->...j", c, g, u)
    rj = dsl.evaluate(chart.radius, qj[..., :m])
    r = rj.value
    dr = rj.grad().value
    rhs = np.asarray(r)[..., None] * dr
    return float(np.abs(lhs - rhs).max())


def srm_scalar_curvature(chart: SphereBundleChart, W: WeightedSasakiMetric, q):
    """Brute-force scalar curvature of the induced metric (float, or array for a batch)."""
    return metric_curvature(induced_metric_jet(chart, W, q, order=2))[2]


def einstein_residual(chart: SphereBundleChart, W: WeightedSasakiMetric, q):
    """‖Ric − Scal/(2m − 1)·h‖_F / ‖h‖_F at q."""
    h = induced_metric_jet(chart, W, q, order=2)
    _, ric, scal = metric_curvature(h)
    return _einstein(ric, np.asarray(scal), h.value)


def _einstein(ric, scal, h):
    d = h.shape[-1]
    diff = ric - scal[..., None, None] / d * h
    r = np.linalg.norm(diff, axis=(-2, -1)) / np.linalg.norm(h, axis=(-2, -1))
    return float(r) if np.ndim(r) == 0 else r


def base_einstein_residual(M: ChartedManifold, x) -> float:
    """Control case: the same residual for the base metric itself."""
    data = curvature(M, None, x)
    return _einstein(data.ricci, np.asarray(data.scalar), data.metric)


# -- closed forms ----------------------------------------------------------------


def r_xi_squared_sum(M: ChartedManifold, C: Optional[ConnectionSpec], x, u) -> float:
    """Σ_{ijk} ⟨R(e_i, e_j)u, e_k⟩² in a g-orthonormal frame."""
    data = curvature(M, C, x)
    E = np.linalg.inv(np.linalg.cholesky(data.metric)).T
    Ru = np.einsum("ijkl,k->ijl", data.riemann, np.asarray(u, dtype=float))
    low = np.einsum("ijl,lp->ijp", Ru, data.metric)
    rxi = np.einsum("ijp,ia,jb,pc->abc", low, E, E, E)
    return float(np.sum(rxi**2))


def scal_formula_general(M: ChartedManifold, W: WeightedSasakiMetric, s: float, x, direction) -> float:
    """(1/f1) Scal_M − f2/(4 f1²) Σ(R^ξ)² + (n − 1)n/(f2 s²) with |u|_g = s.

    Weights are read at x and treated as constants.
    """
    x = np.asarray(x, dtype=float)
    C = W.connection
    data = curvature(M, C, x)
    d = np.asarray(direction, dtype=float)
    u = s * d / math.sqrt(d @ data.metric @ d)
    f1 = float(dsl.evaluate(W.f1, x))
    f2 = float(dsl.evaluate(W.f2, x))
    n = M.dim - 1
    return data.scalar / f1 - f2 / (4 * f1**2) * r_xi_squared_sum(M, C, x, u) + (n - 1) * n / (f2 * s**2)


def _validate(sign, R, f1, f2, n, s=None):
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    for name, v in (("R", R), ("f1", f1), ("f2", f2)) + ((("s", s),) if s is not None else ()):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")


def scal_formula_spaceform(sign: int, R: float, s: float, f1: float, f2: float, n: int) -> float:
    """Scal of (S_s M_R, g^{f1,f2}) over a space form of curvature sign/R²."""
    _validate(sign, R, f1, f2, n, s)
    return (
        sign * n * (n + 1) / (f1 * R**2)
        - f2 / (4 * f1**2) * s**2 / R**4 * 2 * n
        + (n - 1) * n / (f2 * s**2)
    )


def spaceform_chain(R: float, n: int) -> list[dict]:
    """Four presentations of one space-form sphere bundle, each with its Scal.

    (S_1 M_R, g^S) ≃ (S_{1/R} M_1, g^{R²,R²}) ≃ (S'_{1/R} M_1, (R²g)^{1,R²})
    ≃ (S'_1 M_1, (R²g)^S), where primes refer to the rescaled base metric R²g,
    i.e. a space form of radius R again.
    """
    entries = [
        dict(label="S_1 M_R, g^S", R=R, s=1.0, f1=1.0, f2=1.0),
        dict(label="S_{1/R} M_1, g^{R^2,R^2}", R=1.0, s=1.0 / R, f1=R**2, f2=R**2),
        # primes: sphere bundles of the rescaled base R²g, itself a space form of radius R
        dict(label="S'_{1/R} M_1, (R^2 g)^{1,R^2}", R=R, s=1.0 / R, f1=1.0, f2=R**2),
        dict(label="S'_1 M_1, (R^2 g)^S", R=R, s=1.0, f1=1.0, f2=1.0),
    ]
    return entries


def chain_scal_values(sign: int, R: float, n: int) -> list[float]:
    return [scal_formula_spaceform(sign, e["R"], e["s"], e["f1"], e["f2"], n) for e in spaceform_chain(R, n)]


# -- radius search ---------------------------------------------------------------

GRID_LO, GRID_HI, GRID_POINTS = 1e-4, 1e4, 801


class UnreachableSignError(ValueError):
    pass


def find_radius_for_sign(sign: int, R: float, f1: float, f2: float, n: int, target: str) -> float:
    """A radius s whose closed-form Scal has the requested sign.

    A logarithmic grid over [1e-4, 1e4] is scanned.  When the sign changes on
    the grid the root is refined by bisection in log s and the radius one grid
    step past the root, on the requested side, is returned; this keeps the
    value clear of zero.  Without a sign change the grid end achieving the
    sign is returned.
    """
    _validate(sign, R, f1, f2, n)
    want = {"positive": 1, "negative": -1}.get(target)
    if want is None:
        raise ValueError("target must be 'positive' or 'negative'")

    def F(logs):
        return scal_formula_spaceform(sign, R, math.exp(logs), f1, f2, n)

    grid = np.linspace(math.log(GRID_LO), math.log(GRID_HI), GRID_POINTS)
    step = grid[1] - grid[0]
    vals = np.array([F(t) for t in grid])
    hits = np.flatnonzero(np.sign(vals) == want)
    if hits.size == 0:
        raise UnreachableSignError(
            f"no radius in [{GRID_LO:g}, {GRID_HI:g}] gives {target} scalar curvature "
            f"(sign={sign:+d}, R={R:g}, f1={f1:g}, f2={f2:g}, n={n})"
        )
    signs = np.sign(vals)
    changes = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    if changes.size == 0:
        i = hits[0] if hits[0] == 0 else hits[-1]
        return float(math.exp(grid[i]))
    k = changes[0]
    lo, hi = grid[k], grid[k + 1]
    flo = vals[k]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    # move one grid step into the side carrying the requested sign
    side = 1 if signs[k + 1] == want else -1
    t = root + side * step
    if np.sign(F(t)) != want:
        t = grid[hits[0]]
    return float(math.exp(t))


# -- reports ----------------------------------------------------------------------


@dataclass
class ScalReport:
    m: int
    R: float
    sign: int
    s: float
    f1: float
    f2: float
    formula: float
    brute_force: float
    discrepancy: float
    spread: float = 0.0
    samples: list = field(default_factory=list)


def spaceform(sign: int, m: int, R: float) -> ChartedManifold:
    return ChartedManifold.sphere(m, R) if sign > 0 else ChartedManifold.hyperbolic(m, R)


def scal_report(sign: int, m: int, R: float, s: float, f1: float, f2: float, q) -> ScalReport:
    """Closed form against brute force at the chart parameters q (shape (k, 2m − 1))."""
    M = spaceform(sign, m, R)
    chart = SphereBundleChart.over(M, s)
    W = WeightedSasakiMetric.from_weights(ConnectionSpec(M), f1, f2)
    brute = np.atleast_1d(srm_scalar_curvature(chart, W, np.asarray(q, dtype=float)))
    formula = scal_formula_spaceform(sign, R, s, f1, f2, m - 1)
    return ScalReport(
        m=m,
        R=R,
        sign=sign,
        s=s,
        f1=f1,
        f2=f2,
        formula=formula,
        brute_force=float(np.mean(brute)),
        discrepancy=float(np.abs(brute - formula).max()),
        spread=float(brute.max() - brute.min()),
        samples=brute.tolist(),
    )


def sample_spaceform_chart(sign: int, m: int, R: float, s: float, rng, count: int) -> np.ndarray:
    return SphereBundleChart.over(spaceform(sign, m, R), s).sample(rng, count)

