"""Forward-mode Taylor jets for tensor-valued functions.

A :class:`Jet` carries a value together with its first ``order`` derivative
tensors with respect to a fixed set of seed variables.  The value part may be
any array (scalars, vectors, matrices, with optional leading batch axes); the
derivative axes are always appended *after* the value axes::

    coeffs[0].shape == shape
    coeffs[1].shape == shape + (nvars,)
    coeffs[2].shape == shape + (nvars, nvars)

Derivative tensors are stored unscaled (no ``1/k!``) and are symmetric in
their derivative axes.  Arithmetic, elementwise transcendental functions,
``einsum`` contractions and matrix inversion propagate all orders exactly,
so a metric evaluated on order-3 jets yields exact Christoffel symbols and
their derivatives, with no finite differencing.

Orders up to 3 are supported.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3


class DomainError(ArithmeticError):
    """A function was evaluated outside its domain (never silently NaN)."""


def _shuffles(n: int, k: int):
    """Axis permutations merging k 'left' and n-k 'right' derivative axes."""
    for chosen in itertools.combinations(range(n), k):
        left = iter(range(k))
        right = iter(range(k, n))
        yield [next(left) if p in chosen else next(right) for p in range(n)]


def _sym_sum(t: np.ndarray, n: int, k: int) -> np.ndarray:
    """Sum of ``t`` over all shuffles of its last n axes (first k vs rest).

    When the two groups are separately symmetric this equals
    ``binom(n, k) * Sym(t)``, which is the Leibniz coefficient.
    """
    if k == 0 or k == n:
        return t
    lead = list(range(t.ndim - n))
    base = t.ndim - n
    out = None
    for perm in _shuffles(n, k):
        term = np.transpose(t, lead + [base + p for p in perm])
        out = term if out is None else out + term
    return out


def _pad_left(a: np.ndarray, ndim_value: int, target: int) -> np.ndarray:
    extra = target - ndim_value
    if extra <= 0:
        return a
    return a.reshape((1,) * extra + a.shape)


class Jet:
    """Truncated Taylor jet of a tensor-valued function (see module docs)."""

    __slots__ = ("coeffs",)
    __array_priority__ = 1000

    def __init__(self, coeffs: Sequence[np.ndarray]):
        coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if not coeffs:
            raise ValueError("a jet needs at least a value")
        if len(coeffs) - 1 > MAX_ORDER:
            raise ValueError(f"jet order {len(coeffs) - 1} exceeds {MAX_ORDER}")
        self.coeffs = coeffs

    # -- construction -----------------------------------------------------

    @classmethod
    def variables(cls, point, order: int) -> "Jet":
        """Seed jets for independent variables; ``point`` has shape (..., n)."""
        point = np.asarray(point, dtype=float)
        n = point.shape[-1]
        coeffs = [point]
        if order >= 1:
            coeffs.append(np.broadcast_to(np.eye(n), point.shape + (n,)).copy())
        for k in range(2, order + 1):
            coeffs.append(np.zeros(point.shape + (n,) * k))
        return cls(coeffs)

    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        return cls([value] + [np.zeros(value.shape + (nvars,) * k) for k in range(1, order + 1)])

    # -- basic properties -------------------------------------------------

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def shape(self) -> tuple:
        return self.coeffs[0].shape

    @property
    def ndim(self) -> int:
        return self.coeffs[0].ndim

    @property
    def nvars(self) -> int:
        if self.order == 0:
            return 0
        return self.coeffs[1].shape[-1]

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[: order + 1])

    def grad(self) -> "Jet":
        """Jet of the gradient; the derivative index becomes the last value axis."""
        if self.order == 0:
            raise ValueError("order-0 jet has no gradient")
        return Jet(self.coeffs[1:])

    # -- indexing and reshaping of value axes ------------------------------

    def _value_index(self, idx) -> tuple:
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            pos = next(p for p, i in enumerate(idx) if i is Ellipsis)
            consumed = sum(1 for i in idx if i is not Ellipsis and i is not None)
            fill = (slice(None),) * (self.ndim - consumed)
            idx = idx[:pos] + fill + idx[pos + 1 :]
        return idx

    def __getitem__(self, idx) -> "Jet":
        idx = self._value_index(idx)
        out = []
        for k, c in enumerate(self.coeffs):
            out.append(c[idx + (slice(None),) * k] if k else c[idx])
        return Jet(out)

    def swapaxes(self, a: int, b: int) -> "Jet":
        a %= self.ndim
        b %= self.ndim
        return Jet([np.swapaxes(c, a, b) for c in self.coeffs])

    @property
    def mT(self) -> "Jet":
        return self.swapaxes(-1, -2)

    def reshape(self, shape) -> "Jet":
        shape = tuple(shape)
        return Jet([c.reshape(shape + c.shape[self.ndim :]) for c in self.coeffs])

    def sum(self, axis: int) -> "Jet":
        axis %= self.ndim
        return Jet([c.sum(axis=axis) for c in self.coeffs])

    def broadcast_to(self, shape) -> "Jet":
        shape = tuple(shape)
        out = []
        for k, c in enumerate(self.coeffs):
            tail = c.shape[self.ndim :]
            c = _pad_left(c, self.ndim, len(shape))
            out.append(np.broadcast_to(c, shape + tail))
        return Jet(out)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape)
            me = self.broadcast_to(shape)
            return Jet([me.coeffs[0] + other] + [np.array(c) for c in me.coeffs[1:]])
        a, b = _match(self, other)
        shape = np.broadcast_shapes(a.shape, b.shape)
        a, b = a.broadcast_to(shape), b.broadcast_to(shape)
        return Jet([x + y for x, y in zip(a.coeffs, b.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet([c * other.reshape(other.shape + (1,) * k) for k, c in enumerate(self.coeffs)])
        a, b = _match(self, other)
        nd = max(a.ndim, b.ndim)
        out = []
        for n in range(a.order + 1):
            acc = None
            for k in range(n + 1):
                x = _pad_left(a.coeffs[k], a.ndim, nd)
                y = _pad_left(b.coeffs[n - k], b.ndim, nd)
                x = x.reshape(x.shape + (1,) * (n - k))
                y = y.reshape(y.shape[:nd] + (1,) * k + y.shape[nd:])
                term = _sym_sum(x * y, n, k)
                acc = term if acc is None else acc + term
            out.append(acc)
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise DomainError("division by zero")
            return self * (1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, Jet):
            return exp(log(self) * exponent)
        exponent = float(exponent)
        if exponent.is_integer() and exponent >= 0:
            p = int(exponent)
            if p == 0:
                return Jet.constant(np.ones(self.shape), self.nvars, self.order)
            out = self
            for _ in range(p - 1):
                out = out * self
            return out
        v = self.value
        if np.any(v <= 0) and not exponent.is_integer():
            raise DomainError(f"non-integer power {exponent} of non-positive base")
        if np.any(v == 0):
            raise DomainError(f"negative power {exponent} of zero")
        e = exponent
        return self._apply(
            [v**e, e * v ** (e - 1), e * (e - 1) * v ** (e - 2), e * (e - 1) * (e - 2) * v ** (e - 3)]
        )

    def reciprocal(self) -> "Jet":
        v = self.value
        if np.any(v == 0):
            raise DomainError("division by zero")
        r = 1.0 / v
        return self._apply([r, -(r**2), 2 * r**3, -6 * r**4])

    def _apply(self, derivs: Sequence[np.ndarray]) -> "Jet":
        """Chain rule for an elementwise function with derivatives ``derivs``."""
        n = self.order
        a = self.coeffs
        f = [np.asarray(d, dtype=float) for d in derivs]

        def ex(arr, k):
            return arr.reshape(arr.shape + (1,) * k)

        out = [f[0]]
        if n >= 1:
            out.append(ex(f[1], 1) * a[1])
        if n >= 2:
            a1a1 = a[1][..., :, None] * a[1][..., None, :]
            out.append(ex(f[2], 2) * a1a1 + ex(f[1], 2) * a[2])
        if n >= 3:
            a1a1a1 = a1a1[..., :, :, None] * a[1][..., None, None, :]
            a1a2 = a[1][..., :, None, None] * a[2][..., None, :, :]
            out.append(
                ex(f[3], 3) * a1a1a1
                + ex(f[2], 3) * _sym_sum(a1a2, 3, 1)
                + ex(f[1], 3) * a[3]
            )
        return Jet(out)


def _match(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    if a.order != b.order:
        lo = min(a.order, b.order)
        a, b = a.truncate(lo), b.truncate(lo)
    if a.order and b.order and a.nvars != b.nvars:
        raise ValueError(f"jets seeded on {a.nvars} and {b.nvars} variables")
    return a, b


# -- elementwise functions -------------------------------------------------


def _unary(np_fn: Callable, derivs: Callable, check: Callable | None = None):
    def fn(x):
        if isinstance(x, Jet):
            v = x.value
            if check is not None:
                check(v)
            return x._apply(derivs(v))
        v = np.asarray(x, dtype=float)
        if check is not None:
            check(v)
        return np_fn(v)

    return fn


def _check_log(v):
    if np.any(v <= 0):
        raise DomainError("ln of a non-positive value")


def _check_sqrt(v):
    if np.any(v < 0):
        raise DomainError("sqrt of a negative value")


def _check_sqrt_jet(v):
    if np.any(v <= 0):
        raise DomainError("sqrt is not differentiable at or below zero")


def _exp_d(v):
    e = np.exp(v)
    return [e, e, e, e]


def _log_d(v):
    return [np.log(v), 1 / v, -1 / v**2, 2 / v**3]


def _sin_d(v):
    s, c = np.sin(v), np.cos(v)
    return [s, c, -s, -c]


def _cos_d(v):
    s, c = np.sin(v), np.cos(v)
    return [c, -s, -c, s]


def _sqrt_d(v):
    r = np.sqrt(v)
    return [r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v)]


def _tanh_d(v):
    t = np.tanh(v)
    s = 1 - t * t
    return [t, s, -2 * t * s, s * (6 * t * t - 2)]


exp = _unary(np.exp, _exp_d)
log = _unary(np.log, _log_d, _check_log)
sin = _unary(np.sin, _sin_d)
cos = _unary(np.cos, _cos_d)
tanh = _unary(np.tanh, _tanh_d)


def sqrt(x):
    if isinstance(x, Jet):
        _check_sqrt_jet(x.value)
        return x._apply(_sqrt_d(x.value))
    v = np.asarray(x, dtype=float)
    _check_sqrt(v)
    return np.sqrt(v)


# -- structural helpers ----------------------------------------------------


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def stack(items: Sequence, axis: int = 0) -> Jet:
    """Stack jets (or constants) along a new value axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        raise ValueError("stack needs at least one jet")
    ref = jets[0]
    for j in jets[1:]:
        ref, _ = _match(ref, j)
    order, nvars = ref.order, ref.nvars
    items = [
        (x.truncate(order) if isinstance(x, Jet) else Jet.constant(x, nvars, order)) for x in items
    ]
    shape = np.broadcast_shapes(*(x.shape for x in items))
    items = [x.broadcast_to(shape) for x in items]
    nd = len(shape) + 1
    ax = axis % nd
    return Jet([np.stack([x.coeffs[k] for x in items], axis=ax) for k in range(order + 1)])


def concatenate(items: Sequence[Jet], axis: int = 0) -> Jet:
    ref = items[0]
    for j in items[1:]:
        ref, _ = _match(ref, j)
    order = ref.order
    items = [x.truncate(order) for x in items]
    nd = items[0].ndim
    ax = axis % nd
    return Jet([np.concatenate([x.coeffs[k] for x in items], axis=ax) for k in range(order + 1)])


def block(rows: Sequence[Sequence[Jet]]) -> Jet:
    """Assemble a block matrix from jets whose last two value axes are matrices."""
    return concatenate([concatenate(list(r), axis=-1) for r in rows], axis=-2)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def einsum(subscripts: str, a, b=None):
    """``np.einsum`` over value axes for one or two operands, jets or arrays.

    Subscripts may use a leading ``...`` for batch axes.  With two jets the
    product rule is applied to every order.
    """
    if b is None:
        if not isinstance(a, Jet):
            return np.einsum(subscripts, a)
        ins, out = subscripts.split("->")
        used = set(subscripts)
        free = [c for c in _LETTERS if c not in used]
        coeffs = []
        for k, c in enumerate(a.coeffs):
            d = "".join(free[:k])
            coeffs.append(np.einsum(f"{ins}{d}->{out}{d}", c))
        return Jet(coeffs)

    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    used = set(subscripts)
    free = [c for c in _LETTERS if c not in used]
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.einsum(subscripts, a, b)
    if not isinstance(b, Jet):
        coeffs = []
        for k, c in enumerate(a.coeffs):
            d = "".join(free[:k])
            coeffs.append(np.einsum(f"{sa}{d},{sb}->{out}{d}", c, b))
        return Jet(coeffs)
    if not isinstance(a, Jet):
        coeffs = []
        for k, c in enumerate(b.coeffs):
            d = "".join(free[:k])
            coeffs.append(np.einsum(f"{sa},{sb}{d}->{out}{d}", a, c))
        return Jet(coeffs)

    a, b = _match(a, b)
    coeffs = []
    for n in range(a.order + 1):
        acc = None
        for k in range(n + 1):
            da = "".join(free[:k])
            db = "".join(free[k:n])
            term = np.einsum(f"{sa}{da},{sb}{db}->{out}{da}{db}", a.coeffs[k], b.coeffs[n - k])
            term = _sym_sum(term, n, k)
            acc = term if acc is None else acc + term
        coeffs.append(acc)
    return Jet(coeffs)


def matmul(a, b):
    """Matrix product over the last two value axes (batch axes broadcast)."""
    return einsum("...ij,...jk->...ik", a, b)


def matvec(a, v):
    return einsum("...ij,...j->...i", a, v)


def inv(a):
    """Inverse of a (batch of) square matrix jet(s).

    From ``A Y = I`` order by order: ``Y_n = -Y_0 * sum_{k>=1} C(n,k) Sym(A_k Y_{n-k})``.
    """
    if not isinstance(a, Jet):
        return np.linalg.inv(a)
    y0 = np.linalg.inv(a.value)
    ys = [y0]
    free = [c for c in _LETTERS if c not in "ijk"]
    for n in range(1, a.order + 1):
        acc = None
        for k in range(1, n + 1):
            da = "".join(free[:k])
            db = "".join(free[k:n])
            term = np.einsum(f"...ij{da},...jk{db}->...ik{da}{db}", a.coeffs[k], ys[n - k])
            term = _sym_sum(term, n, k)
            acc = term if acc is None else acc + term
        dn = "".join(free[:n])
        ys.append(-np.einsum(f"...ij,...jk{dn}->...ik{dn}", y0, acc))
    return Jet(ys)


def cholesky(a: Jet) -> Jet:
    """Lower Cholesky factor of a symmetric positive definite matrix jet."""
    n = a.shape[-1]
    rows: list[list] = [[None] * n for _ in range(n)]
    for j in range(n):
        s = a[..., j, j]
        for k in range(j):
            s = s - rows[j][k] * rows[j][k]
        if np.any(s.value <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        d = sqrt(s)
        rows[j][j] = d
        dinv = d.reciprocal()
        for i in range(j + 1, n):
            s = a[..., i, j]
            for k in range(j):
                s = s - rows[i][k] * rows[j][k]
            rows[i][j] = s * dinv
    zero = Jet.constant(np.zeros(a.shape[:-2]), a.nvars, a.order)
    full = [[rows[i][j] if j <= i else zero for j in range(n)] for i in range(n)]
    return stack([stack(r, axis=-1) for r in full], axis=-2)
