"""Truncated multivariate Taylor arithmetic in four variables.

A :class:`Jet` stores normalized Taylor coefficients ``c_alpha = d^alpha f / alpha!``
for every multi-index ``alpha`` of total degree ``<= order``.  Coefficients are
kept in graded order, so the jet of order ``k`` is a prefix of the jet of any
higher order.  Leading array axes are free: they carry tensor slots and point
batches, and broadcast like ordinary numpy arrays.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

NVARS = 4
MAX_ORDER = 6


class JetDomainError(ValueError):
    """An elementary function was evaluated outside its domain."""


def _multi_indices(order: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(order + 1):
        degree_block = [a for a in itertools.product(range(deg + 1), repeat=NVARS) if sum(a) == deg]
        out.extend(sorted(degree_block, reverse=True))
    return out


MULTI_INDICES = _multi_indices(MAX_ORDER)
INDEX_OF = {a: i for i, a in enumerate(MULTI_INDICES)}


def ncoef(order: int) -> int:
    return math.comb(order + NVARS, NVARS)


@lru_cache(maxsize=None)
def _product_table(order: int):
    n = ncoef(order)
    left, right, target = [], [], []
    for i in range(n):
        ai = MULTI_INDICES[i]
        for j in range(n):
            aj = MULTI_INDICES[j]
            s = tuple(x + y for x, y in zip(ai, aj))
            if sum(s) <= order:
                left.append(i)
                right.append(j)
                target.append(INDEX_OF[s])
    target = np.asarray(target)
    perm = np.argsort(target, kind="stable")
    left = np.asarray(left)[perm]
    right = np.asarray(right)[perm]
    starts = np.searchsorted(target[perm], np.arange(n))
    return left, right, starts


@lru_cache(maxsize=None)
def _derivative_table(order: int, var: int):
    src, fac = [], []
    for a in MULTI_INDICES[: ncoef(order - 1)]:
        b = list(a)
        b[var] += 1
        src.append(INDEX_OF[tuple(b)])
        fac.append(a[var] + 1)
    return np.asarray(src), np.asarray(fac, dtype=float)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class Jet:
    """Truncated Taylor expansion with arbitrary leading (tensor/batch) axes."""

    __slots__ = ("c", "order")
    __array_priority__ = 100

    def __init__(self, c, order: int):
        self.c = c
        self.order = order

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = _as_array(value)
        c = np.zeros(value.shape + (ncoef(order),))
        c[..., 0] = value
        return cls(c, order)

    @classmethod
    def variable(cls, var: int, value, order: int) -> "Jet":
        jet = cls.constant(value, order)
        if order >= 1:
            e = [0] * NVARS
            e[var] = 1
            jet.c[..., INDEX_OF[tuple(e)]] = 1.0
        return jet

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.c[..., : ncoef(order)], order)

    def partial(self, alpha) -> np.ndarray:
        """Value of the mixed partial derivative with multi-index ``alpha``."""
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ValueError(f"partial of degree {sum(alpha)} exceeds jet order {self.order}")
        scale = math.prod(math.factorial(k) for k in alpha)
        return self.c[..., INDEX_OF[alpha]] * scale

    def d(self, var: int) -> "Jet":
        """Jet of the partial derivative along ``var`` (order drops by one)."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = _derivative_table(self.order, var)
        return Jet(self.c[..., src] * fac, self.order - 1)

    # indexing -----------------------------------------------------------
    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[idx + (Ellipsis,)] if Ellipsis not in idx else self.c[idx], self.order)

    def sum(self, axis) -> "Jet":
        return Jet(self.c.sum(axis=axis), self.order)

    def moveaxis(self, src, dst) -> "Jet":
        return Jet(np.moveaxis(self.c, src, dst), self.order)

    def swapaxes(self, a, b) -> "Jet":
        return Jet(np.swapaxes(self.c, a, b), self.order)

    def transpose(self, *perm) -> "Jet":
        """Permute the leading tensor axes; batch and coefficient axes stay put."""
        rest = tuple(range(len(perm), self.c.ndim))
        return Jet(np.transpose(self.c, tuple(perm) + rest), self.order)

    def expand(self, axis) -> "Jet":
        return Jet(np.expand_dims(self.c, axis), self.order)

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, Jet.constant(other, self.order)

    def __add__(self, other):
        if not isinstance(other, Jet):
            c = self.c.copy() if np.ndim(other) == 0 else np.array(
                np.broadcast_to(self.c, np.broadcast_shapes(self.c.shape, np.shape(other) + (self.c.shape[-1],)))
            )
            c[..., 0] = c[..., 0] + other
            return Jet(c, self.order)
        a, b = self._coerce(other)
        return Jet(a.c + b.c, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * _as_array(other)[..., None], self.order)
        a, b = self._coerce(other)
        left, right, starts = _product_table(a.order)
        prod = a.c[..., left] * b.c[..., right]
        return Jet(np.add.reduceat(prod, starts, axis=-1), a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / _as_array(other)[..., None], self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            if p.order >= 1 and np.any(p.c[..., 1:] != 0):
                return exp(p * log(self))
            p = p.value
        return power(self, p)

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape})"


# ---------------------------------------------------------------------------
# composition with univariate functions


def compose(a: Jet, derivs) -> Jet:
    """``f(a)`` given ``derivs[m] = f^(m)(a.value)`` for ``m = 0..a.order``."""
    delta = Jet(a.c.copy(), a.order)
    delta.c[..., 0] = 0.0
    k = a.order
    result = Jet.constant(derivs[k] / math.factorial(k), k)
    for m in range(k - 1, -1, -1):
        result = result * delta + derivs[m] / math.factorial(m)
    return result


def exp(a: Jet) -> Jet:
    e = np.exp(a.value)
    return compose(a, [e] * (a.order + 1))


def log(a: Jet) -> Jet:
    x = a.value
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise JetDomainError("log of nonpositive argument")
    derivs = [np.log(x)]
    for m in range(1, a.order + 1):
        derivs.append((-1.0) ** (m - 1) * math.factorial(m - 1) / x**m)
    return compose(a, derivs)


def power(a: Jet, p: float) -> Jet:
    x = a.value
    p = float(p)
    if p.is_integer() and p >= 0:
        n = int(p)
        result = Jet.constant(np.ones_like(x), a.order)
        base = a
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result
    if p.is_integer():
        if np.any(x == 0):
            raise JetDomainError("negative power of zero")
    elif np.any(x <= 0):
        raise JetDomainError("fractional power of nonpositive argument")
    derivs = []
    coef = 1.0
    for m in range(a.order + 1):
        derivs.append(coef * np.power(x, p - m))
        coef *= p - m
    return compose(a, derivs)


def reciprocal(a: Jet) -> Jet:
    return power(a, -1.0)


def sqrt(a: Jet) -> Jet:
    return power(a, 0.5)


def sin(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [s, c, -s, -c]
    return compose(a, [cycle[m % 4] for m in range(a.order + 1)])


def cos(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [c, -s, -c, s]
    return compose(a, [cycle[m % 4] for m in range(a.order + 1)])


def tan(a: Jet) -> Jet:
    if np.any(np.cos(a.value) == 0):
        raise JetDomainError("tan at a pole")
    return sin(a) / cos(a)


def sinh(a: Jet) -> Jet:
    s, c = np.sinh(a.value), np.cosh(a.value)
    return compose(a, [s if m % 2 == 0 else c for m in range(a.order + 1)])


def cosh(a: Jet) -> Jet:
    s, c = np.sinh(a.value), np.cosh(a.value)
    return compose(a, [c if m % 2 == 0 else s for m in range(a.order + 1)])


def tanh(a: Jet) -> Jet:
    return sinh(a) / cosh(a)


def sech(a: Jet) -> Jet:
    return reciprocal(cosh(a))


def absolute(a: Jet) -> Jet:
    x = a.value
    if np.any(x == 0):
        raise JetDomainError("abs at zero argument is not differentiable")
    return a * np.sign(x)


def stack(jets, axis: int = 0) -> Jet:
    order = min(j.order for j in jets)
    arrays = [j.truncate(order).c for j in jets]
    shape = np.broadcast_shapes(*(a.shape for a in arrays))
    arrays = [np.broadcast_to(a, shape) for a in arrays]
    if axis < 0:
        axis -= 1
    return Jet(np.stack(arrays, axis=axis), order)


def contract(subscripts: str, a: Jet, b: Jet) -> Jet:
    """Einstein-summation product of two jet tensors over their leading axes.

    ``subscripts`` names only the tensor axes, e.g. ``"ij,jk->ik"``; the batch
    and coefficient axes are handled implicitly.
    """
    order = min(a.order, b.order)
    a, b = a.truncate(order), b.truncate(order)
    left, right, starts = _product_table(order)
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    expr = f"{sa}...,{sb}...->{out}..."
    prod = np.einsum(expr, a.c[..., left], b.c[..., right], optimize=True)
    return Jet(np.add.reduceat(prod, starts, axis=-1), order)


def inverse_matrix(m: Jet) -> Jet:
    """Inverse of a jet matrix with axes ``(i, j, batch...)``."""
    value = np.moveaxis(m.value, (0, 1), (-2, -1))
    inv0 = np.moveaxis(np.linalg.inv(value), (-2, -1), (0, 1))
    x = Jet.constant(inv0, m.order)
    eye = np.eye(m.shape[0]).reshape(m.shape[:2] + (1,) * (len(m.shape) - 2))
    correct = 0
    while correct < m.order:
        # Newton step X <- X (2 I - M X) doubles the number of exact orders
        mx = contract("ij,jk->ik", m, x)
        x = contract("ij,jk->ik", x, -mx + 2.0 * eye)
        correct = 2 * correct + 1
    return x
