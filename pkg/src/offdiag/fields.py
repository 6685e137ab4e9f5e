"""Scalar fields on the four-dimensional chart, evaluated in jet arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets as J
from .jets import Jet

SLOT_NAMES = ("x1", "x2", "y3", "y4")


def as_points(p) -> np.ndarray:
    """Coerce a point or a batch of points to a float array of shape (P, 4)."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"points must have shape (4,) or (P, 4), got {np.shape(p)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def coordinate_jets(points, order: int) -> list[Jet]:
    """The four coordinate functions as jets at ``points``."""
    pts = as_points(points)
    return [Jet.variable(k, pts[:, k], order) for k in range(4)]


@dataclass(frozen=True)
class ScalarField:
    """A pure map from coordinate jets to a jet.

    ``fn`` receives the list of four coordinate jets.  Coordinates outside
    ``depends`` are frozen to constants before ``fn`` sees them, so partials
    along them are exactly zero.
    """

    fn: Callable[[list[Jet]], Jet]
    name: str = "field"
    depends: tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __call__(self, u: Sequence[Jet]) -> Jet:
        frozen = [uk if dep else Jet.constant(uk.value, uk.order) for uk, dep in zip(u, self.depends)]
        out = self.fn(frozen)
        if not isinstance(out, Jet):
            out = Jet.constant(np.broadcast_to(np.asarray(out, dtype=float), u[0].shape), u[0].order)
        return out

    def jet(self, points, order: int) -> Jet:
        return self(coordinate_jets(points, order))

    def values(self, points) -> np.ndarray:
        return self.jet(points, 0).value

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float, name: str | None = None) -> "ScalarField":
        c = float(c)
        return cls(lambda u: Jet.constant(np.full(u[0].shape, c), u[0].order), name or repr(c), (False,) * 4)

    @classmethod
    def coordinate(cls, k: int) -> "ScalarField":
        mask = tuple(i == k for i in range(4))
        return cls(lambda u: u[k], SLOT_NAMES[k], mask)

    # arithmetic ---------------------------------------------------------
    def _combine(self, other, op, symbol):
        if not isinstance(other, ScalarField):
            other = ScalarField.constant(other)
        mask = tuple(a or b for a, b in zip(self.depends, other.depends))
        f, g = self, other
        return ScalarField(lambda u: op(f(u), g(u)), f"({f.name}{symbol}{g.name})", mask)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, "+")

    def __radd__(self, other):
        return ScalarField.constant(other) + self

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, "-")

    def __rsub__(self, other):
        return ScalarField.constant(other) - self

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, "*")

    def __rmul__(self, other):
        return ScalarField.constant(other) * self

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b, "/")

    def __rtruediv__(self, other):
        return ScalarField.constant(other) / self

    def __neg__(self):
        f = self
        return ScalarField(lambda u: -f(u), f"(-{f.name})", f.depends)

    def __pow__(self, p: float):
        f = self
        return ScalarField(lambda u: J.power(f(u), p), f"({f.name}^{p})", f.depends)

    def apply(self, func: Callable[[Jet], Jet], name: str) -> "ScalarField":
        f = self
        return ScalarField(lambda u: func(f(u)), f"{name}({f.name})", f.depends)


ZERO = ScalarField.constant(0.0, "0")
ONE = ScalarField.constant(1.0, "1")


def fd_partial(fn: Callable[[np.ndarray], np.ndarray], point, alpha, h: float = 1e-4) -> float:
    """Mixed partial of a plain numpy function by nested central differences.

    One Richardson level (steps ``h`` and ``h/2``) removes the leading error
    term.  This exists only as an oracle for the jet backend.
    """
    point = np.asarray(point, dtype=float)
    alpha = tuple(alpha)

    shifts = [var for var, k in enumerate(alpha) for _ in range(k)]

    def central(step):
        # expand the product of first-difference stencils along each direction
        terms = [(np.zeros(4), 1.0)]
        for var in shifts:
            new = []
            for off, w in terms:
                for s in (-1.0, 1.0):
                    o = off.copy()
                    o[var] += s * step
                    new.append((o, w * s / (2.0 * step)))
            terms = new
        return sum(w * float(fn(point + off)) for off, w in terms)

    a, b = central(h), central(h / 2)
    return (4.0 * b - a) / 3.0
