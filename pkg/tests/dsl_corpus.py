"""Seeded corpus of random DSL expressions with independent numpy evaluators.

Every expression comes with a function of complex coordinate arrays, so
first derivatives can be taken by the complex-step method (exact to
rounding) and higher ones by finite differences of those.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

import numpy as np

SLOT = {"x1": 0, "r": 0, "x2": 1, "theta": 1, "v": 2, "phi": 2, "t": 3}
PARAMS = {"k": 0.7, "lambda": -0.3}
NUMBERS = ("0.5", "1", "2", "3", "0.25", "1.5")


@dataclass(frozen=True)
class Sample:
    text: str
    fn: Callable[[np.ndarray], np.ndarray]  # (..., 4) complex -> (...) complex


def _leaf(rng: random.Random):
    kind = rng.random()
    if kind < 0.55:
        name = rng.choice(list(SLOT))
        k = SLOT[name]
        return name, lambda u: u[..., k]
    if kind < 0.8:
        c = rng.choice(NUMBERS)
        return c, lambda u: np.full(u.shape[:-1], float(c), dtype=complex)
    name = rng.choice(list(PARAMS))
    c = PARAMS[name]
    return name, lambda u: np.full(u.shape[:-1], c, dtype=complex)


def _positive(a: str, fa):
    """A strictly positive expression built from ``a``."""
    return f"(1+({a})^2)", lambda u: 1 + fa(u) ** 2


def _node(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.25:
        return _leaf(rng)
    a, fa = _node(rng, depth - 1)
    choice = rng.randrange(12)
    if choice < 3:
        b, fb = _node(rng, depth - 1)
        op = "+-*"[choice]
        fn = {"+": lambda u: fa(u) + fb(u), "-": lambda u: fa(u) - fb(u), "*": lambda u: fa(u) * fb(u)}[op]
        return f"({a}){op}({b})", fn
    if choice == 3:
        b, fb = _node(rng, depth - 1)
        den, fden = _positive(b, fb)
        return f"({a})/{den}", lambda u: fa(u) / fden(u)
    if choice == 4:
        return f"-({a})", lambda u: -fa(u)
    if choice == 5:
        n = rng.choice([2, 3])
        return f"({a})^{n}", lambda u: fa(u) ** n
    if choice == 6:
        base, fbase = _positive(a, fa)
        p = rng.choice(["0.5", "-1.5", "k", "-1"])
        pv = PARAMS.get(p, None) or float(p)
        return f"{base}^{p}", lambda u: fbase(u) ** pv
    if choice == 7:
        base, fbase = _positive(a, fa)
        f = rng.choice(["ln", "sqrt"])
        return f"{f}{base}", (lambda u: np.log(fbase(u))) if f == "ln" else (lambda u: np.sqrt(fbase(u)))
    if choice == 8:
        f = rng.choice(["sin", "cos", "tanh", "sech"])
        npf = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh, "sech": lambda z: 1 / np.cosh(z)}[f]
        return f"{f}({a})", lambda u: npf(fa(u))
    if choice == 9:
        f = rng.choice(["exp", "sinh", "cosh"])
        npf = {"exp": np.exp, "sinh": np.sinh, "cosh": np.cosh}[f]
        return f"{f}(0.3*sin({a}))", lambda u: npf(0.3 * np.sin(fa(u)))
    if choice == 10:
        return f"tan(0.5*tanh({a}))", lambda u: np.tan(0.5 * np.tanh(fa(u)))
    base, fbase = _positive(a, fa)
    return f"abs(-{base})", lambda u: fbase(u)


def corpus(n: int = 500, seed: int = 2024, depth: int = 4) -> list[Sample]:
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        text, fn = _node(rng, depth)
        if not any(name in text for name in SLOT):
            continue
        out.append(Sample(text, fn))
    return out


def complex_step(fn, point: np.ndarray, slot: int, h: float = 1e-30) -> float:
    z = np.asarray(point, dtype=complex).copy()
    z[slot] += 1j * h
    return float(np.imag(fn(z[None, :])[0]) / h)


def second_partial(fn, point: np.ndarray, i: int, j: int, h: float = 1e-4) -> float:
    """``d_i d_j f`` by a central difference (step ``h``) of complex-step ``d_j f``."""
    p = np.asarray(point, dtype=float)
    e = np.zeros(4)
    e[i] = h
    return (complex_step(fn, p + e, j) - complex_step(fn, p - e, j)) / (2 * h)
