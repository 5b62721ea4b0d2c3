"""Small picklable algebra of vectorised real functions.

Test functions travel to worker processes, so they are built from
frozen dataclasses instead of closures. Each node knows its points of
discontinuity, which the quadrature routines use as cut points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError


class Fn:
    """Base class: a vectorised map ``ndarray -> ndarray``."""

    name = "f"

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def breaks(self) -> tuple:
        return ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(self._eval(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).copy()
        return y

    def checked(self, x):
        """Evaluate and raise if any value is non-finite."""
        x = np.asarray(x, dtype=float)
        y = self(x)
        bad = ~np.isfinite(y)
        if bad.any():
            arg = x.reshape(-1)[np.flatnonzero(bad.reshape(-1))[0]] if x.ndim else float(x)
            raise EvaluationError(f"{self.name} is not finite at x={arg!r}")
        return y

    def phi(self) -> "Fn":
        """The residual-side function ``y -> f(exp(-y))``."""
        return Phi(self)

    # arithmetic
    def __add__(self, other):
        return Linear.of(self, other, 1.0)

    def __radd__(self, other):
        return Linear.of(self, other, 1.0)

    def __sub__(self, other):
        return Linear.of(self, other, -1.0)

    def __rsub__(self, other):
        return Linear.of(Scaled(-1.0, self), other, 1.0)

    def __neg__(self):
        return Scaled(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, Fn):
            return Product((self, other))
        return Scaled(float(other), self)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=True)
class Const(Fn):
    value: float = 0.0

    @property
    def name(self):
        return f"{self.value:g}"

    def _eval(self, x):
        return np.full(x.shape, self.value)


@dataclass(frozen=True, eq=True)
class Identity(Fn):
    name = "Id"

    def _eval(self, x):
        return x


@dataclass(frozen=True, eq=True)
class Indicator(Fn):
    """Indicator of the closed interval ``[lo, hi]``."""

    lo: float = 0.0
    hi: float = 1.0

    @property
    def name(self):
        return f"1[{self.lo:g},{self.hi:g}]"

    @property
    def breaks(self):
        return (self.lo, self.hi)

    def _eval(self, x):
        return ((x >= self.lo) & (x <= self.hi)).astype(float)


@dataclass(frozen=True, eq=True)
class Polynomial(Fn):
    """``sum_k coeffs[k] * x**k``."""

    coeffs: tuple = (0.0,)

    @property
    def name(self):
        return "poly(" + ",".join(f"{c:g}" for c in self.coeffs) + ")"

    def _eval(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coeffs, float))


@dataclass(frozen=True, eq=True)
class ExpDecay(Fn):
    """``exp(-rate * x)``."""

    rate: float = 1.0

    @property
    def name(self):
        return f"exp(-{self.rate:g}x)"

    def _eval(self, x):
        return np.exp(-self.rate * x)


@dataclass(frozen=True, eq=False)
class FromCallable(Fn):
    """Wrap an arbitrary vectorised callable (not necessarily picklable)."""

    fn: Callable = None
    cut_points: tuple = ()
    label: str = "f"

    @property
    def name(self):
        return self.label

    @property
    def breaks(self):
        return tuple(self.cut_points)

    def _eval(self, x):
        return self.fn(x)


@dataclass(frozen=True, eq=True)
class Scaled(Fn):
    factor: float = 1.0
    inner: Fn = None

    @property
    def name(self):
        return f"{self.factor:g}*{self.inner.name}"

    @property
    def breaks(self):
        return self.inner.breaks

    def _eval(self, x):
        return self.factor * self.inner(x)


@dataclass(frozen=True, eq=True)
class Linear(Fn):
    """``const + sum_i weights[i] * terms[i]``."""

    terms: tuple = ()
    weights: tuple = ()
    const: float = 0.0

    @staticmethod
    def of(f: Fn, other, sign: float) -> "Linear":
        if isinstance(other, Fn):
            return Linear((f, other), (1.0, sign), 0.0)
        return Linear((f,), (1.0,), sign * float(other))

    @property
    def name(self):
        parts = [f"{w:g}*{t.name}" for t, w in zip(self.terms, self.weights)]
        if self.const:
            parts.append(f"{self.const:.6g}")
        return " + ".join(parts)

    @property
    def breaks(self):
        return tuple(sorted({p for t in self.terms for p in t.breaks}))

    def _eval(self, x):
        out = np.full(x.shape, self.const)
        for t, w in zip(self.terms, self.weights):
            out = out + w * t(x)
        return out


@dataclass(frozen=True, eq=True)
class Product(Fn):
    factors: tuple = ()

    @property
    def name(self):
        return "*".join(f"({f.name})" for f in self.factors)

    @property
    def breaks(self):
        return tuple(sorted({p for f in self.factors for p in f.breaks}))

    def _eval(self, x):
        out = np.ones(x.shape)
        for f in self.factors:
            out = out * f(x)
        return out


@dataclass(frozen=True, eq=True)
class Phi(Fn):
    """``y -> inner(exp(-y))``, mapping [0,1]-side to log-side."""

    inner: Fn = None

    @property
    def name(self):
        return f"Phi({self.inner.name})"

    @property
    def breaks(self):
        return tuple(sorted(-np.log(p) for p in self.inner.breaks if 0.0 < p <= 1.0))

    def _eval(self, y):
        return self.inner(np.exp(-y))


def as_fn(f) -> Fn:
    """Coerce callables and constants to :class:`Fn`."""
    if isinstance(f, Fn):
        return f
    if callable(f):
        return FromCallable(f)
    return Const(float(f))


def identity() -> Fn:
    return Identity()


def indicator(lo: float, hi: float) -> Fn:
    return Indicator(float(lo), float(hi))


def polynomial(coeffs: Sequence[float]) -> Fn:
    return Polynomial(tuple(float(c) for c in coeffs))


def constant(value: float) -> Fn:
    return Const(float(value))


@dataclass(frozen=True, eq=True)
class LogSide(Fn):
    """``x -> inner(-log x)``: inverse of :class:`Phi` on ``(0, 1]``."""

    inner: Fn = None

    @property
    def name(self):
        return f"LogSide({self.inner.name})"

    @property
    def breaks(self):
        return tuple(sorted(float(np.exp(-p)) for p in self.inner.breaks))

    def _eval(self, x):
        return self.inner(-np.log(x))
