"""Dislocation measures and the induced waiting-time law.

A split of a fragment of size x produces children ``x * s_i`` where the
proportions ``s`` are drawn from the dislocation measure. Following a
uniformly placed tag through one split picks child i with probability
``s_i``; minus the log of the picked proportion is the waiting time of
the tagged fragment's renewal process.

Two binary families are provided:

* ``binary_uniform``: ``s ~ U[c, 1-c]``, closed forms throughout;
* ``binary_truncated_beta``: ``s ~ Beta(shape1, shape2)`` truncated to
  ``[c, 1-c]``, evaluated through incomplete beta functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigurationError, DomainError

FAMILIES = ("binary_uniform", "binary_truncated_beta")


@dataclass(frozen=True)
class SplitOutcome:
    """Proportions of one dislocation, non-increasing and summing to 1."""

    proportions: tuple

    def __post_init__(self):
        p = np.asarray(self.proportions, float)
        if np.any(np.diff(p) > 0):
            raise DomainError("proportions must be non-increasing")
        if np.any((p <= 0) | (p >= 1)):
            raise DomainError("each proportion must lie in (0, 1)")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise DomainError("proportions must sum to 1")


@dataclass(frozen=True)
class MeasureSpec:
    """Parameters of a dislocation family.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    c : float
        Proportions are supported on ``[c, 1 - c]``; needs ``0 < c < 1/2``.
    shape1, shape2 : float, optional
        Beta shapes for ``binary_truncated_beta``.
    """

    family: str = "binary_uniform"
    c: float = 0.3
    shape1: float | None = None
    shape2: float | None = None

    @classmethod
    def binary_uniform(cls, c: float = 0.3) -> "MeasureSpec":
        return cls("binary_uniform", float(c))

    @classmethod
    def binary_truncated_beta(cls, shape1: float, shape2: float, c: float) -> "MeasureSpec":
        return cls("binary_truncated_beta", float(c), float(shape1), float(shape2))

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureSpec":
        d = dict(d)
        fam = d.pop("family", "binary_uniform")
        try:
            return cls(family=fam, **d)
        except TypeError as exc:
            raise ConfigurationError(f"bad measure parameters: {exc}") from None

    def to_dict(self) -> dict:
        out = {"family": self.family, "c": self.c}
        if self.family == "binary_truncated_beta":
            out.update(shape1=self.shape1, shape2=self.shape2)
        return out

    def problems(self) -> list:
        """Return a list of human-readable parameter problems."""
        errs = []
        if self.family not in FAMILIES:
            errs.append(f"unknown family {self.family!r}")
            return errs
        if not (0.0 < self.c < 0.5):
            errs.append(f"c={self.c} must satisfy 0 < c < 1/2 (support degenerates otherwise)")
        if self.family == "binary_truncated_beta":
            for s in (self.shape1, self.shape2):
                if s is None or not s > 0:
                    errs.append("beta shapes must be positive")
                    break
        return errs

    def check(self) -> "MeasureSpec":
        errs = self.problems()
        if errs:
            raise ConfigurationError("; ".join(errs))
        return self


# ---------------------------------------------------------------------------
# proportion law


def _beta_bounds(spec):
    dist = stats.beta(spec.shape1, spec.shape2)
    return dist, dist.cdf(spec.c), dist.cdf(1.0 - spec.c)


def sample_proportions(spec: MeasureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` binary splits as an ``(n, 2)`` array sorted per row (non-increasing)."""
    spec.check()
    u = rng.random(n)
    if spec.family == "binary_uniform":
        s = spec.c + (1.0 - 2.0 * spec.c) * u
    else:
        dist, lo, hi = _beta_bounds(spec)
        s = dist.ppf(lo + (hi - lo) * u)
        s = np.clip(s, spec.c, 1.0 - spec.c)
    big = np.maximum(s, 1.0 - s)
    return np.stack([big, 1.0 - big], axis=1)


def sample_split(spec: MeasureSpec, rng: np.random.Generator) -> SplitOutcome:
    """One dislocation event."""
    p = sample_proportions(spec, 1, rng)[0]
    return SplitOutcome((float(p[0]), float(p[1])))


def proportion_density(spec: MeasureSpec) -> Callable:
    """Density of the (unsorted) proportion ``s`` on ``[c, 1-c]``."""
    spec.check()
    c = spec.c
    if spec.family == "binary_uniform":
        return lambda x: np.where((x >= c) & (x <= 1 - c), 1.0 / (1.0 - 2.0 * c), 0.0)
    dist, lo, hi = _beta_bounds(spec)
    z = hi - lo
    return lambda x: np.where((x >= c) & (x <= 1 - c), dist.pdf(np.clip(x, c, 1 - c)) / z, 0.0)


# ---------------------------------------------------------------------------
# waiting-time law


@dataclass(frozen=True)
class WaitingLaw:
    """Law pi of minus the log of a size-biased child proportion.

    Attributes
    ----------
    a, b : float
        Support ``[a, b]`` of pi.
    delta : float
        ``exp(-b)``, the smallest possible child proportion.
    mu : float
        Mean of pi.
    density, cdf : callable
        Vectorised density and distribution function of pi.
    """

    a: float
    b: float
    delta: float
    mu: float
    density: Callable = field(repr=False, compare=False)
    cdf: Callable = field(repr=False, compare=False)
    spec: MeasureSpec = field(default=None, compare=False)
    second_moment: float = float("nan")

    @property
    def breaks(self) -> tuple:
        return (self.a, self.b)


def _uniform_law(spec):
    c = spec.c
    a, b = -math.log1p(-c), -math.log(c)
    k = 2.0 / (1.0 - 2.0 * c)
    e2a = (1.0 - c) ** 2

    def density(x):
        x = np.asarray(x, float)
        return np.where((x >= a) & (x <= b), k * np.exp(-2.0 * np.clip(x, a, b)), 0.0)

    def cdf(x):
        x = np.clip(np.asarray(x, float), a, b)
        return np.clip((e2a - np.exp(-2.0 * x)) / (1.0 - 2.0 * c), 0.0, 1.0)

    # antiderivatives of x e^{-2x} and x^2 e^{-2x}
    m1 = lambda x: -(x / 2.0 + 0.25) * math.exp(-2.0 * x)
    m2 = lambda x: -(x * x / 2.0 + x / 2.0 + 0.25) * math.exp(-2.0 * x)
    mu = k * (m1(b) - m1(a))
    second = k * (m2(b) - m2(a))
    return WaitingLaw(a, b, c, mu, density, cdf, spec, second)


def _beta_law(spec):
    c = spec.c
    a, b = -math.log1p(-c), -math.log(c)
    al, be = spec.shape1, spec.shape2
    z = special.betainc(al, be, 1 - c) - special.betainc(al, be, c)
    m = al / (al + be)
    p = proportion_density(spec)

    def h(x):
        # size-biased density of the tagged proportion
        return x * (p(x) + p(1.0 - x))

    def density(y):
        y = np.asarray(y, float)
        x = np.exp(-np.clip(y, a, b))
        return np.where((y >= a) & (y <= b), x * h(x), 0.0)

    g1 = lambda x: special.betainc(al, be, x)
    g2 = lambda x: m * special.betainc(al + 1.0, be, x)

    def tail_mass(lo):
        # integral of h over [lo, 1 - c]
        hi = 1.0 - c
        own = g2(hi) - g2(lo)
        flip = (g1(1 - lo) - g2(1 - lo)) - (g1(1 - hi) - g2(1 - hi))
        return (own + flip) / z

    def cdf(y):
        y = np.clip(np.asarray(y, float), a, b)
        return np.clip(tail_mass(np.exp(-y)), 0.0, 1.0)

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    mu = integrate.quad(lambda y: y * float(density(y)), a, b, **opts)[0]
    second = integrate.quad(lambda y: y * y * float(density(y)), a, b, **opts)[0]
    return WaitingLaw(a, b, math.exp(-b), mu, density, cdf, spec, second)


_LAW_CACHE: dict = {}


def waiting_law(spec: MeasureSpec) -> WaitingLaw:
    """Build pi for ``spec`` (cached; WaitingLaw is immutable)."""
    spec.check()
    if spec not in _LAW_CACHE:
        _LAW_CACHE[spec] = _uniform_law(spec) if spec.family == "binary_uniform" else _beta_law(spec)
    return _LAW_CACHE[spec]


def sample_waiting(law: WaitingLaw, rng: np.random.Generator, size=None):
    """Draw from pi.

    The uniform family uses its closed-form inverse CDF, so tree-based and
    renewal-based samples come from different code paths. Other families
    draw a split and take a size-biased pick.
    """
    n = 1 if size is None else int(np.prod(size))
    spec = law.spec
    if spec is not None and spec.family == "binary_uniform":
        u = rng.random(n)
        c = spec.c
        out = -0.5 * np.log((1.0 - c) ** 2 - u * (1.0 - 2.0 * c))
        out = np.clip(out, law.a, law.b)
    else:
        out = size_biased_log(spec, n, rng)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def size_biased_log(spec: MeasureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``-log`` of a size-biased pick from ``n`` fresh splits."""
    s = sample_proportions(spec, n, rng)
    pick_big = rng.random(n) < s[:, 0]
    return -np.log(np.where(pick_big, s[:, 0], s[:, 1]))


def sample_sibling_log(spec: MeasureSpec, w, rng: np.random.Generator | None = None, check: bool = True):
    """``-log`` of the sibling proportion that receives a second tag.

    For binary families the sibling of a child with proportion
    ``exp(-w)`` is ``1 - exp(-w)``, so the draw is deterministic and
    ``rng`` is unused.
    """
    w_arr = np.asarray(w, float)
    if check:
        law = waiting_law(spec)
        tol = 1e-12
        if np.any((w_arr < law.a - tol) | (w_arr > law.b + tol)):
            raise DomainError(f"sibling waiting time needs w in [{law.a}, {law.b}]")
    out = -np.log(-np.expm1(-w_arr))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# assumptions


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_assumptions(spec: MeasureSpec, n_samples: int = 20000, seed: int = 0) -> ValidationReport:
    """Check the standing hypotheses on the dislocation measure.

    Returns one entry per hypothesis: ``conservative``,
    ``interval_support``, ``density`` (finite sup on a grid) and
    ``exponential_moment`` (automatic under compact support).
    """
    errs = spec.problems()
    if errs:
        msg = "; ".join(errs)
        names = ("conservative", "interval_support", "density", "exponential_moment")
        return ValidationReport([AssumptionCheck(n, False, msg) for n in names])
    rng = np.random.default_rng(seed)
    s = sample_proportions(spec, n_samples, rng)
    dev = float(np.max(np.abs(s.sum(axis=1) - 1.0)))
    inside = bool(np.all((s > 0) & (s < 1)))
    checks = [AssumptionCheck("conservative", dev <= 1e-12 and inside,
                              f"max |sum-1| = {dev:.3g}, proportions in (0,1): {inside}")]
    law = waiting_law(spec)
    grid = np.linspace(law.a, law.b, 2001)
    dens = law.density(grid)
    positive = bool(np.all(dens[1:-1] > 0))
    mass = integrate.quad(lambda y: float(law.density(y)), law.a, law.b, epsabs=0, epsrel=1e-12)[0]
    checks.append(AssumptionCheck(
        "interval_support", law.a < law.b and positive and abs(mass - 1) < 1e-9,
        f"support [{law.a:.6f}, {law.b:.6f}], mass {mass:.12f}"))
    sup = float(np.max(dens))
    checks.append(AssumptionCheck("density", bool(np.isfinite(sup)), f"sup of density on grid = {sup:.6g}"))
    checks.append(AssumptionCheck("exponential_moment", bool(np.isfinite(law.b)),
                                  "compact support: exp(theta x) pi(x) bounded for every theta"))
    return ValidationReport(checks)
