"""Limit-side quantities: gamma_infinity, centering, K, pair partitions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coupled_pair import VMatrix, VOptions, v_matrix
from .dislocation import MeasureSpec, WaitingLaw, waiting_law
from .errors import DomainError, InternalConsistencyError
from .functions import Fn, Identity, Phi, Product, as_fn
from .renewal import eta_integral


@dataclass(frozen=True)
class TestFunction:
    """A [0,1]-side test function with its cached limit value.

    Attributes
    ----------
    handle : Fn
    centered : bool
    gamma_infinity_value : float
        ``eta(Phi(handle))``.
    """

    __test__ = False  # not a pytest class

    handle: Fn
    centered: bool = False
    gamma_infinity_value: float = float("nan")

    @property
    def name(self) -> str:
        return self.handle.name

    def __call__(self, x):
        return self.handle(x)

    def phi(self) -> Fn:
        return Phi(self.handle)


def _fn(f) -> Fn:
    return f.handle if isinstance(f, TestFunction) else as_fn(f)


def gamma_infinity(law: WaitingLaw, f) -> float:
    """``eta(Phi(f))`` where ``Phi(f)(y) = f(exp(-y))``."""
    return eta_integral(law, Phi(_fn(f)))


def center(law: WaitingLaw, f) -> TestFunction:
    """Return ``f - gamma_infinity(f)`` flagged as centered."""
    h = _fn(f)
    g = gamma_infinity(law, h)
    if g != 0.0:
        h = h - g
    check = gamma_infinity(law, h)
    if abs(check) > 1e-8:
        raise InternalConsistencyError(f"centering failed: residual limit {check:.3g}")
    return TestFunction(h, True, check)


@dataclass
class CovarianceModel:
    """``K = eta_part + v_part`` with the V standard errors."""

    names: list
    K: np.ndarray
    K_stderr: np.ndarray
    eta_part: np.ndarray
    v_part: np.ndarray
    v_matrix: VMatrix
    negative_diagonal: list = field(default_factory=list)
    opts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "functions": self.names,
            "K": self.K.tolist(),
            "K_stderr": self.K_stderr.tolist(),
            "eta_part": self.eta_part.tolist(),
            "v_part": self.v_part.tolist(),
            "v_matrix": self.v_matrix.to_dict(),
            "negative_diagonal": self.negative_diagonal,
            "opts": self.opts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def eta_part(law: WaitingLaw, f, g) -> float:
    """``eta(Phi(Id * f * g))``, i.e. the integral of ``e^{-y} f(e^{-y}) g(e^{-y})``."""
    return eta_integral(law, Phi(Product((Identity(), _fn(f), _fn(g)))))


def covariance_K(spec: MeasureSpec, law: WaitingLaw | None, fs: Sequence, opts: VOptions = VOptions()) -> CovarianceModel:
    """Covariance of the Gaussian limit of ``eps^{-1/2} gamma_T(f_i)``.

    ``K_ij = eta(Phi(Id f_i f_j)) + V_sym(Phi f_i, Phi f_j)``; the first
    part by quadrature, the second by :func:`~fragclt.coupled_pair.v_matrix`.
    """
    law = law or waiting_law(spec)
    hs = [_fn(f) for f in fs]
    k = len(hs)
    E = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            E[i, j] = E[j, i] = eta_part(law, hs[i], hs[j])
    vm = v_matrix(spec, law, [Phi(h) for h in hs], opts)
    K = E + vm.value
    neg = [i for i in range(k) if K[i, i] < -4 * vm.stderr[i, i]]
    return CovarianceModel([h.name for h in hs], K, vm.stderr.copy(), E, vm.value, vm, neg,
                           {"dv": opts.dv, "n_per_node": opts.n_per_node, "seed": opts.seed,
                            "method": opts.method})


# ---------------------------------------------------------------------------
# combinatorics


def pair_partition_count(q: int) -> int:
    """``q! / ((q/2)! 2^(q/2))``."""
    if q < 0 or q % 2:
        raise DomainError("pair partitions need an even q")
    return math.factorial(q) // (math.factorial(q // 2) * 2 ** (q // 2))


def pair_partitions(q: int) -> list:
    """All partitions of ``{0..q-1}`` into blocks of size two."""
    if q % 2 or q < 0:
        raise DomainError("pair partitions need an even q")
    if q > 12:
        raise DomainError("enumeration is limited to q <= 12")

    def rec(items):
        if not items:
            return [[]]
        first, rest = items[0], items[1:]
        out = []
        for k, other in enumerate(rest):
            for tail in rec(rest[:k] + rest[k + 1:]):
                out.append([(first, other)] + tail)
        return out

    return rec(list(range(q)))


def limit_moment(provider, fs: Sequence, q: int) -> float:
    """``sum over pairings I of prod_{(a,b) in I} V_sym(f_a, f_b)``.

    ``provider`` is either a callable ``(f_a, f_b) -> float`` or a square
    matrix indexed by the entries of ``fs`` (which are then integers).
    """
    if len(fs) != q:
        raise DomainError("limit_moment needs exactly q functions")
    if callable(provider):
        pv = provider
    else:
        M = np.asarray(provider, float)
        pv = lambda a, b: float(M[a, b])
    total = 0.0
    for part in pair_partitions(q):
        term = 1.0
        for a, b in part:
            term *= pv(fs[a], fs[b])
        total += term
    return total


def k1_constant(q: int) -> int:
    """``sum_{i=1}^q q!/(q-i)! * i^(q-i)`` as an exact integer."""
    if q < 1:
        raise DomainError("q must be at least 1")
    return sum(math.factorial(q) // math.factorial(q - i) * i ** (q - i) for i in range(1, q + 1))
