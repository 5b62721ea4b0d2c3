"""Fragmentation tree frozen below a size threshold.

Each fragment of size at least ``epsilon`` splits into ``x * s`` with
``s`` drawn from the dislocation measure; children below ``epsilon``
are frozen. Lifetimes are not simulated because only the sizes at
freezing matter here.

The expansion runs generation by generation on numpy arrays, which is
orders of magnitude faster in Python than an explicit depth-first stack
and yields the same random tree law.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._combinat import mobius_weight, set_partitions
from .dislocation import MeasureSpec, sample_proportions, waiting_law
from .errors import CapacityError, DomainError, EvaluationError, InternalConsistencyError, UnsupportedError
from .functions import as_fn

DEFAULT_MAX_FRAGMENTS = 20_000_000
DENSE_CAP = 4_000_000


@dataclass(eq=False)
class FrozenRun:
    """Frozen fragments of one tree.

    Attributes
    ----------
    epsilon, T : float
        Threshold and ``-log(epsilon)``.
    sizes : ndarray
        Frozen fragment sizes.
    lefts : ndarray or None
        Left endpoints of the fragments' sub-intervals of ``[0, 1)``,
        kept when tags are placed or in debug mode.
    ratios : ndarray or None
        ``size / parent size`` per frozen fragment (collecting mode).
    tags : ndarray or None
        Tag positions in ``[0, 1)``.
    tag_fragment : ndarray or None
        Index of the fragment holding each tag.
    """

    epsilon: float
    T: float
    sizes: np.ndarray
    lefts: np.ndarray | None = None
    ratios: np.ndarray | None = None
    tags: np.ndarray | None = None
    tag_fragment: np.ndarray | None = None
    generations: int = 0
    tag_paths: list | None = None

    @property
    def count(self) -> int:
        return int(self.sizes.size)

    def total(self) -> float:
        return math.fsum(self.sizes)

    def tag_sets(self) -> dict:
        """Map fragment index to the sorted tuple of tags it holds."""
        out: dict = {}
        if self.tag_fragment is None:
            return out
        for i, u in enumerate(self.tag_fragment):
            out.setdefault(int(u), []).append(i)
        return {u: tuple(v) for u, v in out.items()}

    def residuals(self) -> np.ndarray:
        """Per-tag residual ``-log(xi_u) - T`` of the holding fragment."""
        if self.tag_fragment is None:
            raise DomainError("run carries no tags")
        return -np.log(self.sizes[self.tag_fragment]) - self.T

    def check_invariants(self, delta: float) -> None:
        eps = self.epsilon
        if abs(self.total() - 1.0) > 1e-9:
            raise InternalConsistencyError(f"sizes sum to {self.total()!r}")
        lo_ok = np.all(self.sizes >= delta * eps * (1 - 1e-12))
        if not (lo_ok and np.all(self.sizes < eps)):
            raise InternalConsistencyError("a frozen size lies outside [delta*eps, eps)")
        if not (1.0 / eps < self.count <= 1.0 / (delta * eps) * (1 + 1e-12)):
            raise InternalConsistencyError(f"fragment count {self.count} out of range")

    def dump_csv(self, max_rows: int = 100_000) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["size", "size_over_eps"])
        for x in self.sizes[:max_rows]:
            w.writerow([f"{x:.17g}", f"{x / self.epsilon:.17g}"])
        return buf.getvalue()


def _check_eps(spec: MeasureSpec, epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"epsilon={epsilon} must lie in (0, 1)")
    delta = waiting_law(spec).delta
    if epsilon >= delta:
        raise DomainError(f"epsilon={epsilon} must be below delta={delta}")
    return epsilon


def simulate_frozen(spec: MeasureSpec, epsilon: float, rng: np.random.Generator, *,
                    tags: np.ndarray | None = None, keep_intervals: bool = False,
                    collect_ratios: bool = False, debug: bool = False,
                    max_fragments: int = DEFAULT_MAX_FRAGMENTS) -> FrozenRun:
    """Grow the tree from size 1 and return the frozen fragments.

    Parameters
    ----------
    tags : array, optional
        Tag positions in ``[0, 1)``. Sub-intervals are tracked and each
        tag is located in its frozen fragment.
    keep_intervals : bool
        Track sub-intervals even without tags.
    collect_ratios : bool
        Record ``size / parent size`` for every frozen fragment.
    debug : bool
        Verify conservation of every split.
    max_fragments : int
        Guard against runaway memory use.
    """
    spec.check()
    epsilon = _check_eps(spec, epsilon)
    track = tags is not None or keep_intervals
    act = np.ones(1)
    left = np.zeros(1) if track else None
    frozen, frozen_left, frozen_ratio = [], [], []
    n_frozen = 0
    gen = 0
    if tags is not None:
        tags = np.asarray(tags, float)
        where = np.zeros(tags.size, dtype=np.int64)  # index in the active array, -1 once frozen
        final = np.full(tags.size, -1, dtype=np.int64)
        paths = [[(0, 0, 0.0)] for _ in range(tags.size)]  # (generation, slot, level)
    while act.size:
        gen += 1
        n_act = act.size
        s = sample_proportions(spec, n_act, rng)
        kids = (act[:, None] * s)
        if debug:
            err = np.abs(kids.sum(axis=1) - act) / act
            if np.any(err > 1e-12):
                raise InternalConsistencyError(f"split at generation {gen} is not conservative")
        kids_flat = kids.T.reshape(-1)  # child j of parent p sits at j * n_act + p
        cold = kids_flat < epsilon
        n_cold = int(cold.sum())
        if n_frozen + n_cold + int(kids_flat.size - n_cold) > max_fragments:
            raise CapacityError(f"more than {max_fragments} fragments")
        if track:
            offs = np.concatenate([np.zeros((n_act, 1)), np.cumsum(kids, axis=1)[:, :-1]], axis=1)
            lefts_flat = (left[:, None] + offs).T.reshape(-1)
            frozen_left.append(lefts_flat[cold])
        if tags is not None:
            live = np.flatnonzero(where >= 0)
            if live.size:
                p = where[live]
                ends = np.cumsum(kids[p], axis=1) + left[p][:, None]
                j = (tags[live][:, None] >= ends).sum(axis=1)
                j = np.minimum(j, s.shape[1] - 1)
                slot = j * n_act + p
                cold_rank = np.cumsum(cold) - 1
                warm_rank = np.cumsum(~cold) - 1
                for t_i, sl in zip(live, slot):
                    paths[t_i].append((gen, int(sl), -math.log(kids_flat[sl])))
                is_cold = cold[slot]
                final[live[is_cold]] = n_frozen + cold_rank[slot[is_cold]]
                where[live[is_cold]] = -1
                where[live[~is_cold]] = warm_rank[slot[~is_cold]]
        n_frozen += n_cold
        frozen.append(kids_flat[cold])
        if collect_ratios:
            frozen_ratio.append(s.T.reshape(-1)[cold])
        if track:
            left = lefts_flat[~cold]
        act = kids_flat[~cold]
    sizes = np.concatenate(frozen)
    run = FrozenRun(epsilon, -math.log(epsilon), sizes, generations=gen)
    if collect_ratios:
        run.ratios = np.concatenate(frozen_ratio)
    if track:
        run.lefts = np.concatenate(frozen_left)
    if tags is not None:
        run.tags = tags
        run.tag_fragment = final
        run.tag_paths = paths
        if debug:
            order = np.argsort(run.lefts, kind="stable")
            pos = np.searchsorted(run.lefts[order], tags, side="right") - 1
            if not np.array_equal(order[pos], final):
                raise InternalConsistencyError("tag location by path and by interval disagree")
    return run


def gamma(run: FrozenRun, f) -> float:
    """Empirical measure ``sum_u xi_u f(xi_u / epsilon)``."""
    f = as_fn(f)
    x = run.sizes / run.epsilon
    vals = f(x)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise EvaluationError(f"{f.name} is not finite at x={x[np.flatnonzero(bad)[0]]!r}")
    return math.fsum(run.sizes * vals)


def gammas(run: FrozenRun, fs: Sequence) -> np.ndarray:
    return np.array([gamma(run, f) for f in fs])


def _weighted_columns(run, fs):
    x = run.sizes / run.epsilon
    cols = []
    for f in fs:
        v = as_fn(f)(x)
        if not np.all(np.isfinite(v)):
            raise EvaluationError(f"{as_fn(f).name} is not finite on the run")
        cols.append(run.sizes * v)
    return cols


def u_statistic_otimes(run: FrozenRun, F, q: int) -> float:
    """Full product sum over all q-tuples of fragments.

    ``F`` is either a sequence of q one-variable functions (product form)
    or a q-ary callable, the latter evaluated densely for ``q <= 2``.
    """
    if isinstance(F, (list, tuple)):
        if len(F) != q:
            raise DomainError("product form needs exactly q factors")
        return float(np.prod([gamma(run, f) for f in F]))
    return _dense(run, F, q, injective=False)


def u_statistic_odot(run: FrozenRun, F, q: int) -> float:
    """Sum over injective q-tuples ``(u_1, ..., u_q)`` of distinct fragments.

    Product-form ``F`` uses Moebius inversion over the partitions of
    ``{1..q}``: each block B contributes the power sum
    ``sum_u prod_{j in B} xi_u f_j(xi_u / eps)``.
    """
    if q < 1:
        raise DomainError("q must be at least 1")
    if isinstance(F, (list, tuple)):
        if len(F) != q:
            raise DomainError("product form needs exactly q factors")
        if q > 4:
            raise UnsupportedError("exact injective sums are limited to q <= 4")
        cols = _weighted_columns(run, F)
        total = []
        for part in set_partitions(range(q)):
            term = float(mobius_weight(part))
            for block in part:
                prod = np.ones(run.count)
                for j in block:
                    prod = prod * cols[j]
                term *= math.fsum(prod)
            total.append(term)
        return math.fsum(total)
    return _dense(run, F, q, injective=True)


def _dense(run, F, q, injective):
    n = run.count
    if q > 2 or n**q > DENSE_CAP:
        raise UnsupportedError("non-product functions are only evaluated densely for q <= 2 on small runs")
    x = run.sizes / run.epsilon
    w = run.sizes
    if q == 1:
        return math.fsum(w * np.asarray(F(x), float))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    vals = np.asarray(F(X1, X2), float) * np.outer(w, w)
    if injective:
        np.fill_diagonal(vals, 0.0)
    return math.fsum(vals.reshape(-1))
