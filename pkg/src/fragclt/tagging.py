"""Tagged fragments: uniform dots followed through the tree.

Two simulators are provided. :func:`simulate_tagged` with ``full=True``
grows the whole tree with explicit sub-intervals and locates the dots
geometrically. The default walks only tag-bearing nodes and moves each
tag to child i with probability equal to its proportion; the two are
equal in law and are cross-checked in the tests.

:func:`tagged_moment` estimates ``E[F(B^1..B^q) ; all tags on distinct
frozen fragments]``. Its default estimator follows the genealogy of the
tags and integrates out, at every split, the ways the tag set can break
up; tags that are alone in a node are resolved by the renewal function
of their test function instead of being simulated to the end.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .dislocation import MeasureSpec, sample_proportions, waiting_law
from .errors import DomainError
from .functions import as_fn
from .renewal import residual_map
from .tree_sim import _check_eps, simulate_frozen

DEFAULT_ALPHA = 0.8


@dataclass(eq=False)
class TaggedRun:
    """One tree observed through q tags.

    Attributes
    ----------
    levels : list of ndarray
        Per tag, the epochs ``S_0 = 0 < S_1 < ... < S_N`` (``-log`` of the
        successive sizes of the fragment holding it); ``S_N > T``.
    nodes : list of list
        Per tag, a hashable node id for each generation along its path.
    residuals : ndarray
        ``S_N - T`` per tag.
    tags : ndarray or None
        Positions in ``[0, 1)`` (interval mode only).
    """

    q: int
    epsilon: float
    T: float
    levels: list
    nodes: list
    residuals: np.ndarray
    tags: np.ndarray | None = None
    gamma_run: object = None

    def frozen_tag_map(self) -> dict:
        """Frozen node id -> tuple of tags it holds."""
        out: dict = {}
        for i in range(self.q):
            out.setdefault(self.nodes[i][-1], []).append(i)
        return {k: tuple(v) for k, v in out.items()}

    def all_distinct(self) -> bool:
        return len(self.frozen_tag_map()) == self.q

    def to_json(self) -> str:
        return json.dumps({
            "q": self.q, "epsilon": self.epsilon, "T": self.T,
            "histories": [lv.tolist() for lv in self.levels],
            "residuals": self.residuals.tolist(),
            "frozen_sets": [list(v) for v in self.frozen_tag_map().values()],
        })


def _run_from_batch(batch, r: int, epsilon: float) -> TaggedRun:
    q = batch.levels.shape[1]
    levels, nodes = [], []
    for i in range(q):
        lv = batch.levels[r, i]
        n = int(np.sum(np.isfinite(lv)))
        levels.append(np.concatenate([[0.0], lv[:n]]))
        # within a generation, (parent label, child index) identifies the node
        nodes.append([(0, 0)] + [(g + 1, int(batch.code[r, i, g])) for g in range(n)])
    return TaggedRun(q, epsilon, -math.log(epsilon), levels, nodes, batch.residuals[r].copy())


def simulate_tagged(spec: MeasureSpec, epsilon: float, q: int, rng: np.random.Generator,
                    full: bool = False) -> TaggedRun:
    """Simulate one tree with q tags.

    ``full=True`` grows every branch (so ``gamma_run`` holds the frozen
    fragments as well) and places the tags by interval membership;
    otherwise only tag-bearing branches are expanded.
    """
    if q < 1:
        raise DomainError("q must be at least 1")
    spec.check()
    epsilon = _check_eps(spec, epsilon)
    if full:
        y = rng.random(q)
        run = simulate_frozen(spec, epsilon, rng, tags=y)
        levels = [np.array([p[2] for p in path]) for path in run.tag_paths]
        nodes = [[(g, sl) for g, sl, _ in path] for path in run.tag_paths]
        return TaggedRun(q, epsilon, run.T, levels, nodes, run.residuals(), y, run)
    batch = simulate_tagged_batch(spec, epsilon, q, 1, rng, record=True)
    return _run_from_batch(batch, 0, epsilon)


@dataclass
class TaggedBatch:
    """Vectorised child-choice runs.

    ``residuals`` and ``final_label`` have shape ``(n, q)``; tags share a
    frozen fragment iff their final labels coincide. With ``record`` the
    arrays ``levels``, ``labels`` and ``code`` of shape ``(n, q, G)`` hold
    the per-generation path (NaN / -1 once frozen).
    """

    residuals: np.ndarray
    final_label: np.ndarray
    levels: np.ndarray | None = None
    labels: np.ndarray | None = None
    code: np.ndarray | None = None

    def distinct(self) -> np.ndarray:
        lab = self.final_label
        q = lab.shape[1]
        ok = np.ones(lab.shape[0], bool)
        for i, j in itertools.combinations(range(q), 2):
            ok &= lab[:, i] != lab[:, j]
        return ok


def simulate_tagged_batch(spec: MeasureSpec, epsilon: float, q: int, n: int,
                          rng: np.random.Generator, record: bool = False) -> TaggedBatch:
    """Run ``n`` independent trees restricted to the branches of q tags.

    Tags in the same node form a cluster labelled by its smallest tag;
    each cluster splits once per generation and every tag picks a child
    with probability equal to the child's proportion.
    """
    T = -math.log(epsilon)
    level = np.zeros((n, q))
    label = np.zeros((n, q), dtype=np.int64)
    active = np.ones((n, q), bool)
    hist_l, hist_lab, hist_code = [], [], []
    tag_ids = np.arange(q)
    while active.any():
        rep = active & (label == tag_ids[None, :])
        rr, ii = np.nonzero(rep)
        s = sample_proportions(spec, rr.size, rng)
        k = s.shape[1]
        table = np.zeros((n, q, k))
        table[rr, ii] = s
        tr, tj = np.nonzero(active)
        props = table[tr, label[tr, tj]]
        u = rng.random(tr.size)
        child = (u[:, None] >= np.cumsum(props, axis=1)).sum(axis=1)
        child = np.minimum(child, k - 1)
        code = np.full((n, q), -1, dtype=np.int64)
        code[tr, tj] = label[tr, tj] * k + child
        new_level = level.copy()
        new_level[tr, tj] = level[tr, tj] - np.log(props[np.arange(tr.size), child])
        new_label = np.full((n, q), -1, dtype=np.int64)
        for i in range(q - 1, -1, -1):
            same = active & active[:, i:i + 1] & (code == code[:, i:i + 1])
            new_label = np.where(same, i, new_label)
        if record:
            hist_l.append(np.where(active, new_level, np.nan))
            hist_lab.append(np.where(active, new_label, -1))
            hist_code.append(code)
        level = np.where(active, new_level, level)
        label = np.where(active, new_label, label)
        active &= ~(level > T)
    # clusters are labelled by their smallest tag, so labels of distinct
    # frozen fragments never collide
    batch = TaggedBatch(level - T, label)
    if record:
        batch.levels = np.stack(hist_l, axis=2)
        batch.labels = np.stack(hist_lab, axis=2)
        batch.code = np.stack(hist_code, axis=2)
    return batch


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DiagnosticSnapshot:
    """Tag configuration over the cut at level t.

    Attributes
    ----------
    tag_sets : list of tuple
        Tag sets of the tag-bearing nodes alive at ``t``.
    k : int
        Number of nodes holding exactly one tag.
    l : int
        ``sum (#A_u - 1)`` over the nodes.
    G : bool
        Nodes hold exactly the pairs ``{0,1}, {2,3}, ...`` (q even).
    G_pairs : dict
        ``i -> whether tags 2i and 2i+1 share a node``.
    P : bool
        Every node holds exactly two tags.
    pairing : list or None
        The pairing when ``P`` holds.
    """

    t: float
    tag_sets: list
    k: int
    l: int
    G: bool
    G_pairs: dict
    P: bool
    pairing: list | None

    @property
    def multiplicities(self):
        return sorted(len(a) for a in self.tag_sets)


def snapshot(run: TaggedRun, t: float) -> DiagnosticSnapshot:
    """Group tags by the node they occupy at level ``t``.

    A node covers levels ``(S_{k-1}, S_k]`` of its tags' epochs and the
    root covers ``(-inf, 0]``, so at ``t = 0`` all tags sit in the root.
    """
    if t > run.T + 1e-12:
        raise DomainError(f"t={t} exceeds T={run.T}")
    if t < 0:
        raise DomainError("t must be non-negative")
    groups: dict = {}
    for i in range(run.q):
        g = int(np.searchsorted(run.levels[i], t, side="left"))
        groups.setdefault(run.nodes[i][g], []).append(i)
    sets = sorted(tuple(v) for v in groups.values())
    k = sum(1 for a in sets if len(a) == 1)
    l = sum(len(a) - 1 for a in sets)
    q = run.q
    pairs = {i: any({2 * i, 2 * i + 1} <= set(a) for a in sets) for i in range(q // 2)}
    G = q % 2 == 0 and all(a in [(2 * i, 2 * i + 1) for i in range(q // 2)] for a in sets)
    P = q % 2 == 0 and all(len(a) == 2 for a in sets)
    return DiagnosticSnapshot(t, sets, k, l, G, pairs, P, [list(a) for a in sets] if P else None)


# ---------------------------------------------------------------------------
# tagged moments


@dataclass
class MomentEstimate:
    value: float
    stderr: float
    replicas: int
    method: str
    epsilon: float
    q: int

    def scaled(self, power: float) -> tuple:
        """``(value, stderr)`` multiplied by ``epsilon ** -power``."""
        k = self.epsilon ** (-power)
        return self.value * k, self.stderr * k


def _mean_se(vals: np.ndarray):
    n = vals.size
    mean = math.fsum(vals) / n
    var = math.fsum((vals - mean) ** 2) / max(n - 1, 1)
    return mean, math.sqrt(var / n)


class _Genealogy:
    """Unbiased walk estimator of ``E[prod_j f_j(B^j) ; tags end apart]``."""

    def __init__(self, spec, T, maps, rng):
        self.spec, self.T, self.maps, self.rng = spec, T, maps, rng

    def H(self, tag, level):
        # mean of f_tag at T for a tag alone in a node starting at `level`
        return self.maps[tag](level - self.T)

    def group(self, tags: tuple, start: np.ndarray) -> np.ndarray:
        if len(tags) == 2:
            return self._pair(tags, start)
        return self._many(tags, start)

    def _split(self, level):
        s = sample_proportions(self.spec, level.size, self.rng)
        return s, level[:, None] - np.log(s)

    def _carry(self, s, L, m):
        # continue with the whole group in child i, chosen with probability s_i^m / Z
        pw = s**m
        Z = pw.sum(axis=1)
        u = self.rng.random(s.shape[0]) * Z
        c = (u[:, None] >= np.cumsum(pw, axis=1)).sum(axis=1)
        c = np.minimum(c, s.shape[1] - 1)
        return Z, L[np.arange(s.shape[0]), c]

    def _pair(self, tags, start):
        a, b = tags
        n = start.size
        total = np.zeros(n)
        weight = np.ones(n)
        level = start.astype(float).copy()
        idx = np.flatnonzero(level <= self.T)
        while idx.size:
            s, L = self._split(level[idx])
            k = s.shape[1]
            ha = [self.H(a, L[:, i]) for i in range(k)]
            hb = [self.H(b, L[:, i]) for i in range(k)]
            contrib = np.zeros(idx.size)
            for i in range(k):
                for j in range(k):
                    if i != j:
                        contrib += s[:, i] * s[:, j] * ha[i] * hb[j]
            total[idx] += weight[idx] * contrib
            Z, nxt = self._carry(s, L, 2)
            weight[idx] *= Z
            level[idx] = nxt
            idx = idx[nxt <= self.T]
        return total

    def _many(self, tags, start):
        m = len(tags)
        n = start.size
        level = start.astype(float).copy()
        weight = np.ones(n)
        recs = []  # (sample index, weight, assignment index, child levels)
        idx = np.flatnonzero(level <= self.T)
        assigns = None
        while idx.size:
            s, L = self._split(level[idx])
            k = s.shape[1]
            if assigns is None:
                assigns = [a for a in itertools.product(range(k), repeat=m) if len(set(a)) > 1]
            probs = np.stack([np.prod([s[:, c] for c in a], axis=0) for a in assigns], axis=1)
            tot = probs.sum(axis=1)
            u = self.rng.random(idx.size) * tot
            pick = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
            pick = np.minimum(pick, len(assigns) - 1)
            recs.append((idx, weight[idx] * tot, pick, L))
            Z, nxt = self._carry(s, L, m)
            weight[idx] *= Z
            level[idx] = nxt
            idx = idx[nxt <= self.T]
        total = np.zeros(n)
        if not recs:
            return total
        sid = np.concatenate([r[0] for r in recs])
        w = np.concatenate([r[1] for r in recs])
        pick = np.concatenate([r[2] for r in recs])
        L = np.concatenate([r[3] for r in recs])
        val = w.copy()
        for ai, a in enumerate(assigns):
            rows = np.flatnonzero(pick == ai)
            if not rows.size:
                continue
            fac = np.ones(rows.size)
            for c in sorted(set(a)):
                block = tuple(t for t, cc in zip(tags, a) if cc == c)
                lev = L[rows, c]
                if len(block) == 1:
                    fac *= self.H(block[0], lev)
                else:
                    sub = np.zeros(rows.size)
                    ok = lev <= self.T
                    if ok.any():
                        sub[ok] = self.group(block, lev[ok])
                    fac *= sub
            val[rows] *= fac
        np.add.at(total, sid, val)
        return total


def tagged_moment(spec: MeasureSpec, epsilon: float, q: int, F, replicas: int,
                  rng: np.random.Generator, method: str = "genealogy",
                  t_max: float | None = None) -> MomentEstimate:
    """Estimate ``E[F(B_T^1, ..., B_T^q) ; all tags on distinct frozen fragments]``.

    Parameters
    ----------
    F : sequence of Fn or callable
        A list of q residual-side functions (product form) or, for
        ``method="direct"``, any callable on an ``(n, q)`` array.
    method : {"genealogy", "direct"}
        ``direct`` simulates the tags to freezing and averages
        ``F * indicator``. ``genealogy`` (product form only) follows the
        tag genealogy and integrates out splits and lone tags; it is
        unbiased with far smaller variance.
    """
    spec.check()
    epsilon = _check_eps(spec, epsilon)
    T = -math.log(epsilon)
    if method == "direct":
        batch = simulate_tagged_batch(spec, epsilon, q, replicas, rng)
        res = batch.residuals
        if isinstance(F, (list, tuple)):
            vals = np.ones(replicas)
            for j, f in enumerate(F):
                vals = vals * as_fn(f)(res[:, j])
        else:
            vals = np.asarray(F(res), float)
        vals = np.where(batch.distinct(), vals, 0.0)
        mean, se = _mean_se(vals)
        return MomentEstimate(mean, se, replicas, method, epsilon, q)
    if method != "genealogy":
        raise ValueError(f"unknown method {method!r}")
    if not isinstance(F, (list, tuple)) or len(F) != q:
        raise DomainError("the genealogy estimator needs q product-form factors")
    if q == 1:
        law = waiting_law(spec)
        tm = max(30.0, T + 2.0) if t_max is None else t_max
        v = float(residual_map(law, as_fn(F[0]), t_max=tm)(np.array(-T)))
        return MomentEstimate(v, 0.0, replicas, "genealogy-exact", epsilon, q)
    est = genealogy_samples(spec, epsilon, F, replicas, rng, t_max)
    mean, se = _mean_se(est)
    return MomentEstimate(mean, se, replicas, method, epsilon, q)


def genealogy_samples(spec: MeasureSpec, epsilon: float, F, n: int, rng: np.random.Generator,
                      t_max: float | None = None) -> np.ndarray:
    """Independent per-walk values of the genealogy estimator (their mean is the moment)."""
    T = -math.log(epsilon)
    law = waiting_law(spec)
    tm = max(30.0, T + 2.0) if t_max is None else t_max
    maps = [residual_map(law, as_fn(f), t_max=tm) for f in F]
    if len(F) == 1:
        return np.full(n, float(maps[0](np.array(-T))))
    return _Genealogy(spec, T, maps, rng).group(tuple(range(len(F))), np.zeros(n))
