"""The coupled pair after a split and the covariance kernel V.

Two tags that separate at level ``v`` are followed to time 0. Tag 1 is
in its stationary regime at the split: its state ``(c, bbar)`` at level
``v`` is drawn from eta_2, the split happened at ``v - c`` and tag 1's
next renewal is at ``v + bbar``. Tag 2 jumped to the sibling, whose
waiting time is ``sibling_log(c + bbar)``. The pair contributes only if
tag 1 is still in its post-split fragment at 0, i.e. ``v - c <= 0``
(always true when ``v <= 0``).

``V(f, g) = int_{-inf}^{b} e^{-v} E[alive f(B1) g(B2)] dv`` is computed
by composite trapezoid quadrature in ``v`` with a Monte Carlo mean at
each node. Node values are either simulated directly or, by default,
conditioned on ``(c, bbar)``: given the two next-renewal epochs the
residuals at 0 are independent with known means (see
:class:`~fragclt.renewal.ResidualMap`), which removes the variance that
grows like ``e^{-v}`` for deep nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dislocation import MeasureSpec, sample_sibling_log, waiting_law
from .errors import DomainError, TailFailure
from .functions import as_fn
from .parallel import pmap
from .renewal import advance, eta_integral, residual_map, sample_stationary_states
from .streams import derived_rng


@dataclass(frozen=True)
class PairSample:
    """One draw of the V integrand at separation level ``v``."""

    v: float
    alive: bool
    b1: float
    b2: float


def _check_state(law, c, bbar):
    tol = 1e-12
    c, bbar = np.asarray(c, float), np.asarray(bbar, float)
    s = c + bbar
    ok = (c >= -tol) & (c <= law.b + tol) & (bbar >= -tol) & (bbar <= law.b + tol)
    ok &= (s >= law.a - tol) & (s <= law.b + tol)
    if not np.all(ok):
        raise DomainError("(age, residual) must lie in the support of eta_2")


def _overshoot(law, r, rng):
    """Residual at 0 of a renewal process with an epoch at ``r``."""
    r = np.asarray(r, float)
    out = r.copy()
    neg = np.flatnonzero(r <= 0)
    if neg.size:
        _, res = advance(law, np.zeros(neg.size), r[neg], 0.0, rng)
        out[neg] = res
    return out


def sample_eta_primes(spec: MeasureSpec, c, bbar, rng: np.random.Generator) -> np.ndarray:
    """Residual of tag 2 at the observation level given tag 1's state ``(c, bbar)``."""
    law = waiting_law(spec)
    _check_state(law, c, bbar)
    c, bbar = np.atleast_1d(np.asarray(c, float)), np.atleast_1d(np.asarray(bbar, float))
    w = sample_sibling_log(spec, np.clip(c + bbar, law.a, law.b), rng, check=False)
    return _overshoot(law, -c + w, rng)


def sample_eta_prime(spec: MeasureSpec, c: float, bbar: float, rng: np.random.Generator) -> float:
    return float(sample_eta_primes(spec, c, bbar, rng)[0])


@dataclass
class PairBatch:
    v: float
    alive: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray
    bbar: np.ndarray

    def sample(self, i: int) -> PairSample:
        return PairSample(self.v, bool(self.alive[i]), float(self.b1[i]), float(self.b2[i]))


def _states(spec, law, v, n, rng):
    if v > law.b + 1e-12:
        raise DomainError(f"v={v} exceeds b={law.b}")
    c, bbar = sample_stationary_states(law, n, rng)
    alive = np.ones(n, bool) if v <= 0 else (v - c <= 0)
    w2 = sample_sibling_log(spec, np.clip(c + bbar, law.a, law.b), rng, check=False)
    return c, bbar, alive, v + bbar, v - c + w2


def sample_pairs(spec: MeasureSpec, v: float, n: int, rng: np.random.Generator) -> PairBatch:
    """``n`` independent pair samples at separation level ``v``."""
    law = waiting_law(spec)
    c, bbar, alive, r1, r2 = _states(spec, law, v, n, rng)
    return PairBatch(v, alive, _overshoot(law, r1, rng), _overshoot(law, r2, rng), c, bbar)


def sample_pair_at_zero(spec: MeasureSpec, law, v: float, rng: np.random.Generator) -> PairSample:
    return sample_pairs(spec, v, 1, rng).sample(0)


# ---------------------------------------------------------------------------
# V kernel


@dataclass(frozen=True)
class VOptions:
    """Quadrature and Monte Carlo settings for :func:`v_kernel`.

    Attributes
    ----------
    dv : float
        Target node spacing; the actual spacing divides ``b`` evenly.
    n_per_node : int
        Samples per node.
    tail_rel, tail_floor : float
        Stop extending once a segment contributes less than
        ``max(tail_rel * |value|, tail_floor)``.
    max_extensions : int
        Segments of length ``b`` below 0 before a tail failure.
    method : {"conditional", "simulate"}
    seed : int
        Base seed; node k uses the stream ``(seed, k)``.
    strict : bool
        Reject functions that are not eta-centered.
    """

    dv: float = 0.05
    n_per_node: int = 20_000
    tail_rel: float = 1e-4
    tail_floor: float = 1e-8
    max_extensions: int = 20
    method: str = "conditional"
    seed: int = 0
    strict: bool = True
    h_dt: float = 1e-3
    jobs: int = 1


@dataclass
class VEstimate:
    value: float
    stderr: float
    v_min: float
    segments: list = field(default_factory=list)
    method: str = "conditional"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _node(args):
    """Per-node means and variances for every term (picklable worker).

    A term is a tuple of ``(coef, i, j)`` and stands for the integrand
    ``sum coef * f_i(B1) * f_j(B2)``.
    """
    spec, fs, terms, v, k, opts = args
    law = waiting_law(spec)
    rng = derived_rng(opts.seed, k)
    n = opts.n_per_node
    c, bbar, alive, r1, r2 = _states(spec, law, v, n, rng)
    if opts.method == "conditional":
        tmax = max(30.0, -v + 2 * law.b + 1.0)
        maps = [residual_map(law, f, t_max=tmax, dt=opts.h_dt) for f in fs]
        one = [m(r1) for m in maps]
        two = [m(r2) for m in maps]
    elif opts.method == "simulate":
        b1, b2 = _overshoot(law, r1, rng), _overshoot(law, r2, rng)
        one = [f(b1) for f in fs]
        two = [f(b2) for f in fs]
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    scale = math.exp(-v)
    out = []
    for term in terms:
        x = np.zeros(n)
        for coef, i, j in term:
            x = x + coef * (one[i] * two[j])
        x = np.where(alive, x, 0.0) * scale
        m = math.fsum(x) / n
        var = math.fsum((x - m) ** 2) / max(n - 1, 1)
        out.append((m, var / n))
    return out


def v_sweep(spec: MeasureSpec, fs, terms, opts: VOptions = VOptions(), n_primary: int | None = None):
    """Integrate several kernel terms over ``v`` on shared node samples.

    Parameters
    ----------
    fs : list of Fn
        Residual-side functions.
    terms : list
        Each term is a tuple of ``(coef, i, j)``; a pair ``(i, j)`` is
        accepted as shorthand for ``((1.0, i, j),)``.
    n_primary : int, optional
        Only the first ``n_primary`` terms drive the tail-stopping rule.

    Returns
    -------
    list of VEstimate
    """
    law = waiting_law(spec)
    fs = [as_fn(f) for f in fs]
    terms = [((1.0, t[0], t[1]),) if isinstance(t[0], (int, np.integer)) else tuple(t) for t in terms]
    if opts.strict:
        for f in fs:
            m = eta_integral(law, f)
            if abs(m) > 1e-8:
                raise DomainError(f"{f.name} is not eta-centered (eta = {m:.3g})")
    per_seg = int(math.ceil(law.b / opts.dv))
    h = law.b / per_seg
    P = len(terms)
    n_primary = P if n_primary is None else n_primary
    nodes = []

    def run_nodes(ks):
        args = [(spec, tuple(fs), tuple(terms), law.b - k * h, k, opts) for k in ks]
        nodes.extend(pmap(_node, args, opts.jobs))

    def segment(j):
        lo = j * per_seg
        vals, vars_ = [], []
        for p in range(P):
            val = var = 0.0
            for idx in range(lo, lo + per_seg + 1):
                w = h * (0.5 if idx in (lo, lo + per_seg) else 1.0)
                m, vv = nodes[idx][p]
                val += w * m
                var += w * w * vv
            vals.append(val)
            vars_.append(var)
        return vals, vars_

    run_nodes(range(0, per_seg + 1))
    segs = [segment(0)]
    j = 0
    while True:
        totals = [math.fsum(s[0][p] for s in segs) for p in range(P)]
        done = j >= 1 and all(abs(segs[-1][0][p]) < max(opts.tail_rel * abs(totals[p]), opts.tail_floor)
                              for p in range(n_primary))
        if done:
            break
        if j >= opts.max_extensions:
            raise TailFailure(f"tail did not settle after {j} extensions", _assemble(nodes, segs, law.b, h, opts))
        j += 1
        run_nodes(range(j * per_seg + 1, (j + 1) * per_seg + 1))
        segs.append(segment(j))
    return _assemble(nodes, segs, law.b, h, opts)


def _assemble(nodes, segs, b, h, opts):
    n_nodes = len(nodes)
    P = len(nodes[0])
    ests = []
    for p in range(P):
        var = 0.0
        vals = []
        for idx in range(n_nodes):
            w = h * (0.5 if idx in (0, n_nodes - 1) else 1.0)
            m, vv = nodes[idx][p]
            vals.append(w * m)
            var += w * w * vv
        seg_list = [dict(v_lo=b - (s + 1) * b, v_hi=b - s * b, contribution=segs[s][0][p],
                         stderr=math.sqrt(segs[s][1][p])) for s in range(len(segs))]
        ests.append(VEstimate(math.fsum(vals), math.sqrt(var), b - len(segs) * b, seg_list, opts.method))
    return ests


def v_kernel(spec: MeasureSpec, law, f, g, opts: VOptions = VOptions()) -> VEstimate:
    """Estimate ``V(f, g)`` for residual-side functions ``f, g`` on ``[0, b]``.

    Examples
    --------
    >>> from fragclt.dislocation import MeasureSpec
    >>> from fragclt.functions import Const
    >>> spec = MeasureSpec.binary_uniform(0.3)
    >>> v_kernel(spec, None, Const(0.0), Const(0.0)).value
    0.0
    """
    return v_sweep(spec, [f, g], [(0, 1)], opts)[0]


@dataclass
class VMatrix:
    """Symmetrised kernel matrix with per-entry standard errors.

    ``raw[i, j]`` is ``V(f_i, f_j)``; ``asymmetry[i, j]`` is
    ``V(f_i, f_j) - V(f_j, f_i)``, integrated on the same samples.
    """

    value: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    raw_stderr: np.ndarray
    asymmetry: np.ndarray
    asymmetry_stderr: np.ndarray
    v_min: float = 0.0

    def to_dict(self) -> dict:
        out = {k: np.asarray(v).tolist() for k, v in asdict(self).items() if k != "v_min"}
        out["v_min"] = self.v_min
        return out


def v_matrix(spec: MeasureSpec, law, fs, opts: VOptions = VOptions()) -> VMatrix:
    """``V_sym(f_i, f_j) = (V(f_i, f_j) + V(f_j, f_i)) / 2`` for all i, j."""
    fs = [as_fn(f) for f in fs]
    k = len(fs)
    idx = [(i, j) for i in range(k) for j in range(i, k)]
    sym_terms = [((0.5, i, j), (0.5, j, i)) for i, j in idx]
    raw_terms = [((1.0, i, j),) for i in range(k) for j in range(k)]
    asym_terms = [((1.0, i, j), (-1.0, j, i)) for i, j in idx if i < j]
    ests = v_sweep(spec, fs, sym_terms + raw_terms + asym_terms, opts, n_primary=len(sym_terms) + len(raw_terms))
    sym = np.zeros((k, k))
    se = np.zeros((k, k))
    for (i, j), e in zip(idx, ests[: len(idx)]):
        sym[i, j] = sym[j, i] = e.value
        se[i, j] = se[j, i] = e.stderr
    rest = ests[len(idx):]
    raw = np.array([e.value for e in rest[: k * k]]).reshape(k, k)
    raw_se = np.array([e.stderr for e in rest[: k * k]]).reshape(k, k)
    asym = np.zeros((k, k))
    asym_se = np.zeros((k, k))
    for (i, j), e in zip([p for p in idx if p[0] < p[1]], rest[k * k:]):
        asym[i, j], asym[j, i] = e.value, -e.value
        asym_se[i, j] = asym_se[j, i] = e.stderr
    return VMatrix(sym, se, raw, raw_se, asym, asym_se, ests[0].v_min)
