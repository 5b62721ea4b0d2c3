"""Config-driven experiments with structured, reproducible reports.

Every experiment reads one section of a YAML file (see ``DEFAULTS`` for
the schema), derives all random streams from ``(seed, experiment id,
rung, chunk)`` and reduces chunk results in a fixed order, so a report
depends only on the configuration and the seed, never on ``jobs``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml
from scipy import integrate, stats

from . import __version__
from .coupled_pair import VOptions, sample_eta_primes, v_kernel
from .dislocation import MeasureSpec, sample_waiting, waiting_law
from .errors import ConfigurationError
from .functions import Const, Fn, Identity, Indicator, Phi, Polynomial
from .limit_stats import center, covariance_K, gamma_infinity, pair_partition_count
from .parallel import pmap
from .renewal import (DecayRow, advance, eta, eta_integral, exact_decay, finish_decay_report, probe_point,
                      sample_stationary_states, simulate_residuals)
from .streams import derived_rng
from .tagging import genealogy_samples, simulate_tagged_batch
from .tree_sim import gamma, simulate_frozen, u_statistic_odot

EXPERIMENT_IDS = {"simulate": 1, "lln": 2, "clt": 3, "pairing": 4, "renewal": 5, "xval": 6}

DEFAULTS = {
    "measure": {"family": "binary_uniform", "c": 0.3},
    "thresholds": {"ks_level": 0.01, "ci_sigmas": 4.0, "var_band": [0.8, 1.2], "chi2_level": 0.01},
    "simulate": {"epsilons": [1e-2, 1e-3, 1e-4], "replicas": 20, "dump_rows": 0},
    "lln": {"T": [6.0, 9.0, 12.0], "replicas": 50, "function": "identity", "bound": 0.01},
    "clt": {
        "epsilon": 1e-4, "replicas": 2000, "chunk": 100, "min_replicas": 500,
        "functions": ["identity", {"indicator": [0.5, 1.0]}],
        "v": {"dv": 0.05, "n_per_node": 20000, "method": "conditional"},
        "v_rel_stderr_max": 0.05,
    },
    "pairing": {
        "epsilons": [1e-2, 1e-3, 1e-4], "qs": [2, 3, 4], "function": "identity",
        "replicas": {2: 100000, 3: [50000, 50000, 200000], 4: [100000, 100000, 1000000]}, "chunk": 50000,
        "v": {"dv": 0.05, "n_per_node": 20000, "method": "conditional"},
    },
    "renewal": {
        "t_grid": [1, 2, 3, 4, 5, 6, 7, 8], "replicas": 1000000, "chunk": 250000,
        "function": {"indicator": ["a", "mid"]}, "estimator": "exact", "r2_min": None,
        "stationarity": {"n": 100000, "t": 5.0},
        "eta_check": {"n": 1000000, "x": [0.5, 0.8, 1.1]},
        "self_test": False, "perturb": 0.05,
    },
    "xval": {
        "subtests": ["marginal", "transfer", "eta_prime", "odot"],
        "marginal": {"epsilon": 1e-4, "n": 100000},
        "transfer": {"epsilon": 1e-3, "tags_per_run": 50, "splits": 200000, "bins": 10},
        "eta_prime": {"epsilon": 1e-3, "v0": 3.0, "runs": 100000},
        "odot": {"epsilon": 0.05, "runs": 5},
        "negative_control": False,
    },
}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Validated settings for one experiment run."""

    kind: str
    measure: MeasureSpec
    seed: int
    params: dict
    thresholds: dict
    jobs: int = 1
    out: str | None = None
    fmt: str = "json"

    def canonical(self) -> dict:
        return {"kind": self.kind, "measure": self.measure.to_dict(), "seed": self.seed,
                "params": _plain(self.params), "thresholds": _plain(self.thresholds)}

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def rng(self, *key) -> np.random.Generator:
        return derived_rng(self.seed, EXPERIMENT_IDS[self.kind], *key)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping of sections")
    return raw


def make_config(kind: str, raw: dict | None = None, seed: int | None = None, jobs: int = 1,
                out: str | None = None, fmt: str = "json") -> ExperimentConfig:
    """Merge defaults with a parsed file and validate one experiment section."""
    if kind not in EXPERIMENT_IDS:
        raise ConfigurationError(f"unknown experiment {kind!r}")
    raw = raw or {}
    measure = MeasureSpec.from_dict(_merge(DEFAULTS["measure"], raw.get("measure", {})))
    try:
        measure.check()
    except ConfigurationError:
        raise
    params = _merge(DEFAULTS[kind], raw.get(kind, {}))
    thresholds = _merge(DEFAULTS["thresholds"], raw.get("thresholds", {}))
    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise ConfigurationError("a seed is required (config 'seed' or --seed)")
    if jobs < 1:
        raise ConfigurationError("jobs must be at least 1")
    cfg = ExperimentConfig(kind, measure, int(seed), params, thresholds, int(jobs), out or raw.get("out"), fmt)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    p = cfg.params
    delta = waiting_law(cfg.measure).delta

    def eps_ok(values, what):
        if not values:
            raise ConfigurationError(f"{what}: empty ladder")
        for e in values:
            if not (0.0 < float(e) < delta):
                raise ConfigurationError(f"{what}: epsilon {e} must lie in (0, {delta})")

    def positive(n, what):
        if int(n) < 1:
            raise ConfigurationError(f"{what} must be at least 1")

    if cfg.kind == "simulate":
        eps_ok(p["epsilons"], "simulate.epsilons")
        positive(p["replicas"], "simulate.replicas")
    elif cfg.kind == "lln":
        T = p["T"]
        if not T:
            raise ConfigurationError("lln.T: empty ladder")
        if len(T) < 3:
            raise ConfigurationError("lln.T needs at least 3 rungs")
        eps_ok([math.exp(-t) for t in T], "lln.T")
        positive(p["replicas"], "lln.replicas")
    elif cfg.kind == "clt":
        eps_ok([p["epsilon"]], "clt.epsilon")
        if int(p["replicas"]) < int(p["min_replicas"]):
            raise ConfigurationError(f"clt.replicas must be at least {p['min_replicas']}")
        if not p["functions"]:
            raise ConfigurationError("clt.functions is empty")
    elif cfg.kind == "pairing":
        eps_ok(p["epsilons"], "pairing.epsilons")
        for q in p["qs"]:
            if int(q) not in (2, 3, 4):
                raise ConfigurationError("pairing.qs must be drawn from {2, 3, 4}")
            for i in range(len(p["epsilons"])):
                positive(_replicas_for(p, q, i), f"pairing.replicas[{q}]")
    elif cfg.kind == "renewal":
        if len(p["t_grid"]) < 2:
            raise ConfigurationError("renewal.t_grid needs at least two points")
        positive(p["replicas"], "renewal.replicas")
    elif cfg.kind == "xval":
        known = {"marginal", "transfer", "eta_prime", "odot"}
        bad = set(p["subtests"]) - known
        if bad or not p["subtests"]:
            raise ConfigurationError(f"xval.subtests must be a non-empty subset of {sorted(known)}")


def parse_function(item, law=None) -> Fn:
    """Build a function from its config form.

    Accepted forms: ``"identity"``, ``"one"``, ``"zero"``,
    ``{"indicator": [lo, hi]}``, ``{"polynomial": [c0, c1, ...]}``,
    ``{"constant": v}``. Indicator bounds may be the tokens ``"a"``,
    ``"b"`` or ``"mid"`` (resolved against the waiting law).
    """
    if isinstance(item, str):
        named = {"identity": Identity(), "one": Const(1.0), "zero": Const(0.0)}
        if item in named:
            return named[item]
        raise ConfigurationError(f"unknown function {item!r}")
    if isinstance(item, dict) and len(item) == 1:
        (key, val), = item.items()
        if key == "indicator":
            lo, hi = (_token(v, law) for v in val)
            return Indicator(lo, hi)
        if key == "polynomial":
            return Polynomial(tuple(float(c) for c in val))
        if key == "constant":
            return Const(float(val))
    raise ConfigurationError(f"cannot parse function {item!r}")


def _token(v, law):
    if isinstance(v, str):
        if law is None:
            raise ConfigurationError("symbolic bounds need a waiting law")
        table = {"a": law.a, "b": law.b, "mid": 0.5 * (law.a + law.b)}
        if v not in table:
            raise ConfigurationError(f"unknown bound token {v!r}")
        return table[v]
    return float(v)


def _replicas_for(p, q, rung=-1):
    """Replica count for moment order q; a list value gives one count per rung."""
    r = p["replicas"]
    if isinstance(r, dict):
        r = r.get(q, r.get(str(q), 0))
    if isinstance(r, (list, tuple)):
        if len(r) != len(p["epsilons"]):
            raise ConfigurationError("pairing.replicas lists need one entry per epsilon")
        return int(r[rung])
    return int(r)


def _vopts(p: dict, seed: int, jobs: int = 1) -> VOptions:
    v = dict(p.get("v", {}))
    allowed = {f for f in VOptions.__dataclass_fields__} - {"seed", "jobs"}
    bad = set(v) - allowed
    if bad:
        raise ConfigurationError(f"unknown kernel options {sorted(bad)}")
    return VOptions(seed=seed, jobs=jobs, **v)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Verdict:
    name: str
    passed: bool
    value: object
    tolerance: object
    rule: str


@dataclass
class ExperimentReport:
    """Estimates, statistics and verdicts of one run.

    ``estimates`` map names to ``{"value", "stderr"}`` or
    ``{"value", "exact": True}``; ``tables`` hold plot-ready rows that
    are also written as CSV.
    """

    experiment: str
    estimates: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def estimate(self, name, value, stderr=None):
        if stderr is None:
            self.estimates[name] = {"value": float(value), "exact": True}
        else:
            self.estimates[name] = {"value": float(value), "stderr": float(stderr)}

    def verdict(self, name, passed, value, tolerance, rule):
        self.verdicts.append(Verdict(name, bool(passed), _num(value), _num(tolerance), rule))
        return bool(passed)

    def to_dict(self, with_tables: bool = True) -> dict:
        d = {"experiment": self.experiment, "passed": self.passed, "estimates": self.estimates,
             "statistics": _plain_num(self.statistics), "verdicts": [asdict(v) for v in self.verdicts],
             "provenance": self.provenance}
        if with_tables:
            d["tables"] = _plain_num(self.tables)
        return d

    def to_json(self, with_tables: bool = True) -> str:
        return json.dumps(self.to_dict(with_tables), indent=2, sort_keys=True)

    def table_csv(self, name: str) -> str:
        rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if rows:
            cols = list(rows[0].keys())
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def write(self, out_dir: str, fmt: str = "json") -> list:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        path = os.path.join(out_dir, f"{self.experiment}_report.json")
        with open(path, "w") as fh:
            fh.write(self.to_json(with_tables=(fmt == "json")))
        written.append(path)
        if fmt == "csv":
            for name in self.tables:
                p = os.path.join(out_dir, f"{name}.csv")
                with open(p, "w") as fh:
                    fh.write(self.table_csv(name))
                written.append(p)
        return written


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    return x


def _num(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, np.ndarray):
        return _num(x.tolist())
    return x


def _plain_num(x):
    if isinstance(x, dict):
        return {str(k): _plain_num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain_num(v) for v in x]
    return _num(x)


def _new_report(cfg: ExperimentConfig) -> ExperimentReport:
    return ExperimentReport(cfg.kind, provenance={"config_hash": cfg.hash(), "seed": cfg.seed,
                                                  "version": __version__, "measure": cfg.measure.to_dict()})


def _mean_se(x):
    x = np.asarray(x, float)
    n = x.size
    m = math.fsum(x) / n
    if n < 2:
        return m, float("nan")
    return m, math.sqrt(math.fsum((x - m) ** 2) / (n - 1) / n)


def _chunks(n: int, size: int):
    out, start = [], 0
    while start < n:
        out.append((start, min(size, n - start)))
        start += size
    return out


# ---------------------------------------------------------------------------
# workers (top level so they can be shipped to processes)


def _tree_worker(args):
    spec, eps, fs, seed, key, replicas = args
    rows = []
    for r in replicas:
        rng = derived_rng(seed, *key, r)
        run = simulate_frozen(spec, eps, rng)
        rows.append((run.count, math.fsum(run.sizes), float(run.sizes.min()), float(run.sizes.max()),
                     [gamma(run, f) for f in fs]))
    return rows


def _tree_rows(cfg, eps, fs, rung, n, chunk=25):
    groups = [list(range(s, s + m)) for s, m in _chunks(n, chunk)]
    key = (EXPERIMENT_IDS[cfg.kind], rung)
    args = [(cfg.measure, eps, tuple(fs), cfg.seed, key, g) for g in groups]
    return [row for part in pmap(_tree_worker, args, cfg.jobs) for row in part]


def _moment_worker(args):
    spec, eps, fs, seed, key, n = args
    vals = genealogy_samples(spec, eps, list(fs), n, derived_rng(seed, *key))
    return math.fsum(vals), math.fsum(vals * vals), n


def _probe_worker(args):
    spec, g, t, estimator, seed, key, n = args
    law = waiting_law(spec)
    return probe_point(law, g, t, n, derived_rng(seed, *key), estimator)


# ---------------------------------------------------------------------------
# experiments


def run_simulate(cfg: ExperimentConfig) -> ExperimentReport:
    """Frozen-tree invariants over an epsilon ladder."""
    rep = _new_report(cfg)
    law = waiting_law(cfg.measure)
    p = cfg.params
    table = []
    for i, eps in enumerate(p["epsilons"]):
        eps = float(eps)
        rows = _tree_rows(cfg, eps, [Identity()], i, int(p["replicas"]))
        counts = np.array([r[0] for r in rows])
        dev = max(abs(r[1] - 1.0) for r in rows)
        lo = min(r[2] for r in rows)
        hi = max(r[3] for r in rows)
        g = [r[4][0] for r in rows]
        m, se = _mean_se(counts)
        rep.estimate(f"count[{eps:g}]", m, se)
        gm, gse = _mean_se(g)
        rep.estimate(f"gamma_identity[{eps:g}]", gm, gse)
        rep.verdict(f"conservation[{eps:g}]", dev <= 1e-9, dev, 1e-9, "max |sum of sizes - 1| <= tol")
        rep.verdict(f"support[{eps:g}]", lo >= law.delta * eps * (1 - 1e-12) and hi < eps, [lo, hi],
                    [law.delta * eps, eps], "all sizes in [delta*eps, eps)")
        ok = bool(np.all((counts > 1 / eps) & (counts <= 1 / (law.delta * eps) * (1 + 1e-12))))
        rep.verdict(f"count_range[{eps:g}]", ok, [int(counts.min()), int(counts.max())],
                    [1 / eps, 1 / (law.delta * eps)], "counts in (1/eps, 1/(delta*eps)]")
        for r, row in enumerate(rows):
            table.append({"epsilon": eps, "replica": r, "count": row[0], "sum": row[1], "min": row[2],
                          "max": row[3], "gamma_identity": row[4][0]})
    rep.tables["simulate_runs"] = table
    if int(p.get("dump_rows", 0)) > 0:
        run = simulate_frozen(cfg.measure, float(p["epsilons"][0]), cfg.rng(0, 0))
        rep.tables["fragments"] = [{"size": float(x), "size_over_eps": float(x / run.epsilon)}
                                   for x in run.sizes[: int(p["dump_rows"])]]
    return rep


def run_lln(cfg: ExperimentConfig) -> ExperimentReport:
    """Mean ``|gamma_T(f) - gamma_inf(f)|`` along a ladder of T."""
    rep = _new_report(cfg)
    law = waiting_law(cfg.measure)
    p = cfg.params
    f = parse_function(p["function"], law)
    ginf = gamma_infinity(law, f)
    rep.estimate("gamma_infinity", ginf)
    table, means = [], []
    for i, T in enumerate(p["T"]):
        eps = math.exp(-float(T))
        rows = _tree_rows(cfg, eps, [f], i, int(p["replicas"]))
        err = [abs(r[4][0] - ginf) for r in rows]
        m, se = _mean_se(err)
        means.append(m)
        table.append({"T": float(T), "mean_abs_err": m, "stderr": se})
        rep.estimate(f"mean_abs_err[T={float(T):g}]", m, se)
    rep.tables["lln_ladder"] = table
    dec = all(b < a for a, b in zip(means, means[1:]))
    rep.verdict("decreasing", dec, means, None, "mean absolute error strictly decreases along the ladder")
    bound = float(p["bound"])
    rep.verdict("final_bound", means[-1] < bound, means[-1], bound, "final-rung mean absolute error < bound")
    return rep


class ExperimentAbort(RuntimeError):
    """Raised when an experiment cannot produce meaningful output."""


def run_clt(cfg: ExperimentConfig) -> ExperimentReport:
    """Gaussian fluctuations of ``eps^{-1/2} gamma_T(f_i)`` against K."""
    rep = _new_report(cfg)
    law = waiting_law(cfg.measure)
    th = cfg.thresholds
    p = cfg.params
    eps = float(p["epsilon"])
    fs = [center(law, parse_function(x, law)) for x in p["functions"]]
    k = len(fs)
    model = covariance_K(cfg.measure, law, fs, _vopts(p, cfg.seed, cfg.jobs))
    K, Kse = model.K, model.K_stderr
    for i in range(k):
        if abs(K[i, i]) <= 4 * Kse[i, i] + 1e-14:
            raise ExperimentAbort(f"zero asymptotic variance for {fs[i].name}: K = {K[i, i]:.3g}")
        if K[i, i] < 0:
            raise ExperimentAbort(f"negative asymptotic variance for {fs[i].name}: "
                                  f"K = {K[i, i]:.3g} +- {Kse[i, i]:.2g}")
    rep.statistics["K"] = K
    rep.statistics["K_stderr"] = Kse
    rep.statistics["eta_part"] = model.eta_part
    rep.statistics["v_part"] = model.v_part
    rep.statistics["v_asymmetry"] = model.v_matrix.asymmetry
    rep.statistics["v_asymmetry_stderr"] = model.v_matrix.asymmetry_stderr
    rep.statistics["negative_diagonal"] = model.negative_diagonal
    rep.statistics["scaling"] = "per component eps^-1/2"
    rmax = float(p["v_rel_stderr_max"])
    for i in range(k):
        rep.estimate(f"K[{i},{i}]", K[i, i], Kse[i, i])
        rel = model.v_matrix.stderr[i, i] / abs(model.v_part[i, i]) if model.v_part[i, i] else float("inf")
        rep.verdict(f"v_part_precision[{i}]", rel < rmax, rel, rmax, "V-part stderr / |V-part| < tol")
    n = int(p["replicas"])
    rows = _tree_rows(cfg, eps, [f.handle for f in fs], 0, n, chunk=int(p["chunk"]))
    X = np.array([r[4] for r in rows]) / math.sqrt(eps)
    emp = np.cov(X, rowvar=False, ddof=1).reshape(k, k)
    rep.statistics["empirical_cov"] = emp
    lo, hi = th["var_band"]
    qq = []
    for i in range(k):
        z = X[:, i] / math.sqrt(K[i, i])
        ks = stats.kstest(z, "norm")
        rep.statistics[f"ks[{i}]"] = {"D": ks.statistic, "p": ks.pvalue}
        rep.verdict(f"normality[{i}]", ks.pvalue > th["ks_level"], ks.pvalue, th["ks_level"],
                    "KS p-value of standardized samples vs N(0,1) > level")
        ratio = emp[i, i] / K[i, i]
        rep.estimate(f"var_ratio[{i}]", ratio, ratio * math.sqrt(2.0 / (n - 1)))
        rep.verdict(f"variance_ratio[{i}]", lo <= ratio <= hi, ratio, [lo, hi], "empirical var / K in band")
        zs = np.sort(z)
        theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        qq.extend({"component": i, "theoretical": float(a), "empirical": float(b)} for a, b in zip(theo, zs))
    if k >= 2:
        sig = float(th["ci_sigmas"])
        for i in range(k):
            for j in range(i + 1, k):
                rho_e = emp[i, j] / math.sqrt(emp[i, i] * emp[j, j])
                rho_k = K[i, j] / math.sqrt(K[i, i] * K[j, j])
                se_e = (1 - rho_e**2) / math.sqrt(n - 3)
                # delta method on rho_K with independent entry errors
                d_ij = 1 / math.sqrt(K[i, i] * K[j, j])
                d_ii = -0.5 * rho_k / K[i, i]
                d_jj = -0.5 * rho_k / K[j, j]
                se_k = math.sqrt((d_ij * Kse[i, j]) ** 2 + (d_ii * Kse[i, i]) ** 2 + (d_jj * Kse[j, j]) ** 2)
                joint = math.hypot(se_e, se_k)
                rep.estimate(f"corr_empirical[{i},{j}]", rho_e, se_e)
                rep.estimate(f"corr_K[{i},{j}]", rho_k, se_k)
                rep.verdict(f"correlation[{i},{j}]", abs(rho_e - rho_k) <= sig * joint, abs(rho_e - rho_k),
                            sig * joint, "|empirical corr - K corr| <= sigmas * joint stderr")
    rep.tables["clt_samples"] = [{"replica": r, "component": i, "value": float(X[r, i])}
                                 for r in range(n) for i in range(k)]
    rep.tables["clt_qq"] = qq
    return rep


def run_pairing_check(cfg: ExperimentConfig) -> ExperimentReport:
    """Scaled tagged moments against their pair-partition limits."""
    rep = _new_report(cfg)
    law = waiting_law(cfg.measure)
    p = cfg.params
    sig = float(cfg.thresholds["ci_sigmas"])
    f = center(law, parse_function(p["function"], law))
    rf = Phi(f.handle)
    vo = _vopts(p, cfg.seed, cfg.jobs)
    V = v_kernel(cfg.measure, law, rf, rf, vo)
    rep.estimate("V", V.value, V.stderr)
    table = []
    chunk = int(p["chunk"])
    for q in p["qs"]:
        q = int(q)
        if q % 2 == 0:
            npair = pair_partition_count(q)
            lim = npair * V.value ** (q // 2)
            lim_se = npair * (q // 2) * abs(V.value) ** (q // 2 - 1) * V.stderr
        else:
            lim, lim_se = 0.0, 0.0
        rep.estimate(f"limit[q={q}]", lim, lim_se)
        last = None
        for i, eps in enumerate(p["epsilons"]):
            eps = float(eps)
            n = _replicas_for(p, q, i)
            args = [(cfg.measure, eps, tuple([rf] * q), cfg.seed, (EXPERIMENT_IDS["pairing"], q, i, c), m)
                    for c, (_, m) in enumerate(_chunks(n, chunk))]
            parts = pmap(_moment_worker, args, cfg.jobs)
            s1 = math.fsum(x[0] for x in parts)
            s2 = math.fsum(x[1] for x in parts)
            mean = s1 / n
            se = math.sqrt(max(s2 / n - mean * mean, 0.0) / (n - 1))
            scale = eps ** (-q / 2)
            row = {"q": q, "epsilon": eps, "scaled": mean * scale, "stderr": se * scale, "limit": lim,
                   "limit_stderr": lim_se, "replicas": n}
            table.append(row)
            rep.estimate(f"scaled_moment[q={q},eps={eps:g}]", mean * scale, se * scale)
            last = row
        joint = math.hypot(last["stderr"], lim_se)
        dev = abs(last["scaled"] - lim)
        rep.verdict(f"limit[q={q}]", dev <= sig * joint, dev, sig * joint,
                    "final rung within sigmas * joint stderr of the limit")
    rep.tables["pairing_ladder"] = table
    return rep


def run_renewal_check(cfg: ExperimentConfig) -> ExperimentReport:
    """Decay probe, stationarity and eta identities for the waiting law."""
    rep = _new_report(cfg)
    law = waiting_law(cfg.measure)
    p = cfg.params
    th = cfg.thresholds
    sig = float(th["ci_sigmas"])
    mass = integrate.quad(lambda y: float(law.density(y)), law.a, law.b, epsabs=0, epsrel=1e-12)[0]
    rep.estimate("pi_mass", mass)
    rep.verdict("pi_mass", abs(mass - 1) <= 1e-9, mass, 1e-9, "|integral of pi - 1| <= tol")
    mu_q = integrate.quad(lambda y: y * float(law.density(y)), law.a, law.b, epsabs=0, epsrel=1e-12)[0]
    rep.estimate("mu", law.mu)
    rep.estimate("mu_quadrature", mu_q)
    rep.verdict("mu", abs(law.mu - mu_q) <= 1e-9, abs(law.mu - mu_q), 1e-9,
                "|closed-form mu - quadrature mu| <= tol")
    # eta: closed density against Monte Carlo of the defining double expectation
    mu_used = law.mu * (1 + float(p["perturb"])) if p["self_test"] else law.mu
    ec = p["eta_check"]
    n = int(ec["n"])
    rng = cfg.rng(1)
    Y = sample_waiting(law, rng, size=n)
    s = rng.random(n) * law.b
    em = eta(law)
    for x in ec["x"]:
        x = float(x)
        vals = law.b / law.mu * ((Y - s > 0) & (Y - s <= x))
        m, se = _mean_se(vals)
        closed = float(em.cdf(x)) * law.mu / mu_used
        rep.estimate(f"eta_cdf_mc[{x:g}]", m, se)
        rep.estimate(f"eta_cdf_closed[{x:g}]", closed)
        rep.verdict(f"eta_density[{x:g}]", abs(m - closed) <= sig * se, abs(m - closed), sig * se,
                    "closed-form eta mass of [0,x] within sigmas of Monte Carlo")
    # stationarity
    st = p["stationarity"]
    n = int(st["n"])
    age, res = sample_stationary_states(law, n, cfg.rng(2))
    _, res_t = advance(law, age, res, float(st["t"]), cfg.rng(3))
    age2, res2 = sample_stationary_states(law, n, cfg.rng(4))
    ks = stats.ks_2samp(res2, res_t)
    rep.statistics["stationarity_ks"] = {"D": ks.statistic, "p": ks.pvalue}
    rep.verdict("stationarity", ks.pvalue > th["ks_level"], ks.pvalue, th["ks_level"],
                "two-sample KS p-value of residuals at t=0 and t>0 > level")
    # decay probe
    g = parse_function(p["function"], law)
    shift = eta_integral(law, g)
    auto = abs(shift) > 1e-8
    gc = g - shift if auto else g
    if p["estimator"] == "exact":
        dec = exact_decay(law, gc, p["t_grid"], auto, shift if auto else 0.0)
    else:
        dec = _sampled_decay(cfg, gc, auto, shift)
    rep.tables["renewal_decay"] = [asdict(r) for r in dec.rows]
    rep.statistics["decay"] = dec.summary()
    ok_slope = dec.status == "ok" and dec.slope < 0
    rep.verdict("decay_slope", ok_slope, dec.slope, 0.0,
                "fitted slope of log|E g(B_t)| < 0 (needs >= 2 points above 3 sigma)")
    r2_min = p.get("r2_min")
    if r2_min is not None:
        rep.verdict("decay_r2", dec.status == "ok" and dec.r2 > float(r2_min), dec.r2, float(r2_min),
                    "r^2 of the decay fit > tol")
    return rep


def _sampled_decay(cfg, gc, auto, shift):
    p = cfg.params
    if p["estimator"] not in ("plain", "conditional"):
        raise ConfigurationError(f"unknown estimator {p['estimator']!r}")
    n = int(p["replicas"])
    chunks = _chunks(n, int(p["chunk"]))
    rows = []
    for ti, t in enumerate(p["t_grid"]):
        args = [(cfg.measure, gc, float(t), p["estimator"], cfg.seed, (EXPERIMENT_IDS["renewal"], 10, ti, c), m)
                for c, (_, m) in enumerate(chunks)]
        parts = pmap(_probe_worker, args, cfg.jobs)
        s1 = math.fsum(x[0] for x in parts)
        s2 = math.fsum(x[1] for x in parts)
        mean = s1 / n
        var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        rows.append(DecayRow(float(t), mean, math.sqrt(var / n), False))
    return finish_decay_report(rows, auto, shift if auto else 0.0, p["estimator"], n)


def run_cross_validation(cfg: ExperimentConfig) -> ExperimentReport:
    """Tree-side against renewal-side and kernel-side constructions."""
    rep = _new_report(cfg)
    spec = cfg.measure
    law = waiting_law(spec)
    p = cfg.params
    th = cfg.thresholds
    bad_law = waiting_law(MeasureSpec.from_dict({**spec.to_dict(), "c": spec.c + 0.02})) if p["negative_control"] else law
    if "marginal" in p["subtests"]:
        mp = p["marginal"]
        eps, n = float(mp["epsilon"]), int(mp["n"])
        tree = simulate_tagged_batch(spec, eps, 1, n, cfg.rng(1)).residuals[:, 0]
        _, ren = simulate_residuals(bad_law, -math.log(eps), n, cfg.rng(2))
        ks = stats.ks_2samp(tree, ren)
        rep.statistics["marginal_ks"] = {"D": ks.statistic, "p": ks.pvalue, "n": n}
        rep.verdict("marginal", ks.pvalue > th["ks_level"], ks.pvalue, th["ks_level"],
                    "two-sample KS of tree B_T vs renewal B_T, p > level")
    if "transfer" in p["subtests"]:
        tp = p["transfer"]
        ratios = _transfer_ratios(spec, float(tp["epsilon"]), int(tp["tags_per_run"]), int(tp["splits"]), cfg)
        chi2, dof, pval = _transfer_chi2(ratios, int(tp["bins"]), spec.c)
        rep.statistics["transfer_chi2"] = {"chi2": chi2, "dof": dof, "p": pval, "splits": int(ratios.size)}
        rep.verdict("transfer", pval > th["chi2_level"], pval, th["chi2_level"],
                    "binned chi^2 of tag-follows-child frequency vs child proportion, p > level")
    if "eta_prime" in p["subtests"]:
        ep = p["eta_prime"]
        c, bbar, res2 = _separation_sample(spec, float(ep["epsilon"]), float(ep["v0"]), int(ep["runs"]), cfg)
        model = sample_eta_primes(spec, c, bbar, cfg.rng(6))
        if p["negative_control"]:
            model = model * 1.1
        ks = stats.ks_2samp(res2, model)
        rep.statistics["eta_prime_ks"] = {"D": ks.statistic, "p": ks.pvalue, "n": int(res2.size)}
        rep.verdict("eta_prime", ks.pvalue > th["ks_level"], ks.pvalue, th["ks_level"],
                    "two-sample KS of tree tag-2 residual vs eta' sampler, p > level")
    if "odot" in p["subtests"]:
        op = p["odot"]
        worst = 0.0
        fs = [Identity(), Indicator(0.5, 1.0)]
        for r in range(int(op["runs"])):
            run = simulate_frozen(spec, float(op["epsilon"]), cfg.rng(7, r))
            fast = u_statistic_odot(run, fs, 2)
            dense = u_statistic_odot(run, lambda x, y: fs[0](x) * fs[1](y), 2)
            worst = max(worst, abs(fast - dense))
        rep.statistics["odot_max_abs_diff"] = worst
        rep.verdict("odot", worst <= 1e-12, worst, 1e-12, "inclusion-exclusion equals brute force")
    return rep


def _transfer_ratios(spec, eps, tags_per_run, splits, cfg):
    """Chosen-child proportions at tagged splits of interval-mode trees.

    Each split is counted once, through the lowest-index tag that
    passed through it; that tag's position inside the node is uniform
    and independent of the split.
    """
    got, out, r = 0, [], 0
    while got < splits:
        rng = cfg.rng(3, r)
        run = simulate_frozen(spec, eps, rng, tags=rng.random(tags_per_run))
        seen = set()
        for path in run.tag_paths:
            for (g0, s0, l0), (_, _, l1) in zip(path, path[1:]):
                if (g0, s0) in seen:
                    continue
                seen.add((g0, s0))
                out.append(math.exp(l0 - l1))
        got = len(out)
        r += 1
    return np.array(out[:splits])


def _transfer_chi2(ratios, bins, c):
    big = np.maximum(ratios, 1 - ratios)
    chose_big = ratios >= 0.5
    edges = np.linspace(0.5, 1 - c, bins + 1)
    idx = np.clip(np.searchsorted(edges, big, side="right") - 1, 0, bins - 1)
    chi2 = 0.0
    used = 0
    for k in range(bins):
        m = idx == k
        if m.sum() < 50:
            continue
        obs = chose_big[m].sum()
        exp = big[m].sum()
        var = (big[m] * (1 - big[m])).sum()
        chi2 += (obs - exp) ** 2 / var
        used += 1
    return float(chi2), used, float(stats.chi2.sf(chi2, used))


def _separation_sample(spec, eps, v0, runs, cfg):
    """Tag-1 state at level v0 and tag-2 residual there, for pairs that split at the
    renewal of tag 1 that opens its interval around v0."""
    batch = simulate_tagged_batch(spec, eps, 2, runs, cfg.rng(5), record=True)
    L, code = batch.levels, batch.code
    cs, bs, rs = [], [], []
    for r in range(runs):
        l1 = L[r, 0][np.isfinite(L[r, 0])]
        l2 = L[r, 1][np.isfinite(L[r, 1])]
        e1 = np.concatenate([[0.0], l1])
        k = int(np.searchsorted(e1, v0, side="left"))  # interval (e1[k-1], e1[k]] holds v0
        if k == 0 or k >= e1.size:
            continue
        # together through generation k-1 (node ending at e1[k-1]), apart at generation k
        same_before = k == 1 or code[r, 0, k - 2] == code[r, 1, k - 2]
        apart_now = code[r, 0, k - 1] != code[r, 1, k - 1]
        if not (same_before and apart_now):
            continue
        e2 = np.concatenate([[0.0], l2])
        j = int(np.searchsorted(e2, v0, side="right"))
        if j >= e2.size:
            continue
        cs.append(v0 - e1[k - 1])
        bs.append(e1[k] - v0)
        rs.append(e2[j] - v0)
    return np.array(cs), np.array(bs), np.array(rs)


RUNNERS = {
    "simulate": run_simulate,
    "lln": run_lln,
    "clt": run_clt,
    "pairing": run_pairing_check,
    "renewal": run_renewal_check,
    "xval": run_cross_validation,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.kind](cfg)
