"""Acceptance suite: the eleven end-to-end criteria at their stated sizes.

Each test prints one ``PASS``/``FAIL`` line (visible with or without
``-s``). Run alone with ``pytest tests/test_acceptance.py -v``.
Criterion 10 is expected to fail; see the decay test's docstring.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from fragclt.dislocation import MeasureSpec, waiting_law
from fragclt.experiments import load_config_file, make_config, run_experiment
from fragclt.functions import Indicator
from fragclt.limit_stats import k1_constant, pair_partition_count, pair_partitions
from fragclt.renewal import convergence_rate_probe
from fragclt.streams import derived_rng
from fragclt.tree_sim import simulate_frozen

HERE = os.path.dirname(__file__)
DEFAULT = load_config_file(os.path.join(HERE, "..", "configs", "default.yaml"))
QUICK = load_config_file(os.path.join(HERE, "..", "configs", "quick.yaml"))
SPEC = MeasureSpec.binary_uniform(0.3)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def renewal_report():
    return timed(run_experiment, make_config("renewal", DEFAULT))


@pytest.fixture(scope="module")
def clt_report():
    return timed(run_experiment, make_config("clt", DEFAULT))


def verdicts(rep):
    return {v.name: v for v in rep.verdicts}


def test_01_conservation_and_support(verdict):
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for i, eps in enumerate([1e-2, 1e-3, 1e-4]):
        for r in range(5):
            run = simulate_frozen(SPEC, eps, derived_rng(1, i, r))
            worst = max(worst, abs(run.total() - 1))
            ok &= bool(np.all(run.sizes >= 0.3 * eps * (1 - 1e-12)) and np.all(run.sizes < eps))
            ok &= 1 / eps < run.count <= 1 / (0.3 * eps) * (1 + 1e-12)
    dt = time.perf_counter() - t0
    ok &= worst <= 1e-9 and dt < 10
    verdict(1, ok, f"max |sum-1| = {worst:.2e}, sizes and counts in range, {dt:.1f}s")


def test_02_renewal_identity(verdict, renewal_report):
    rep, _ = renewal_report
    v = verdicts(rep)
    law = waiting_law(SPEC)
    names = ["pi_mass", "mu", "eta_density[0.5]", "eta_density[0.8]", "eta_density[1.1]"]
    ok = all(v[n].passed for n in names) and abs(law.mu - 0.666033) <= 1e-5
    verdict(2, ok, f"mass={rep.estimates['pi_mass']['value']:.12f}, mu={law.mu:.9f}, "
                   f"eta diffs/4sigma=" + ", ".join(f"{v[n].value:.2e}/{v[n].tolerance:.2e}" for n in names[2:]))


def test_03_tagged_branch_law(verdict):
    raw = dict(DEFAULT, xval={**DEFAULT["xval"], "subtests": ["marginal"]})
    cfg = make_config("xval", raw)
    assert cfg.params["marginal"] == {"epsilon": 1e-4, "n": 100000}
    rep, dt = timed(run_experiment, cfg)
    p = rep.statistics["marginal_ks"]["p"]
    verdict(3, rep.passed and dt < 60, f"KS p = {p:.3f} (N = 1e5 each, T = {-math.log(1e-4):.2f}), {dt:.1f}s")


def test_04_stationarity(verdict, renewal_report):
    rep, _ = renewal_report
    ks = rep.statistics["stationarity_ks"]
    verdict(4, verdicts(rep)["stationarity"].passed, f"KS p = {ks['p']:.3f} between t=0 and t=5, N = 1e5")


def test_05_lln(verdict):
    pilot = json.load(open(os.path.join(HERE, "data", "lln_pilot.json")))
    rep = run_experiment(make_config("lln", DEFAULT))
    means = [r["mean_abs_err"] for r in rep.tables["lln_ladder"]]
    # the pilot (4x replicas, other seed) must put the bound well above its final rung
    calibrated = pilot["final_plus_4se"] < pilot["bound"] == rep.verdicts[1].tolerance
    verdict(5, rep.passed and calibrated,
            f"mean |gamma_T(center Id)| = {', '.join(f'{m:.2e}' for m in means)} at T = 6, 9, 12; "
            f"pilot final+4se = {pilot['final_plus_4se']:.2e} < 0.01")


def test_06_variance_scaling(verdict, clt_report):
    rep, dt = clt_report
    v = verdicts(rep)
    K = rep.statistics["K"][0][0]
    ratio = v["variance_ratio[0]"].value
    rel = v["v_part_precision[0]"].value
    ok = v["variance_ratio[0]"].passed and v["v_part_precision[0]"].passed and dt < 600
    verdict(6, ok, f"empirical/K = {ratio:.3f} (K = {K:.5f}), V-part rel stderr = {rel:.3f}, {dt:.0f}s")


def test_07_normality(verdict, clt_report):
    rep, _ = clt_report
    v = verdicts(rep)
    ok = v["normality[0]"].passed and v["correlation[0,1]"].passed
    c = v["correlation[0,1]"]
    verdict(7, ok, f"KS p = {v['normality[0]'].value:.3f}; |corr diff| = {c.value:.4f} <= {c.tolerance:.4f}")


def test_08_u_statistic_limits(verdict):
    rep, dt = timed(run_experiment, make_config("pairing", DEFAULT))
    v = verdicts(rep)
    ok = all(v[f"limit[q={q}]"].passed for q in (2, 3, 4)) and dt < 900
    last = {r["q"]: r for r in rep.tables["pairing_ladder"] if r["epsilon"] == 1e-4}
    detail = "; ".join(f"q={q}: {last[q]['scaled']:.3e} +- {last[q]['stderr']:.1e} vs {last[q]['limit']:.3e}"
                       for q in (2, 3, 4))
    verdict(8, ok, f"{detail}; {dt:.0f}s")


def test_09_combinatorial_exacts(verdict):
    counts = [pair_partition_count(q) for q in (2, 4, 6)]
    lens = [len(pair_partitions(q)) for q in (2, 4, 6)]
    k1 = [k1_constant(q) for q in (1, 2, 4)]
    brute = [sum(math.perm(q, i) * i ** (q - i) for i in range(1, q + 1)) for q in (1, 2, 4)]
    ok = counts == lens == [1, 3, 15] and k1 == brute == [1, 4, 148]
    verdict(9, ok, f"pair counts {counts}, enumerations {lens}, K1 {k1}")


@pytest.mark.xfail(strict=True, reason="E g(B_t) lies below the Monte Carlo noise floor at 1e6 replicas; "
                                       "see the decision ledger")
def test_10_decay_probe(verdict):
    """Plain Monte Carlo decay fit for the eta-centered indicator of [a, (a+b)/2].

    The exact values (renewal-equation solve) are about -3.1e-4, -4.7e-4,
    -1.1e-4, -1.2e-5 at t = 1..4 and below 1e-6 from t = 5, while the
    standard error at 1e6 replicas is about 4.9e-4. No point clears the
    noise floor, and even the exact values give r^2 below 0.9 because the
    sign change near t = 0.8 makes |h(1)| < |h(2)|.
    """
    law = waiting_law(SPEC)
    g = Indicator(law.a, 0.5 * (law.a + law.b))
    rep = convergence_rate_probe(law, g, list(range(1, 9)), 10**6, derived_rng(10, 0))
    ok = rep.status == "ok" and rep.slope < 0 and rep.r2 > 0.9
    verdict(10, ok, f"status={rep.status}, slope={rep.slope}, r2={rep.r2}, "
                    f"max |est|/se = {max(abs(r.estimate) / r.stderr for r in rep.rows):.2f}")


def test_11_reproducibility(verdict):
    same = {}
    for kind in ("simulate", "lln", "clt", "pairing", "renewal", "xval"):
        raw = QUICK
        if kind == "renewal":
            raw = dict(QUICK, renewal={**QUICK["renewal"], "estimator": "plain"})
        a = run_experiment(make_config(kind, raw, jobs=1)).to_json()
        b = run_experiment(make_config(kind, raw, jobs=8)).to_json()
        same[kind] = a == b
    verdict(11, all(same.values()), "bit-identical reports at jobs 1 and 8: " +
            ", ".join(f"{k}={'yes' if s else 'no'}" for k, s in same.items()))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
