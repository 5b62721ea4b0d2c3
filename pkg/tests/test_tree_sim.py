import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fragclt.errors import CapacityError, DomainError, UnsupportedError
from fragclt.functions import Const, ExpDecay, Identity, Indicator
from fragclt.tree_sim import gamma, simulate_frozen, u_statistic_odot, u_statistic_otimes


def brute_force(run, fs, injective):
    x = run.sizes / run.epsilon
    w = [run.sizes * f(x) for f in fs]
    total = []
    for idx in itertools.product(range(run.count), repeat=len(fs)):
        if injective and len(set(idx)) < len(idx):
            continue
        total.append(math.prod(w[j][i] for j, i in enumerate(idx)))
    return math.fsum(total)


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_invariants(spec, law, eps):
    run = simulate_frozen(spec, eps, np.random.default_rng(7))
    run.check_invariants(law.delta)
    assert abs(run.total() - 1) <= 1e-9


@given(st.floats(0.005, 0.25), st.integers(0, 2**32 - 1))
def test_invariants_property(eps, seed):
    from fragclt.dislocation import MeasureSpec
    spec = MeasureSpec.binary_uniform(0.3)
    run = simulate_frozen(spec, eps, np.random.default_rng(seed), debug=True)
    run.check_invariants(0.3)


def test_same_seed_same_run(spec):
    a = simulate_frozen(spec, 1e-3, np.random.default_rng(5))
    b = simulate_frozen(spec, 1e-3, np.random.default_rng(5))
    np.testing.assert_array_equal(a.sizes, b.sizes)


def test_epsilon_domain(spec, rng):
    for eps in (0.3, 0.5, 0.0, 1.2):
        with pytest.raises(DomainError):
            simulate_frozen(spec, eps, rng)


def test_capacity_guard(spec, rng):
    with pytest.raises(CapacityError):
        simulate_frozen(spec, 1e-4, rng, max_fragments=1000)


def test_gamma_of_one_is_total_mass(spec, rng):
    run = simulate_frozen(spec, 1e-3, rng)
    assert gamma(run, Const(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_tags_located_by_interval(spec, rng):
    tags = rng.random(200)
    run = simulate_frozen(spec, 1e-3, rng, tags=tags, debug=True)
    lo = run.lefts[run.tag_fragment]
    assert np.all(lo <= tags) and np.all(tags < lo + run.sizes[run.tag_fragment] + 1e-15)
    res = run.residuals()
    assert np.all(res > 0) and np.all(res <= -math.log(0.3) + 1e-12)
    # the last path level is the frozen fragment's -log size
    for i in range(5):
        assert run.tag_paths[i][-1][2] == pytest.approx(-math.log(run.sizes[run.tag_fragment[i]]))


def test_odot_two_is_one_minus_sum_of_squares(spec, rng):
    run = simulate_frozen(spec, 1e-3, rng)
    got = u_statistic_odot(run, [Const(1.0), Const(1.0)], 2)
    assert got == pytest.approx(1 - math.fsum(run.sizes**2), abs=1e-13)


@pytest.mark.parametrize("q", [1, 2, 3])
def test_u_statistics_against_brute_force(spec, q):
    run = simulate_frozen(spec, 0.05, np.random.default_rng(11))
    fs = [Identity(), ExpDecay(1.0), Indicator(0.4, 0.9)][:q]
    assert u_statistic_odot(run, fs, q) == pytest.approx(brute_force(run, fs, True), rel=1e-11, abs=1e-14)
    assert u_statistic_otimes(run, fs, q) == pytest.approx(brute_force(run, fs, False), rel=1e-11)


def test_dense_two_variable(spec):
    run = simulate_frozen(spec, 0.05, np.random.default_rng(2))
    fs = [Identity(), ExpDecay(1.0)]
    dense = u_statistic_odot(run, lambda x, y: fs[0](x) * fs[1](y), 2)
    assert dense == pytest.approx(u_statistic_odot(run, fs, 2), rel=1e-12)


def test_unsupported_orders(spec, rng):
    run = simulate_frozen(spec, 0.05, rng)
    with pytest.raises(UnsupportedError):
        u_statistic_odot(run, [Const(1.0)] * 5, 5)
    with pytest.raises(UnsupportedError):
        u_statistic_odot(run, lambda x, y, z: x, 3)
