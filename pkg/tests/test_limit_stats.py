import itertools
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import A, B
from fragclt.coupled_pair import VOptions
from fragclt.errors import DomainError
from fragclt.functions import Const, Identity, Indicator
from fragclt.limit_stats import (center, covariance_K, eta_part, gamma_infinity, k1_constant, limit_moment,
                                 pair_partition_count, pair_partitions)

ORACLE = json.load(open(os.path.join(os.path.dirname(__file__), "data", "v_oracle.json")))
MU = 0.6660329253516117


def exp_power_eta(k):
    """eta(e^{-k y}) in closed form, using 1 - F(y) = (e^{-2y} - 0.09)/0.4 on [a, b]."""
    first = (1 - math.exp(-k * A)) / k
    second = ((math.exp(-(k + 2) * A) - math.exp(-(k + 2) * B)) / (k + 2)
              - 0.09 * (math.exp(-k * A) - math.exp(-k * B)) / k) / 0.4
    return (first + second) / MU


def test_gamma_infinity_identity(law):
    assert gamma_infinity(law, Identity()) == pytest.approx(exp_power_eta(1), abs=1e-10)
    assert gamma_infinity(law, Identity()) == pytest.approx(0.7106755767118444, abs=1e-10)


def test_gamma_infinity_indicator(law):
    # Phi(1_[0.5,1]) is the indicator of [0, log 2], and a < log 2 < b
    m = math.log(2)
    assert A < m < B
    closed = (A + ((math.exp(-2 * A) - math.exp(-2 * m)) / 2 - 0.09 * (m - A)) / 0.4) / MU
    assert gamma_infinity(law, Indicator(0.5, 1.0)) == pytest.approx(closed, abs=1e-10)


def test_center_identity_and_idempotence(law):
    c = center(law, Identity())
    assert c.centered
    assert abs(gamma_infinity(law, c)) <= 1e-8
    cc = center(law, c)
    assert cc(0.37) == pytest.approx(c(0.37), abs=1e-12)


def test_eta_part_closed_form(law):
    # eta(e^{-y} (e^{-y} - g)^2) = E3 - 2 g E2 + g^2 E1
    g = exp_power_eta(1)
    ref = exp_power_eta(3) - 2 * g * exp_power_eta(2) + g * g * exp_power_eta(1)
    c = center(law, Identity())
    assert eta_part(law, c, c) == pytest.approx(ref, abs=1e-10)
    assert ref == pytest.approx(ORACLE["eta_part"][0][0], abs=1e-9)


def test_zero_function_K(spec, law):
    m = covariance_K(spec, law, [center(law, Const(0.0))], VOptions(n_per_node=200))
    assert m.K.tolist() == [[0.0]]


def test_K_matches_oracle(spec, law):
    fs = [center(law, Identity()), center(law, Indicator(0.5, 1.0))]
    m = covariance_K(spec, law, fs)
    assert np.array_equal(m.K, m.K.T)
    np.testing.assert_allclose(m.eta_part, ORACLE["eta_part"], atol=1e-8)
    ref = np.array(ORACLE["eta_part"]) + np.array(ORACLE["V"])
    assert np.all(np.abs(m.K - ref) <= 4 * m.K_stderr + ORACLE["rel_accuracy"] * np.abs(np.array(ORACLE["V"])))
    assert m.negative_diagonal == []
    d = json.loads(m.to_json())
    assert d["opts"]["seed"] == 0


def brute_pairings(q):
    out = set()
    for perm in itertools.permutations(range(q)):
        out.add(frozenset(frozenset(perm[i:i + 2]) for i in range(0, q, 2)))
    return out


@pytest.mark.parametrize("q, n", [(2, 1), (4, 3), (6, 15), (8, 105)])
def test_pair_partition_count(q, n):
    assert pair_partition_count(q) == n
    parts = pair_partitions(q)
    assert len(parts) == n
    assert {frozenset(frozenset(p) for p in part) for part in parts} == brute_pairings(q)
    for part in parts:
        assert sorted(i for p in part for i in p) == list(range(q))


def test_pair_partitions_domain():
    with pytest.raises(DomainError):
        pair_partitions(3)
    with pytest.raises(DomainError):
        pair_partition_count(5)
    with pytest.raises(DomainError):
        pair_partitions(14)


def k1_terms(q):
    total = 0
    for i in range(1, q + 1):
        falling = 1
        for j in range(i):
            falling *= q - j
        total += falling * i ** (q - i)
    return total


@pytest.mark.parametrize("q, val", [(1, 1), (2, 4), (4, 148)])
def test_k1_constant(q, val):
    assert k1_constant(q) == val == k1_terms(q)


@given(st.integers(1, 12))
def test_k1_property(q):
    assert k1_constant(q) == k1_terms(q)


def test_limit_moment_forms():
    V = np.array([[2.0, 0.5], [0.5, 3.0]])
    assert limit_moment(V, [0, 1], 2) == 0.5
    assert limit_moment(V, [0, 0, 0, 0], 4) == pytest.approx(3 * 4.0)
    assert limit_moment(lambda a, b: a * b, [1.0, 2.0, 3.0, 4.0], 4) == pytest.approx(2 * 12 + 3 * 8 + 4 * 6)
    with pytest.raises(DomainError):
        limit_moment(V, [0, 1, 0], 2)
