import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import A, B
from fragclt.coupled_pair import (VOptions, sample_eta_prime, sample_pair_at_zero,
                                  sample_pairs, v_kernel, v_matrix)
from fragclt.errors import DomainError
from fragclt.functions import Const, Identity, Indicator, Phi
from fragclt.limit_stats import center
from fragclt.renewal import eta_integral

ORACLE = json.load(open(os.path.join(os.path.dirname(__file__), "data", "v_oracle.json")))


def test_eta_prime_symmetric_split(spec, rng):
    assert sample_eta_prime(spec, 0.0, math.log(2), rng) == pytest.approx(math.log(2), abs=1e-14)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_eta_prime_range(u, v, seed):
    from fragclt.dislocation import MeasureSpec
    s = A + (B - A) * u  # c + bbar
    c = s * v
    out = sample_eta_prime(MeasureSpec.binary_uniform(0.3), c, s - c, np.random.default_rng(seed))
    assert 0.0 < out <= B + 1e-12


def test_eta_prime_domain(spec, rng):
    with pytest.raises(DomainError):
        sample_eta_prime(spec, 0.1, 0.1, rng)  # c + bbar < a
    with pytest.raises(DomainError):
        sample_eta_prime(spec, -0.2, 0.8, rng)


def test_pair_invariants(spec, rng):
    for v in (-3.0, -0.5, 0.0, 0.4, 1.0):
        pb = sample_pairs(spec, v, 4000, rng)
        b1, b2 = pb.b1[pb.alive], pb.b2[pb.alive]
        assert np.all((b1 > 0) & (b1 <= B + 1e-12))
        assert np.all((b2 > 0) & (b2 <= B + 1e-12))
        if v <= 0:
            assert pb.alive.all()
        else:
            assert np.all(pb.b1[pb.alive] >= v)


def test_alive_rate_vanishes_at_b(spec, law, rng):
    pb = sample_pairs(spec, law.b, 20000, rng)
    assert pb.alive.mean() == 0.0
    with pytest.raises(DomainError):
        sample_pair_at_zero(spec, law, law.b + 0.1, rng)


def test_deep_levels_decorrelate(spec, law):
    f = Phi(center(law, Identity()).handle)
    f = f - eta_integral(law, f)
    pb = sample_pairs(spec, -5 * law.b, 10**6, np.random.default_rng(8))
    x = f(pb.b1) * f(pb.b2)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean()) < 4 * se


def test_zero_function(spec):
    e = v_kernel(spec, None, Const(0.0), Const(0.0))
    assert e.value == 0.0 and e.stderr == 0.0


def test_bilinearity_is_exact(spec, law):
    f = Phi(center(law, Identity()).handle)
    o = VOptions(n_per_node=2000, dv=0.1, seed=3)
    one = v_kernel(spec, law, f, f, o)
    two = v_kernel(spec, law, 2.0 * f, f, o)
    assert two.value == 2.0 * one.value


def test_strict_rejects_uncentered(spec, law):
    with pytest.raises(DomainError):
        v_kernel(spec, law, Phi(Identity()), Phi(Identity()), VOptions(n_per_node=100))


def test_v_against_quadrature_oracle(spec, law):
    f = Phi(center(law, Identity()).handle)
    e = v_kernel(spec, law, f, f)
    ref = ORACLE["V"][0][0]
    assert e.stderr < 0.05 * abs(e.value)
    assert abs(e.value - ref) <= 4 * e.stderr + ORACLE["rel_accuracy"] * abs(ref)


def test_v_matrix_symmetric_with_diagnostics(spec, law):
    fs = [Phi(center(law, f).handle) for f in (Identity(), Indicator(0.5, 1.0))]
    vm = v_matrix(spec, law, fs, VOptions(n_per_node=5000))
    assert np.array_equal(vm.value, vm.value.T)
    a, s = vm.asymmetry[0, 1], vm.asymmetry_stderr[0, 1]
    assert abs(a) <= 4 * s
    ref = np.array(ORACLE["V"])
    assert np.all(np.abs(vm.value - ref) <= 4 * vm.stderr + ORACLE["rel_accuracy"] * np.abs(ref))


def test_single_function_matrix(spec, law):
    f = Phi(center(law, Identity()).handle)
    o = VOptions(n_per_node=2000, dv=0.1)
    vm = v_matrix(spec, law, [f], o)
    assert vm.value[0, 0] == pytest.approx(v_kernel(spec, law, f, f, o).value, rel=1e-12)
