import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from conftest import A, B, C
from fragclt.dislocation import (MeasureSpec, SplitOutcome, sample_proportions, sample_sibling_log,
                                 sample_split, sample_waiting, validate_assumptions, waiting_law)
from fragclt.errors import ConfigurationError, DomainError


def mu_closed_form(c):
    # antiderivative of x * 2 e^{-2x} / (1 - 2c) is -(x + 1/2) e^{-2x} / (1 - 2c)
    a, b = -math.log(1 - c), -math.log(c)
    G = lambda x: -(x + 0.5) * math.exp(-2 * x) / (1 - 2 * c)
    return G(b) - G(a)


def test_reference_support(law):
    assert law.a == pytest.approx(A, abs=1e-15)
    assert law.b == pytest.approx(B, abs=1e-15)
    assert law.delta == pytest.approx(0.3, abs=1e-15)


def test_reference_density_is_5_exp(law):
    x = np.linspace(A, B, 7)
    # 2 e^{-2x}/(1-2c) with c = 0.3 is 5 e^{-2x}
    np.testing.assert_allclose(law.density(x), 5 * np.exp(-2 * x), rtol=1e-14)
    assert law.density(A - 1e-3) == 0.0 and law.density(B + 1e-3) == 0.0


def test_mu_matches_antiderivative(law):
    assert law.mu == pytest.approx(mu_closed_form(C), abs=1e-13)
    assert law.mu == pytest.approx(0.666033, abs=1e-5)


def test_cdf_endpoints_and_formula(law):
    assert law.cdf(A) == pytest.approx(0.0, abs=1e-15)
    assert law.cdf(B) == pytest.approx(1.0, abs=1e-14)
    x = 0.8
    assert law.cdf(x) == pytest.approx((0.49 - math.exp(-2 * x)) / 0.4, abs=1e-14)


@given(st.floats(0.05, 0.45))
def test_mu_family(c):
    law = waiting_law(MeasureSpec.binary_uniform(c))
    assert law.mu == pytest.approx(mu_closed_form(c), rel=1e-10)


def test_sample_proportions_invariants(spec, rng):
    s = sample_proportions(spec, 5000, rng)
    assert s.shape == (5000, 2)
    assert np.all(s[:, 0] >= s[:, 1])
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-15)
    assert s.min() >= C and s.max() <= 1 - C


def test_sample_split_outcome(spec, rng):
    out = sample_split(spec, rng)
    assert isinstance(out, SplitOutcome)
    assert len(out.proportions) == 2


def test_split_outcome_rejects_bad_input():
    with pytest.raises(DomainError):
        SplitOutcome((0.3, 0.7))
    with pytest.raises(DomainError):
        SplitOutcome((0.6, 0.3))


def test_sample_waiting_ks(law, rng):
    y = sample_waiting(law, rng, size=20000)
    assert y.min() >= A and y.max() <= B
    assert stats.kstest(y, law.cdf).pvalue > 1e-3


def test_sample_waiting_beta_family_uses_split_draw():
    spec = MeasureSpec.binary_truncated_beta(2.0, 2.0, 0.25)
    law = waiting_law(spec)
    y = sample_waiting(law, np.random.default_rng(3), size=20000)
    assert stats.kstest(y, law.cdf).pvalue > 1e-3


def test_beta_law_against_quadrature():
    law = waiting_law(MeasureSpec.binary_truncated_beta(2.0, 2.0, 0.25))
    mass = integrate.quad(lambda y: float(law.density(y)), law.a, law.b)[0]
    mu = integrate.quad(lambda y: y * float(law.density(y)), law.a, law.b)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert law.mu == pytest.approx(mu, rel=1e-8)
    x = 0.9
    assert law.cdf(x) == pytest.approx(integrate.quad(lambda y: float(law.density(y)), law.a, x)[0], abs=1e-9)


def test_sibling_log_binary(spec):
    w = math.log(2)
    assert sample_sibling_log(spec, w) == pytest.approx(math.log(2), abs=1e-15)
    w = np.linspace(A, B, 11)
    sib = sample_sibling_log(spec, w)
    np.testing.assert_allclose(np.exp(-w) + np.exp(-sib), 1.0, atol=1e-15)
    with pytest.raises(DomainError):
        sample_sibling_log(spec, B + 0.1)


def test_validation_reference_passes(spec):
    rep = validate_assumptions(spec)
    assert rep.passed
    assert {c.name for c in rep.checks} == {"conservative", "interval_support", "density", "exponential_moment"}


@pytest.mark.parametrize("c", [0.5, 0.0, -0.1])
def test_degenerate_c_is_invalid(c):
    spec = MeasureSpec.binary_uniform(c)
    assert not validate_assumptions(spec).passed
    with pytest.raises(ConfigurationError):
        spec.check()


def test_spec_round_trip():
    spec = MeasureSpec.binary_truncated_beta(2.0, 3.0, 0.2)
    assert MeasureSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigurationError):
        MeasureSpec.from_dict({"family": "binary_uniform", "bogus": 1})
