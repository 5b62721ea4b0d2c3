import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from conftest import A, B
from fragclt.dislocation import MeasureSpec, waiting_law
from fragclt.errors import FitError
from fragclt.functions import Const, ExpDecay, Identity, Indicator, Phi
from fragclt.renewal import (DecayRow, advance, convergence_rate_probe, eta, eta_integral, exact_decay,
                             fit_decay, renewal_epochs, renewal_function, residual_map,
                             sample_stationary_states, simulate_residuals)

MU = 0.6660329253516117
REF_LAW = waiting_law(MeasureSpec.binary_uniform(0.3))


def eta_exp_closed_form():
    # eta(e^{-x}) = (1/mu) [ int_0^a e^{-x} dx + int_a^b e^{-x} (e^{-2x} - 0.09) / 0.4 dx ]
    first = 1 - math.exp(-A)
    second = ((math.exp(-3 * A) - math.exp(-3 * B)) / 3 - 0.09 * (math.exp(-A) - math.exp(-B))) / 0.4
    return (first + second) / MU


def test_eta_density_values(law):
    m = eta(law)
    # flat at 1/mu below a, zero beyond b
    assert m.density(0.1) == pytest.approx(1 / MU, rel=1e-14)
    assert m.density(B + 0.01) == 0.0
    assert m.density(0.9) == pytest.approx((math.exp(-1.8) - 0.09) / 0.4 / MU, rel=1e-13)


def test_eta_is_a_probability(law):
    assert eta_integral(law, Const(1.0)) == pytest.approx(1.0, abs=1e-10)
    assert eta(law).cdf(B) == pytest.approx(1.0, abs=1e-12)


def test_eta_of_exp_matches_closed_form(law):
    assert eta_integral(law, Phi(Identity())) == pytest.approx(eta_exp_closed_form(), abs=1e-10)
    assert eta_exp_closed_form() == pytest.approx(0.7106755767118444, abs=1e-12)


def test_quadrature_nodes_match_integral(law):
    x, w = eta(law).quadrature_nodes(64)
    assert np.sum(w * np.exp(-x)) == pytest.approx(eta_exp_closed_form(), abs=1e-12)


def test_epochs_increments_in_support(law, rng):
    e = renewal_epochs(law, 20.0, rng)
    assert e[0] == 0.0
    d = np.diff(e)
    assert np.all(d >= A) and np.all(d <= B)
    assert e[-1] > 20.0 and e[-2] <= 20.0


def test_residuals_in_range(law, rng):
    age, res = simulate_residuals(law, 7.5, 5000, rng)
    assert np.all(res > 0) and np.all(res <= B)
    assert np.all(age >= 0)
    assert np.all(age + res >= A - 1e-12) and np.all(age + res <= B + 1e-12)


def test_stationary_residual_follows_eta(law, rng):
    _, res = sample_stationary_states(law, 40000, rng)
    assert stats.kstest(res, eta(law).cdf).pvalue > 1e-3


def test_stationarity_is_preserved(law, rng):
    age, res = sample_stationary_states(law, 40000, rng)
    _, later = advance(law, age, res, 3.0, rng)
    assert stats.kstest(later, eta(law).cdf).pvalue > 1e-3


def test_renewal_function_against_monte_carlo(law, rng):
    g = ExpDecay(1.0)
    h = renewal_function(law, g)
    for t in (0.5, 1.0, 2.5):
        _, res = simulate_residuals(law, t, 200000, rng)
        vals = g(res)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - h(np.array(t))) < 4 * se


def test_renewal_function_limit(law):
    g = ExpDecay(1.0)
    h = renewal_function(law, g)
    assert h(np.array(25.0)) == pytest.approx(eta_integral(law, g), abs=1e-7)
    assert h(np.array(500.0)) == h.limit


@given(st.floats(1e-3, 1.0))
def test_residual_map_positive_side_is_g(r):
    R = residual_map(REF_LAW, ExpDecay(1.0))
    assert R(np.array(r)) == pytest.approx(math.exp(-r), rel=1e-14)


def test_fit_decay_on_exact_exponential():
    rows = [DecayRow(float(t), 2.0 * math.exp(-0.7 * t) * (-1) ** t, 1e-6, False) for t in range(1, 6)]
    slope, intercept, r2 = fit_decay(rows)
    assert slope == pytest.approx(-0.7, abs=1e-9)
    assert intercept == pytest.approx(math.log(2.0), abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_probe_single_point_is_an_error(law, rng):
    with pytest.raises(FitError, match="insufficient"):
        convergence_rate_probe(law, Indicator(A, 1.0), [1.0], 100, rng)


def test_probe_auto_centers_and_flags(law, rng):
    rep = convergence_rate_probe(law, Indicator(A, 1.0), [1.0, 2.0], 2000, rng)
    assert rep.auto_centered
    assert rep.centering == pytest.approx(eta_integral(law, Indicator(A, 1.0)), abs=1e-12)


def test_exact_decay_has_negative_slope(law):
    g = Indicator(A, 0.5 * (A + B))
    gc = g - eta_integral(law, g)
    rep = exact_decay(law, gc, [1, 2, 3, 4, 5, 6, 7, 8])
    assert rep.status == "ok" and rep.slope < 0
    assert rep.rows[0].estimate == pytest.approx(-3.1e-4, rel=0.02)


def test_noise_floor_is_reported(law, rng):
    g = Indicator(A, 0.5 * (A + B))
    rep = convergence_rate_probe(law, g, [6.0, 7.0, 8.0], 1000, rng)
    assert rep.status == "noise_floor"
    assert "noise floor" in rep.message
