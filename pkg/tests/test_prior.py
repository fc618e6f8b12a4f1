import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from msmetr.prior import (
    ElicitationError, Hyperparameters, as_dict, benchmark_hyperparameters, default_hyperparameters,
    elicit, hard_entry_variance, prior_entry_variance, relative_additional_variance,
)

from oracles import simulate_prior_entry


def test_defaults_and_b_lambda_rule():
    h = Hyperparameters()
    assert (h.alpha, h.a_tau, h.a_sigma, h.a_lambda) == (1.0, 3.0, 0.5, 3.0)
    assert h.b_lambda == pytest.approx(3 ** 0.25)
    assert Hyperparameters(M=3).b_lambda == pytest.approx(3 ** (1 / 6))
    assert h.nu == (1.0,)
    assert Hyperparameters(K=3).nu == (1.0, 1.0, 1.0)
    assert h.sigma_mu_sq == 100.0 and h.a_noise == 0.01 and h.b_noise == 0.01


@pytest.mark.parametrize("bad", [dict(a_lambda=2.0), dict(b_tau=0.0), dict(alpha=-1.0),
                                 dict(D=0), dict(M=1), dict(nu=(1.0, 1.0)), dict(K=2, nu=(1.0, 0.0))])
def test_invalid_hyperparameters(bad):
    with pytest.raises(ValueError):
        Hyperparameters(**bad)


def test_matrix_formula_reduction():
    h = Hyperparameters(D=4, alpha=2.0, a_tau=3.5, b_tau=2.0, a_sigma=0.7, b_sigma=3.0,
                        a_lambda=3.3, b_lambda=1.2)
    C = (h.alpha / h.D + 1) / (h.alpha + 1)
    inner = h.a_sigma / h.b_sigma + 2 * h.b_lambda ** 2 / ((h.a_lambda - 1) * (h.a_lambda - 2))
    want = h.a_tau * (h.a_tau + 1) / h.b_tau ** 2 * C * inner ** 2
    assert prior_entry_variance(h) == pytest.approx(want, rel=1e-14)
    assert h.C == pytest.approx(C)


def test_general_order_formula():
    h = Hyperparameters(M=3, D=2, alpha=1.5, a_tau=4.0, b_tau=1.5)
    tau = math.gamma(h.a_tau + 3) / (math.gamma(h.a_tau) * h.b_tau ** 3)
    zeta = h.D * math.prod((h.alpha / h.D + r) / (h.alpha + r) for r in range(3))
    inner = h.a_sigma / h.b_sigma + 2 * h.b_lambda ** 2 / ((h.a_lambda - 1) * (h.a_lambda - 2))
    assert prior_entry_variance(h) == pytest.approx(tau * zeta * inner ** 3, rel=1e-13)


def test_no_softening_is_hard_variance():
    h = Hyperparameters(b_sigma=math.inf)
    assert prior_entry_variance(h) == hard_entry_variance(h)
    assert relative_additional_variance(h) == 0.0


def test_benchmark_column_values():
    h = benchmark_hyperparameters(D=3)
    C = (1 / 3 + 1) / 2
    assert h.b_sigma == pytest.approx(8.5 * math.sqrt(C))
    assert h.b_tau * h.b_sigma == pytest.approx(33.75)
    # the table's column hits the targets only approximately at D = 3
    assert prior_entry_variance(h) == pytest.approx(1.1014, abs=1e-3)
    assert relative_additional_variance(h) == pytest.approx(0.078, abs=1e-3)


@given(st.floats(0.01, 50), st.floats(0.1, 5), st.floats(2.05, 10), st.floats(0.1, 3))
def test_av_closed_form(ratio, b_lambda, a_lambda, a_sigma):
    h = Hyperparameters(a_sigma=a_sigma, b_sigma=a_sigma / ratio, a_lambda=a_lambda, b_lambda=b_lambda)
    closed = 1 - (1 + ratio * (a_lambda - 1) * (a_lambda - 2) / (2 * b_lambda ** 2)) ** -2
    assert relative_additional_variance(h) == pytest.approx(closed, rel=1e-10, abs=1e-14)


@given(st.floats(0.01, 10), st.floats(0.01, 10))
def test_av_monotone_in_softening(r1, r2):
    assume(abs(r1 - r2) > 1e-6 * max(r1, r2))
    lo, hi = sorted((r1, r2))
    av_lo = relative_additional_variance(Hyperparameters(b_sigma=0.5 / lo))
    av_hi = relative_additional_variance(Hyperparameters(b_sigma=0.5 / hi))
    assert av_lo < av_hi


def _roundtrip(v, av, **kw):
    b_tau, b_sigma = elicit(v, av, **kw)
    fixed = {k: kw[k] for k in ("alpha", "a_tau", "a_sigma", "a_lambda") if k in kw}
    h = Hyperparameters(D=kw.get("D", 3), b_tau=b_tau, b_sigma=b_sigma, **fixed)
    return h


def test_elicitation_default_roundtrip():
    h = _roundtrip(1.0, 0.10, D=3)
    assert prior_entry_variance(h) == pytest.approx(1.0, abs=1e-10)
    assert relative_additional_variance(h) == pytest.approx(0.10, abs=1e-10)


@given(st.floats(1e-3, 1e3), st.floats(1e-4, 0.99), st.integers(1, 10), st.floats(0.2, 5),
       st.floats(1.0, 8.0), st.floats(0.1, 3.0), st.floats(2.1, 8.0))
def test_elicitation_roundtrip_random(v, av, D, alpha, a_tau, a_sigma, a_lambda):
    h = _roundtrip(v, av, D=D, alpha=alpha, a_tau=a_tau, a_sigma=a_sigma, a_lambda=a_lambda)
    assert prior_entry_variance(h) == pytest.approx(v, rel=1e-10)
    assert relative_additional_variance(h) == pytest.approx(av, rel=1e-9, abs=1e-12)


def test_zero_additional_variance_forces_no_softening():
    b_tau, b_sigma = elicit(1.0, 0.0)
    assert math.isinf(b_sigma)
    assert prior_entry_variance(Hyperparameters(b_tau=b_tau, b_sigma=b_sigma)) == pytest.approx(1.0)


def test_elicitation_errors():
    with pytest.raises(ElicitationError):
        elicit(1.0, 0.1, M=3)
    with pytest.raises(ElicitationError):
        elicit(-1.0, 0.1)
    with pytest.raises(ElicitationError):
        elicit(1.0, 1.0)
    with pytest.raises(ElicitationError):
        elicit(1.0, 0.1, a_lambda=2.0)


def test_default_hyperparameters_provenance():
    h = default_hyperparameters(D=3, K=2)
    assert h.source == "elicited" and h.targets == (1.0, 0.10)
    assert prior_entry_variance(h) == pytest.approx(1.0)
    d = as_dict(h)
    assert d["nu"] == [1.0, 1.0] and d["targets"] == [1.0, 0.1]


def test_monte_carlo_small_sample_agrees():
    h = Hyperparameters(D=2, a_tau=4.0, b_tau=3.0, a_lambda=6.0, b_lambda=2.0, b_sigma=2.0)
    x = simulate_prior_entry(h, 200_000, np.random.default_rng(3))
    se = np.std(x ** 2) / math.sqrt(x.size)
    assert abs(np.mean(x ** 2) - prior_entry_variance(h)) < 4 * se
