import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from msmetr.distributions import gig_moment
from msmetr.model import Dataset, MarkovChain, StateParams, init_params, loglik_path
from msmetr.prior import Hyperparameters
from msmetr.sampler import (
    ChainConfig, ModelState, draw_scan_plan, ffbs, relabel, relabel_permutation, rpsg_discrete,
    run_chain, run_chains, step_beta, step_gamma, step_lambda_w, step_noise_and_mu,
    step_sigma_mode, step_transition, step_zeta_tau, subset_size, total_dimension,
)

from oracles import discrete_target, enumerate_paths


def make_state(rng, T=40, K=1, D=2, shape=(3, 2), N=1, **hyper):
    X = rng.standard_normal((T,) + shape)
    y = rng.standard_normal((T, N))
    h = Hyperparameters(D=D, M=len(shape), K=K, **hyper)
    data = Dataset(y, X)
    sp, chain = init_params(data, h, rng)
    return ModelState(data, h, sp, chain)


def mean_test(x, target, z=4.0):
    x = np.asarray(x)
    se = x.std(ddof=1) / math.sqrt(x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - target) <= z * se + 1e-12), (x.mean(axis=0), target, se)


# --- configuration and scan plans -----------------------------------------------------

def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(thin=0)
    with pytest.raises(ValueError):
        ChainConfig(scan_fraction=0.0)
    with pytest.raises(ValueError):
        ChainConfig(ident_rule="bogus")
    assert ChainConfig(iterations=11, burn_in=10, thin=1).n_stored == 1
    assert subset_size(ChainConfig(scan_fraction=1.0), 3, 2) == 6
    assert subset_size(ChainConfig(scan_fraction=0.5), 3, 2) == 3
    assert subset_size(ChainConfig(scan_fraction=0.01), 3, 2) == 1


def test_scan_plan_subset_and_order_uniformity():
    rng = np.random.default_rng(0)
    n = 100_000
    subsets, orders = {}, {}
    for _ in range(n):
        plan = draw_scan_plan(6, 3, rng)
        key = tuple(sorted(plan.order))
        subsets[key] = subsets.get(key, 0) + 1
        if key == (0, 1, 2):
            orders[plan.order] = orders.get(plan.order, 0) + 1
    assert len(subsets) == 20
    assert all(abs(c / n - 1 / 20) < 0.005 for c in subsets.values())
    tot = sum(orders.values())
    assert len(orders) == 6 and all(abs(c / tot - 1 / 6) < 0.03 for c in orders.values())
    with pytest.raises(ValueError):
        draw_scan_plan(6, 7, rng)


def test_full_scan_visits_every_block():
    rng = np.random.default_rng(1)
    plan = draw_scan_plan(6, 6, rng)
    assert sorted(plan.order) == list(range(6)) and plan.selected == frozenset(range(6))


# --- factor slices and marginals ---------------------------------------------------------

def _empty_regime_state(rng, exact_shape=(2, 3)):
    ms = make_state(rng, T=10, K=2, D=2, shape=exact_shape)
    ms.chain.path[:] = 0          # regime 1 owns no time points
    return ms


@pytest.mark.parametrize("exact", [True, False])
def test_step_beta_empty_regime_draws_marginal_prior(exact):
    rng = np.random.default_rng(2)
    ms = _empty_regime_state(rng)
    eq = ms.params.equations[0]
    k, d, m, j = 1, 0, 1, 2
    eq.tau[k], eq.zeta[k] = 2.0, [0.3, 0.7]
    eq.sigma_mode[k, m] = 0.5
    eq.w[m][k, d, j] = 0.8
    draws = np.array([step_beta(ms, 0, k, d, m, j, rng, exact=exact) for _ in range(40_000)])
    scale = 2.0 * 0.3
    q = draws.shape[1]
    if exact:
        cov = scale * (0.5 * np.eye(q) + 0.8 * np.ones((q, q)))
    else:
        cov = scale * (0.8 + 0.5) * np.eye(q)
    mean_test(draws, np.zeros(q))
    np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, atol=0.05 * cov.max())


def test_step_beta_flat_prior_limit():
    rng = np.random.default_rng(3)
    X = np.zeros((1, 1, 2))
    X[0, 0, 0] = 1.0                               # mode-0 slice design picks entry (0, 0)
    data = Dataset(np.array([[2.5]]), X)
    h = Hyperparameters(D=1, M=2, K=1)
    sp, chain = init_params(data, h, rng)
    eq = sp.equations[0]
    eq.factors[0, 0, 1] = 1.0                      # other mode all ones
    eq.mu[:] = 0.0
    eq.noise[:] = 1.0
    eq.tau[:] = 1e12
    ms = ModelState(data, h, sp, chain)
    draws = np.array([step_beta(ms, 0, 0, 0, 0, 0, rng)[0] for _ in range(20_000)])
    mean_test(draws, 2.5)


def test_step_gamma_formula_moments():
    rng = np.random.default_rng(4)
    ms = make_state(rng, shape=(3, 4))
    eq = ms.params.equations[0]
    k, d, m, j = 0, 1, 0, 2
    eq.tau[k], eq.zeta[k] = 1.7, [0.4, 0.6]
    eq.sigma_mode[k, m] = 0.3
    eq.w[m][k, d, j] = 1.2
    beta = eq.factors[k, d, m][j, :]
    q = beta.size
    denom = q * 1.2 + 0.3
    mean = 1.2 / denom * beta.sum()
    var = 1.7 * 0.6 * 1.2 * 0.3 / denom
    g = np.array([step_gamma(ms, 0, k, d, m, j, rng) for _ in range(100_000)])
    mean_test(g, mean)
    assert g.var() == pytest.approx(var, rel=0.02)
    eq.factors[k, d, m][j, :] = 0.0
    g0 = np.array([step_gamma(ms, 0, k, d, m, j, rng) for _ in range(20_000)])
    mean_test(g0, 0.0)


def test_step_gamma_small_mode_scale_limit():
    rng = np.random.default_rng(5)
    ms = make_state(rng, shape=(3, 4))
    eq = ms.params.equations[0]
    eq.sigma_mode[0, 1] = 1e-12
    beta = eq.factors[0, 0, 1][:, 2]
    g = step_gamma(ms, 0, 0, 0, 1, 2, rng)
    assert g == pytest.approx(beta.mean(), abs=1e-5)


# --- scale parameters ----------------------------------------------------------------------

def test_total_dimension():
    assert total_dimension((20, 20)) == 840
    assert total_dimension((5, 4, 3)) == 3 * 60 + 12


def test_zeta_single_component():
    rng = np.random.default_rng(6)
    ms = make_state(rng, D=1)
    step_zeta_tau(ms, 0, 0, rng)
    assert ms.params.equations[0].zeta[0, 0] == 1.0


def test_zeta_exchangeable_components():
    rng = np.random.default_rng(7)
    ms = make_state(rng, D=3, shape=(2, 2))
    eq = ms.params.equations[0]
    for d in range(1, 3):                          # identical components, identical C_d
        eq.factors[0, d] = eq.factors[0, 0]
        for m in range(2):
            eq.gamma[m][0, d] = eq.gamma[m][0, 0]
            eq.w[m][0, d] = eq.w[m][0, 0]
    z = []
    for _ in range(20_000):
        step_zeta_tau(ms, 0, 0, rng)
        z.append(eq.zeta[0].copy())
    z = np.array(z)
    np.testing.assert_allclose(z.sum(axis=1), 1.0)
    mean_test(z, np.full(3, 1 / 3))


def test_zeta_tau_exact_when_a_tau_equals_alpha():
    rng = np.random.default_rng(8)
    ms = make_state(rng, D=2, alpha=3.0, a_tau=3.0)
    assert all(step_zeta_tau(ms, 0, 0, rng) for _ in range(50))


def test_zeta_tau_targets_joint_conditional():
    """Compare E[tau] against 2-D quadrature of the (tau, zeta_1) conditional at D = 2."""
    rng = np.random.default_rng(9)
    ms = make_state(rng, D=2, shape=(2, 2), a_tau=3.0, alpha=1.0, b_tau=2.0)
    eq = ms.params.equations[0]
    from msmetr.sampler import _deviation_sums
    dev, gw = _deviation_sums(eq, 0)
    C = (dev / eq.sigma_mode[0][None, :] + gw).sum(axis=1)
    I0 = total_dimension((2, 2))
    h = ms.hyper

    def logpost(tau, z1):
        z = np.array([z1, 1 - z1])
        return ((h.alpha / 2 - 1) * np.log(z).sum() + (h.a_tau - 1) * math.log(tau) - h.b_tau * tau
                - 0.5 * I0 * np.log(tau * z).sum() - 0.5 * (C / (tau * z)).sum())
    taus = np.geomspace(1e-3, 200, 600)
    zs = np.linspace(1e-4, 1 - 1e-4, 600)
    L = np.array([[logpost(t, z) for z in zs] for t in taus])
    W = np.exp(L - L.max())
    W *= np.gradient(taus)[:, None] * np.gradient(zs)[None, :]
    W /= W.sum()
    want = float((W.sum(axis=1) * taus).sum())
    tau = []
    for _ in range(30_000):
        step_zeta_tau(ms, 0, 0, rng)
        tau.append(eq.tau[0])
    tau = np.array(tau)
    # MH moves are autocorrelated; use batch means for the standard error
    b = tau[: 30_000 // 100 * 100].reshape(100, -1).mean(axis=1)
    assert abs(tau.mean() - want) < 4 * b.std(ddof=1) / 10


def test_lambda_w_prior_refresh_when_gamma_zero():
    rng = np.random.default_rng(10)
    ms = make_state(rng, D=1, shape=(3, 3))
    eq = ms.params.equations[0]
    h = ms.hyper
    for m in range(2):
        eq.gamma[m][:] = 0.0
    lam, w = [], []
    for _ in range(20_000):
        step_lambda_w(ms, 0, 0, rng)
        lam.append(eq.lam[0, 0, 0])
        w.append(eq.w[0][0, 0, 0] * eq.lam[0, 0, 0] ** 2 / 2)   # Gamma(1/2, 1) after scaling
    mean_test(np.array(lam), (h.a_lambda + 3) / h.b_lambda)
    mean_test(np.array(w), 0.5)


def test_lambda_w_conditional_of_w():
    rng = np.random.default_rng(11)
    ms = make_state(rng, D=1, shape=(3, 3))
    eq = ms.params.equations[0]
    eq.gamma[0][0, 0, 1] = 0.7
    sd2 = eq.tau[0] * eq.zeta[0, 0]
    ratios = []
    for _ in range(20_000):
        step_lambda_w(ms, 0, 0, rng)
        lam = eq.lam[0, 0, 0]
        ratios.append(eq.w[0][0, 0, 1] / gig_moment(1, 0.5, lam ** 2, 0.49 / sd2))
    mean_test(np.array(ratios), 1.0)


def test_sigma_mode_conditional_mean():
    rng = np.random.default_rng(12)
    ms = make_state(rng, D=2, shape=(2, 3))
    eq = ms.params.equations[0]
    h = ms.hyper
    from msmetr.sampler import _deviation_sums
    dev, _ = _deviation_sums(eq, 0)
    b = float((dev[:, 1] / (eq.tau[0] * eq.zeta[0])).sum())
    p = h.a_sigma - 2 * 6 / 2.0
    a = 2 * h.b_sigma

    def kern(x, r):
        return x ** (p - 1 + r) * math.exp(-(a * x + b / x) / 2)
    want = integrate.quad(kern, 0, np.inf, args=(1,))[0] / integrate.quad(kern, 0, np.inf, args=(0,))[0]
    x = np.array([step_sigma_mode(ms, 0, 0, 1, rng) for _ in range(50_000)])
    mean_test(x, want)


def test_sigma_mode_zero_deviation_is_guarded():
    rng = np.random.default_rng(13)
    ms = make_state(rng, D=1, shape=(2, 2))
    eq = ms.params.equations[0]
    for m in range(2):
        eq.gamma[m][:] = 1.0
    eq.factors[:] = 1.0
    val = step_sigma_mode(ms, 0, 0, 0, rng)
    assert np.isfinite(val) and val > 0


# --- observation variance and intercept -------------------------------------------------------

def test_noise_mu_empty_regime_prior_refresh():
    rng = np.random.default_rng(14)
    ms = make_state(rng, T=10, K=2, a_noise=3.0, b_noise=2.0, sigma_mu_sq=4.0)
    ms.chain.path[:] = 0
    eq = ms.params.equations[0]
    noise, mu = [], []
    for _ in range(40_000):
        step_noise_and_mu(ms, 0, 1, rng)
        noise.append(eq.noise[1])
        mu.append(eq.mu[1])
    mean_test(np.array(noise), 2.0 / (3.0 - 1.0))
    mean_test(np.array(mu), 0.0)
    assert np.var(mu) == pytest.approx(4.0, rel=0.03)


def test_noise_mu_conditionals_on_toy_data():
    rng = np.random.default_rng(15)
    T = 200
    ms = make_state(rng, T=T, D=1, shape=(2, 2), sigma_mu_sq=1e8)
    eq = ms.params.equations[0]
    eq.factors[:] = 0.0
    y = 1.5 + 0.8 * rng.standard_normal(T)
    ms.data = Dataset(y[:, None], ms.data.covariates[0])
    eq.mu[0] = 1.4
    noise = []
    for _ in range(20_000):
        eq.mu[0] = 1.4
        step_noise_and_mu(ms, 0, 0, rng)
        noise.append(eq.noise[0])
    ssr = float(((y - 1.4) ** 2).sum())
    a, b = ms.hyper.a_noise + T / 2, ms.hyper.b_noise + ssr / 2
    mean_test(np.array(noise), b / (a - 1))
    mus = []
    for _ in range(20_000):
        step_noise_and_mu(ms, 0, 0, rng)
        mus.append(eq.mu[0])
    b = np.array(mus).reshape(100, -1).mean(axis=1)
    assert abs(np.mean(mus) - y.mean()) < 4 * b.std(ddof=1) / 10


# --- transitions ------------------------------------------------------------------------------

def test_transition_counts_alternating_path():
    rng = np.random.default_rng(16)
    ms = make_state(rng, T=101, K=2)
    ms.chain.path = np.arange(101) % 2
    rows = np.array([step_transition(ms, rng)[0] for _ in range(40_000)])
    mean_test(rows, [1 / 52, 51 / 52])


def test_transition_single_point_and_single_regime():
    rng = np.random.default_rng(17)
    ms = make_state(rng, T=1, K=2)
    rows = np.array([step_transition(ms, rng)[1] for _ in range(40_000)])
    mean_test(rows, [0.5, 0.5])
    ms1 = make_state(rng, T=5, K=1)
    np.testing.assert_array_equal(step_transition(ms1, rng), [[1.0]])


# --- states ------------------------------------------------------------------------------------

def _set_emissions(ms, logE):
    """Rig the model so log_emissions returns ``logE`` (one equation, zero coefficients)."""
    import msmetr.sampler as S
    S_log = S.log_emissions
    S.log_emissions = lambda data, sp: logE
    return S_log


def test_ffbs_single_regime():
    rng = np.random.default_rng(18)
    ms = make_state(rng, T=7, K=1)
    path = ffbs(ms, rng)
    assert not path.any() and np.all(ms.chain.smoothed == 1.0)


@pytest.mark.parametrize("identical", [True, False])
def test_ffbs_against_enumeration(monkeypatch, identical):
    import msmetr.sampler as S
    rng = np.random.default_rng(19)
    T, K = 5, 2
    ms = make_state(rng, T=T, K=K)
    trans = np.array([[0.8, 0.2], [0.35, 0.65]])
    ms.chain.trans = trans
    logE = np.zeros((T, K)) if identical else rng.normal(size=(T, K))
    monkeypatch.setattr(S, "log_emissions", lambda data, sp: logE)
    from msmetr.model import stationary_distribution
    paths, probs = enumerate_paths(logE, trans, stationary_distribution(trans))
    counts = np.zeros(len(paths))
    index = {tuple(p): i for i, p in enumerate(paths)}
    n = 40_000
    for _ in range(n):
        counts[index[tuple(ffbs(ms, rng))]] += 1
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(counts / n - probs) <= 4 * se + 1e-12)
    marg = np.array([[probs[paths[:, t] == k].sum() for k in range(K)] for t in range(T)])
    np.testing.assert_allclose(ms.chain.smoothed, marg, atol=1e-12)


# --- relabeling ----------------------------------------------------------------------------------

def _traced_state(rng, traces):
    K = len(traces)
    ms = make_state(rng, T=12, K=K, D=1, shape=(3, 3))
    eq = ms.params.equations[0]
    for k, tr in enumerate(traces):
        eq.factors[k, 0, 0] = np.eye(3) * tr / 3
        eq.factors[k, 0, 1] = 1.0
        eq.mu[k] = k
    ms.chain.trans = np.random.default_rng(0).dirichlet(np.ones(K), size=K)
    return ms


def test_relabel_identity_when_ordered():
    ms = _traced_state(np.random.default_rng(20), [1.0, 2.0])
    np.testing.assert_array_equal(relabel(ms, "trace-order"), [0, 1])
    np.testing.assert_array_equal(ms.params.equations[0].mu, [0, 1])


def test_relabel_swap_and_involution():
    rng = np.random.default_rng(21)
    ms = _traced_state(rng, [2.0, 1.0])
    path0 = ms.chain.path.copy()
    trans0 = ms.chain.trans.copy()
    ll0 = loglik_path(ms.data, ms.params, ms.chain)
    np.testing.assert_array_equal(relabel(ms, "trace-order"), [1, 0])
    np.testing.assert_array_equal(ms.chain.path, 1 - path0)
    np.testing.assert_array_equal(ms.chain.trans, trans0[::-1, ::-1])
    assert loglik_path(ms.data, ms.params, ms.chain) == pytest.approx(ll0, rel=1e-12)
    np.testing.assert_array_equal(relabel(ms, "trace-order"), [0, 1])
    # applying the swap twice by hand restores the original labels
    for eq in ms.params.equations:
        eq.permute([1, 0])
        eq.permute([1, 0])
    np.testing.assert_array_equal(ms.params.equations[0].mu, [1, 0])


def test_relabel_three_regimes_sort_oracle():
    rng = np.random.default_rng(22)
    traces = rng.normal(size=3)
    ms = _traced_state(rng, list(traces))
    perm = relabel_permutation(ms.params, "trace-order")
    np.testing.assert_array_equal(perm, sorted(range(3), key=lambda i: traces[i]))
    fro = relabel_permutation(ms.params, "frobenius-order")
    np.testing.assert_array_equal(fro, sorted(range(3), key=lambda i: -abs(traces[i])))
    ll0 = loglik_path(ms.data, ms.params, ms.chain)
    relabel(ms, "trace-order")
    assert loglik_path(ms.data, ms.params, ms.chain) == pytest.approx(ll0, rel=1e-12)
    tr = np.trace(ms.params.equations[0].coefficients(), axis1=1, axis2=2)
    assert np.all(np.diff(tr) > 0)


def test_trace_rule_needs_square():
    ms = make_state(np.random.default_rng(23), K=2, shape=(2, 3))
    with pytest.raises(ValueError):
        relabel(ms, "trace-order")


# --- random partial scans on a discrete target ------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
def test_rpsg_discrete_stationary(k):
    target = discrete_target()
    freq, _ = rpsg_discrete(target, 300_000, k, np.random.default_rng(k))
    assert 0.5 * np.abs(freq - target).sum() < 0.01


def test_rpsg_discrete_rejects_bad_subset():
    with pytest.raises(ValueError):
        rpsg_discrete(discrete_target(), 10, 4, np.random.default_rng(0))


# --- chain driver ----------------------------------------------------------------------------------

def _tiny_data(seed=0, T=60, K=1):
    r = np.random.default_rng(seed)
    X = r.standard_normal((T, 3, 3))
    B = np.eye(3)
    y = np.einsum("tij,ij->t", X, B) + 0.3 * r.standard_normal(T)
    return Dataset(y[:, None], X), Hyperparameters(D=2, K=K)


def test_run_chain_single_stored_draw():
    data, h = _tiny_data()
    dr = run_chain(data, h, ChainConfig(iterations=6, burn_in=5, thin=1, seed=1))
    assert dr.n_draws == 1 and dr.coef.shape == (1, 1, 1, 3, 3)
    assert dr.outcome_mse.shape == (6,)


def test_run_chain_deterministic():
    data, h = _tiny_data(K=2)
    cfg = ChainConfig(iterations=30, burn_in=10, thin=2, seed=5, pilot_chains=2, pilot_iterations=5)
    a = run_chain(data, h, cfg)
    b = run_chain(data, h, cfg)
    assert a.equal(b)
    c = run_chain(data, h, ChainConfig(iterations=30, burn_in=10, thin=2, seed=6, pilot_chains=2,
                                       pilot_iterations=5))
    assert not a.equal(c)


def test_run_chain_recovers_simple_coefficient():
    data, h = _tiny_data(T=150)
    dr = run_chain(data, h, ChainConfig(iterations=400, burn_in=200, thin=2, seed=3))
    assert np.mean((dr.coef_mean()[0, 0] - np.eye(3)) ** 2) < 0.01


def test_run_chains_independent_and_process_invariant():
    data, h = _tiny_data()
    cfg = ChainConfig(iterations=12, burn_in=6, thin=2, seed=9)
    serial = run_chains(data, h, cfg, 2, processes=1)
    parallel = run_chains(data, h, cfg, 2, processes=2)
    assert serial[0].equal(parallel[0]) and serial[1].equal(parallel[1])
    assert not serial[0].equal(serial[1])


def test_partial_scan_updates_subset():
    data, h = _tiny_data()
    dr = run_chain(data, h, ChainConfig(iterations=40, burn_in=20, thin=1, seed=2, scan_fraction=0.25))
    assert np.all(np.isfinite(dr.coef))
