"""Gibbs sampler with random partial scans over PARAFAC blocks.

One sweep:

1. pick a uniformly random ordered subset of the ``(d, m)`` factor blocks;
   for each, and every equation and regime, draw each slice of ``B_m^(d)``
   with its marginal ``gamma`` integrated out, then the marginal itself;
2. refresh the scale parameters (zeta, tau, lambda, w, sigma_mode), the
   observation variance and the intercept of every equation and regime;
3. draw the transition matrix, then the state path by forward filtering
   and backward sampling;
4. relabel regimes to satisfy the identification rule.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .distributions import make_rng, sample_dirichlet, sample_gig
from .model import (
    Dataset, MarkovChain, StateParams, init_params, log_emissions, regime_rows,
    stationary_distribution,
)
from .prior import Hyperparameters

_FLOOR = 1e-300
_BIG = 1e300
IDENT_RULES = ("trace-order", "frobenius-order", "none")


@dataclass(frozen=True)
class ChainConfig:
    """Run length and scan settings.

    ``collapsed_prior`` selects the prior of a slice once its marginal is
    integrated out: ``"exact"`` keeps the shared-marginal covariance
    ``tau zeta (sigma^2 I + w 11')``, ``"diagonal"`` keeps only its diagonal.
    """

    iterations: int = 3000
    burn_in: int = 1500
    thin: int = 5
    seed: int = 0
    scan_fraction: float = 1.0
    ident_rule: str = "frobenius-order"
    ident_equation: int = 0
    collapsed_prior: str = "exact"
    pilot_chains: int = 8
    pilot_iterations: int = 100

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1:
            raise ValueError("iterations and thin must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if not 0 < self.scan_fraction <= 1:
            raise ValueError("scan_fraction must lie in (0, 1]")
        if self.ident_rule not in IDENT_RULES:
            raise ValueError(f"ident_rule must be one of {IDENT_RULES}")
        if self.collapsed_prior not in ("exact", "diagonal"):
            raise ValueError("collapsed_prior must be 'exact' or 'diagonal'")
        if self.pilot_chains < 1 or self.pilot_iterations < 1:
            raise ValueError("pilot_chains and pilot_iterations must be positive")

    @property
    def n_stored(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class ScanPlan:
    subset_size: int
    order: tuple
    n_blocks: int

    @property
    def selected(self) -> frozenset:
        return frozenset(self.order)


def draw_scan_plan(n_blocks: int, subset_size: int, rng) -> ScanPlan:
    """Uniform ordered subset via a partial Fisher-Yates shuffle."""
    if not 1 <= subset_size <= n_blocks:
        raise ValueError(f"subset size {subset_size} outside 1..{n_blocks}")
    idx = list(range(n_blocks))
    for i in range(subset_size):
        r = i + int(rng.integers(n_blocks - i))
        idx[i], idx[r] = idx[r], idx[i]
    return ScanPlan(subset_size, tuple(idx[:subset_size]), n_blocks)


def subset_size(cfg: ChainConfig, D: int, M: int) -> int:
    return min(D * M, max(1, math.ceil(cfg.scan_fraction * D * M - 1e-12)))


@dataclass
class ModelState:
    data: Dataset
    hyper: Hyperparameters
    params: StateParams
    chain: MarkovChain
    loglik: float = float("nan")
    _mode_cache: dict = field(default_factory=dict, repr=False)

    def rows(self) -> list:
        return regime_rows(self.chain.path, self.hyper.K)

    def mode_covariates(self, ell: int, m: int, rows) -> np.ndarray:
        """Covariates of equation ``ell`` on ``rows`` laid out as (p_m, n, q_m)."""
        X = self.data.covariates[ell]
        key = (id(X), m)
        full = self._mode_cache.get(key)
        if full is None:
            full = _mode_first(X, m, 1)
            self._mode_cache[key] = full
        if len(rows) == X.shape[0]:
            return full
        return np.take(full, rows, axis=1)

    def mode_gram(self, ell: int, m: int, Xm: np.ndarray, full: bool) -> np.ndarray:
        """Per-slice Gram matrices ``X_j' X_j`` (p_m, q_m, q_m); cached over all rows."""
        if not full:
            return np.swapaxes(Xm, 1, 2) @ Xm
        key = ("gram", id(self.data.covariates[ell]), m)
        g = self._mode_cache.get(key)
        if g is None:
            g = np.swapaxes(Xm, 1, 2) @ Xm
            self._mode_cache[key] = g
        return g


# --- factor blocks -------------------------------------------------------

def _mode_first(arr, m, lead):
    """Move tensor mode ``m`` (after ``lead`` leading axes) to the front."""
    a = np.moveaxis(arr, lead + m, 0)
    return np.ascontiguousarray(a).reshape(a.shape[:lead + 1] + (int(np.prod(a.shape[lead + 1:])),))


def _slice_prior_precision(q, scale, sig2, w, exact):
    """Prior precision of each slice (p, q, q) after integrating its marginal."""
    p = w.shape[0]
    eye = np.eye(q)
    if exact:
        c = w / (sig2 + q * w)
        P = (eye[None] - c[:, None, None] * np.ones((q, q))[None]) / (scale * sig2)
    else:
        P = eye[None] / (scale * (w + sig2))[:, None, None]
    return P.reshape(p, q, q)


def _batched_cov_factor(prec):
    """Covariances and their transposed-inverse Cholesky factors for a stack."""
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        q = prec.shape[-1]
        tr = np.trace(prec, axis1=1, axis2=2)
        L = np.linalg.cholesky(prec + (1e-10 * tr / q)[:, None, None] * np.eye(q)[None])
    Linv = np.linalg.inv(L)
    LinvT = np.swapaxes(Linv, 1, 2)
    return LinvT @ Linv, LinvT


def update_block(ms: ModelState, ell: int, k: int, d: int, m: int, rng, rows, resid,
                 exact: bool = True) -> None:
    """Draw every slice of ``B_m^(d)`` of one equation and regime, then its marginals.

    ``resid`` holds ``y - mu - <B, X>`` on ``rows`` and is kept current.
    """
    eq = ms.params.equations[ell]
    F = eq.factors[k, d]
    others = np.prod(np.delete(F, m, axis=0), axis=0)
    hm = _mode_first(others, m, 0)                      # (p, q)
    Fm = _mode_first(F[m], m, 0).copy()                 # (p, q)
    p, q = Fm.shape
    Xm = ms.mode_covariates(ell, m, rows)              # (p, n, q)
    # slice design is Xm[j] * hm[j]; its Gram is the scaled covariate Gram
    G = ms.mode_gram(ell, m, Xm, len(rows) == ms.data.T) * (hm[:, :, None] * hm[:, None, :])
    sig2 = eq.sigma_mode[k, m]
    scale = eq.tau[k] * eq.zeta[k, d]
    noise = eq.noise[k]
    w = eq.w[m][k, d]
    prec = G / noise + _slice_prior_precision(q, scale, sig2, w, exact)
    cov, LinvT = _batched_cov_factor(prec)
    z = rng.standard_normal((p, q))
    for j in range(p):
        Xj, hj = Xm[j], hm[j]
        old = Fm[j]
        b = (hj * (resid @ Xj) + G[j] @ old) / noise
        new = cov[j] @ b + LinvT[j] @ z[j]
        resid -= Xj @ (hj * (new - old))
        Fm[j] = new
    shape = F[m].shape
    moved = (shape[m],) + shape[:m] + shape[m + 1:]
    eq.factors[k, d, m] = np.moveaxis(Fm.reshape(moved), 0, m)
    # marginals given the fresh slices
    sums = Fm.sum(axis=1)
    denom = q * w + sig2
    mean = w / denom * sums
    var = scale * w * sig2 / denom
    eq.gamma[m][k, d] = mean + np.sqrt(var) * rng.standard_normal(p)


def step_beta(ms: ModelState, ell: int, k: int, d: int, m: int, j: int, rng,
              exact: bool = True) -> np.ndarray:
    """Draw a single slice ``j`` of ``B_m^(d)`` (marginal integrated out)."""
    eq = ms.params.equations[ell]
    rows = ms.rows()[k]
    X = ms.data.covariates[ell][rows]
    resid = ms.data.responses[rows, ell] - eq.mu[k] - ms.data.flat(ell)[rows] @ eq.coefficient(k).ravel()
    F = eq.factors[k, d]
    others = np.prod(np.delete(F, m, axis=0), axis=0)
    hm = _mode_first(others, m, 0)[j]
    Fm = _mode_first(F[m], m, 0)
    q = Fm.shape[1]
    Psi = _mode_first(X, m, 1)[j] * hm
    old = Fm[j]
    ytil = resid + Psi @ old
    prior = _slice_prior_precision(
        q, eq.tau[k] * eq.zeta[k, d], eq.sigma_mode[k, m], eq.w[m][k, d][j:j + 1], exact)[0]
    prec = Psi.T @ Psi / eq.noise[k] + prior
    cov, LinvT = _batched_cov_factor(prec[None])
    new = cov[0] @ (Psi.T @ ytil / eq.noise[k]) + LinvT[0] @ rng.standard_normal(q)
    Fm = Fm.copy()
    Fm[j] = new
    shape = F[m].shape
    moved = (shape[m],) + shape[:m] + shape[m + 1:]
    eq.factors[k, d, m] = np.moveaxis(Fm.reshape(moved), 0, m)
    return new


def step_gamma(ms: ModelState, ell: int, k: int, d: int, m: int, j: int, rng) -> float:
    eq = ms.params.equations[ell]
    beta = _mode_first(eq.factors[k, d, m], m, 0)[j]
    q = beta.size
    w = eq.w[m][k, d, j]
    sig2 = eq.sigma_mode[k, m]
    denom = q * w + sig2
    mean = w / denom * beta.sum()
    var = eq.tau[k] * eq.zeta[k, d] * w * sig2 / denom
    g = mean + math.sqrt(var) * rng.standard_normal()
    eq.gamma[m][k, d, j] = g
    return g


# --- scales ---------------------------------------------------------------

def _deviation_sums(eq, k):
    """Per (d, m): sum_j |beta_j - gamma_j 1|^2 and sum_j gamma_j^2 / w_j."""
    D, M = eq.D, eq.factors.shape[2]
    dev = np.empty((D, M))
    gw = np.empty((D, M))
    for m in range(M):
        shape = [1] * M
        shape[m] = -1
        loc = eq.gamma[m][k].reshape((D,) + tuple(shape))
        dev[:, m] = ((eq.factors[k, :, m] - loc) ** 2).reshape(D, -1).sum(axis=1)
        gw[:, m] = (eq.gamma[m][k] ** 2 / eq.w[m][k]).sum(axis=1)
    return dev, gw


def total_dimension(shape, M: int | None = None) -> int:
    """Number of factor entries plus marginal entries of one component: ``M prod(p) + sum(p)``."""
    M = len(shape) if M is None else M
    return M * int(np.prod(shape)) + int(sum(shape))


def step_zeta_tau(ms: ModelState, ell: int, k: int, rng) -> bool:
    """Component weights and global scale.

    ``phi_d = tau zeta_d`` are proposed from independent GiG laws, exact
    when ``a_tau == alpha``; otherwise an independence Metropolis-Hastings
    correction with ratio ``(sum phi' / sum phi)^(a_tau - alpha)`` makes the
    update exact. ``tau`` is then drawn given ``zeta``. Returns acceptance.
    """
    h = ms.hyper
    eq = ms.params.equations[ell]
    D, M = eq.D, eq.factors.shape[2]
    dev, gw = _deviation_sums(eq, k)
    C = np.maximum((dev / eq.sigma_mode[k][None, :] + gw).sum(axis=1), _FLOOR)
    I0 = total_dimension(eq.shape, M)
    accepted = True
    if D > 1:
        phi = sample_gig(np.full(D, h.alpha / D - I0 / 2.0), np.full(D, 2.0 * h.b_tau), C, rng)
        if h.a_tau != h.alpha:
            cur = eq.tau[k]
            log_ratio = (h.a_tau - h.alpha) * (math.log(phi.sum()) - math.log(cur))
            accepted = log_ratio >= 0 or math.log(rng.random()) < log_ratio
        if accepted:
            zeta = phi / phi.sum()
            eq.zeta[k] = np.maximum(zeta, _FLOOR)
            eq.zeta[k] /= eq.zeta[k].sum()
    else:
        eq.zeta[k] = 1.0
    b = max(float((C / eq.zeta[k]).sum()), _FLOOR)
    eq.tau[k] = min(max(sample_gig(h.a_tau - D * I0 / 2.0, 2.0 * h.b_tau, b, rng), _FLOOR), _BIG)
    return accepted


def step_lambda_w(ms: ModelState, ell: int, k: int, rng) -> None:
    h = ms.hyper
    eq = ms.params.equations[ell]
    sd = np.sqrt(eq.tau[k] * eq.zeta[k])                 # (D,)
    for m, g in enumerate(eq.gamma):
        gk = g[k]                                          # (D, p)
        p = gk.shape[1]
        rate = np.abs(gk).sum(axis=1) / sd + h.b_lambda
        lam = rng.gamma(h.a_lambda + p, 1.0 / rate)
        eq.lam[k, :, m] = lam
        bb = np.maximum(gk ** 2 / (sd ** 2)[:, None], _FLOOR)
        aa = np.broadcast_to((lam ** 2)[:, None], gk.shape)
        eq.w[m][k] = np.clip(sample_gig(np.full(gk.shape, 0.5), aa, bb, rng), _FLOOR, _BIG)


def step_sigma_mode(ms: ModelState, ell: int, k: int, m: int, rng) -> float:
    h = ms.hyper
    eq = ms.params.equations[ell]
    D = eq.D
    shape = eq.shape
    P = int(np.prod(shape))
    dev, _ = _deviation_sums(eq, k)
    b = max(float((dev[:, m] / (eq.tau[k] * eq.zeta[k])).sum()), _FLOOR)
    val = sample_gig(h.a_sigma - D * P / 2.0, 2.0 * h.b_sigma, b, rng)
    eq.sigma_mode[k, m] = min(max(val, _FLOOR), _BIG)
    return eq.sigma_mode[k, m]


def step_noise_and_mu(ms: ModelState, ell: int, k: int, rng, rows=None, fit=None) -> None:
    """Observation variance then intercept, on the time points of regime ``k``."""
    h = ms.hyper
    eq = ms.params.equations[ell]
    if rows is None:
        rows = ms.rows()[k]
    if fit is None:
        fit = ms.data.flat(ell)[rows] @ eq.coefficient(k).ravel()
    e = ms.data.responses[rows, ell] - fit
    n = len(rows)
    ssr = float(((e - eq.mu[k]) ** 2).sum())
    g = rng.gamma(h.a_noise + n / 2.0, 1.0 / (h.b_noise + 0.5 * ssr))
    eq.noise[k] = min(max(1.0 / g if g > 0 else _BIG, _FLOOR), _BIG)
    var = 1.0 / (n / eq.noise[k] + 1.0 / h.sigma_mu_sq)
    mean = var * float(e.sum()) / eq.noise[k]
    eq.mu[k] = mean + math.sqrt(var) * rng.standard_normal()


def transition_counts(path, K) -> np.ndarray:
    counts = np.zeros((K, K))
    if len(path) > 1:
        np.add.at(counts, (path[:-1], path[1:]), 1.0)
    return counts


def step_transition(ms: ModelState, rng) -> np.ndarray:
    K = ms.hyper.K
    if K == 1:
        ms.chain.trans = np.ones((1, 1))
        return ms.chain.trans
    counts = transition_counts(ms.chain.path, K)
    nu = np.asarray(ms.hyper.nu)
    ms.chain.trans = np.array([sample_dirichlet(nu + counts[i], rng) for i in range(K)])
    return ms.chain.trans


def ffbs(ms: ModelState, rng) -> np.ndarray:
    """Forward filter, backward sample; stores smoothed probabilities."""
    K, T = ms.hyper.K, ms.data.T
    if K == 1:
        ms.chain.path = np.zeros(T, dtype=np.int64)
        ms.chain.smoothed = np.ones((T, 1))
        ms.loglik = float(log_emissions(ms.data, ms.params).sum())
        return ms.chain.path
    logE = log_emissions(ms.data, ms.params)
    trans = np.ascontiguousarray(ms.chain.trans)
    init = stationary_distribution(trans)
    filtered, predicted, ms.loglik = kernels.forward_filter(np.ascontiguousarray(logE), trans, init)
    ms.chain.smoothed = kernels.backward_smooth(filtered, predicted, trans)
    ms.chain.path = kernels.backward_sample(filtered, trans, rng.random(T))
    return ms.chain.path


def relabel_permutation(sp: StateParams, rule: str, ell: int = 0) -> np.ndarray:
    K = sp.K
    if rule == "none" or K == 1:
        return np.arange(K)
    coefs = sp.equations[ell].coefficients()
    if rule == "trace-order":
        if coefs.ndim != 3 or coefs.shape[1] != coefs.shape[2]:
            raise ValueError("trace ordering needs square matrix coefficients")
        key = np.trace(coefs, axis1=1, axis2=2)
        return np.argsort(key, kind="stable")
    if rule == "frobenius-order":
        key = np.sqrt((coefs.reshape(K, -1) ** 2).sum(axis=1))
        return np.argsort(-key, kind="stable")
    raise ValueError(f"unknown identification rule {rule!r}")


def relabel(ms: ModelState, rule: str, ell: int = 0) -> np.ndarray:
    """Permute regime labels so ``rule`` holds; returns the permutation used.

    ``trace-order`` sorts by increasing trace, ``frobenius-order`` by
    decreasing Frobenius norm, both of equation ``ell``'s coefficient.
    """
    perm = relabel_permutation(ms.params, rule, ell)
    if np.array_equal(perm, np.arange(perm.size)):
        return perm
    for eq in ms.params.equations:
        eq.permute(perm)
    ms.chain.permute(perm)
    return perm


def rpsg_discrete(table, n_sweeps: int, subset_size: int, rng, state=None):
    """Random-partial-scan Gibbs over a joint probability table.

    Returns the visit-frequency table after ``n_sweeps`` sweeps and the
    final state.
    """
    table = np.ascontiguousarray(table, dtype=float)
    V = table.ndim
    if not 1 <= subset_size <= V:
        raise ValueError("subset size must lie in 1..number of variables")
    state = np.zeros(V, dtype=np.int64) if state is None else np.array(state, dtype=np.int64)
    counts = np.zeros(table.shape, dtype=np.int64)
    chunk = 100_000
    done = 0
    while done < n_sweeps:
        n = min(chunk, n_sweeps - done)
        u = rng.random((n, 2 * subset_size))
        state = kernels.discrete_rpsg(table, state, subset_size, u, counts)
        done += n
    return counts / max(n_sweeps, 1), state


# --- chain driver ---------------------------------------------------------

@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws of one chain."""

    coef: np.ndarray          # (S, N, K, *shape) for equal shapes, else list
    mu: np.ndarray            # (S, N, K)
    noise: np.ndarray         # (S, N, K)
    trans: np.ndarray         # (S, K, K)
    path: np.ndarray          # (S, T)
    zeta: np.ndarray          # (S, N, K, D)
    tau: np.ndarray           # (S, N, K)
    smoothed: np.ndarray      # (T, K) average over stored draws
    outcome_mse: np.ndarray   # (iterations,)
    accept_rate: float = 1.0
    seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.mu.shape[0]

    def coef_mean(self) -> np.ndarray:
        return self.coef.mean(axis=0)

    def equal(self, other: "PosteriorDraws") -> bool:
        names = ("coef", "mu", "noise", "trans", "path", "zeta", "tau", "smoothed", "outcome_mse")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


def outcome_mse(ms: ModelState) -> float:
    se = 0.0
    path = ms.chain.path
    for ell, eq in enumerate(ms.params.equations):
        X = ms.data.flat(ell)
        coefs = eq.coefficients().reshape(eq.K, -1)
        fit = np.einsum("tp,tp->t", X, coefs[path]) + eq.mu[path]
        se += float(((ms.data.responses[:, ell] - fit) ** 2).sum())
    return se / (ms.data.T * ms.data.N)


def rpsg_sweep(ms: ModelState, cfg: ChainConfig, rng) -> tuple:
    """One full iteration; returns (scan plan, zeta acceptance count, tries)."""
    h = ms.hyper
    D, M, K = h.D, h.M, h.K
    exact = cfg.collapsed_prior == "exact"
    plan = draw_scan_plan(D * M, subset_size(cfg, D, M), rng)
    rows_all = ms.rows()
    for blk in plan.order:
        d, m = divmod(blk, M)
        for k in range(K):
            rows = rows_all[k]
            for ell, eq in enumerate(ms.params.equations):
                fit = ms.data.flat(ell)[rows] @ eq.coefficient(k).ravel()
                resid = ms.data.responses[rows, ell] - eq.mu[k] - fit
                update_block(ms, ell, k, d, m, rng, rows, resid, exact)
    acc = tries = 0
    for k in range(K):
        rows = rows_all[k]
        for ell in range(ms.data.N):
            tries += 1
            acc += step_zeta_tau(ms, ell, k, rng)
            step_lambda_w(ms, ell, k, rng)
            for m in range(M):
                step_sigma_mode(ms, ell, k, m, rng)
            step_noise_and_mu(ms, ell, k, rng, rows)
    step_transition(ms, rng)
    ffbs(ms, rng)
    relabel(ms, cfg.ident_rule, cfg.ident_equation)
    return plan, acc, tries


def new_state(data: Dataset, hyper: Hyperparameters, rng) -> ModelState:
    sp, chain = init_params(data, hyper, rng)
    return ModelState(data, hyper, sp, chain)


def _select_pilot(data, hyper, cfg, seed_seq):
    """Short chains from independent starts; keep the best by observed likelihood.

    Returns the chosen state, its generator and its per-iteration outcome
    MSE and acceptance counts, so the pilot becomes the head of the chain.
    """
    n_it = min(cfg.pilot_iterations, cfg.burn_in)
    tail = max(1, n_it // 4)
    best = None
    for child in seed_seq.spawn(cfg.pilot_chains):
        rng = np.random.Generator(np.random.PCG64(child))
        ms = new_state(data, hyper, rng)
        mse = np.empty(n_it)
        ll = np.empty(n_it)
        acc = tries = 0
        for it in range(n_it):
            _, a, n = rpsg_sweep(ms, cfg, rng)
            acc += a
            tries += n
            mse[it] = outcome_mse(ms)
            ll[it] = ms.loglik
        score = float(np.mean(ll[-tail:]))
        if best is None or score > best[0]:
            best = (score, ms, rng, mse, acc, tries)
    return best[1:]


def run_chain(data: Dataset, hyper: Hyperparameters, cfg: ChainConfig, *,
              rng=None, state: ModelState | None = None, callback=None) -> PosteriorDraws:
    """Run one chain; deterministic given ``cfg.seed`` (or the supplied ``rng``).

    With several regimes and ``cfg.pilot_chains > 1`` the first
    ``pilot_iterations`` sweeps (capped at the burn-in) are run from that many
    independent starts and the chain continues from the start whose
    forward-filter log-likelihood is highest over the last quarter of
    those sweeps. All of this happens inside the burn-in.
    """
    if cfg.ident_rule == "trace-order" and hyper.K > 1:
        shp = data.shape(cfg.ident_equation)
        if len(shp) != 2 or shp[0] != shp[1]:
            raise ValueError("trace ordering needs square matrix coefficients")
    N, K, T, D = data.N, hyper.K, data.T, hyper.D
    S = cfg.n_stored
    mse = np.empty(cfg.iterations)
    acc = tries = 0
    start = 0
    t0 = time.perf_counter()
    use_pilots = (state is None and rng is None and K > 1 and cfg.pilot_chains > 1
                  and cfg.burn_in > 0)
    if use_pilots:
        ms, rng, head, acc, tries = _select_pilot(data, hyper, cfg, np.random.SeedSequence(cfg.seed))
        start = head.size
        mse[:start] = head
    else:
        rng = make_rng(cfg.seed) if rng is None else rng
        ms = new_state(data, hyper, rng) if state is None else state
    shapes = {data.shape(ell) for ell in range(N)}
    coef = np.empty((S, N, K) + data.shape(0)) if len(shapes) == 1 else [None] * S
    mu = np.empty((S, N, K))
    noise = np.empty((S, N, K))
    trans = np.empty((S, K, K))
    path = np.empty((S, T), dtype=np.int64)
    zeta = np.empty((S, N, K, D))
    tau = np.empty((S, N, K))
    smoothed = np.zeros((T, K))
    s = 0
    for it in range(start, cfg.iterations):
        _, a, n = rpsg_sweep(ms, cfg, rng)
        acc += a
        tries += n
        mse[it] = outcome_mse(ms)
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            eqs = ms.params.equations
            if isinstance(coef, np.ndarray):
                coef[s] = np.stack([e.coefficients() for e in eqs])
            else:
                coef[s] = [e.coefficients() for e in eqs]
            mu[s] = [e.mu for e in eqs]
            noise[s] = [e.noise for e in eqs]
            trans[s] = ms.chain.trans
            path[s] = ms.chain.path
            zeta[s] = [e.zeta for e in eqs]
            tau[s] = [e.tau for e in eqs]
            smoothed += ms.chain.smoothed
            s += 1
        if callback is not None:
            callback(it, ms)
    return PosteriorDraws(
        coef=coef, mu=mu, noise=noise, trans=trans, path=path, zeta=zeta, tau=tau,
        smoothed=smoothed / max(S, 1), outcome_mse=mse,
        accept_rate=acc / max(tries, 1), seconds=time.perf_counter() - t0,
        meta={"config": asdict(cfg), "backend": kernels.BACKEND, "pilots": bool(use_pilots)},
    )


def _chain_worker(args):
    data, hyper, cfg = args
    return run_chain(data, hyper, cfg)


def run_chains(data: Dataset, hyper: Hyperparameters, cfg: ChainConfig, n_chains: int,
               processes: int | None = None) -> list:
    """Independent chains with seeds spawned from ``cfg.seed``.

    Chains run in worker processes when ``processes`` > 1; results do not
    depend on the process count.
    """
    from dataclasses import replace
    seeds = np.random.SeedSequence(cfg.seed).generate_state(n_chains, dtype=np.uint64)
    cfgs = [replace(cfg, seed=int(s)) for s in seeds]
    if processes is None or processes <= 1 or n_chains == 1:
        return [run_chain(data, hyper, c) for c in cfgs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=processes) as ex:
        return list(ex.map(_chain_worker, [(data, hyper, c) for c in cfgs]))
