"""Least squares and LASSO on vectorized covariates, forecasting and scoring."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import Dataset


def fit_ols(y, X) -> np.ndarray:
    """Least-squares coefficients via a Cholesky solve of the normal equations.

    A rank-deficient or wide design gets a ridge jitter of ``1e-10 * trace/P``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = X.T @ X
    b = X.T @ y
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=False)
        return linalg.cho_solve(c, b, check_finite=False)
    except linalg.LinAlgError:
        jitter = 1e-10 * max(np.trace(A), 1.0) / A.shape[0]
        c = linalg.cho_factor(A + jitter * np.eye(A.shape[0]), lower=True, check_finite=False)
        return linalg.cho_solve(c, b, check_finite=False)


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def _lasso_cd(X, y, lam, beta, col_sq, tol, max_iter):
    """Coordinate descent on 0.5|y - X b|^2 + lam |b|_1; stops on the duality gap."""
    from . import kernels
    return kernels.lasso_cd(X, y, float(lam), beta, np.asarray(col_sq, dtype=float), float(tol), int(max_iter))


@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    lam: float
    gap: float
    cv_lams: np.ndarray | None = None
    cv_errors: np.ndarray | None = None

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, float) @ self.coef + self.intercept


def lasso_path_grid(y, X, n: int = 30, ratio: float = 1e-3) -> np.ndarray:
    lam_max = float(np.abs(X.T @ y).max())
    if lam_max == 0.0:
        return np.array([0.0])
    return np.geomspace(lam_max, lam_max * ratio, n)


def fit_lasso(y, X, lam: float | None = None, *, standardize: bool = True,
              tol: float = 1e-8, max_iter: int = 100_000, folds: int = 5,
              rng=None) -> LassoFit:
    """LASSO by coordinate descent.

    With ``standardize=True`` the response is centred and columns centred and
    scaled to unit norm before fitting; the penalty then applies to that
    scaled problem and coefficients are mapped back. With
    ``standardize=False`` the raw problem ``0.5|y - X b|^2 + lam |b|_1`` is
    solved with no intercept. ``lam=None`` selects the penalty by
    ``folds``-fold cross-validation over a log grid.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if standardize:
        xm = X.mean(axis=0)
        xs = np.sqrt(((X - xm) ** 2).sum(axis=0))
        xs[xs == 0] = 1.0
        ym = y.mean()
        Z = (X - xm) / xs
        yc = y - ym
    else:
        xm = np.zeros(X.shape[1])
        xs = np.ones(X.shape[1])
        ym = 0.0
        Z, yc = X, y
    cv_lams = cv_err = None
    if lam is None:
        cv_lams, cv_err = _cv_lasso(yc, Z, folds, rng, tol, max_iter)
        lam = float(cv_lams[int(np.argmin(cv_err))])
    if lam < 0:
        raise ValueError("penalty must be nonnegative")
    col_sq = (Z ** 2).sum(axis=0)
    if lam == 0.0:
        beta = fit_ols(yc, Z)
        gap = 0.0
    else:
        beta, gap = _lasso_cd(Z, yc, lam, np.zeros(Z.shape[1]), col_sq, tol, max_iter)
    coef = beta / xs
    return LassoFit(coef, float(ym - xm @ coef), lam, float(gap), cv_lams, cv_err)


def _cv_lasso(y, X, folds, rng, tol, max_iter):
    T = len(y)
    grid = lasso_path_grid(y, X)
    idx = np.arange(T) if rng is None else rng.permutation(T)
    parts = np.array_split(idx, folds)
    err = np.zeros(grid.size)
    for f in parts:
        train = np.setdiff1d(idx, f)
        Xt, yt = X[train], y[train]
        xm, ym = Xt.mean(axis=0), yt.mean()
        Xc, yc = Xt - xm, yt - ym
        col_sq = (Xc ** 2).sum(axis=0)
        beta = np.zeros(X.shape[1])
        for i, lam in enumerate(grid):      # warm starts down the path
            beta, _ = _lasso_cd(Xc, yc, lam, beta, col_sq, max(tol, 1e-6), max_iter)
            pred = (X[f] - xm) @ beta + ym
            err[i] += float(((y[f] - pred) ** 2).sum())
    return grid, err / T


def mse(a, b) -> float:
    return float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))


def mae(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(a, float) - np.asarray(b, float))))


@dataclass
class FitReport:
    method: str
    in_mse: float
    in_mae: float
    out: dict = field(default_factory=dict)   # horizon -> (mse, mae)

    def row(self, horizons) -> list:
        vals = [self.method, self.in_mse, self.in_mae]
        for h in horizons:
            m, a = self.out.get(h, (float("nan"), float("nan")))
            vals += [m, a]
        return vals


def write_reports(reports, path, horizons=(1, 5)) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["method", "in_mse", "in_mae"]
        for h in horizons:
            head += [f"h{h}_mse", f"h{h}_mae"]
        w.writerow(head)
        for r in reports:
            w.writerow([v if isinstance(v, str) else f"{v:.10g}" for v in r.row(horizons)])


# --- forecasting ----------------------------------------------------------

def msmetr_point_estimates(draws):
    """Posterior means of coefficients (N, K, ...), intercepts, variances, transitions."""
    return draws.coef_mean(), draws.mu.mean(axis=0), draws.noise.mean(axis=0), draws.trans.mean(axis=0)


def _regime_means(draws, data: Dataset) -> np.ndarray:
    coef, mu, _, _ = msmetr_point_estimates(draws)
    K = mu.shape[1]
    out = np.empty((data.T, data.N, K))
    for ell in range(data.N):
        out[:, ell, :] = data.flat(ell) @ coef[ell].reshape(K, -1).T + mu[ell][None, :]
    return out


def filtered_probabilities(draws, data: Dataset) -> np.ndarray:
    """Hamilton-filter regime probabilities at posterior-mean parameters (T, K)."""
    from . import kernels
    from .model import stationary_distribution
    _, _, noise, P = msmetr_point_estimates(draws)
    means = _regime_means(draws, data)
    resid = data.responses[:, :, None] - means
    logE = -0.5 * (np.log(2 * np.pi * noise)[None] + resid ** 2 / noise[None]).sum(axis=1)
    filt, _, _ = kernels.forward_filter(np.ascontiguousarray(logE), np.ascontiguousarray(P),
                                        stationary_distribution(P))
    return filt


def msmetr_forecast(draws, data: Dataset, horizon: int, start: int = 0) -> np.ndarray:
    """``horizon``-step predictive means for times ``start..T-1`` (rows, N).

    The regime law at ``t`` is the filtered law at ``t - horizon`` moved
    ``horizon`` steps through the posterior-mean transition matrix; future
    covariates are taken as observed. ``horizon=0`` gives filtered in-sample
    fitted values.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    _, _, _, P = msmetr_point_estimates(draws)
    filt = filtered_probabilities(draws, data)
    K = P.shape[0]
    step = np.linalg.matrix_power(P, horizon)
    init = np.full(K, 1.0 / K) if K > 1 else np.ones(1)
    lagged = np.vstack([np.tile(init, (horizon, 1)), filt])[: data.T] if horizon else filt
    probs = lagged @ step
    means = _regime_means(draws, data)
    return np.einsum("tk,tnk->tn", probs, means)[start:]


def compare_methods(data: Dataset, n_test: int, draws, horizons=(1, 5), rng=None,
                    lasso_lam: float | None = None, tensor_draws=None) -> list:
    """In-sample and out-of-sample scores of the fitted chain, OLS and LASSO.

    ``draws`` must come from a fit on the first ``T - n_test`` time points;
    so must ``tensor_draws``, an optional single-regime fit reported as the
    "Tensor" row. Every method is scored on the same held-out rows.
    """
    T = data.T
    cut = T - n_test
    if not 0 < cut < T:
        raise ValueError("test size must leave training data")
    y = data.responses
    reports = []
    chains = [("MSMETR", draws)] + ([("Tensor", tensor_draws)] if tensor_draws is not None else [])
    for name, dr in chains:
        fit_in = msmetr_forecast(dr, data.slice_time(0, cut), 0)
        rep = FitReport(name, mse(fit_in, y[:cut]), mae(fit_in, y[:cut]))
        for h in horizons:
            pred = msmetr_forecast(dr, data, h, start=cut)
            rep.out[h] = (mse(pred, y[cut:]), mae(pred, y[cut:]))
        reports.append(rep)
    for name in ("OLS", "LASSO"):
        ins, outs = [], []
        for ell in range(data.N):
            X = data.flat(ell)
            Xd = np.column_stack([np.ones(T), X])
            if name == "OLS":
                c = fit_ols(y[:cut, ell], Xd[:cut])
                pred = Xd @ c
            else:
                fit = fit_lasso(y[:cut, ell], X[:cut], lasso_lam, rng=rng)
                pred = fit.predict(X)
            ins.append(pred[:cut])
            outs.append(pred[cut:])
        ins, outs = np.column_stack(ins), np.column_stack(outs)
        rep = FitReport(name, mse(ins, y[:cut]), mae(ins, y[:cut]))
        for h in horizons:
            rep.out[h] = (mse(outs, y[cut:]), mae(outs, y[cut:]))
        reports.append(rep)
    return reports
