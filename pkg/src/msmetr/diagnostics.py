"""Chain and estimate quality: autocorrelation, errors, state recovery, HPD ellipses."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class DiagnosticError(ValueError):
    """A statistic is undefined for the given input."""


def acf(series, lags=(1, 5, 10)) -> np.ndarray:
    """Sample autocorrelation, every lag normalized by the lag-0 sum of squares."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    xc = x - x.mean()
    peak = np.abs(xc).max() if n else 0.0
    if np.isfinite(peak) and peak > 0:
        xc = xc / peak                  # scale free; keeps sums of squares finite
    c0 = float(xc @ xc)
    if n < 2 or c0 <= 0.0:
        raise DiagnosticError("autocorrelation is undefined for a constant series")
    out = []
    for h in np.atleast_1d(lags):
        h = int(h)
        if h < 0:
            raise ValueError("lags must be nonnegative")
        out.append(1.0 if h == 0 else (float(xc[:-h] @ xc[h:]) / c0 if h < n else 0.0))
    return np.array(out)


def mse_coeff(post_mean, truth) -> float:
    a = np.asarray(post_mean, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mae_coeff(post_mean, truth) -> float:
    return float(np.mean(np.abs(np.asarray(post_mean, float) - np.asarray(truth, float))))


def best_permutation(estimated_path, true_path, K: int) -> tuple:
    """Label map ``perm`` maximizing agreement of ``perm[estimated]`` with truth."""
    est = np.asarray(estimated_path)
    tru = np.asarray(true_path)
    best, best_hits = tuple(range(K)), -1
    for perm in itertools.permutations(range(K)):
        hits = int(np.sum(np.asarray(perm)[est] == tru))
        if hits > best_hits:
            best, best_hits = perm, hits
    return best


def state_accuracy(smoothed, true_path) -> tuple[float, float]:
    """(mse, hit rate) of the most probable regime after best label alignment.

    The MSE compares one-hot indicators of the aligned MAP regime with the
    true regime, averaged over time and regimes.
    """
    P = np.asarray(smoothed, dtype=float)
    T, K = P.shape
    tru = np.asarray(true_path, dtype=np.int64)
    if tru.shape != (T,):
        raise ValueError("true path length differs from smoothed probabilities")
    est = P.argmax(axis=1)
    perm = np.asarray(best_permutation(est, tru, K))
    aligned = perm[est]
    onehot_est = np.eye(K)[aligned]
    onehot_tru = np.eye(K)[tru]
    return float(np.mean((onehot_est - onehot_tru) ** 2)), float(np.mean(aligned == tru))


def align_draws(coef_mean, smoothed, true_path):
    """Reorder regime axis of a (K, ...) estimate by the state-alignment permutation."""
    K = np.asarray(smoothed).shape[1]
    perm = np.asarray(best_permutation(np.asarray(smoothed).argmax(axis=1), true_path, K))
    inv = np.empty(K, dtype=int)
    inv[perm] = np.arange(K)
    return np.asarray(coef_mean)[inv]


@dataclass(frozen=True)
class Ellipse:
    mean: np.ndarray
    cov: np.ndarray
    radius_sq: float
    level: float
    crosses_diagonal: bool

    def boundary(self, n: int = 100) -> np.ndarray:
        """Points on the ellipse, shape (n, 2)."""
        vals, vecs = np.linalg.eigh(self.cov)
        vals = np.clip(vals, 0.0, None)
        t = np.linspace(0.0, 2.0 * np.pi, n)
        circle = np.stack([np.cos(t), np.sin(t)])
        return (self.mean[:, None] + vecs @ (np.sqrt(vals * self.radius_sq)[:, None] * circle)).T


def hpd_region(draws, level: float = 0.9) -> Ellipse:
    """Gaussian-approximation HPD ellipse of paired draws (n, 2).

    ``crosses_diagonal`` reports whether the ellipse meets the line ``x = y``:
    the minimum of the Mahalanobis distance over that line is compared with
    the chi-square radius.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("draws must have shape (n, 2)")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    # the verdict is scale free, so work on rescaled draws to avoid overflow
    scale = float(np.abs(x).max()) if x.size else 0.0
    scale = scale if np.isfinite(scale) and scale > 0 else 1.0
    z = x / scale
    mean_z = z.mean(axis=0)
    cov_z = np.cov(z, rowvar=False) if z.shape[0] > 1 else np.zeros((2, 2))
    r2 = float(stats.chi2.ppf(level, 2))
    # min over the line of the squared Mahalanobis distance is offset^2 / (n' cov n)
    n_vec = np.array([1.0, -1.0]) / math.sqrt(2.0)
    offset = float(n_vec @ mean_z)
    var_n = float(n_vec @ cov_z @ n_vec)
    if abs(offset) < 1e-15:
        crosses = True
    elif var_n <= 0.0:
        crosses = False
    else:
        crosses = offset * offset / var_n <= r2
    with np.errstate(over="ignore"):
        mean, cov = mean_z * scale, cov_z * (scale * scale)
    return Ellipse(mean, cov, r2, level, bool(crosses))


@dataclass
class SeriesSummary:
    mean: float
    sd: float
    q05: float
    q50: float
    q95: float
    acf: dict = field(default_factory=dict)


def summarize_series(x, lags=(1, 5, 10)) -> SeriesSummary:
    x = np.asarray(x, dtype=float).ravel()
    q = np.quantile(x, [0.05, 0.5, 0.95])
    try:
        rho = dict(zip((int(h) for h in lags), acf(x, lags).tolist()))
    except DiagnosticError:
        rho = {int(h): None for h in lags}
    with np.errstate(over="ignore"):    # sd of vague-prior draws may overflow to inf
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return SeriesSummary(float(x.mean()), sd,
                         float(q[0]), float(q[1]), float(q[2]), rho)


def chain_summary(draws, truth: dict | None = None, lags=(1, 5, 10)) -> dict:
    """JSON-ready summary of a ``PosteriorDraws``."""
    out = {"n_draws": int(draws.n_draws), "accept_rate": float(draws.accept_rate), "series": {}}
    S, N, K = draws.mu.shape
    for ell in range(N):
        for k in range(K):
            for name in ("mu", "noise", "tau"):
                key = f"{name}[{ell},{k}]"
                out["series"][key] = summarize_series(getattr(draws, name)[:, ell, k], lags).__dict__
    for i in range(K):
        for j in range(K):
            out["series"][f"trans[{i},{j}]"] = summarize_series(draws.trans[:, i, j], lags).__dict__
    if K > 1 and draws.path.size:
        out["series"]["state_mean"] = summarize_series(draws.path.mean(axis=1), lags).__dict__
    out["outcome_mse_last"] = float(draws.outcome_mse[-1])
    if truth is not None:
        cm = draws.coef_mean()
        tc = np.asarray(truth["coefficients"])
        if K > 1 and truth.get("path") is not None:
            mse_s, hit = state_accuracy(draws.smoothed, truth["path"])
            out["state_mse"], out["state_hit_rate"] = mse_s, hit
            cm0 = align_draws(cm[0], draws.smoothed, truth["path"])
        else:
            cm0 = cm[0]
        out["coef_mse"] = mse_coeff(cm0, tc)
        out["coef_mae"] = mae_coeff(cm0, tc)
    return out


def write_json(obj, path) -> None:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(f"cannot serialize {type(o)}")
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=conv)


def _scatter_series(draws) -> list:
    """Regime-0 vs regime-1 draw pairs: intercepts, variances and two coefficient entries."""
    S, N, K = draws.mu.shape
    out = []
    for ell in range(N):
        out.append((f"noise[{ell}]", draws.noise[:, ell, :2]))
        out.append((f"mu[{ell}]", draws.mu[:, ell, :2]))
        c = draws.coef[:, ell].reshape(S, K, -1)
        shape = draws.coef.shape[3:]
        diff = np.abs(c[:, 0].mean(axis=0) - c[:, 1].mean(axis=0))
        for i in sorted({0, int(np.argmax(diff))}):
            idx = ",".join(map(str, np.unravel_index(i, shape)))
            out.append((f"coef[{ell},{idx}]", np.stack([c[:, 0, i], c[:, 1, i]], axis=1)))
    return out


def write_plot_data(draws, directory, truth: dict | None = None, max_lag: int = 20,
                    level: float = 0.9) -> dict:
    """Plot-ready CSVs: traces, ACF bars, smoothed states, regime scatter and ellipses.

    Returns the ellipse verdicts (series -> crosses the 45 degree line).
    """
    from pathlib import Path
    from .io import write_table
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    S, N, K = draws.mu.shape
    write_table(out / "outcome_trace.csv", ["iteration", "outcome_mse"],
                [[i, float(v)] for i, v in enumerate(draws.outcome_mse)])
    series = []
    for ell in range(N):
        for k in range(K):
            series += [(f"mu[{ell},{k}]", draws.mu[:, ell, k]),
                       (f"noise[{ell},{k}]", draws.noise[:, ell, k]),
                       (f"tau[{ell},{k}]", draws.tau[:, ell, k])]
    if K > 1:
        series += [(f"trans[{k},{k}]", draws.trans[:, k, k]) for k in range(K)]
    write_table(out / "trace.csv", ["draw"] + [n for n, _ in series],
                [[s] + [float(v[s]) for _, v in series] for s in range(S)])
    lags = list(range(1, max_lag + 1))
    rows = []
    for name, v in series:
        try:
            rho = acf(v, lags)
        except DiagnosticError:
            rho = np.full(len(lags), np.nan)
        rows += [[name, h, float(r)] for h, r in zip(lags, rho)]
    write_table(out / "acf.csv", ["series", "lag", "acf"], rows)
    head = ["t"] + [f"p{k}" for k in range(K)]
    tru = None
    if truth is not None and truth.get("path") is not None and K > 1:
        head.append("true_state")
        tru = np.asarray(truth["path"])
    rows = []
    for t in range(draws.smoothed.shape[0]):
        r = [t] + [float(p) for p in draws.smoothed[t]]
        if tru is not None:
            r.append(int(tru[t]))
        rows.append(r)
    write_table(out / "smoothed.csv", head, rows)
    verdicts = {}
    if K >= 2:
        srows, erows = [], []
        for name, pairs in _scatter_series(draws):
            srows += [[name, s, float(x), float(y)] for s, (x, y) in enumerate(pairs)]
            try:
                ell = hpd_region(pairs, level)
            except ValueError:
                continue
            verdicts[name] = ell.crosses_diagonal
            erows += [[name, i, float(x), float(y)] for i, (x, y) in enumerate(ell.boundary())]
        write_table(out / "scatter.csv", ["series", "draw", "regime0", "regime1"], srows)
        write_table(out / "ellipse.csv", ["series", "point", "regime0", "regime1"], erows)
    return verdicts
