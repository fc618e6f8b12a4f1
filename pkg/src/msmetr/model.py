"""Data, parameter state and likelihood of the Markov-switching tensor regression.

Equation ``l`` at time ``t`` in regime ``k``::

    y[t, l] = mu[l, k] + <B[l, k], X_l[t]> + sqrt(noise[l, k]) * eps

with ``B[l, k] = sum_d B_1^(d) o ... o B_M^(d)`` and regimes driven by a
homogeneous Markov chain. Regimes are 0-based internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .prior import Hyperparameters
from .tensor import DimensionError

_LOG_2PI = math.log(2.0 * math.pi)


class Dataset:
    """Responses ``y`` (T x N) and one covariate sequence per equation.

    Parameters
    ----------
    responses : array_like, shape (T, N)
    covariates : array or sequence of arrays
        Either one array of shape ``(T, p_1, ..., p_M)`` shared by every
        equation, or a list of N such arrays. Shared sequences are stored
        once and aliased.
    """

    def __init__(self, responses, covariates):
        y = np.array(responses, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise DimensionError(f"responses must be T x N, got shape {y.shape}")
        T, N = y.shape
        if isinstance(covariates, np.ndarray) or not isinstance(covariates, (list, tuple)):
            covariates = [covariates] * N
        if len(covariates) != N:
            raise DimensionError(f"{len(covariates)} covariate sequences for {N} equations")
        seen: dict[int, np.ndarray] = {}
        xs = []
        for x in covariates:
            key = id(x)
            if key not in seen:
                arr = np.array(x, dtype=float)
                arr.setflags(write=False)
                seen[key] = arr
            xs.append(seen[key])
        for ell, x in enumerate(xs):
            if x.ndim < 3:
                raise DimensionError(f"equation {ell}: covariates need T plus at least two modes")
            if x.shape[0] != T:
                raise DimensionError(f"equation {ell}: {x.shape[0]} covariate tensors for T={T}")
        if not np.all(np.isfinite(y)) or not all(np.all(np.isfinite(x)) for x in seen.values()):
            raise ValueError("dataset contains missing or non-finite values")
        y.setflags(write=False)
        self.responses = y
        self.covariates = xs
        self._flat: dict[int, np.ndarray] = {}

    @property
    def T(self) -> int:
        return self.responses.shape[0]

    @property
    def N(self) -> int:
        return self.responses.shape[1]

    def shape(self, ell: int) -> tuple[int, ...]:
        return self.covariates[ell].shape[1:]

    def flat(self, ell: int) -> np.ndarray:
        """Covariates of equation ``ell`` as a (T, P) C-ordered design."""
        x = self.covariates[ell]
        key = id(x)
        if key not in self._flat:
            self._flat[key] = x.reshape(x.shape[0], -1)
        return self._flat[key]

    def slice_time(self, start: int, stop: int) -> "Dataset":
        """Sub-sample ``start <= t < stop`` keeping the aliasing pattern."""
        memo: dict[int, np.ndarray] = {}
        xs = []
        for x in self.covariates:
            if id(x) not in memo:
                memo[id(x)] = x[start:stop]
            xs.append(memo[id(x)])
        return Dataset(self.responses[start:stop], xs)


@dataclass
class EquationParams:
    """All regime-specific parameters of one equation, stacked over K regimes.

    Shapes: ``factors (K, D, M, *shape)``; ``gamma[m]`` and ``w[m]`` are
    ``(K, D, p_m)``; ``lam (K, D, M)``; ``zeta (K, D)``; ``tau (K,)``;
    ``sigma_mode (K, M)``; ``mu (K,)``; ``noise (K,)``.
    """

    factors: np.ndarray
    gamma: list
    w: list
    lam: np.ndarray
    zeta: np.ndarray
    tau: np.ndarray
    sigma_mode: np.ndarray
    mu: np.ndarray
    noise: np.ndarray

    @property
    def K(self) -> int:
        return self.factors.shape[0]

    @property
    def D(self) -> int:
        return self.factors.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.factors.shape[3:]

    def coefficients(self) -> np.ndarray:
        """Composed coefficient tensors, shape ``(K, *shape)``."""
        return np.prod(self.factors, axis=2).sum(axis=1)

    def coefficient(self, k: int) -> np.ndarray:
        return np.prod(self.factors[k], axis=1).sum(axis=0)

    def copy(self) -> "EquationParams":
        return EquationParams(
            self.factors.copy(), [g.copy() for g in self.gamma], [v.copy() for v in self.w],
            self.lam.copy(), self.zeta.copy(), self.tau.copy(), self.sigma_mode.copy(),
            self.mu.copy(), self.noise.copy(),
        )

    def permute(self, perm) -> None:
        """Reorder regimes in place: new regime ``i`` is old regime ``perm[i]``."""
        perm = np.asarray(perm)
        self.factors = self.factors[perm]
        self.gamma = [g[perm] for g in self.gamma]
        self.w = [v[perm] for v in self.w]
        for name in ("lam", "zeta", "tau", "sigma_mode", "mu", "noise"):
            setattr(self, name, getattr(self, name)[perm])


@dataclass
class StateParams:
    equations: list

    @property
    def N(self) -> int:
        return len(self.equations)

    @property
    def K(self) -> int:
        return self.equations[0].K

    def copy(self) -> "StateParams":
        return StateParams([e.copy() for e in self.equations])


@dataclass
class MarkovChain:
    """Transition matrix, current path and smoothed probabilities."""

    trans: np.ndarray
    path: np.ndarray
    smoothed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=float)
        self.path = np.asarray(self.path, dtype=np.int64)
        K = self.trans.shape[0]
        if self.trans.shape != (K, K):
            raise DimensionError("transition matrix must be square")
        if np.any(self.trans < 0) or not np.allclose(self.trans.sum(axis=1), 1.0):
            raise ValueError("transition matrix must be row-stochastic")
        if self.path.size and (self.path.min() < 0 or self.path.max() >= K):
            raise ValueError("path values must lie in 0..K-1")
        if self.smoothed is None:
            self.smoothed = np.eye(K)[self.path] if self.path.size else np.zeros((0, K))

    @property
    def K(self) -> int:
        return self.trans.shape[0]

    def copy(self) -> "MarkovChain":
        return MarkovChain(self.trans.copy(), self.path.copy(), self.smoothed.copy())

    def permute(self, perm) -> None:
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        self.trans = self.trans[np.ix_(perm, perm)]
        self.path = inv[self.path]
        self.smoothed = self.smoothed[:, perm]


def stationary_distribution(trans) -> np.ndarray:
    """Stationary law of a row-stochastic matrix, uniform if ill-conditioned."""
    P = np.asarray(trans, dtype=float)
    K = P.shape[0]
    if K == 1:
        return np.ones(1)
    A = np.vstack([P.T - np.eye(K), np.ones(K)])
    rhs = np.zeros(K + 1)
    rhs[-1] = 1.0
    try:
        pi, *_ , sv = np.linalg.lstsq(A, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return np.full(K, 1.0 / K)
    if sv[-1] < 1e-10 * sv[0] or np.any(pi < -1e-10) or not np.all(np.isfinite(pi)):
        return np.full(K, 1.0 / K)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def fitted_values(data: Dataset, sp: StateParams, ell: int) -> np.ndarray:
    """``<B[l, k], X_l[t]>`` for every t and k, shape (T, K)."""
    eq = sp.equations[ell]
    coefs = eq.coefficients().reshape(eq.K, -1)
    return data.flat(ell) @ coefs.T


def log_emissions(data: Dataset, sp: StateParams) -> np.ndarray:
    """Sum over equations of Gaussian log-densities, shape (T, K)."""
    out = np.zeros((data.T, sp.K))
    for ell, eq in enumerate(sp.equations):
        resid = data.responses[:, ell, None] - eq.mu[None, :] - fitted_values(data, sp, ell)
        out -= 0.5 * (_LOG_2PI + np.log(eq.noise)[None, :] + resid ** 2 / eq.noise[None, :])
    return out


def loglik_point(data: Dataset, sp: StateParams, ell: int, k: int, t: int) -> float:
    eq = sp.equations[ell]
    mean = eq.mu[k] + float(np.dot(eq.coefficient(k).ravel(), data.covariates[ell][t].ravel()))
    var = eq.noise[k]
    return -0.5 * (_LOG_2PI + math.log(var) + (data.responses[t, ell] - mean) ** 2 / var)


def loglik_path(data: Dataset, sp: StateParams, chain: MarkovChain, path=None,
                include_initial: bool = True) -> float:
    """Complete-data log-likelihood of a state path.

    Emissions summed over t and equations, plus ``log p[s_{t-1}, s_t]`` and,
    by default, the log initial (stationary) probability of ``s_0``.
    """
    path = chain.path if path is None else np.asarray(path, dtype=np.int64)
    T = data.T
    em = log_emissions(data, sp)
    total = float(em[np.arange(T), path].sum())
    with np.errstate(divide="ignore"):
        logP = np.log(chain.trans)
        if T > 1:
            total += float(logP[path[:-1], path[1:]].sum())
        if include_initial:
            total += float(np.log(stationary_distribution(chain.trans))[path[0]])
    return total


def init_params(data: Dataset, hyper: Hyperparameters, rng) -> tuple[StateParams, MarkovChain]:
    """Starting values for a chain.

    Factors from N(0, 1), about the prior scale of a factor entry, so the
    starting regimes differ enough to be told apart; marginals and intercepts
    from N(0, 0.1^2); zeta uniform; tau,
    sigma_mode, lambda at prior means and w at its prior mean given lambda;
    observation variances at the sample variance of each response;
    transition rows at the Dirichlet mean; path uniform.
    """
    K, D, M = hyper.K, hyper.D, hyper.M
    eqs = []
    for ell in range(data.N):
        shape = data.shape(ell)
        if len(shape) != M:
            raise DimensionError(f"equation {ell} covariates have order {len(shape)}, expected M={M}")
        factors = rng.standard_normal((K, D, M) + shape)
        gamma = [0.1 * rng.standard_normal((K, D, p)) for p in shape]
        lam0 = hyper.a_lambda / hyper.b_lambda
        w = [np.full((K, D, p), 2.0 / lam0 ** 2) for p in shape]
        var_y = float(np.var(data.responses[:, ell])) if data.T > 1 else 1.0
        eqs.append(EquationParams(
            factors=factors, gamma=gamma, w=w,
            lam=np.full((K, D, M), lam0),
            zeta=np.full((K, D), 1.0 / D),
            tau=np.full(K, hyper.a_tau / hyper.b_tau),
            sigma_mode=np.full((K, M), hyper.a_sigma / hyper.b_sigma),
            mu=0.1 * rng.standard_normal(K),
            noise=np.full(K, max(var_y, 1e-8)),
        ))
    nu = np.asarray(hyper.nu)
    trans = np.tile(nu / nu.sum(), (K, 1))
    path = rng.integers(0, K, size=data.T)
    return StateParams(eqs), MarkovChain(trans, path)


def regime_rows(path: np.ndarray, K: int) -> list:
    return [np.flatnonzero(path == k) for k in range(K)]


def check_params(sp: StateParams) -> None:
    """Raise if a simplex or positivity invariant is broken."""
    for eq in sp.equations:
        if not np.allclose(eq.zeta.sum(axis=1), 1.0) or np.any(eq.zeta <= 0):
            raise ValueError("zeta must be a positive probability vector")
        for name in ("tau", "sigma_mode", "noise", "lam"):
            if np.any(getattr(eq, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if any(np.any(v <= 0) for v in eq.w):
            raise ValueError("w must be positive")


def equation_shapes(data: Dataset) -> Sequence[tuple]:
    return [data.shape(ell) for ell in range(data.N)]
