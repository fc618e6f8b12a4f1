"""Exact samplers and log-densities for the conditional families of the sampler.

GiG(p, a, b) has density kernel ``x**(p - 1) * exp(-(a * x + b / x) / 2)``.
All samplers take an explicit ``numpy.random.Generator``; the same seed
reproduces the same draws.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import linalg, special

from . import kernels


class ParameterError(ValueError):
    """Distribution parameters outside the supported domain."""


def make_rng(seed=None) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent streams derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n)]


def check_gig_params(p, a, b) -> None:
    p, a, b = np.broadcast_arrays(np.asarray(p, float), np.asarray(a, float), np.asarray(b, float))
    bad = ~(np.isfinite(p) & np.isfinite(a) & np.isfinite(b))
    bad |= (a < 0) | (b < 0)
    ok = ((a > 0) & (b > 0)) | ((a > 0) & (b == 0) & (p > 0)) | ((a == 0) & (b > 0) & (p < 0))
    bad |= ~ok
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        raise ParameterError(
            f"non-integrable GiG parameters p={p.ravel()[i]}, a={a.ravel()[i]}, b={b.ravel()[i]}"
        )


def sample_gig(p, a, b, rng, size=None):
    """Draw from GiG(p, a, b).

    ``b == 0`` reduces to Gamma(p, rate a/2) and ``a == 0`` to
    InverseGamma(-p, scale b/2); both limits are sampled directly. Otherwise
    a ratio-of-uniforms rejection sampler (with mode shift where the density
    is T-concave, a piecewise hat for small ``sqrt(a b)`` and order below one)
    is used. Array arguments broadcast.
    """
    check_gig_params(p, a, b)
    if size is None and np.ndim(p) == 0 and np.ndim(a) == 0 and np.ndim(b) == 0:
        return kernels.gig_one(float(p), float(a), float(b), rng)
    extra = () if size is None else tuple(np.atleast_1d(size))
    shape = np.broadcast_shapes(np.shape(p), np.shape(a), np.shape(b), extra)
    pb, ab, bb = (np.broadcast_to(np.asarray(v, float), shape) for v in (p, a, b))
    return kernels.gig(pb, ab, bb, rng).reshape(shape)


def _kve(v, z):
    """Exponentially scaled Bessel K; the order is folded to |v| and tiny orders
    snapped to zero (scipy returns nan for subnormal orders)."""
    v = abs(v)
    return special.kve(0.0 if v < 1e-200 else v, z)


def gig_logpdf(x, p, a, b):
    """Normalized GiG log-density (requires a > 0 and b > 0)."""
    x = np.asarray(x, dtype=float)
    if a <= 0 or b <= 0:
        raise ParameterError("gig_logpdf needs a > 0 and b > 0")
    omega = math.sqrt(a * b)
    log_norm = 0.5 * p * math.log(a / b) - math.log(2.0) - (math.log(_kve(p, omega)) - omega)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, log_norm + (p - 1) * np.log(x) - 0.5 * (a * x + b / x), -np.inf)


def gig_moment(r, p, a, b) -> float:
    """``E[X**r]`` for X ~ GiG(p, a, b) with a, b > 0."""
    omega = math.sqrt(a * b)
    return (b / a) ** (r / 2) * _kve(p + r, omega) / _kve(p, omega)


def sample_gamma(shape, rate, rng, size=None):
    """Gamma with the given shape and rate (mean shape/rate)."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ParameterError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            x > 0,
            shape * np.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x,
            -np.inf,
        )


def sample_inv_gamma(shape, scale, rng, size=None):
    """InverseGamma(shape, scale): 1/X with X ~ Gamma(shape, rate=scale)."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(scale) <= 0):
        raise ParameterError("inverse-gamma shape and scale must be positive")
    return 1.0 / rng.gamma(shape, 1.0 / np.asarray(scale, dtype=float), size=size)


def inv_gamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            x > 0,
            shape * np.log(scale) - special.gammaln(shape) - (shape + 1) * np.log(x) - scale / x,
            -np.inf,
        )


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def sample_dirichlet(conc, rng):
    conc = np.asarray(conc, dtype=float)
    if conc.ndim != 1 or np.any(conc <= 0):
        raise ParameterError("Dirichlet concentrations must be a positive vector")
    g = rng.gamma(conc)
    tot = g.sum()
    if tot == 0.0:
        # every component underflowed; fall back to the log-space construction
        lg = np.log(rng.random(conc.size)) / conc + np.log(rng.gamma(conc + 1.0))
        g = np.exp(lg - lg.max())
        tot = g.sum()
    return g / tot


def _chol(mat):
    try:
        return linalg.cholesky(mat, lower=True, check_finite=False)
    except linalg.LinAlgError:
        q = mat.shape[0]
        jitter = 1e-10 * np.trace(mat) / q
        try:
            return linalg.cholesky(mat + jitter * np.eye(q), lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise linalg.LinAlgError("matrix is not positive definite") from exc


def sample_mvn(mean, cov, rng):
    """Multivariate normal from a mean and SPD covariance."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    L = _chol(cov)
    return mean + L @ rng.standard_normal(mean.size)


def sample_mvn_precision(prec, h, rng, return_mean=False):
    """Draw from N(prec^{-1} h, prec^{-1}) via a Cholesky factor of ``prec``.

    The mean is obtained from triangular solves, never an explicit inverse.
    """
    prec = np.atleast_2d(np.asarray(prec, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    L = _chol(prec)
    mean = linalg.cho_solve((L, True), h, check_finite=False)
    z = rng.standard_normal(h.size)
    draw = mean + linalg.solve_triangular(L, z, lower=True, trans="T", check_finite=False)
    if return_mean:
        return draw, mean
    return draw


def sample_categorical(probs, rng) -> int:
    """Index ``k`` with probability ``probs[k]`` (renormalized)."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ParameterError("probabilities must be a finite nonnegative vector")
    if probs.sum() <= 0:
        raise ParameterError("all-zero probability vector")
    return kernels.categorical(probs, rng.random())
