"""Synthetic data: structured coefficient patterns, covariate processes, DGPs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Dataset
from .tensor import DimensionError, Tensor

PATTERNS = ("diagonal", "cross", "circle", "core-periphery", "anti-diagonal")
NOISE_SD = 0.1


def _square(size, pattern):
    p1, p2 = size
    if p1 != p2:
        raise DimensionError(f"pattern {pattern!r} needs a square size, got {size}")
    return p1


def gen_coefficient(pattern: str, size=(20, 20), noisy: bool = False, rng=None) -> Tensor:
    """Binary matrix with a named structure, optionally plus N(0, 0.1^2) noise.

    ``circle`` marks cells whose distance from the centre is within half a
    cell of ``p/3``; ``core-periphery`` is a dense ``p/4`` block in the top
    left corner together with the diagonal.
    """
    size = tuple(int(s) for s in size)
    if len(size) != 2 or min(size) < 1:
        raise DimensionError(f"patterns are matrices, got size {size}")
    if pattern == "diagonal":
        B = np.eye(*size)
    elif pattern == "anti-diagonal":
        B = np.fliplr(np.eye(*size))
    elif pattern == "cross":
        p = _square(size, pattern)
        B = np.maximum(np.eye(p), np.fliplr(np.eye(p)))
    elif pattern == "circle":
        p = _square(size, pattern)
        c = (p - 1) / 2.0
        i, j = np.indices((p, p))
        r = np.hypot(i - c, j - c)
        B = (np.abs(r - p / 3.0) <= 0.5).astype(float)
        # the band is symmetric under both reflections by construction
    elif pattern == "core-periphery":
        p = _square(size, pattern)
        B = np.eye(p)
        kc = max(1, p // 4)
        B[:kc, :kc] = 1.0
    else:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    if noisy:
        if rng is None:
            raise ValueError("noisy patterns need an rng")
        B = B + NOISE_SD * rng.standard_normal(B.shape)
    return Tensor(B)


def gen_covariates(kind: str, shape, T: int, rng, rho: float = 0.0) -> np.ndarray:
    """Covariate tensors, shape ``(T, *shape)``.

    ``kind`` is ``"iid"`` (standard normal entries) or ``"ar1"``: every
    entry follows ``x_t = rho x_{t-1} + sqrt(1 - rho^2) e_t`` started from
    its N(0, 1) stationary law.
    """
    shape = tuple(int(s) for s in shape)
    if kind == "iid":
        return rng.standard_normal((T,) + shape)
    if kind == "ar1":
        if not abs(rho) < 1:
            raise ValueError(f"AR(1) coefficient must satisfy |rho| < 1, got {rho}")
        e = rng.standard_normal((T,) + shape)
        out = np.empty_like(e)
        out[0] = e[0]
        s = np.sqrt(1.0 - rho * rho)
        for t in range(1, T):
            out[t] = rho * out[t - 1] + s * e[t]
        return out
    raise ValueError(f"unknown covariate kind {kind!r}")


def markov_path(trans, T: int, rng, init=None) -> np.ndarray:
    trans = np.asarray(trans, dtype=float)
    K = trans.shape[0]
    cum = np.cumsum(trans, axis=1)
    u = rng.random(T)
    path = np.empty(T, dtype=np.int64)
    if init is None:
        from .model import stationary_distribution
        init = stationary_distribution(trans)
    path[0] = min(int(np.searchsorted(np.cumsum(init), u[0], side="right")), K - 1)
    for t in range(1, T):
        path[t] = min(int(np.searchsorted(cum[path[t - 1]], u[t], side="right")), K - 1)
    return path


@dataclass
class SimSetting:
    """A simulation design.

    For a single-regime design ``patterns`` has one entry; Markov-switching
    designs list one pattern per regime together with ``trans``, ``mu`` and
    ``noise_var``.
    """

    patterns: tuple = ("diagonal",)
    size: tuple = (20, 20)
    noisy: bool = False
    covariate_kind: str = "iid"
    rho: float = 0.5
    T: int = 400
    trans: np.ndarray | None = None
    mu: tuple = (0.0,)
    noise_var: tuple = (1.0,)
    name: str = "custom"
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.patterns)

    def __post_init__(self):
        self.patterns = tuple(self.patterns)
        if len(self.mu) != self.K or len(self.noise_var) != self.K:
            raise ValueError("mu and noise_var need one entry per regime")
        if self.K > 1:
            if self.trans is None:
                self.trans = persistent_transitions(self.K)
            self.trans = np.asarray(self.trans, dtype=float)
        for p in self.patterns:
            if p in ("cross", "circle", "core-periphery"):
                _square(self.size, p)


def persistent_transitions(K: int, stay: float = 0.95) -> np.ndarray:
    if K == 1:
        return np.ones((1, 1))
    P = np.full((K, K), (1.0 - stay) / (K - 1))
    np.fill_diagonal(P, stay)
    return P


_SIMPLE = {"s1": "diagonal", "s2": "cross", "s3": "circle", "s4": "core-periphery"}


def named_setting(name: str, covariates: str = "iid", T: int | None = None, **kw) -> SimSetting:
    """Standard designs ``s1``-``s4`` (append ``n`` for noisy, e.g. ``s2n``)
    on 20 x 20 coefficients, and ``s1ms`` / ``s2ms`` on 12 x 12 with two regimes.
    """
    key = name.lower()
    if key in ("s1ms", "s2ms"):
        first = "anti-diagonal" if key == "s1ms" else "cross"
        return SimSetting(
            patterns=(first, "diagonal"), size=(12, 12), covariate_kind=covariates,
            T=800 if T is None else T, trans=persistent_transitions(2),
            mu=(0.0, 0.0), noise_var=(2.0, 0.1), name=key, **kw,
        )
    noisy = key.endswith("n")
    base = key[:-1] if noisy else key
    if base not in _SIMPLE:
        raise ValueError(f"unknown setting {name!r}")
    return SimSetting(
        patterns=(_SIMPLE[base],), size=(20, 20), noisy=noisy, covariate_kind=covariates,
        T=400 if T is None else T, mu=(0.0,), noise_var=(1.0,), name=key, **kw,
    )


def gen_dataset(setting: SimSetting, rng) -> tuple[Dataset, dict]:
    """Draw one dataset and its ground truth (coefficients, path, mu, noise)."""
    K = setting.K
    coefs = np.stack([
        np.asarray(gen_coefficient(p, setting.size, setting.noisy, rng)) for p in setting.patterns
    ])
    X = gen_covariates(setting.covariate_kind, setting.size, setting.T, rng, setting.rho)
    if K > 1:
        path = markov_path(setting.trans, setting.T, rng)
    else:
        path = np.zeros(setting.T, dtype=np.int64)
    mu = np.asarray(setting.mu, dtype=float)
    sd = np.sqrt(np.asarray(setting.noise_var, dtype=float))
    flat = X.reshape(setting.T, -1)
    signal = np.einsum("tp,tp->t", flat, coefs.reshape(K, -1)[path])
    y = mu[path] + signal + sd[path] * rng.standard_normal(setting.T)
    truth = {
        "coefficients": coefs, "path": path, "mu": mu,
        "noise_var": np.asarray(setting.noise_var, dtype=float),
        "trans": None if setting.trans is None else np.asarray(setting.trans),
        "setting": setting.name,
    }
    return Dataset(y[:, None], X), truth
