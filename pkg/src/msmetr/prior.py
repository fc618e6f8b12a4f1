"""Hyperparameters, induced prior variance of coefficient entries, elicitation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ElicitationError(ValueError):
    """Variance targets cannot be met with the fixed hyperparameters."""


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings shared by every equation and regime.

    Gamma distributions use the shape/rate convention. ``a_noise, b_noise``
    parameterize the inverse-gamma prior of the observation variance and are
    distinct from the factor-scale pair ``a_sigma, b_sigma``.
    """

    D: int = 3
    M: int = 2
    K: int = 1
    alpha: float = 1.0
    a_tau: float = 3.0
    b_tau: float = 1.0
    a_sigma: float = 0.5
    b_sigma: float = 1.0
    a_lambda: float = 3.0
    b_lambda: float | None = None
    nu: tuple[float, ...] | None = None
    sigma_mu_sq: float = 100.0
    a_noise: float = 0.01
    b_noise: float = 0.01
    source: str = "explicit"
    targets: tuple[float, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.b_lambda is None:
            object.__setattr__(self, "b_lambda", self.a_lambda ** (1.0 / (2 * self.M)))
        if self.nu is None:
            object.__setattr__(self, "nu", (1.0,) * self.K)
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        if self.D < 1 or self.M < 2 or self.K < 1:
            raise ValueError(f"need D >= 1, M >= 2, K >= 1 (got {self.D}, {self.M}, {self.K})")
        if len(self.nu) != self.K:
            raise ValueError(f"nu has {len(self.nu)} entries for K={self.K}")
        positive = {
            "alpha": self.alpha, "a_tau": self.a_tau, "b_tau": self.b_tau,
            "a_sigma": self.a_sigma, "b_sigma": self.b_sigma,
            "a_lambda": self.a_lambda, "b_lambda": self.b_lambda,
            "sigma_mu_sq": self.sigma_mu_sq, "a_noise": self.a_noise, "b_noise": self.b_noise,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if any(v <= 0 for v in self.nu):
            raise ValueError("nu entries must be positive")
        if self.a_lambda <= 2:
            raise ValueError("a_lambda must exceed 2 for a finite prior variance")

    def with_(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    @property
    def C(self) -> float:
        """Component-weight factor ``(alpha/D + 1)/(alpha + 1)`` used for matrices."""
        return (self.alpha / self.D + 1.0) / (self.alpha + 1.0)


def _hard_term(h: Hyperparameters) -> float:
    return 2.0 * h.b_lambda ** 2 / ((h.a_lambda - 1.0) * (h.a_lambda - 2.0))


def _scale_term(h: Hyperparameters, soft: bool = True) -> float:
    if h.a_lambda <= 2:
        raise ValueError("a_lambda must exceed 2")
    M, D, a = h.M, h.D, h.alpha
    tau_moment = math.exp(math.lgamma(h.a_tau + M) - math.lgamma(h.a_tau)) / h.b_tau ** M
    zeta_moment = D * math.prod((a / D + r) / (a + r) for r in range(M))
    return tau_moment * zeta_moment


def prior_entry_variance(h: Hyperparameters) -> float:
    """Prior variance of one entry of the composed coefficient tensor."""
    soft = h.a_sigma / h.b_sigma if math.isfinite(h.b_sigma) else 0.0
    return _scale_term(h) * (soft + _hard_term(h)) ** h.M


def hard_entry_variance(h: Hyperparameters) -> float:
    """Same variance with the softening removed (factor scale set to zero)."""
    return _scale_term(h) * _hard_term(h) ** h.M


def relative_additional_variance(h: Hyperparameters) -> float:
    v = prior_entry_variance(h)
    return (v - hard_entry_variance(h)) / v


def elicit(v_target: float, av_target: float, *, D: int = 3, alpha: float = 1.0,
           a_tau: float = 3.0, a_sigma: float = 0.5, a_lambda: float = 3.0,
           b_lambda: float | None = None, M: int = 2) -> tuple[float, float]:
    """Solve for ``(b_tau, b_sigma)`` hitting a target entry variance and
    relative additional variance, for matrix coefficients only.

    The softening ratio ``a_sigma/b_sigma`` comes first from the additional
    variance target, then ``b_tau`` from the total variance target.
    """
    if M != 2:
        raise ElicitationError("elicitation is only available for matrix (M=2) coefficients")
    if not v_target > 0 or not math.isfinite(v_target):
        raise ElicitationError(f"target variance must be positive, got {v_target}")
    if not 0 <= av_target < 1:
        raise ElicitationError(f"target additional variance must lie in [0, 1), got {av_target}")
    if a_lambda <= 2:
        raise ElicitationError("a_lambda must exceed 2")
    if b_lambda is None:
        b_lambda = a_lambda ** (1.0 / (2 * M))
    C = (alpha / D + 1.0) / (alpha + 1.0)
    hard = 2.0 * b_lambda ** 2 / ((a_lambda - 1.0) * (a_lambda - 2.0))
    ratio = (1.0 / math.sqrt(1.0 - av_target) - 1.0) * hard
    b_tau = (ratio + hard) * math.sqrt(a_tau * (a_tau + 1.0) * C / v_target)
    b_sigma = a_sigma / ratio if ratio > 0 else math.inf
    return b_tau, b_sigma


def default_hyperparameters(D: int = 3, M: int = 2, K: int = 1, *, v_target: float = 1.0,
                            av_target: float = 0.10, **overrides) -> Hyperparameters:
    """Defaults ``alpha=1, a_tau=3, a_sigma=0.5, a_lambda=3, b_lambda=a_lambda**(1/2M)``.

    For matrices ``(b_tau, b_sigma)`` are elicited from the variance targets.
    Higher orders have no closed-form elicitation; the matrix solution is
    reused there, which keeps the same per-mode scales.
    """
    base = dict(alpha=1.0, a_tau=3.0, a_sigma=0.5, a_lambda=3.0)
    base.update({k: overrides.pop(k) for k in list(overrides) if k in base})
    b_lambda = overrides.pop("b_lambda", base["a_lambda"] ** (1.0 / (2 * M)))
    b_tau, b_sigma = elicit(v_target, av_target, D=D, b_lambda=b_lambda, M=2, **base)
    return Hyperparameters(
        D=D, M=M, K=K, b_tau=b_tau, b_sigma=b_sigma, b_lambda=b_lambda,
        source="elicited", targets=(v_target, av_target), **base, **overrides,
    )


def benchmark_hyperparameters(D: int = 3, K: int = 1, robustness: bool = False) -> Hyperparameters:
    """Benchmark (or robustness-check) column of the simulation study's prior table."""
    C = (1.0 / D + 1.0) / 2.0
    b_sigma = (2.0 if robustness else 8.5) * math.sqrt(C)
    return Hyperparameters(
        D=D, M=2, K=K, alpha=1.0, a_sigma=0.5, b_sigma=b_sigma,
        a_tau=3.0, b_tau=33.75 / b_sigma, a_lambda=3.0,
        b_lambda=3.0 ** (0.5 if robustness else 0.25), source="table",
    )


def as_dict(h: Hyperparameters) -> dict:
    out = {k: getattr(h, k) for k in h.__dataclass_fields__}
    out["nu"] = list(h.nu)
    if out["targets"] is not None:
        out["targets"] = list(out["targets"])
    for k, v in out.items():
        if isinstance(v, float) and not np.isfinite(v):
            out[k] = str(v)
    return out
