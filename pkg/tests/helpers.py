"""Synthetic posterior draws with known structure."""
import numpy as np

from msmetr.sampler import PosteriorDraws


def fake_draws(S=50, N=1, K=2, shape=(3, 3), T=20, D=2, seed=0):
    r = np.random.default_rng(seed)
    coef = r.normal(size=(S, N, K) + shape) * 0.1
    coef[:, :, 0] += np.eye(*shape)
    mu = r.normal(size=(S, N, K)) * 0.1 + np.arange(K)
    noise = np.abs(r.normal(size=(S, N, K))) * 0.05 + np.linspace(2.0, 0.1, K)
    trans = np.stack([r.dirichlet(np.ones(K) * 5 + 20 * np.eye(K)[i], size=S) for i in range(K)], axis=1)
    path = (np.arange(T) // 5 % K)[None].repeat(S, 0)
    smoothed = np.eye(K)[path[0]] * 0.9 + 0.1 / K
    return PosteriorDraws(
        coef=coef, mu=mu, noise=noise, trans=trans, path=path,
        zeta=r.dirichlet(np.ones(D), size=(S, N, K)), tau=r.gamma(2.0, size=(S, N, K)),
        smoothed=smoothed, outcome_mse=np.linspace(3, 1, 2 * S), accept_rate=0.97,
        meta={"seed": seed},
    )
