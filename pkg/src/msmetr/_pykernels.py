"""Pure-Python hot kernels.

Reference implementation of everything in ``_ckernels.pyx``. Both modules
consume uniforms from the generator in exactly the same order, so a seeded
run gives identical draws whichever backend is active.
"""
import math

import numpy as np

BACKEND = "python"

# Below this the Gamma/InverseGamma limit of a GiG is exact to double precision.
_GIG_LIMIT_TOL = 1e-17


def _std_normal(rng):
    # Marsaglia polar method on raw uniforms.
    while True:
        u = 2.0 * rng.random() - 1.0
        v = 2.0 * rng.random() - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


def _std_gamma(shape, rng):
    # Marsaglia-Tsang; shape < 1 boosted by U**(1/shape).
    boost = 1.0
    if shape < 1.0:
        boost = rng.random() ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _std_normal(rng)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return d * v * boost


def _log_g(x, lam, omega):
    return (lam - 1.0) * math.log(x) - 0.5 * omega * (x + 1.0 / x)


def _gig_rou_shift(lam, omega, rng):
    """Ratio-of-uniforms with mode shift; lam > 1 or omega > 1."""
    lm1 = lam - 1.0
    m = (lm1 + math.sqrt(lm1 * lm1 + omega * omega)) / omega
    log_gm = _log_g(m, lam, omega)
    a = -2.0 * (lam + 1.0) / omega - m
    b = 2.0 * lm1 * m / omega - 1.0
    p = b - a * a / 3.0
    q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + m
    arg = -q / 2.0 * math.sqrt(-27.0 / (p * p * p))
    phi = math.acos(max(-1.0, min(1.0, arg)))
    fd = math.sqrt(-4.0 * p / 3.0)
    x_minus = fd * math.cos(phi / 3.0 + 4.0 * math.pi / 3.0) - a / 3.0
    x_plus = fd * math.cos(phi / 3.0) - a / 3.0
    u_minus = (x_minus - m) * math.exp(0.5 * (_log_g(x_minus, lam, omega) - log_gm))
    u_plus = (x_plus - m) * math.exp(0.5 * (_log_g(x_plus, lam, omega) - log_gm))
    span = u_plus - u_minus
    while True:
        u = u_minus + span * rng.random()
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v + m
        if x <= 0.0:
            continue
        if 2.0 * math.log(v) <= _log_g(x, lam, omega) - log_gm:
            return x


def _gig_rou(lam, omega, rng):
    """Ratio-of-uniforms without mode shift; 0 <= lam <= 1, moderate omega."""
    m = omega / ((1.0 - lam) + math.sqrt((1.0 - lam) ** 2 + omega * omega))
    x_plus = ((1.0 + lam) + math.sqrt((1.0 + lam) ** 2 + omega * omega)) / omega
    log_gm = _log_g(m, lam, omega)
    u_plus = x_plus * math.exp(0.5 * (_log_g(x_plus, lam, omega) - log_gm))
    while True:
        v = rng.random()
        u = u_plus * rng.random()
        if v <= 0.0:
            continue
        x = u / v
        if x <= 0.0:
            continue
        if 2.0 * math.log(v) <= _log_g(x, lam, omega) - log_gm:
            return x


def _gig_small_omega(lam, omega, rng):
    """Piecewise hat rejection for 0 <= lam < 1 and small omega."""
    m = omega / ((1.0 - lam) + math.sqrt((1.0 - lam) ** 2 + omega * omega))
    x0 = omega / (1.0 - lam)
    two_over = 2.0 / omega
    xs = max(x0, two_over)
    log_k1 = _log_g(m, lam, omega)
    k1 = math.exp(log_k1)
    a1 = k1 * x0
    if x0 < two_over:
        k2 = math.exp(-omega)
        if lam == 0.0:
            a2 = k2 * math.log(two_over / x0)
        else:
            a2 = k2 / lam * (two_over ** lam - x0 ** lam)
    else:
        k2 = 0.0
        a2 = 0.0
    k3 = xs ** (lam - 1.0)
    a3 = 2.0 * k3 * math.exp(-xs * omega / 2.0) / omega
    total = a1 + a2 + a3
    while True:
        u = rng.random()
        v = total * rng.random()
        if v <= a1:
            x = x0 * v / a1
            log_h = log_k1
        elif v <= a1 + a2:
            v -= a1
            if lam == 0.0:
                x = x0 * math.exp(v / k2)
            else:
                x = (x0 ** lam + v * lam / k2) ** (1.0 / lam)
            log_h = math.log(k2) + (lam - 1.0) * math.log(x)
        else:
            v -= a1 + a2
            inner = math.exp(-xs * omega / 2.0) - v * omega / (2.0 * k3)
            if inner <= 0.0:
                continue
            x = -2.0 / omega * math.log(inner)
            log_h = math.log(k3) - x * omega / 2.0
        if x <= 0.0 or u <= 0.0:
            continue
        if math.log(u) + log_h <= _log_g(x, lam, omega):
            return x


def gig_one(p, a, b, rng):
    """One GiG(p, a, b) draw; density kernel x^(p-1) exp(-(a x + b/x)/2)."""
    if b == 0.0:
        return _std_gamma(p, rng) / (0.5 * a)
    if a == 0.0:
        return (0.5 * b) / _std_gamma(-p, rng)
    lam = abs(p)
    if p >= 0.0:
        psi, chi = a, b
    else:
        psi, chi = b, a
    omega = math.sqrt(psi) * math.sqrt(chi)
    if lam > 1.0 and omega * omega < 4.0 * (lam - 1.0) * _GIG_LIMIT_TOL:
        # exp(-chi/(2x)) is 1 to machine precision on the bulk of Gamma(lam, psi/2).
        y = _std_gamma(lam, rng) / (0.5 * psi)
    else:
        if lam > 1.0 or omega > 1.0:
            z = _gig_rou_shift(lam, omega, rng)
        elif omega >= min(0.5, 2.0 / 3.0 * math.sqrt(1.0 - lam)):
            z = _gig_rou(lam, omega, rng)
        else:
            z = _gig_small_omega(lam, omega, rng)
        y = z * (math.sqrt(chi) / math.sqrt(psi))
    return y if p >= 0.0 else 1.0 / y


def gig(p, a, b, rng):
    p = np.asarray(p, dtype=float).ravel()
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = gig_one(float(p[i]), float(a[i]), float(b[i]), rng)
    return out


def forward_filter(log_emission, trans, init):
    """Hamilton filter. Returns filtered (T, K), one-step predictions (T, K), loglik."""
    T, K = log_emission.shape
    filtered = np.empty((T, K))
    predicted = np.empty((T, K))
    loglik = 0.0
    prev = None
    for t in range(T):
        if t == 0:
            pred = [float(init[k]) for k in range(K)]
        else:
            pred = [0.0] * K
            for i in range(K):
                fi = prev[i]
                if fi == 0.0:
                    continue
                for k in range(K):
                    pred[k] += fi * trans[i, k]
        row = log_emission[t]
        mx = -math.inf
        for k in range(K):
            if pred[k] > 0.0 and row[k] > mx:
                mx = row[k]
        if mx == -math.inf:
            raise FloatingPointError(f"filtered probabilities vanish at t={t}")
        tot = 0.0
        cur = [0.0] * K
        for k in range(K):
            predicted[t, k] = pred[k]
            if pred[k] > 0.0:
                cur[k] = pred[k] * math.exp(row[k] - mx)
                tot += cur[k]
        for k in range(K):
            cur[k] /= tot
            filtered[t, k] = cur[k]
        loglik += math.log(tot) + mx
        prev = cur
    return filtered, predicted, loglik


def backward_smooth(filtered, predicted, trans):
    T, K = filtered.shape
    smoothed = np.empty((T, K))
    smoothed[T - 1] = filtered[T - 1]
    for t in range(T - 2, -1, -1):
        ratio = [0.0] * K
        for j in range(K):
            if predicted[t + 1, j] > 0.0:
                ratio[j] = smoothed[t + 1, j] / predicted[t + 1, j]
        tot = 0.0
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += trans[i, j] * ratio[j]
            smoothed[t, i] = filtered[t, i] * acc
            tot += smoothed[t, i]
        for i in range(K):
            smoothed[t, i] /= tot
    return smoothed


def _pick(weights, u):
    tot = 0.0
    for w in weights:
        tot += w
    target = u * tot
    acc = 0.0
    last = 0
    for k, w in enumerate(weights):
        if w > 0.0:
            last = k
            acc += w
            if target < acc:
                return k
    return last


def backward_sample(filtered, trans, uniforms):
    """Draw a path given filtered probabilities; ``uniforms`` has length T."""
    T, K = filtered.shape
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _pick([filtered[T - 1, k] for k in range(K)], uniforms[T - 1])
    for t in range(T - 2, -1, -1):
        nxt = path[t + 1]
        path[t] = _pick([filtered[t, k] * trans[k, nxt] for k in range(K)], uniforms[t])
    return path


def categorical(probs, u):
    return _pick([float(x) for x in probs], u)


def discrete_rpsg(table, state, subset_size, uniforms, counts):
    """Random-partial-scan Gibbs over a joint table of ``V`` discrete variables.

    ``table`` has one axis per variable. Each sweep consumes ``2 * subset_size``
    uniforms: a partial Fisher-Yates shuffle picks an ordered subset, then one
    exact conditional draw per selected variable. Visits are added to
    ``counts`` (same shape as ``table``); ``state`` is updated in place.
    """
    V = table.ndim
    n_sweeps = uniforms.shape[0]
    order = list(range(V))
    for s in range(n_sweeps):
        urow = uniforms[s]
        for i in range(subset_size):
            r = i + int(urow[i] * (V - i))
            if r >= V:
                r = V - 1
            order[i], order[r] = order[r], order[i]
        for i in range(subset_size):
            v = order[i]
            idx = [int(x) for x in state]
            idx[v] = slice(None)
            cond = table[tuple(idx)]
            state[v] = _pick([float(c) for c in cond], urow[subset_size + i])
        counts[tuple(int(x) for x in state)] += 1
    return state


def lasso_cd(X, y, lam, beta, col_sq, tol, max_iter):
    """Cyclic coordinate descent on 0.5|y - X b|^2 + lam |b|_1.

    Stops once the duality gap falls below ``tol * max(1, |y|^2 / 2)``;
    returns the coefficients and the final gap.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.array(beta, dtype=float)
    r = y - X @ beta
    P = X.shape[1]
    gap = math.inf
    for _ in range(max_iter):
        for j in range(P):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            rho = X[:, j] @ r + col_sq[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
        grad = X.T @ r
        primal = 0.5 * r @ r + lam * np.abs(beta).sum()
        mx = np.abs(grad).max() if P else 0.0
        scale = min(1.0, lam / mx) if mx > 0 else 1.0
        dual = 0.5 * y @ y - 0.5 * (y - scale * r) @ (y - scale * r)
        gap = primal - dual
        if gap <= tol * max(1.0, 0.5 * y @ y):
            break
    return beta, gap
