# cython: language_level=3
"""Compiled hot kernels; line-for-line twin of ``_pykernels``.

Uniforms are pulled straight from the numpy BitGenerator (``next_double``),
which is the same call ``Generator.random()`` makes, so seeded streams match
the pure-Python fallback draw for draw.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, exp, cos, acos, fabs, pow, INFINITY, M_PI
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "cython"

cdef double _GIG_LIMIT_TOL = 1e-17


cdef bitgen_t* _bitgen(rng) except NULL:
    capsule = rng.bit_generator.capsule
    cdef const char *name = "BitGenerator"
    if not PyCapsule_IsValid(capsule, name):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, name)


cdef inline double _unif(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef double _std_normal(bitgen_t* bg) noexcept nogil:
    cdef double u, v, s
    while True:
        u = 2.0 * _unif(bg) - 1.0
        v = 2.0 * _unif(bg) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * sqrt(-2.0 * log(s) / s)


cdef double _std_gamma(double shape, bitgen_t* bg) noexcept nogil:
    cdef double boost = 1.0, d, c, x, v, u
    if shape < 1.0:
        boost = pow(_unif(bg), 1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        x = _std_normal(bg)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _unif(bg)
        if log(u) < 0.5 * x * x + d - d * v + d * log(v):
            return d * v * boost


cdef inline double _log_g(double x, double lam, double omega) noexcept nogil:
    return (lam - 1.0) * log(x) - 0.5 * omega * (x + 1.0 / x)


cdef double _gig_rou_shift(double lam, double omega, bitgen_t* bg) noexcept nogil:
    cdef double lm1 = lam - 1.0
    cdef double m = (lm1 + sqrt(lm1 * lm1 + omega * omega)) / omega
    cdef double log_gm = _log_g(m, lam, omega)
    cdef double a = -2.0 * (lam + 1.0) / omega - m
    cdef double b = 2.0 * lm1 * m / omega - 1.0
    cdef double p = b - a * a / 3.0
    cdef double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + m
    cdef double arg = -q / 2.0 * sqrt(-27.0 / (p * p * p))
    if arg > 1.0:
        arg = 1.0
    elif arg < -1.0:
        arg = -1.0
    cdef double phi = acos(arg)
    cdef double fd = sqrt(-4.0 * p / 3.0)
    cdef double x_minus = fd * cos(phi / 3.0 + 4.0 * M_PI / 3.0) - a / 3.0
    cdef double x_plus = fd * cos(phi / 3.0) - a / 3.0
    cdef double u_minus = (x_minus - m) * exp(0.5 * (_log_g(x_minus, lam, omega) - log_gm))
    cdef double u_plus = (x_plus - m) * exp(0.5 * (_log_g(x_plus, lam, omega) - log_gm))
    cdef double span = u_plus - u_minus
    cdef double u, v, x
    while True:
        u = u_minus + span * _unif(bg)
        v = _unif(bg)
        if v <= 0.0:
            continue
        x = u / v + m
        if x <= 0.0:
            continue
        if 2.0 * log(v) <= _log_g(x, lam, omega) - log_gm:
            return x


cdef double _gig_rou(double lam, double omega, bitgen_t* bg) noexcept nogil:
    cdef double m = omega / ((1.0 - lam) + sqrt((1.0 - lam) * (1.0 - lam) + omega * omega))
    cdef double x_plus = ((1.0 + lam) + sqrt((1.0 + lam) * (1.0 + lam) + omega * omega)) / omega
    cdef double log_gm = _log_g(m, lam, omega)
    cdef double u_plus = x_plus * exp(0.5 * (_log_g(x_plus, lam, omega) - log_gm))
    cdef double u, v, x
    while True:
        v = _unif(bg)
        u = u_plus * _unif(bg)
        if v <= 0.0:
            continue
        x = u / v
        if x <= 0.0:
            continue
        if 2.0 * log(v) <= _log_g(x, lam, omega) - log_gm:
            return x


cdef double _gig_small_omega(double lam, double omega, bitgen_t* bg) noexcept nogil:
    cdef double m = omega / ((1.0 - lam) + sqrt((1.0 - lam) * (1.0 - lam) + omega * omega))
    cdef double x0 = omega / (1.0 - lam)
    cdef double two_over = 2.0 / omega
    cdef double xs = x0 if x0 > two_over else two_over
    cdef double log_k1 = _log_g(m, lam, omega)
    cdef double k1 = exp(log_k1)
    cdef double a1 = k1 * x0
    cdef double k2, a2, k3, a3, total, u, v, x, log_h, inner
    if x0 < two_over:
        k2 = exp(-omega)
        if lam == 0.0:
            a2 = k2 * log(two_over / x0)
        else:
            a2 = k2 / lam * (pow(two_over, lam) - pow(x0, lam))
    else:
        k2 = 0.0
        a2 = 0.0
    k3 = pow(xs, lam - 1.0)
    a3 = 2.0 * k3 * exp(-xs * omega / 2.0) / omega
    total = a1 + a2 + a3
    while True:
        u = _unif(bg)
        v = total * _unif(bg)
        if v <= a1:
            x = x0 * v / a1
            log_h = log_k1
        elif v <= a1 + a2:
            v -= a1
            if lam == 0.0:
                x = x0 * exp(v / k2)
            else:
                x = pow(pow(x0, lam) + v * lam / k2, 1.0 / lam)
            log_h = log(k2) + (lam - 1.0) * log(x)
        else:
            v -= a1 + a2
            inner = exp(-xs * omega / 2.0) - v * omega / (2.0 * k3)
            if inner <= 0.0:
                continue
            x = -2.0 / omega * log(inner)
            log_h = log(k3) - x * omega / 2.0
        if x <= 0.0 or u <= 0.0:
            continue
        if log(u) + log_h <= _log_g(x, lam, omega):
            return x


cdef double _gig_one(double p, double a, double b, bitgen_t* bg) noexcept nogil:
    cdef double lam, psi, chi, omega, y, z
    if b == 0.0:
        return _std_gamma(p, bg) / (0.5 * a)
    if a == 0.0:
        return (0.5 * b) / _std_gamma(-p, bg)
    lam = fabs(p)
    if p >= 0.0:
        psi = a
        chi = b
    else:
        psi = b
        chi = a
    omega = sqrt(psi) * sqrt(chi)
    if lam > 1.0 and omega * omega < 4.0 * (lam - 1.0) * _GIG_LIMIT_TOL:
        y = _std_gamma(lam, bg) / (0.5 * psi)
    else:
        if lam > 1.0 or omega > 1.0:
            z = _gig_rou_shift(lam, omega, bg)
        elif omega >= min(0.5, 2.0 / 3.0 * sqrt(1.0 - lam)):
            z = _gig_rou(lam, omega, bg)
        else:
            z = _gig_small_omega(lam, omega, bg)
        y = z * (sqrt(chi) / sqrt(psi))
    if p >= 0.0:
        return y
    return 1.0 / y


def gig_one(double p, double a, double b, rng):
    return _gig_one(p, a, b, _bitgen(rng))


def gig(p, a, b, rng):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=float).ravel()
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=float).ravel()
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=float).ravel()
    cdef Py_ssize_t n = pv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef bitgen_t* bg = _bitgen(rng)
    with nogil:
        for i in range(n):
            ov[i] = _gig_one(pv[i], av[i], bv[i], bg)
    return out


def forward_filter(log_emission, trans, init):
    cdef const double[:, ::1] le = np.ascontiguousarray(log_emission, dtype=float)
    cdef const double[:, ::1] P = np.ascontiguousarray(trans, dtype=float)
    cdef const double[::1] p0 = np.ascontiguousarray(init, dtype=float)
    cdef Py_ssize_t T = le.shape[0], K = le.shape[1], t, i, k
    filtered_arr = np.empty((T, K))
    predicted_arr = np.empty((T, K))
    cdef double[:, ::1] filtered = filtered_arr
    cdef double[:, ::1] predicted = predicted_arr
    cdef double loglik = 0.0, mx, tot, fi
    cdef Py_ssize_t bad = -1
    with nogil:
        for t in range(T):
            if t == 0:
                for k in range(K):
                    predicted[0, k] = p0[k]
            else:
                for k in range(K):
                    predicted[t, k] = 0.0
                for i in range(K):
                    fi = filtered[t - 1, i]
                    if fi == 0.0:
                        continue
                    for k in range(K):
                        predicted[t, k] += fi * P[i, k]
            mx = -INFINITY
            for k in range(K):
                if predicted[t, k] > 0.0 and le[t, k] > mx:
                    mx = le[t, k]
            if mx == -INFINITY:
                bad = t
                break
            tot = 0.0
            for k in range(K):
                if predicted[t, k] > 0.0:
                    filtered[t, k] = predicted[t, k] * exp(le[t, k] - mx)
                    tot += filtered[t, k]
                else:
                    filtered[t, k] = 0.0
            for k in range(K):
                filtered[t, k] /= tot
            loglik += log(tot) + mx
    if bad >= 0:
        raise FloatingPointError(f"filtered probabilities vanish at t={bad}")
    return filtered_arr, predicted_arr, loglik


def backward_smooth(filtered, predicted, trans):
    cdef const double[:, ::1] F = np.ascontiguousarray(filtered, dtype=float)
    cdef const double[:, ::1] Pr = np.ascontiguousarray(predicted, dtype=float)
    cdef const double[:, ::1] P = np.ascontiguousarray(trans, dtype=float)
    cdef Py_ssize_t T = F.shape[0], K = F.shape[1], t, i, j
    smoothed_arr = np.empty((T, K))
    cdef double[:, ::1] S = smoothed_arr
    ratio_arr = np.empty(K)
    cdef double[::1] ratio = ratio_arr
    cdef double tot, acc
    with nogil:
        for i in range(K):
            S[T - 1, i] = F[T - 1, i]
        for t in range(T - 2, -1, -1):
            for j in range(K):
                if Pr[t + 1, j] > 0.0:
                    ratio[j] = S[t + 1, j] / Pr[t + 1, j]
                else:
                    ratio[j] = 0.0
            tot = 0.0
            for i in range(K):
                acc = 0.0
                for j in range(K):
                    acc += P[i, j] * ratio[j]
                S[t, i] = F[t, i] * acc
                tot += S[t, i]
            for i in range(K):
                S[t, i] /= tot
    return smoothed_arr


cdef inline Py_ssize_t _pick(double* w, Py_ssize_t K, double u) noexcept nogil:
    cdef double tot = 0.0, target, acc = 0.0
    cdef Py_ssize_t k, last = 0
    for k in range(K):
        tot += w[k]
    target = u * tot
    for k in range(K):
        if w[k] > 0.0:
            last = k
            acc += w[k]
            if target < acc:
                return k
    return last


def backward_sample(filtered, trans, uniforms):
    cdef const double[:, ::1] F = np.ascontiguousarray(filtered, dtype=float)
    cdef const double[:, ::1] P = np.ascontiguousarray(trans, dtype=float)
    cdef const double[::1] U = np.ascontiguousarray(uniforms, dtype=float)
    cdef Py_ssize_t T = F.shape[0], K = F.shape[1], t, k, nxt
    path_arr = np.empty(T, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    w_arr = np.empty(K)
    cdef double[::1] w = w_arr
    with nogil:
        for k in range(K):
            w[k] = F[T - 1, k]
        path[T - 1] = _pick(&w[0], K, U[T - 1])
        for t in range(T - 2, -1, -1):
            nxt = path[t + 1]
            for k in range(K):
                w[k] = F[t, k] * P[k, nxt]
            path[t] = _pick(&w[0], K, U[t])
    return path_arr


def categorical(probs, double u):
    cdef const double[::1] w = np.ascontiguousarray(probs, dtype=float)
    return int(_pick(&w[0], w.shape[0], u))


def discrete_rpsg(table, state, Py_ssize_t subset_size, uniforms, counts):
    cdef cnp.ndarray tab = np.ascontiguousarray(table, dtype=float)
    cdef Py_ssize_t V = tab.ndim, s, i, r, v, c, tmp, flat, cell
    cdef double[::1] tv = tab.ravel()
    cdef const double[:, ::1] U = np.ascontiguousarray(uniforms, dtype=float)
    cdef Py_ssize_t n_sweeps = U.shape[0]
    cdef cnp.int64_t[::1] st = state
    cnt_flat = counts.reshape(-1)
    if not np.shares_memory(cnt_flat, counts):
        raise ValueError("counts must be contiguous")
    cdef cnp.int64_t[::1] cnt = cnt_flat
    shape_arr = np.array([tab.shape[i] for i in range(V)], dtype=np.int64)
    strides_arr = np.ones(V, dtype=np.int64)
    for i in range(V - 2, -1, -1):
        strides_arr[i] = strides_arr[i + 1] * shape_arr[i + 1]
    cdef cnp.int64_t[::1] shp = shape_arr
    cdef cnp.int64_t[::1] strd = strides_arr
    order_arr = np.arange(V, dtype=np.int64)
    cdef cnp.int64_t[::1] order = order_arr
    w_arr = np.empty(int(shape_arr.max()))
    cdef double[::1] w = w_arr
    with nogil:
        for s in range(n_sweeps):
            for i in range(subset_size):
                r = i + <Py_ssize_t>(U[s, i] * (V - i))
                if r >= V:
                    r = V - 1
                tmp = order[i]
                order[i] = order[r]
                order[r] = tmp
            for i in range(subset_size):
                v = order[i]
                flat = 0
                for c in range(V):
                    if c != v:
                        flat += st[c] * strd[c]
                for c in range(shp[v]):
                    w[c] = tv[flat + c * strd[v]]
                st[v] = _pick(&w[0], shp[v], U[s, subset_size + i])
            cell = 0
            for c in range(V):
                cell += st[c] * strd[c]
            cnt[cell] += 1
    return state


def lasso_cd(X, y, double lam, beta, col_sq, double tol, Py_ssize_t max_iter):
    cdef const double[::1, :] A = np.asfortranarray(X, dtype=float)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=float)
    cdef const double[::1] cs = np.ascontiguousarray(col_sq, dtype=float)
    b_arr = np.array(beta, dtype=float)
    r_arr = np.asarray(y, dtype=float) - np.asarray(X, dtype=float) @ b_arr
    cdef double[::1] b = b_arr
    cdef double[::1] r = r_arr
    cdef Py_ssize_t T = A.shape[0], P = A.shape[1], it, i, j
    cdef double old, new, rho, delta, rr, l1, mx, g, scale, dual, gap = INFINITY, yy = 0.0, d
    for i in range(T):
        yy += yv[i] * yv[i]
    with nogil:
        for it in range(max_iter):
            for j in range(P):
                if cs[j] == 0.0:
                    continue
                old = b[j]
                rho = 0.0
                for i in range(T):
                    rho += A[i, j] * r[i]
                rho += cs[j] * old
                if rho > lam:
                    new = (rho - lam) / cs[j]
                elif rho < -lam:
                    new = (rho + lam) / cs[j]
                else:
                    new = 0.0
                if new != old:
                    delta = new - old
                    for i in range(T):
                        r[i] -= A[i, j] * delta
                    b[j] = new
            rr = 0.0
            for i in range(T):
                rr += r[i] * r[i]
            l1 = 0.0
            mx = 0.0
            for j in range(P):
                l1 += fabs(b[j])
                g = 0.0
                for i in range(T):
                    g += A[i, j] * r[i]
                if fabs(g) > mx:
                    mx = fabs(g)
            scale = 1.0
            if mx > 0.0 and lam / mx < 1.0:
                scale = lam / mx
            dual = 0.0
            for i in range(T):
                d = yv[i] - scale * r[i]
                dual += d * d
            gap = 0.5 * rr + lam * l1 - (0.5 * yy - 0.5 * dual)
            if gap <= tol * (0.5 * yy if 0.5 * yy > 1.0 else 1.0):
                break
    return b_arr, gap
