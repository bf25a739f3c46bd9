# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_fallback`` for the reference."""
import numpy as np

from libc.math cimport NAN, exp, fabs, isfinite, isnan, log, pow, sqrt
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.1102230246251565e-16

cdef double[8] _A = [3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
                     13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
                     33430.575583588128105, 2509.0809287301226727]
cdef double[8] _B = [1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
                     21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
                     5226.495278852545925]
cdef double[8] _C = [1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
                     3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
                     0.0227238449892691845833, 7.7454501427834140764e-4]
cdef double[8] _D = [1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
                     0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
                     1.05075007164441684324e-9]
cdef double[8] _E = [6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
                     0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
                     2.71155556874348757815e-5, 2.01033439929228813265e-7]
cdef double[8] _F = [1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
                     7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
                     2.04426310338993978564e-15]


cdef inline double w_rate(double w, double coef, double gamma, double gp2, double gm2,
                         double ktil) nogil:
    cdef double xt = pow(w, -gamma)
    cdef double r = (xt + ktil) / (gp2 * xt + gm2 * ktil)
    return coef * r * r


def rk4_x1(double Sigma0v, double A, double sigma, double gamma, double gm1, double ktil,
           double dt, Py_ssize_t n_steps):
    cdef double coef = 16.0 * A * A * sigma * sigma * Sigma0v
    cdef double gp2 = (gamma + 1.0) * (gamma + 1.0)
    cdef double gm2 = gm1 * gm1
    cdef double half = 0.5 * dt
    cdef double w = 1.0, k1, k2, k3, k4
    cdef Py_ssize_t i, j, bad = -1
    out_arr = np.empty(n_steps + 1)
    cdef double[::1] out = out_arr
    out[0] = Sigma0v
    with nogil:
        for i in range(n_steps):
            k1 = w_rate(w, coef, gamma, gp2, gm2, ktil)
            k2 = w_rate(w + half * k1, coef, gamma, gp2, gm2, ktil)
            k3 = w_rate(w + half * k2, coef, gamma, gp2, gm2, ktil)
            k4 = w_rate(w + dt * k3, coef, gamma, gp2, gm2, ktil)
            w = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not (w >= 1.0) or not isfinite(w):
                bad = i + 1
                for j in range(i + 1, n_steps + 1):
                    out[j] = NAN
                break
            out[i + 1] = Sigma0v / w
    return out_arr, bad


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t bits = mix64(key + (counter + 1) * STREAM)
    return (<double>(bits >> 11) + 0.5) * TWO_M53


cdef inline double poly(const double* a, double r) nogil:
    cdef double acc = a[7]
    cdef int i
    for i in range(6, -1, -1):
        acc = acc * r + a[i]
    return acc


cdef inline double ppf(double p) nogil:
    cdef double q = p - 0.5, r, x
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * poly(_A, r) / poly(_B, r)
    r = p if p < 1.0 - p else 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        x = poly(_C, r) / poly(_D, r)
    else:
        r = r - 5.0
        x = poly(_E, r) / poly(_F, r)
    return -x if q < 0.0 else x


def norm_ppf(p):
    p_arr = np.ascontiguousarray(p, dtype=np.float64)
    out_arr = np.empty_like(p_arr)
    cdef double[::1] pv = p_arr.reshape(-1)
    cdef double[::1] ov = out_arr.reshape(-1)
    cdef Py_ssize_t i
    for i in range(pv.shape[0]):
        ov[i] = ppf(pv[i])
    return out_arr


def path_keys(uint64_t seed, Py_ssize_t path_start, Py_ssize_t n_paths):
    out = np.empty(n_paths, dtype=np.uint64)
    cdef uint64_t[::1] ov = out
    cdef uint64_t s = mix64(seed)
    cdef Py_ssize_t i
    for i in range(n_paths):
        ov[i] = mix64(s + <uint64_t>(path_start + i + 1) * GOLDEN)
    return out


def uniforms(keys, Py_ssize_t counter):
    cdef uint64_t[::1] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    out = np.empty(kv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(kv.shape[0]):
        ov[i] = uniform(kv[i], counter)
    return out


cdef void node_moments(const double[:, ::1] x, const double[::1] shift, double sign,
                       double[:, ::1] out, bint high) nogil:
    """Two-pass mean and central sums over rows of ``shift[:, None] + sign * x``."""
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], p, i
    cdef double d, d2
    for i in range(m):
        out[0, i] = 0.0
        out[1, i] = 0.0
        if high:
            out[2, i] = 0.0
            out[3, i] = 0.0
    for p in range(n):
        for i in range(m):
            out[0, i] += shift[p] + sign * x[p, i]
    for i in range(m):
        out[0, i] /= n
    for p in range(n):
        for i in range(m):
            d = shift[p] + sign * x[p, i] - out[0, i]
            d2 = d * d
            out[1, i] += d2
            if high:
                out[2, i] += d2 * d
                out[3, i] += d2 * d2


cdef void scalar_moments(const double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t n = x.shape[0], p
    cdef double mean = 0.0, m2 = 0.0, d
    for p in range(n):
        mean += x[p]
    mean /= n
    for p in range(n):
        d = x[p] - mean
        m2 += d * d
    out[0] = mean
    out[1] = m2


def simulate_chunk(const double[::1] beta, const double[::1] lam, double v0, double Sigma0v,
                   double sigma, double c, double A, double dt, uint64_t seed,
                   Py_ssize_t path_start, Py_ssize_t n_paths, double fixed_v,
                   double[:, ::1] p_stats, double[:, ::1] d_stats, double[::1] w_stats,
                   double[::1] u_stats, paths):
    cdef Py_ssize_t n = beta.shape[0] - 1
    cdef Py_ssize_t p, i
    cdef bint store = paths is not None
    cdef double[::1] Vs
    cdef double[:, ::1] Xs, Ys, Zs, Ws
    cdef double[:, ::1] Pm
    if store:
        Vs = paths["V"]
        Pm = paths["P"]
        Xs = paths["X"]
        Ys = paths["Y"]
        Zs = paths["Z"]
        Ws = paths["W"]
    else:
        Vs = np.empty(n_paths)
        Pm = np.empty((n_paths, n + 1))
    cdef double[::1] Wt = np.empty(n_paths)
    cdef double[::1] Ut = np.empty(n_paths)
    cdef double[::1] zero = np.zeros(n_paths)
    cdef uint64_t s = mix64(seed)
    cdef uint64_t key
    cdef bint random_v = isnan(fixed_v)
    cdef double sqdt = sqrt(dt), sqS = sqrt(Sigma0v)
    cdef double v, P, X, Y, Z, W, theta, dZ, dY
    with nogil:
        for p in range(n_paths):
            key = mix64(s + <uint64_t>(path_start + p + 1) * GOLDEN)
            if random_v:
                v = v0 + sqS * ppf(uniform(key, 0))
            else:
                v = fixed_v
            P = v0
            X = 0.0
            Y = 0.0
            Z = 0.0
            W = 0.0
            Vs[p] = v
            Pm[p, 0] = P
            if store:
                Xs[p, 0] = 0.0
                Ys[p, 0] = 0.0
                Zs[p, 0] = 0.0
                Ws[p, 0] = 0.0
            for i in range(n):
                theta = beta[i] * (v - P)
                dZ = sqdt * ppf(uniform(key, i + 1))
                dY = theta * dt + sigma * dZ
                W = W + (v - P - c * theta) * theta * dt
                P = P + lam[i] * dY
                X = X + theta * dt
                Y = Y + dY
                Z = Z + dZ
                Pm[p, i + 1] = P
                if store:
                    Xs[p, i + 1] = X
                    Ys[p, i + 1] = Y
                    Zs[p, i + 1] = Z
                    Ws[p, i + 1] = W
            Wt[p] = W
            Ut[p] = -exp(-A * W) if A > 0.0 else W
        node_moments(Pm, zero, 1.0, p_stats, False)
        node_moments(Pm, Vs, -1.0, d_stats, True)
        scalar_moments(Wt, w_stats)
        scalar_moments(Ut, u_stats)
