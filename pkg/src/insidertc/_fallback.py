"""Pure Python / numpy versions of the hot kernels.

Same signatures and arithmetic as the compiled ``_kernels`` module; used when
the extension is not built or ``INSIDERTC_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
STREAM = 0xD1B54A32D192ED03
MASK64 = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53

# Wichura's AS241 (PPND16) rational approximations.
_A = (3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
      13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
      33430.575583588128105, 2509.0809287301226727)
_B = (1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
      21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
      5226.495278852545925)
_C = (1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
      3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
      0.0227238449892691845833, 7.7454501427834140764e-4)
_D = (1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
      0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
      1.05075007164441684324e-9)
_E = (6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
      0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
      7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
      2.04426310338993978564e-15)


# --- ODE ------------------------------------------------------------------

def w_rate(w, coef, gamma, gp2, gm2, ktil):
    """Rate of ``w = Sigma0v / x1``; bounded, unlike the rate of ``x1`` itself."""
    xt = w ** -gamma
    r = (xt + ktil) / (gp2 * xt + gm2 * ktil)
    return coef * r * r


def rk4_x1(Sigma0v, A, sigma, gamma, gm1, ktil, dt, n_steps):
    """Classical RK4 for the reduced posterior-variance ODE.

    Steps the reciprocal ``w = Sigma0v / x1`` (non-stiff even when ``x1``
    collapses quickly) and returns ``(x1, bad)`` with ``bad`` the first node
    where ``w`` stopped being finite and >= 1, or -1.  ``ktil`` is the shooting
    constant rescaled by ``Sigma0v**gamma``; ``gm1`` is ``gamma - 1`` computed
    without cancellation.
    """
    coef = 16.0 * A * A * sigma * sigma * Sigma0v
    gp2 = (gamma + 1.0) * (gamma + 1.0)
    gm2 = gm1 * gm1
    out = np.empty(n_steps + 1)
    w = 1.0
    out[0] = Sigma0v
    half = 0.5 * dt
    for i in range(n_steps):
        k1 = w_rate(w, coef, gamma, gp2, gm2, ktil)
        k2 = w_rate(w + half * k1, coef, gamma, gp2, gm2, ktil)
        k3 = w_rate(w + half * k2, coef, gamma, gp2, gm2, ktil)
        k4 = w_rate(w + dt * k3, coef, gamma, gp2, gm2, ktil)
        w = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (w >= 1.0) or not math.isfinite(w):
            out[i + 1:] = np.nan
            return out, i + 1
        out[i + 1] = Sigma0v / w
    return out, -1


# --- random numbers ---------------------------------------------------------

def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed, path_start, n_paths):
    """Per-path stream keys, a pure function of (seed, path index)."""
    s = _mix64(np.array([seed & MASK64], dtype=np.uint64))
    idx = np.arange(path_start, path_start + n_paths, dtype=np.uint64) + np.uint64(1)
    return _mix64(s + idx * np.uint64(GOLDEN))


def uniforms(keys, counter):
    """Open-interval uniforms for draw number ``counter`` of each stream."""
    bits = _mix64(keys + np.uint64(((counter + 1) * STREAM) & MASK64))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def _poly(coeffs, r):
    acc = coeffs[7]
    for a in coeffs[6::-1]:
        acc = acc * r + a
    return acc


def norm_ppf(p):
    """Inverse standard normal CDF (AS241), elementwise on an array in (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    if tail.any():
        pt = p[tail]
        r = np.sqrt(-np.log(np.minimum(pt, 1.0 - pt)))
        x = np.empty_like(r)
        near = r <= 5.0
        rn = r[near] - 1.6
        x[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        x[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(q[tail] < 0.0, -x, x)
    return out


# --- Monte Carlo -------------------------------------------------------------

def _chunk_moments(x):
    """Mean and central-moment sums M2..M4 along axis 0."""
    mean = x.mean(axis=0)
    d = x - mean
    d2 = d * d
    return mean, d2.sum(axis=0), (d2 * d).sum(axis=0), (d2 * d2).sum(axis=0)


def simulate_chunk(beta, lam, v0, Sigma0v, sigma, c, A, dt, seed, path_start, n_paths,
                   fixed_v, p_stats, d_stats, w_stats, u_stats, paths):
    """Euler paths ``path_start .. path_start + n_paths - 1`` of the equilibrium.

    Fills the moment arrays in place: ``p_stats`` (2, n+1) mean/M2 of P_t,
    ``d_stats`` (4, n+1) mean/M2/M3/M4 of v - P_t, ``w_stats`` and ``u_stats``
    (2,) mean/M2 of terminal wealth and utility.  ``paths`` is None or a dict of
    preallocated arrays V, P, X, Y, Z, W.
    """
    n = beta.shape[0] - 1
    keys = path_keys(seed, path_start, n_paths)
    if math.isnan(fixed_v):
        v = v0 + math.sqrt(Sigma0v) * norm_ppf(uniforms(keys, 0))
    else:
        v = np.full(n_paths, fixed_v)
    sqdt = math.sqrt(dt)
    P = np.full(n_paths, v0)
    X = np.zeros(n_paths)
    Y = np.zeros(n_paths)
    Z = np.zeros(n_paths)
    W = np.zeros(n_paths)
    Pm = np.empty((n_paths, n + 1))
    Pm[:, 0] = P
    store = paths is not None
    if store:
        paths["V"][:] = v
        for name in ("P", "X", "Y", "Z", "W"):
            paths[name][:, 0] = 0.0
        paths["P"][:, 0] = P
    for i in range(n):
        theta = beta[i] * (v - P)
        dZ = sqdt * norm_ppf(uniforms(keys, i + 1))
        dY = theta * dt + sigma * dZ
        W = W + (v - P - c * theta) * theta * dt
        P = P + lam[i] * dY
        X = X + theta * dt
        Y = Y + dY
        Z = Z + dZ
        Pm[:, i + 1] = P
        if store:
            paths["P"][:, i + 1] = P
            paths["X"][:, i + 1] = X
            paths["Y"][:, i + 1] = Y
            paths["Z"][:, i + 1] = Z
            paths["W"][:, i + 1] = W
    mean, m2, _, _ = _chunk_moments(Pm)
    p_stats[0], p_stats[1] = mean, m2
    d_stats[:] = _chunk_moments(v[:, None] - Pm)
    U = -np.exp(-A * W) if A > 0.0 else W
    for target, x in ((w_stats, W), (u_stats, U)):
        mean, m2, _, _ = _chunk_moments(x)
        target[0], target[1] = mean, m2
