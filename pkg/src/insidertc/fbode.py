"""Continuous-time equilibrium via the forward-backward ODE.

State ``x = (x1, x2)`` with ``x1 = Sigma`` (posterior variance, pinned at t=0)
and ``x2 = Sigma * h`` (pinned to 0 at t=T).  For ``A > 0`` the solution lives
on the invariant curve ``x2 = rho(x1; k)``, so only ``x1`` is integrated and the
constant ``k`` is found by bisection.  ``A = 0`` and ``c = 0`` have closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import (IntegrationError, NumericalError, ParameterError, ShootingError,
                     SingularityError)
from .params import MarketParams, derive_constants

DEFAULT_STEPS = 2000
DEFAULT_SHOOT_TOL = 1e-12
LIMIT_WINDOW = 0.9
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    T: float = 1.0
    n_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise ParameterError("T", f"must be finite and > 0, got {self.T!r}")
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError("n_steps", f"must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.n_steps * factor)

    @classmethod
    def for_params(cls, params: MarketParams, n_steps: int = DEFAULT_STEPS) -> "TimeGrid":
        return cls(params.T, n_steps)


@dataclass(frozen=True)
class ShootingResult:
    """Outcome of the bisection on the invariant-curve constant.

    ``k_scaled`` (and ``bracket_scaled``) are ``k / Sigma0v**gamma``, the
    quantities actually iterated on; ``k`` is the unscaled constant and can
    overflow for extreme parameters.  ``collapsed`` is set when the bracket
    shrank to adjacent doubles before the residual reached the tolerance.
    """
    k: float
    k_scaled: float
    g_residual: float
    relative_residual: float
    bracket: tuple
    bracket_scaled: tuple
    iterations: int
    collapsed: bool = False


@dataclass(frozen=True, eq=False)
class EquilibriumProfiles:
    grid: TimeGrid
    x1: np.ndarray
    x2: np.ndarray
    h: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    k: float
    gamma: float
    branch: str
    shooting: ShootingResult | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def Sigma(self) -> np.ndarray:
        return self.x1


@dataclass(frozen=True, eq=False)
class ValueFunctionParts:
    h: np.ndarray
    integral_term: np.ndarray
    A: float


class LimitRow(NamedTuple):
    c: float
    gap_beta: float
    gap_lambda: float


@dataclass(frozen=True)
class LimitTable:
    """Gaps to the frictionless limit plus the large-cost bounds.

    ``sup_beta_large`` is taken over nodes ``t < T``: there ``beta < 1/(2c)``
    strictly, while ``beta(T)`` equals ``1/(2c)`` by the terminal condition.
    """
    rows: list
    monotone_beta: bool
    monotone_lambda: bool
    c_large: float
    sup_beta_large: float
    sup_lambda_large: float


def gamma_parts(params: MarketParams) -> tuple[float, float]:
    """``gamma = sqrt(1 + 8 A c sigma^2)`` and ``gamma - 1`` without cancellation."""
    z = 8.0 * params.A * params.c * params.sigma ** 2
    gamma = math.sqrt(1.0 + z)
    return gamma, z / (gamma + 1.0)


def fbode_rhs(x: Sequence[float], params: MarketParams) -> tuple[float, float]:
    x1, x2 = float(x[0]), float(x[1])
    s2 = params.sigma ** 2
    den = params.c * s2 + x2
    if abs(den) <= 1e-14 * max(1.0, params.c * s2, abs(x2)):
        raise SingularityError(f"c*sigma^2 + x2 = {den!r} is numerically zero", x=(x1, x2))
    den2 = 4.0 * den * den
    return (-s2 * x1 * x1 / den2,
            -s2 * x1 * (den - 2.0 * params.A * x2 * x2) / den2)


def rho_manifold(x1, k: float, params: MarketParams):
    """Invariant curve ``x2 = rho(x1)`` for constant ``k`` (``A > 0``, ``c > 0``)."""
    if params.A <= 0.0:
        raise ParameterError("A", "the invariant curve needs A > 0; use the closed form for A = 0")
    params.require_positive_cost("rho_manifold")
    gamma, gm1 = gamma_parts(params)
    xg = np.power(x1, gamma)
    return ((gamma + 1.0) * xg - gm1 * k) / (4.0 * params.A * (xg + k))


def _rho_scaled(x1, ktil, params, gamma, gm1):
    xt = np.power(np.asarray(x1) / params.Sigma0v, gamma)
    return ((gamma + 1.0) * xt - gm1 * ktil) / (4.0 * params.A * (xt + ktil))


def _check_shootable(params: MarketParams) -> None:
    if params.A <= 0.0:
        raise ParameterError("A", "shooting needs A > 0; A = 0 has a closed form")
    params.require_positive_cost("shooting")


def _integrate_scaled(ktil: float, params: MarketParams, grid: TimeGrid, backend=None) -> np.ndarray:
    gamma, gm1 = gamma_parts(params)
    impl = kernels.get_backend(backend)
    x1, bad = impl.rk4_x1(params.Sigma0v, params.A, params.sigma, gamma, gm1, float(ktil),
                          grid.dt, grid.n_steps)
    if bad >= 0:
        raise IntegrationError(f"x1 left (0, Sigma0v] at node {bad} (t={bad * grid.dt:.6g}) for "
                               f"k/Sigma0v^gamma={ktil!r}; k outside the bracket or grid too coarse",
                               node=bad, k_scaled=ktil)
    return x1


def integrate_x1(k: float, params: MarketParams, grid: TimeGrid, backend=None) -> np.ndarray:
    """RK4 solution of the reduced ODE for ``x1`` given the curve constant ``k``.

    The kernel steps ``Sigma0v / x1``, whose rate stays bounded; see
    ``_fallback.rk4_x1``.
    """
    _check_shootable(params)
    if not k > 0.0:
        raise ParameterError("k", f"must be > 0, got {k!r}")
    gamma, _ = gamma_parts(params)
    try:
        ktil = math.exp(math.log(k) - gamma * math.log(params.Sigma0v))
    except OverflowError:
        ktil = math.inf
    if not 0.0 < ktil < math.inf:
        raise ParameterError("k", f"k / Sigma0v**gamma is not representable for k={k!r}, gamma={gamma!r}")
    return _integrate_scaled(ktil, params, grid, backend)


def shoot_k(params: MarketParams, grid: TimeGrid, tol: float = DEFAULT_SHOOT_TOL,
            max_iter: int = 400, backend=None) -> ShootingResult:
    """Bisection for the curve constant that makes ``x2(T) = 0``.

    Works on ``k~ = k / Sigma0v**gamma``.  The bracket ``[k_l, k_r]`` comes from
    the existence argument: ``x1(T; k)`` decreases in ``k``, so ``g`` changes
    sign between ``k_r = (gamma+1)/(gamma-1)`` and ``k_l = k_r * x~(T; k_r)``.
    """
    _check_shootable(params)
    if not tol > 0.0:
        raise ParameterError("tol", f"must be > 0, got {tol!r}")
    gamma, gm1 = gamma_parts(params)
    S0 = params.Sigma0v

    def g(ktil):
        xT = _integrate_scaled(ktil, params, grid, backend)[-1]
        return (gamma + 1.0) * (xT / S0) ** gamma - gm1 * ktil

    k_r = (gamma + 1.0) / gm1
    x_r = _integrate_scaled(k_r, params, grid, backend)[-1]
    k_l = k_r * (x_r / S0) ** gamma
    g_l, g_r = g(k_l), (gamma + 1.0) * (x_r / S0) ** gamma - gm1 * k_r
    if g_l == 0.0 and g_r <= 0.0:
        # x1(T) is insensitive to k at this resolution: k_l is already a root
        scale = S0 ** gamma
        return ShootingResult(k=k_l * scale, k_scaled=k_l, g_residual=0.0, relative_residual=0.0,
                              bracket=(k_l * scale, k_r * scale), bracket_scaled=(k_l, k_r),
                              iterations=0)
    if not (g_l > 0.0 > g_r):
        raise ShootingError(f"bracket has no sign change: g(k_l={k_l:.6g})={g_l:.3g}, "
                            f"g(k_r={k_r:.6g})={g_r:.3g}", k_l=k_l, k_r=k_r)
    lo, hi = k_l, k_r
    mid, g_mid = lo, g_l
    g_lo, g_hi = g_l, g_r
    collapsed = False
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # adjacent doubles: nothing finer exists, keep the better end
            collapsed = True
            mid, g_mid = (lo, g_lo) if abs(g_lo) <= abs(g_hi) else (hi, g_hi)
            break
        g_mid = g(mid)
        if abs(g_mid) <= tol * gm1 * mid:
            break
        if g_mid > 0.0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    rel = abs(g_mid) / (gm1 * mid)
    if rel > tol and not collapsed:
        raise ShootingError(f"bisection did not converge in {max_iter} steps at k~={mid!r} "
                            f"(relative residual {rel:.3g} > {tol:.3g})", k_scaled=mid)
    scale = S0 ** gamma
    return ShootingResult(k=mid * scale, k_scaled=mid, g_residual=g_mid * scale, relative_residual=rel,
                          bracket=(k_l * scale, k_r * scale), bracket_scaled=(k_l, k_r), iterations=it,
                          collapsed=collapsed)


def _rules(x1, x2, params):
    den = 2.0 * (params.c * params.sigma ** 2 + x2)
    return params.sigma ** 2 / den, x1 / den


def _closed_form_risk_neutral(params: MarketParams, grid: TimeGrid) -> EquilibriumProfiles:
    s2, T, c = params.sigma ** 2, params.T, params.c
    L2 = params.Sigma0v / (s2 * T)
    lam0 = L2 / (math.sqrt(L2 + c * c / (T * T)) + c / T)  # sqrt(L2 + c^2/T^2) - c/T without cancellation
    tau = T - grid.nodes
    x1 = 2.0 * c * lam0 * s2 + lam0 * lam0 * s2 * tau
    x2 = 0.5 * lam0 * s2 * tau
    h = tau / (2.0 * lam0 * tau + 4.0 * c)
    beta = 1.0 / (lam0 * tau + 2.0 * c)
    lam = np.full_like(tau, lam0)
    return EquilibriumProfiles(grid, x1, x2, h, beta, lam, k=math.nan, gamma=1.0,
                               branch="closed-form-risk-neutral", meta={"lambda0": lam0})


def check_profiles(profiles: EquilibriumProfiles, params: MarketParams) -> list[str]:
    """Names of violated equilibrium invariants (empty when all hold)."""
    bad = []
    x1, x2, beta, lam = profiles.x1, profiles.x2, profiles.beta, profiles.lam
    S0 = params.Sigma0v
    if abs(x1[0] - S0) > 1e-13 * S0:
        bad.append("x1(0) != Sigma0v")
    if abs(x2[-1]) > 1e-8 * S0:
        bad.append("x2(T) != 0")
    if not np.all(x1 > 0.0):
        bad.append("x1 not positive")
    if np.any(np.diff(x1) > 1e-14 * S0):
        bad.append("x1 increasing")
    if np.any(x2[:-1] <= 0.0):
        bad.append("x2 not positive before T")
    bscale = 1.0 / (2.0 * params.c)
    if np.any(np.diff(beta) < -1e-12 * bscale):
        bad.append("beta decreasing")
    if abs(beta[-1] - bscale) > 1e-8 * bscale:
        bad.append("beta(T) != 1/(2c)")
    lscale = float(np.max(np.abs(lam)))
    if params.A > 0.0 and np.any(np.diff(lam) > 1e-12 * lscale):
        bad.append("lambda increasing")
    if params.A == 0.0 and np.ptp(lam) > 1e-12 * lscale:
        bad.append("lambda not constant")
    if np.max(np.abs(lam * params.sigma ** 2 - beta * x1)) > 1e-12 * lscale * params.sigma ** 2:
        bad.append("lambda sigma^2 != beta Sigma")
    return bad


def solve_equilibrium(params: MarketParams, grid: TimeGrid | None = None,
                      tol: float = DEFAULT_SHOOT_TOL, backend=None) -> EquilibriumProfiles:
    """Equilibrium trading/pricing rules on ``grid`` (defaults to ``params.T``, 2000 steps)."""
    if grid is None:
        grid = TimeGrid.for_params(params)
    if abs(grid.T - params.T) > 1e-12 * params.T:
        raise ParameterError("grid", f"grid horizon {grid.T!r} differs from T={params.T!r}")
    if params.c == 0.0:
        if params.A == 0.0:
            prof = limit_profiles_c0(params, grid)
            prof.meta["degenerate"] = "A=0 and c=0: frictionless Kyle equilibrium"
            return prof
        raise ParameterError("c", "must be > 0; the c -> 0 limit is limit_profiles_c0")
    if params.A == 0.0:
        prof = _closed_form_risk_neutral(params, grid)
    else:
        shot = shoot_k(params, grid, tol, backend=backend)
        gamma, gm1 = gamma_parts(params)
        x1 = _integrate_scaled(shot.k_scaled, params, grid, backend)
        x2 = _rho_scaled(x1, shot.k_scaled, params, gamma, gm1)
        beta, lam = _rules(x1, x2, params)
        prof = EquilibriumProfiles(grid, x1, x2, x2 / x1, beta, lam, k=shot.k, gamma=gamma,
                                   branch="shooting", shooting=shot,
                                   meta={"k_scaled": shot.k_scaled})
    violations = check_profiles(prof, params)
    if violations:
        raise NumericalError("equilibrium invariants violated: " + ", ".join(violations))
    return prof


def riccati_residual(profiles: EquilibriumProfiles, params: MarketParams) -> float:
    """Max centered-difference residual of the insider's Riccati ODE for ``h``.

    Includes ``|h(T)|`` so a wrong terminal value also shows up.
    """
    params.require_positive_cost("riccati_residual")
    h, lam, c = profiles.h, profiles.lam, params.c
    dt = profiles.grid.dt
    dh = (h[2:] - h[:-2]) / (2.0 * dt)
    hi, li = h[1:-1], lam[1:-1]
    res = dh + (1.0 - 2.0 * params.A * c * params.sigma ** 2) * li * li / c * hi * hi - li / c * hi + 0.25 / c
    return float(max(np.max(np.abs(res)) if res.size else 0.0, abs(h[-1])))


def fbode_residual(profiles: EquilibriumProfiles, params: MarketParams) -> tuple[float, float]:
    """Max centered-difference residuals of both FBODE components on interior nodes."""
    dt = profiles.grid.dt
    x1, x2 = profiles.x1, profiles.x2
    s2 = params.sigma ** 2
    den = params.c * s2 + x2[1:-1]
    F1 = -s2 * x1[1:-1] ** 2 / (4.0 * den * den)
    F2 = -s2 * x1[1:-1] * (den - 2.0 * params.A * x2[1:-1] ** 2) / (4.0 * den * den)
    r1 = (x1[2:] - x1[:-2]) / (2.0 * dt) - F1
    r2 = (x2[2:] - x2[:-2]) / (2.0 * dt) - F2
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def value_function_parts(profiles: EquilibriumProfiles, params: MarketParams) -> ValueFunctionParts:
    """Curvature ``h`` and ``sigma^2 * int_t^T lambda^2 h ds`` (trapezoid) on the grid."""
    f = profiles.lam ** 2 * profiles.h
    seg = 0.5 * (f[1:] + f[:-1]) * profiles.grid.dt
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return ValueFunctionParts(profiles.h, params.sigma ** 2 * tail, params.A)


def value_function(t: float, P: float, v: float, profiles: EquilibriumProfiles,
                   params: MarketParams) -> float:
    """Insider's optimal expected utility-to-go at grid time ``t`` and midprice ``P``."""
    grid = profiles.grid
    i = int(round(t / grid.dt))
    if not (0 <= i <= grid.n_steps) or abs(i * grid.dt - t) > 1e-9 * grid.T:
        raise ParameterError("t", f"{t!r} is not a grid node")
    parts = value_function_parts(profiles, params)
    quad = (v - P) ** 2 * parts.h[i] + parts.integral_term[i]
    if params.A > 0.0:
        return -math.exp(-params.A * quad)
    return float(quad)


def limit_profiles_c0(params: MarketParams, grid: TimeGrid | None = None) -> EquilibriumProfiles:
    """Frictionless (``c -> 0``) equilibrium; ``c`` is ignored.

    ``beta`` blows up at ``T`` and is reported as NaN on that node.
    """
    if grid is None:
        grid = TimeGrid.for_params(params)
    t = grid.nodes
    T, A, S0 = params.T, params.A, params.Sigma0v
    s2 = params.sigma ** 2
    LK = derive_constants(params).LambdaK
    LK2 = LK * LK
    half = 0.5 * A * S0
    S = math.sqrt(half * half + LK2)
    tau = T - t
    slope = half * (2.0 * t - T) / T + S
    x1 = s2 * LK2 * LK2 * tau / ((half + S) * slope)
    x2 = s2 * LK2 * tau / (A * S0 + 2.0 * S)
    h = slope / (2.0 * LK2)
    lam = LK2 / slope
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = (half + S) / (LK2 * tau)
    beta[-1] = math.nan
    return EquilibriumProfiles(grid, x1, x2, h, beta, lam, k=math.nan, gamma=1.0,
                               branch="c0-limit", meta={"S": S, "LambdaK": LK})


def limit_check(params: MarketParams, grid: TimeGrid | None, c_sequence: Sequence[float],
                c_large: float = 100.0, window: float = LIMIT_WINDOW) -> LimitTable:
    """Sup-norm gaps to the frictionless limit on ``t <= window * T``.

    Also reports ``sup beta`` and ``sup lambda`` at ``c_large`` for the
    large-cost direction.
    """
    if grid is None:
        grid = TimeGrid.for_params(params)
    cs = [float(c) for c in c_sequence]
    for a, b in zip(cs, cs[1:]):
        if not b < a:
            raise ParameterError("c_sequence", f"must be strictly decreasing, got {cs}")
    if any(c <= 0.0 for c in cs):
        raise ParameterError("c_sequence", f"entries must be > 0, got {cs}")
    ref = limit_profiles_c0(params, grid)
    mask = grid.nodes <= window * grid.T * (1.0 + 1e-12)
    rows = []
    for c in cs:
        prof = solve_equilibrium(params.replace(c=c), grid)
        rows.append(LimitRow(c, float(np.max(np.abs(prof.beta[mask] - ref.beta[mask]))),
                             float(np.max(np.abs(prof.lam[mask] - ref.lam[mask])))))
    big = solve_equilibrium(params.replace(c=c_large), grid)

    def decreasing(vals):
        return all(b < a + MONOTONE_TOL for a, b in zip(vals, vals[1:]))

    return LimitTable(rows, decreasing([r.gap_beta for r in rows]),
                      decreasing([r.gap_lambda for r in rows]), c_large,
                      float(np.max(big.beta[:-1])), float(np.max(big.lam)))
