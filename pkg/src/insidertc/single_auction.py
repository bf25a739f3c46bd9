"""Linear equilibrium of the one-shot auction with transaction costs.

The pricing slope is the unique positive root of a quintic; the trading
intensity follows from the insider's first-order condition.  Everything here is
cheap, so it stays in pure Python.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import BracketError, MonotonicityError, NumericalError, ParameterError
from .params import MarketParams, derive_constants

DEFAULT_TOL = 1e-12
MONOTONE_SLACK = 1e-10


@dataclass(frozen=True)
class SingleAuctionEquilibrium:
    lam: float
    beta: float
    residual_r: float
    second_order_s: float
    nu: float
    iterations: int = 0


class SweepRow(NamedTuple):
    c: float
    A: float
    lam: float
    beta: float


def r_coefficients(params: MarketParams) -> tuple[float, ...]:
    """Coefficients of the slope polynomial, highest degree first."""
    A, c = params.A, params.c
    s2 = params.sigma ** 2
    lk2 = derive_constants(params).lambdaK ** 2
    return (
        A * A * s2 * s2,
        4.0 * A * s2,
        4.0 * (1.0 + A * c * s2),
        4.0 * (2.0 * c - A * s2 * lk2),
        4.0 * (c * c - lk2),
        -8.0 * c * lk2,
    )


def q_coefficients(params: MarketParams) -> tuple[float, ...]:
    """Coefficients of the intensity polynomial, highest degree first."""
    A, c = params.A, params.c
    s2 = params.sigma ** 2
    lk2 = derive_constants(params).lambdaK ** 2
    return (
        32.0 * c * lk2 * lk2,
        16.0 * lk2 * lk2,
        16.0 * lk2 * (A * lk2 * s2 + c),
        0.0,
        2.0 * c,
        -1.0,
    )


def _horner(coeffs: Sequence[float], x: float) -> tuple[float, float]:
    """Value and derivative of a polynomial at ``x``."""
    p = 0.0
    dp = 0.0
    for a in coeffs:
        dp = dp * x + p
        p = p * x + a
    return p, dp


def poly_r(x: float, params: MarketParams) -> float:
    return _horner(r_coefficients(params), x)[0]


def poly_q(b: float, params: MarketParams) -> float:
    return _horner(q_coefficients(params), b)[0]


def second_order(lam: float, params: MarketParams) -> float:
    """Second-order condition ``s(lambda)``; positive at an optimum."""
    return 2.0 * (lam + params.c) + params.A * params.sigma ** 2 * lam * lam


def beta_from_lambda(lam: float, params: MarketParams) -> float:
    return 1.0 / second_order(lam, params)


def lambda_from_beta(beta: float, params: MarketParams) -> float:
    """Efficient-pricing slope for a linear strategy with intensity ``beta``."""
    lk2 = derive_constants(params).lambdaK ** 2
    return 4.0 * lk2 * beta / (1.0 + 4.0 * lk2 * beta * beta)


def solve_single_auction(params: MarketParams, tol: float = DEFAULT_TOL,
                         max_iter: int = 200) -> SingleAuctionEquilibrium:
    """Unique linear single-auction equilibrium.

    Safeguarded Newton on ``(1e-12 * lambdaK, lambdaK]``.  The bracket is valid
    because ``r(0) <= 0`` and ``r(lambdaK) = lambdaK (s - 2 lambdaK)^2 >= 0``.
    ``tol`` applies to ``|r(lambda)|`` divided by the largest coefficient.
    """
    if not (tol > 0.0):
        raise ParameterError("tol", f"must be > 0, got {tol!r}")
    const = derive_constants(params)
    lk = const.lambdaK
    if params.A == 0.0 and params.c == 0.0:
        return SingleAuctionEquilibrium(lk, const.betaK, 0.0, 2.0 * lk, 0.0)

    coeffs = r_coefficients(params)
    scale = max(abs(a) for a in coeffs)
    lo, hi = 1e-12 * lk, lk
    r_lo, r_hi = _horner(coeffs, lo)[0], _horner(coeffs, hi)[0]
    # r(lambdaK) >= 0 exactly; within Horner rounding of 0 it is the root
    noise = 12.0 * sys.float_info.epsilon * sum(abs(a) * hi ** (len(coeffs) - 1 - i)
                                                for i, a in enumerate(coeffs))
    if r_lo < 0.0 and abs(r_hi) <= noise:
        r_hi = 0.0
    if not (r_lo < 0.0 <= r_hi):
        raise BracketError(f"no sign change of r on [{lo:.6g}, {hi:.6g}]: "
                           f"r(lo)={r_lo:.6g}, r(hi)={r_hi:.6g}", lo=lo, hi=hi, r_lo=r_lo, r_hi=r_hi)
    if r_hi == 0.0:
        x, rx, it = hi, 0.0, 0
    else:
        x = hi
        collapsed = False
        rx, drx = r_hi, _horner(coeffs, hi)[1]
        it = 0
        while it < max_iter:
            step = rx / drx if drx != 0.0 else math.inf
            if abs(rx) <= tol * scale and abs(step) <= 1e-15 * x:
                break
            it += 1
            x_new = x - step
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
            x = x_new
            rx, drx = _horner(coeffs, x)
            if rx == 0.0:
                break
            if rx < 0.0:
                lo = x
            else:
                hi = x
            if hi - lo <= 4.0 * math.ulp(hi):
                collapsed = True
                break
        # a bracket a few ulps wide is as good as it gets, even above tol
        if abs(rx) > tol * scale and not collapsed:
            raise BracketError(f"root refinement stalled at lambda={x!r} with scaled residual "
                               f"{abs(rx) / scale:.3g} > tol={tol:.3g}", lam=x, residual=rx)
    s = second_order(x, params)
    if s <= 0.0:
        raise NumericalError(f"second-order condition fails: s({x!r}) = {s!r}")
    if x > lk * (1.0 + 1e-14):
        raise NumericalError(f"lambda={x!r} exceeds the frictionless ceiling {lk!r}")
    return SingleAuctionEquilibrium(x, 1.0 / s, rx, s, const.nu, it)


def approx_equilibrium(params: MarketParams) -> SingleAuctionEquilibrium:
    """Small-friction approximation in the dimensionless parameter ``nu``.

    No positivity clamp: for large ``nu`` the raw values are returned so the
    breakdown of the expansion stays visible.
    """
    const = derive_constants(params)
    nu = const.nu
    lam = const.lambdaK * (1.0 - 0.5 * nu * nu + nu ** 3)
    beta = const.betaK * (1.0 - nu + 1.5 * nu * nu)
    return SingleAuctionEquilibrium(lam, beta, poly_r(lam, params), second_order(lam, params), nu)


def _check_increasing(name: str, grid: Sequence[float]) -> list[float]:
    values = [float(g) for g in grid]
    for a, b in zip(values, values[1:]):
        if not b > a:
            raise ParameterError(name, f"must be strictly increasing, got {values}")
    return values


def sweep_monotonicity(params: MarketParams, grid_c: Sequence[float], grid_A: Sequence[float],
                       tol: float = DEFAULT_TOL) -> list[SweepRow]:
    """Solve on the (A, c) grid and confirm both rules decrease in A and in c.

    Rows are ordered A-major then c.  A step counts as a violation only if the
    later value exceeds the earlier one by more than ``MONOTONE_SLACK``.
    """
    cs = _check_increasing("grid_c", grid_c)
    As = _check_increasing("grid_A", grid_A)
    table = [[solve_single_auction(params.replace(A=a, c=c), tol) for c in cs] for a in As]

    def check(prev, cur, what):
        for attr in ("lam", "beta"):
            if getattr(cur[1], attr) - getattr(prev[1], attr) > MONOTONE_SLACK:
                raise MonotonicityError(
                    f"{attr} not decreasing in {what} between {prev[0]} and {cur[0]}",
                    pair=(prev[0], cur[0]))

    for i, a in enumerate(As):
        for j in range(1, len(cs)):
            check(((a, cs[j - 1]), table[i][j - 1]), ((a, cs[j]), table[i][j]), "c")
    for j, c in enumerate(cs):
        for i in range(1, len(As)):
            check(((As[i - 1], c), table[i - 1][j]), ((As[i], c), table[i][j]), "A")
    return [SweepRow(c, a, table[i][j].lam, table[i][j].beta)
            for i, a in enumerate(As) for j, c in enumerate(cs)]
