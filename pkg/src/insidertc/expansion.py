"""Power-series coefficients of the single-auction equilibrium in (A, c).

``lambda = sum lambda_tilde[i, j] A^i c^j`` for ``i + j <= 3`` and the same for
``beta`` up to ``i + j <= 2``.  The order-by-order equations they solve are
exposed so the tables can be checked numerically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import MarketParams, derive_constants


@dataclass(frozen=True)
class ExpansionCoefficients:
    lambda_tilde: dict
    beta_tilde: dict

    def lambda_series(self, A: float, c: float) -> float:
        return sum(v * A ** i * c ** j for (i, j), v in self.lambda_tilde.items())

    def beta_series(self, A: float, c: float) -> float:
        return sum(v * A ** i * c ** j for (i, j), v in self.beta_tilde.items())


def expansion_coefficients(params: MarketParams) -> ExpansionCoefficients:
    lk = derive_constants(params).lambdaK
    s2 = params.sigma ** 2
    lam = {
        (0, 0): lk,
        (1, 0): 0.0,
        (0, 1): 0.0,
        (2, 0): -s2 * s2 * lk ** 3 / 8.0,
        (1, 1): -s2 * lk / 2.0,
        (0, 2): -1.0 / (2.0 * lk),
        (3, 0): s2 ** 3 * lk ** 4 / 8.0,
        (2, 1): 0.75 * s2 * s2 * lk * lk,
        (1, 2): 1.5 * s2,
        (0, 3): 1.0 / (lk * lk),
    }
    beta = {
        (0, 0): 1.0 / (2.0 * lk),
        (1, 0): -s2 / 4.0,
        (0, 1): -1.0 / (2.0 * lk * lk),
        (2, 0): 3.0 / 16.0 * s2 * s2 * lk,
        (1, 1): 0.75 * s2 / lk,
        (0, 2): 0.75 / lk ** 3,
    }
    return ExpansionCoefficients(lam, beta)


def lambda_system_terms(L: dict, lk: float, sigma: float) -> list[list[float]]:
    """Terms of the ten equations for the lambda coefficients, one list each.

    Order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), (3,0), (2,1), (1,2), (0,3).
    The last one is written after eliminating the lower-order unknowns.
    """
    s2, s4 = sigma ** 2, sigma ** 4
    k2 = lk * lk
    l00, l10, l01 = L[0, 0], L[1, 0], L[0, 1]
    l20, l11, l02 = L[2, 0], L[1, 1], L[0, 2]
    l30, l21, l12, l03 = L[3, 0], L[2, 1], L[1, 2], L[0, 3]
    return [
        [4 * l00 ** 3, -4 * l00 * k2],
        [4 * l00 ** 4 * s2, -4 * l00 ** 2 * k2 * s2, 12 * l10 * l00 ** 2, -4 * l10 * k2],
        [12 * l00 ** 2 * l01, -4 * l01 * k2, 8 * l00 ** 2, -8 * k2],
        [l00 ** 5 * s4, 16 * l00 ** 3 * l10 * s2, 12 * l20 * l00 ** 2, 12 * l00 * l10 ** 2,
         -8 * l00 * l10 * k2 * s2, -4 * l20 * k2],
        [16 * l00 * l10, 12 * l00 ** 2 * l11, -4 * l11 * k2, 4 * l00 ** 3 * s2,
         16 * l00 ** 3 * l01 * s2, 24 * l00 * l01 * l10, -8 * l00 * l01 * k2 * s2],
        [12 * l02 * l00 ** 2, 12 * l00 * l01 ** 2, 16 * l00 * l01, 4 * l00, -4 * l02 * k2],
        [5 * l00 ** 4 * l10 * s4, 16 * l20 * l00 ** 3 * s2, 24 * l00 ** 2 * l10 ** 2 * s2,
         12 * l30 * l00 ** 2, 24 * l20 * l00 * l10, -8 * l20 * l00 * k2 * s2, 4 * l10 ** 3,
         -4 * l10 ** 2 * k2 * s2, -4 * l30 * k2],
        [16 * l00 * l20, 12 * l01 * l10 ** 2, 12 * l00 ** 2 * l21, -4 * l21 * k2, 8 * l10 ** 2,
         5 * l00 ** 4 * l01 * s4, 12 * l00 ** 2 * l10 * s2, 16 * l00 ** 3 * l11 * s2,
         24 * l00 * l01 * l20, 24 * l00 * l10 * l11, 48 * l00 ** 2 * l01 * l10 * s2,
         -8 * l00 * l11 * k2 * s2, -8 * l01 * l10 * k2 * s2],
        [4 * l10, 16 * l00 * l11, 16 * l01 * l10, 12 * l01 ** 2 * l10, 12 * l00 ** 2 * l12,
         -4 * l12 * k2, 12 * l00 ** 2 * l01 * s2, 16 * l00 ** 3 * l02 * s2, 24 * l00 * l01 * l11,
         24 * l00 * l02 * l10, 24 * l00 ** 2 * l01 ** 2 * s2, -4 * l01 ** 2 * k2 * s2,
         -8 * l00 * l02 * k2 * s2],
        [8 * l03 * k2, -8.0],
    ]


def beta_system_terms(B: dict, lk: float, sigma: float) -> list[list[float]]:
    """Terms of the six equations for the beta coefficients.

    Order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    s2 = sigma ** 2
    k2, k4 = lk * lk, lk ** 4
    b00, b10, b01 = B[0, 0], B[1, 0], B[0, 1]
    b20, b11, b02 = B[2, 0], B[1, 1], B[0, 2]
    return [
        [16 * b00 ** 4 * k4, -1.0],
        [16 * b00 ** 3 * k4 * s2, 64 * b10 * b00 ** 3 * k4],
        [32 * b00 ** 5 * k4, 64 * b01 * b00 ** 3 * k4, 16 * b00 ** 3 * k2, 2 * b00],
        [64 * b20 * b00 ** 3 * k4, 96 * b00 ** 2 * b10 ** 2 * k4, 48 * b00 ** 2 * b10 * k4 * s2],
        [160 * b10 * b00 ** 4 * k4, 64 * b11 * b00 ** 3 * k4, 48 * b01 * b00 ** 2 * k4 * s2,
         192 * b01 * b10 * b00 ** 2 * k4, 48 * b10 * b00 ** 2 * k2, 2 * b10],
        [160 * b00 ** 4 * b01 * k4, 64 * b02 * b00 ** 3 * k4, 96 * b00 ** 2 * b01 ** 2 * k4,
         48 * b00 ** 2 * b01 * k2, 2 * b01],
    ]


def _relative(terms_per_eq: list[list[float]]) -> np.ndarray:
    out = []
    for terms in terms_per_eq:
        big = max(abs(t) for t in terms)
        out.append(abs(sum(terms)) / big if big > 0.0 else 0.0)
    return np.array(out)


def system_residuals(coeffs: ExpansionCoefficients, params: MarketParams) -> tuple[np.ndarray, np.ndarray]:
    """Relative residuals (|sum| / largest |term|) of the 10 lambda and 6 beta equations."""
    lk = derive_constants(params).lambdaK
    return (_relative(lambda_system_terms(coeffs.lambda_tilde, lk, params.sigma)),
            _relative(beta_system_terms(coeffs.beta_tilde, lk, params.sigma)))
