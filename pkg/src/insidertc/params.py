"""Market parameterization and the frictionless reference constants."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


def _check_finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(name, f"expected a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise ParameterError(name, f"must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class MarketParams:
    """Model constants.

    ``A`` is the insider's exponential risk aversion (0 = risk neutral), ``c``
    the transaction-cost coefficient, ``sigma`` the noise-trader volatility,
    ``Sigma0v`` / ``v0`` the prior variance / mean of the liquidation value and
    ``T`` the trading horizon (ignored by the single-auction model).
    """

    A: float = 0.0
    c: float = 0.0
    sigma: float = 1.0
    Sigma0v: float = 1.0
    v0: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("A", "c", "sigma", "Sigma0v", "v0", "T"):
            object.__setattr__(self, name, _check_finite(name, getattr(self, name)))
        for name in ("sigma", "Sigma0v", "T"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(name, f"must be > 0, got {getattr(self, name)!r}")
        for name in ("A", "c"):
            if getattr(self, name) < 0.0:
                raise ParameterError(name, f"must be >= 0, got {getattr(self, name)!r}")

    def replace(self, **changes) -> "MarketParams":
        fields = {k: getattr(self, k) for k in ("A", "c", "sigma", "Sigma0v", "v0", "T")}
        fields.update(changes)
        return MarketParams(**fields)

    def require_positive_cost(self, what: str = "this operation") -> None:
        if self.c <= 0.0:
            raise ParameterError("c", f"{what} requires c > 0, got {self.c!r}")

    @property
    def constants(self) -> "ReferenceConstants":
        return derive_constants(self)


@dataclass(frozen=True)
class ReferenceConstants:
    lambdaK: float
    betaK: float
    LambdaK: float
    nu: float


def derive_constants(params: MarketParams) -> ReferenceConstants:
    """Kyle's frictionless slopes and the small-friction expansion parameter.

    >>> derive_constants(MarketParams(A=1.0, c=0.1))
    ReferenceConstants(lambdaK=0.5, betaK=1.0, LambdaK=1.0, nu=0.45)
    """
    if not isinstance(params, MarketParams):
        raise ParameterError("params", f"expected MarketParams, got {type(params).__name__}")
    s2 = params.sigma * params.sigma
    lambdaK = 0.5 * math.sqrt(params.Sigma0v / s2)
    LambdaK = math.sqrt(params.Sigma0v / (s2 * params.T))
    nu = lambdaK * s2 * params.A / 2.0 + params.c / lambdaK
    return ReferenceConstants(lambdaK=lambdaK, betaK=1.0 / (2.0 * lambdaK), LambdaK=LambdaK, nu=nu)
