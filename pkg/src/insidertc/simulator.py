"""Monte Carlo simulation of the equilibrium market.

Euler scheme on the profile grid.  Every path draws its normals from a
counter-based generator keyed on ``(seed, path index)``, so each path is the
same however the work is split.  Moments are streamed per chunk and merged in
path order: the worker count never changes a bit of the output, the chunk size
only changes rounding.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ParameterError
from .fbode import EquilibriumProfiles, TimeGrid
from .params import MarketParams

CONDITIONINGS = ("fixed-v", "random-v")
DEFAULT_CHUNK = 4096
FLAG_Z = 4.0
_U64 = 1 << 64


@dataclass(frozen=True)
class SimulationConfig:
    """What to simulate.

    ``v`` is required for ``fixed-v`` and forbidden for ``random-v``.
    ``zero_noise`` replaces sigma by 0 in the dynamics only (a sanity switch;
    the profiles keep their sigma).
    """
    n_paths: int
    grid: TimeGrid
    seed: int = 0
    conditioning: str = "random-v"
    v: float | None = None
    zero_noise: bool = False
    store_paths: bool = False
    chunk_size: int = DEFAULT_CHUNK
    n_workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        for name in ("n_paths", "chunk_size", "n_workers"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ParameterError(name, f"must be a positive integer, got {val!r}")
        if not isinstance(self.grid, TimeGrid):
            raise ParameterError("grid", f"must be a TimeGrid, got {type(self.grid).__name__}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or not 0 <= self.seed < _U64:
            raise ParameterError("seed", f"must be an integer in [0, 2**64), got {self.seed!r}")
        if self.conditioning not in CONDITIONINGS:
            raise ParameterError("conditioning", f"must be one of {CONDITIONINGS}, got {self.conditioning!r}")
        if self.conditioning == "fixed-v":
            if self.v is None or not math.isfinite(self.v):
                raise ParameterError("v", f"fixed-v needs a finite v, got {self.v!r}")
        elif self.v is not None:
            raise ParameterError("v", "only allowed with conditioning='fixed-v'")
        kernels.get_backend(self.backend)


class Estimate(NamedTuple):
    value: np.ndarray | float
    se: np.ndarray | float


@dataclass(frozen=True, eq=False)
class PathRecord:
    """Stored paths, one row per path and one column per grid node."""
    t: np.ndarray
    v: np.ndarray
    P: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    W: np.ndarray

    def order_flow(self, sigma: float) -> np.ndarray:
        """``X_t - X_0 + sigma Z_t`` rebuilt from the stored pieces."""
        return self.X - self.X[:, :1] + sigma * self.Z

    def wealth(self, beta: np.ndarray, c: float) -> np.ndarray:
        """Terminal wealth re-accumulated from stored ``P`` with the Euler rule."""
        dt = np.diff(self.t)
        gap = self.v[:, None] - self.P[:, :-1]
        theta = beta[:-1] * gap
        return np.sum((gap - c * theta) * theta * dt, axis=1)


@dataclass(frozen=True, eq=False)
class SimulationStats:
    t: np.ndarray
    n_paths: int
    conditioning: str
    seed: int
    mean_P: Estimate
    mean_v_minus_P: Estimate
    var_v_minus_P: Estimate
    mean_wealth: Estimate
    mean_utility: Estimate | None
    paths: PathRecord | None = None

    @property
    def mean_PT(self) -> Estimate:
        return Estimate(float(self.mean_P.value[-1]), float(self.mean_P.se[-1]))

    @property
    def mean_wealth_given_v(self) -> Estimate:
        if self.conditioning != "fixed-v":
            raise ParameterError("conditioning", "mean wealth given v needs fixed-v runs")
        return self.mean_wealth


class _Moments:
    """Count, mean and central sums (second, or second to fourth) with pairwise merge."""

    def __init__(self, n, mean, m2, m3=None, m4=None):
        self.n, self.mean, self.m2, self.m3, self.m4 = float(n), mean, m2, m3, m4

    def merge(self, other: "_Moments") -> "_Moments":
        na, nb = self.n, other.n
        n = na + nb
        d = other.mean - self.mean
        mean = self.mean + d * (nb / n)
        m2 = self.m2 + other.m2 + d * d * (na * nb / n)
        if self.m3 is None:
            return _Moments(n, mean, m2)
        m3 = (self.m3 + other.m3 + d ** 3 * (na * nb * (na - nb) / n ** 2)
              + 3.0 * d * (na * other.m2 - nb * self.m2) / n)
        m4 = (self.m4 + other.m4 + d ** 4 * (na * nb * (na * na - na * nb + nb * nb) / n ** 3)
              + 6.0 * d * d * (na * na * other.m2 + nb * nb * self.m2) / n ** 2
              + 4.0 * d * (na * other.m3 - nb * self.m3) / n)
        return _Moments(n, mean, m2, m3, m4)

    def mean_estimate(self) -> Estimate:
        var = self.m2 / (self.n - 1.0) if self.n > 1 else self.m2 * 0.0
        return Estimate(self.mean, np.sqrt(var / self.n))

    def var_estimate(self) -> Estimate:
        """Sample variance with SE ``sqrt((m4 - s^4 (n-3)/(n-1)) / n)``."""
        n = self.n
        if n < 4:  # not enough paths for the fourth-moment correction
            nan = np.full_like(self.m2, np.nan)
            return Estimate(self.m2 / (n - 1.0) if n > 1 else nan, nan)
        s2 = self.m2 / (n - 1.0)
        m4 = self.m4 / n
        v = (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n
        return Estimate(s2, np.sqrt(np.maximum(v, 0.0)))


def _run_chunk(impl, beta, lam, params, sigma, dt, seed, start, count, fixed_v, store):
    m = beta.shape[0]
    p_stats = np.zeros((2, m))
    d_stats = np.zeros((4, m))
    w_stats = np.zeros(2)
    u_stats = np.zeros(2)
    paths = None
    if store is not None:
        paths = {"V": store["V"][start:start + count]}
        for name in ("P", "X", "Y", "Z", "W"):
            paths[name] = store[name][start:start + count]
    impl.simulate_chunk(beta, lam, params.v0, params.Sigma0v, sigma, params.c, params.A, dt,
                        seed, start, count, fixed_v, p_stats, d_stats, w_stats, u_stats, paths)
    return (_Moments(count, p_stats[0], p_stats[1]),
            _Moments(count, d_stats[0], d_stats[1], d_stats[2], d_stats[3]),
            _Moments(count, w_stats[0], w_stats[1]),
            _Moments(count, u_stats[0], u_stats[1]))


def simulate(profiles: EquilibriumProfiles, params: MarketParams,
             config: SimulationConfig) -> SimulationStats:
    """Simulate ``config.n_paths`` equilibrium paths and collect statistics."""
    params.require_positive_cost("simulate")
    if profiles.grid != config.grid:
        raise ParameterError("grid", f"profiles grid {profiles.grid} differs from config grid {config.grid}")
    if abs(config.grid.T - params.T) > 1e-12 * params.T:
        raise ParameterError("grid", f"grid horizon {config.grid.T!r} differs from T={params.T!r}")
    beta = np.ascontiguousarray(profiles.beta, dtype=float)
    lam = np.ascontiguousarray(profiles.lam, dtype=float)
    if not (np.all(np.isfinite(beta[:-1])) and np.all(np.isfinite(lam))):
        raise ParameterError("profiles", "beta and lambda must be finite on the simulated nodes")
    impl = kernels.get_backend(config.backend)
    n, m = config.n_paths, beta.shape[0]
    sigma = 0.0 if config.zero_noise else params.sigma
    fixed_v = float(config.v) if config.conditioning == "fixed-v" else math.nan
    store = None
    if config.store_paths:
        store = {"V": np.empty(n)}
        for name in ("P", "X", "Y", "Z", "W"):
            store[name] = np.empty((n, m))
    starts = range(0, n, config.chunk_size)
    seed = int(config.seed)

    def job(start):
        return _run_chunk(impl, beta, lam, params, sigma, config.grid.dt, seed, start,
                          min(config.chunk_size, n - start), fixed_v, store)

    if config.n_workers == 1:
        parts = [job(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            parts = list(pool.map(job, starts))
    acc = list(parts[0])
    for part in parts[1:]:
        acc = [a.merge(b) for a, b in zip(acc, part)]
    p_mom, d_mom, w_mom, u_mom = acc
    paths = None
    if store is not None:
        paths = PathRecord(config.grid.nodes, store["V"], store["P"], store["X"], store["Y"],
                           store["Z"], store["W"])
    w = w_mom.mean_estimate()
    u = u_mom.mean_estimate() if params.A > 0.0 else None
    return SimulationStats(
        t=config.grid.nodes, n_paths=n, conditioning=config.conditioning, seed=seed,
        mean_P=p_mom.mean_estimate(), mean_v_minus_P=d_mom.mean_estimate(),
        var_v_minus_P=d_mom.var_estimate(),
        mean_wealth=Estimate(float(w.value), float(w.se)),
        mean_utility=None if u is None else Estimate(float(u.value), float(u.se)),
        paths=paths)


def _zscores(diff, se):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0.0, diff / np.where(se > 0.0, se, 1.0),
                     np.where(diff == 0.0, 0.0, np.copysign(np.inf, diff)))
    return z


@dataclass(frozen=True, eq=False)
class EfficiencyReport:
    t: np.ndarray
    Sigma_theory: np.ndarray
    Sigma_empirical: np.ndarray
    se: np.ndarray
    z: np.ndarray
    flagged: np.ndarray

    @property
    def frac_flagged(self) -> float:
        return float(np.mean(self.flagged))


@dataclass(frozen=True, eq=False)
class MartingaleReport:
    t: np.ndarray
    mean_dev: np.ndarray
    se: np.ndarray
    z: np.ndarray
    flagged: np.ndarray

    @property
    def frac_flagged(self) -> float:
        return float(np.mean(self.flagged))


def _require_random_v(stats):
    if stats.conditioning != "random-v":
        raise ParameterError("conditioning", "report needs a random-v simulation")


def efficiency_report(stats: SimulationStats, profiles: EquilibriumProfiles) -> EfficiencyReport:
    """Empirical variance of ``v - P_t`` against the filter variance ``Sigma(t)``."""
    _require_random_v(stats)
    emp, se = stats.var_v_minus_P
    theory = np.asarray(profiles.Sigma, dtype=float)
    z = _zscores(emp - theory, se)
    return EfficiencyReport(stats.t, theory, emp, se, z, np.abs(z) > FLAG_Z)


def martingale_report(stats: SimulationStats, v0: float = 0.0) -> MartingaleReport:
    """Mean of ``P_t - v0`` per node; the efficient price has mean ``v0`` throughout."""
    _require_random_v(stats)
    mean, se = stats.mean_P
    dev = mean - v0
    z = _zscores(dev, se)
    return MartingaleReport(stats.t, dev, se, z, np.abs(z) > FLAG_Z)
