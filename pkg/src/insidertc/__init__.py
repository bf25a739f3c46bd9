"""Kyle-type insider trading with a temporary price-impact cost.

Single-auction equilibrium, its small-cost expansion, the continuous-time
equilibrium via a forward-backward ODE, and a Monte Carlo market simulator.
"""
__version__ = "0.1.0"

from .errors import (BracketError, IntegrationError, MonotonicityError, NumericalError,
                     ParameterError, ShootingError, SingularityError)
from .params import MarketParams, ReferenceConstants, derive_constants
from .single_auction import (SingleAuctionEquilibrium, SweepRow, approx_equilibrium, poly_q,
                             poly_r, solve_single_auction, sweep_monotonicity)
from .expansion import ExpansionCoefficients, expansion_coefficients, system_residuals
from .fbode import (EquilibriumProfiles, LimitTable, ShootingResult, TimeGrid, fbode_rhs,
                    integrate_x1, limit_check, limit_profiles_c0, rho_manifold,
                    riccati_residual, shoot_k, solve_equilibrium, value_function)
from .simulator import (PathRecord, SimulationConfig, SimulationStats, efficiency_report,
                        martingale_report, simulate)
from .kernels import BACKEND

__all__ = [name for name in dir() if not name.startswith("_")]
