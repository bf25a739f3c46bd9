"""Command-line front end: every solver and the simulator, written out as CSV.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .csvio import emit_csv, format_value, profile_columns, rows_to_columns
from .errors import NumericalError, ParameterError
from .fbode import (DEFAULT_STEPS, LIMIT_WINDOW, TimeGrid, limit_check, riccati_residual,
                    solve_equilibrium)
from .params import MarketParams
from .simulator import (DEFAULT_CHUNK, SimulationConfig, efficiency_report, martingale_report,
                        simulate)
from .single_auction import (DEFAULT_TOL, approx_equilibrium, solve_single_auction,
                             sweep_monotonicity)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

FIG1_PAIRS = "1:0.05,1:0.1,0.5:0.1"
FIG2_C = "0.1,0.3,0.5"
FIG3_A = "0,1,2"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose errors raise instead of exiting, so ``run`` owns the exit code."""

    def error(self, message):
        raise ParameterError("argv", message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.split(","):
        a, sep, c = item.partition(":")
        try:
            out.append((float(a), float(c)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected A:c pairs, got {item!r}") from None
        if not sep:
            raise argparse.ArgumentTypeError(f"expected A:c pairs, got {item!r}")
    return out


def _add_params(p, **defaults):
    base = dict(A=0.0, c=0.0, sigma=1.0, Sigma0v=1.0, v0=0.0, T=1.0)
    base.update(defaults)
    for name, val in base.items():
        p.add_argument(f"--{name}", type=float, default=val, help=f"(default {val})")


def _add_out(p):
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout (default)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="insidertc", allow_abbrev=False,
                     description="Insider trading equilibria with transaction costs.")
    parser.add_argument("--version", action="version", version=f"insidertc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("single", allow_abbrev=False, help="exact one-shot equilibrium")
    _add_params(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    _add_out(p)

    p = sub.add_parser("approx", allow_abbrev=False, help="small-friction approximation vs exact")
    _add_params(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    _add_out(p)

    p = sub.add_parser("sweep", allow_abbrev=False, help="monotonicity sweep over an (A, c) grid")
    _add_params(p)
    p.add_argument("--grid-c", type=_floats, default=_floats("0,0.125,0.25,0.375,0.5"))
    p.add_argument("--grid-A", type=_floats, default=_floats("0,0.5,1,1.5,2"))
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    _add_out(p)

    p = sub.add_parser("continuous", allow_abbrev=False, help="continuous-time equilibrium profiles")
    _add_params(p, A=1.0, c=0.2, Sigma0v=0.5)
    p.add_argument("--n-steps", type=int, default=DEFAULT_STEPS)
    _add_out(p)

    p = sub.add_parser("limits", allow_abbrev=False, help="gaps to the frictionless limit")
    _add_params(p, A=1.0, Sigma0v=0.5)
    p.add_argument("--c-sequence", type=_floats, default=_floats("0.1,0.05,0.025,0.0125"))
    p.add_argument("--c-large", type=float, default=100.0)
    p.add_argument("--window", type=float, default=LIMIT_WINDOW)
    p.add_argument("--n-steps", type=int, default=DEFAULT_STEPS)
    _add_out(p)

    p = sub.add_parser("simulate", allow_abbrev=False, help="Monte Carlo of the equilibrium market")
    _add_params(p, A=1.0, c=0.2, Sigma0v=0.5)
    p.add_argument("--n-paths", type=int, default=100000)
    p.add_argument("--n-steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--conditioning", choices=("random-v", "fixed-v"), default="random-v")
    p.add_argument("--v", type=float, default=None, help="realized value for fixed-v runs")
    p.add_argument("--zero-noise", action="store_true", help="set sigma to 0 in the dynamics only")
    p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK)
    p.add_argument("--workers", type=int, default=1)
    _add_out(p)

    p = sub.add_parser("figures", allow_abbrev=False, help="data behind the three figures")
    p.add_argument("--which", choices=("1", "2", "3", "all"), default="all")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--fig1-pairs", type=_pairs, default=_pairs(FIG1_PAIRS),
                   help=f"A:c pairs scaled by theta (default {FIG1_PAIRS})")
    p.add_argument("--theta-points", type=int, default=100)
    p.add_argument("--fig2-c", type=_floats, default=_floats(FIG2_C))
    p.add_argument("--fig3-A", type=_floats, default=_floats(FIG3_A))
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--n-steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    return parser


def _params(args) -> MarketParams:
    return MarketParams(A=args.A, c=args.c, sigma=args.sigma, Sigma0v=args.Sigma0v,
                        v0=args.v0, T=args.T)


# where the output goes does not change what is in it
_DESTINATION_KEYS = ("out", "out_dir")


def _header(args, **extra) -> dict:
    head = {"tool": f"insidertc {__version__}", "backend": kernels.BACKEND}
    for key, val in sorted(vars(args).items()):
        if key in _DESTINATION_KEYS:
            continue
        if isinstance(val, list):
            val = ",".join(":".join(format_value(x) for x in v) if isinstance(v, tuple)
                           else format_value(v) for v in val)
        head[key] = val
    head.update(extra)
    return head


def _cmd_single(args):
    params = _params(args)
    eq = solve_single_auction(params, args.tol)
    cols = {"A": [params.A], "c": [params.c], "sigma": [params.sigma], "Sigma0v": [params.Sigma0v],
            "lambda": [eq.lam], "beta": [eq.beta], "residual_r": [eq.residual_r],
            "second_order_s": [eq.second_order_s], "nu": [eq.nu], "iterations": [eq.iterations]}
    emit_csv(cols, args.out, _header(args))


def _cmd_approx(args):
    params = _params(args)
    exact = solve_single_auction(params, args.tol)
    appr = approx_equilibrium(params)
    cols = {"A": [params.A], "c": [params.c], "nu": [appr.nu],
            "lambda_exact": [exact.lam], "lambda_approx": [appr.lam],
            "beta_exact": [exact.beta], "beta_approx": [appr.beta],
            "lambda_gap": [abs(exact.lam - appr.lam)], "beta_gap": [abs(exact.beta - appr.beta)]}
    emit_csv(cols, args.out, _header(args))


def _cmd_sweep(args):
    rows = sweep_monotonicity(_params(args), args.grid_c, args.grid_A, args.tol)
    cols = rows_to_columns(rows, ("c", "A", "lambda", "beta"))
    emit_csv(cols, args.out, _header(args, monotone="true"))


def _cmd_continuous(args):
    params = _params(args)
    prof = solve_equilibrium(params, TimeGrid(params.T, args.n_steps))
    extra = {"branch": prof.branch, "gamma": float(prof.gamma), "k": float(prof.k)}
    if prof.shooting is not None:
        extra["k_scaled"] = float(prof.shooting.k_scaled)
        extra["shooting_residual"] = float(prof.shooting.relative_residual)
    if params.c > 0.0:
        extra["riccati_residual"] = float(riccati_residual(prof, params))
    emit_csv(profile_columns(prof), args.out, _header(args, **extra))


def _cmd_limits(args):
    params = _params(args)
    table = limit_check(params, TimeGrid(params.T, args.n_steps), args.c_sequence,
                        args.c_large, args.window)
    cols = rows_to_columns(table.rows, ("c", "gap_beta", "gap_lambda"))
    extra = {"monotone_beta": table.monotone_beta, "monotone_lambda": table.monotone_lambda,
             "sup_beta_c_large": float(table.sup_beta_large),
             "sup_lambda_c_large": float(table.sup_lambda_large)}
    emit_csv(cols, args.out, _header(args, **extra))


def _cmd_simulate(args):
    params = _params(args)
    grid = TimeGrid(params.T, args.n_steps)
    prof = solve_equilibrium(params, grid)
    config = SimulationConfig(n_paths=args.n_paths, grid=grid, seed=args.seed,
                              conditioning=args.conditioning, v=args.v,
                              zero_noise=args.zero_noise, chunk_size=args.chunk_size,
                              n_workers=args.workers)
    stats = simulate(prof, params, config)
    var, var_se = stats.var_v_minus_P
    mean, mean_se = stats.mean_P
    cols = {"t": stats.t, "Sigma_theory": prof.Sigma, "var_v_minus_P": var, "se_var": var_se,
            "mean_P_minus_v0": mean - params.v0, "se_mean_P": mean_se}
    extra = {"mean_wealth": float(stats.mean_wealth.value), "se_wealth": float(stats.mean_wealth.se)}
    if stats.mean_utility is not None:
        extra["mean_utility"] = float(stats.mean_utility.value)
        extra["se_utility"] = float(stats.mean_utility.se)
    if config.conditioning == "random-v":
        eff = efficiency_report(stats, prof)
        mart = martingale_report(stats, params.v0)
        cols["z_var"] = eff.z
        cols["z_mean"] = mart.z
        extra["frac_flagged_var"] = float(eff.frac_flagged)
        extra["frac_flagged_mean"] = float(mart.frac_flagged)
    emit_csv(cols, args.out, _header(args, **extra))


def _figure1(args, out_dir):
    thetas = np.arange(1, args.theta_points + 1) / args.theta_points
    lam_cols = {"A": [], "c": [], "theta": [], "exact": [], "approx": []}
    beta_cols = {k: [] for k in lam_cols}
    for A, c in args.fig1_pairs:
        for th in thetas:
            params = MarketParams(A=A * th, c=c * th, sigma=1.0, Sigma0v=1.0)
            exact = solve_single_auction(params, args.tol)
            appr = approx_equilibrium(params)
            for cols, e, a in ((lam_cols, exact.lam, appr.lam), (beta_cols, exact.beta, appr.beta)):
                cols["A"].append(A)
                cols["c"].append(c)
                cols["theta"].append(float(th))
                cols["exact"].append(e)
                cols["approx"].append(a)
    head = _header(args, figure=1, sigma=1.0, Sigma0v=1.0)
    return [emit_csv(lam_cols, out_dir / "fig1_lambda.csv", head),
            emit_csv(beta_cols, out_dir / "fig1_beta.csv", head)]


def _profile_family(args, out_dir, key, values, base, fname, figure):
    grid = TimeGrid(args.T, args.n_steps)
    cols = {key: [], "t": [], "beta": [], "lambda": [], "Sigma": []}
    for val in values:
        prof = solve_equilibrium(base.replace(**{key: val}), grid)
        cols[key].extend([val] * prof.t.size)
        cols["t"].extend(prof.t)
        cols["beta"].extend(prof.beta)
        cols["lambda"].extend(prof.lam)
        cols["Sigma"].extend(prof.Sigma)
    fixed = {k: v for k, v in vars(base).items() if k != key}
    return [emit_csv(cols, out_dir / fname, _header(args, figure=figure, **fixed))]


def _cmd_figures(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if args.which in ("1", "all"):
        written += _figure1(args, out_dir)
    if args.which in ("2", "all"):
        base = MarketParams(A=1.0, c=0.1, sigma=1.0, Sigma0v=0.5, T=args.T)
        written += _profile_family(args, out_dir, "c", args.fig2_c, base, "fig2.csv", 2)
    if args.which in ("3", "all"):
        base = MarketParams(A=0.0, c=0.2, sigma=1.0, Sigma0v=0.5, T=args.T)
        written += _profile_family(args, out_dir, "A", args.fig3_A, base, "fig3.csv", 3)
    for path in written:
        print(path)


COMMANDS = {"single": _cmd_single, "approx": _cmd_approx, "sweep": _cmd_sweep,
            "continuous": _cmd_continuous, "limits": _cmd_limits, "simulate": _cmd_simulate,
            "figures": _cmd_figures}


def run(argv=None) -> int:
    """Parse ``argv``, run the command, and return the exit code."""
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"insidertc: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"insidertc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"insidertc: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
