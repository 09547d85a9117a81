"""Command line entry point: ``regime-insurance {solve,simulate,analyze,reproduce}``.

Results go to stdout with fixed formatting, log records to stderr. Exit
status is 0 on success, 1 for usage and validation errors, 2 when a
solver fails and 3 when output files cannot be written.
"""

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from sphinx.errors import ExtensionError

from ._version import __version__
from .errors import RegimeInsuranceError, SolverError, ValidationError
from .utils import format_number, format_row

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 is reserved for solver failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def float_list(text: str) -> List[float]:
    """Comma separated numbers, e.g. ``0.1,0.2,0.5``."""
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_model_flags(parser):
    parser.add_argument(
        "--config",
        required=True,
        metavar="FILE",
        help="JSON model document (regimes, generator, delta, loss, utility)",
    )
    parser.add_argument(
        "--delta", type=positive_float, help="override the discount rate of the model document"
    )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="regime-insurance",
        description="Optimal consumption, investment and insurance under regime switching.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log solver progress to stderr"
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    solve = commands.add_parser(
        "solve", help="print coefficients, policies and HJB residuals per regime"
    )
    _add_model_flags(solve)
    solve.add_argument(
        "--constrained", action="store_true", help="solve the problem without insurance"
    )
    solve.add_argument(
        "--x", type=positive_float, default=1.0, help="wealth for the HJB residuals (default 1)"
    )
    solve.set_defaults(handler=run_solve)

    simulate = commands.add_parser(
        "simulate", help="Monte Carlo value of the optimal policy against the closed form"
    )
    _add_model_flags(simulate)
    simulate.add_argument("--x0", type=positive_float, default=1.0, help="initial wealth")
    simulate.add_argument(
        "--regime", type=positive_int, default=1, help="initial regime, counted from 1"
    )
    simulate.add_argument("--paths", type=positive_int, default=100_000, help="number of paths")
    simulate.add_argument(
        "--horizon", type=positive_float, default=200.0, help="truncation horizon in years"
    )
    simulate.add_argument("--dt", type=positive_float, default=1.0 / 500.0, help="time step")
    simulate.add_argument("--seed", type=int, default=0, help="master seed")
    simulate.add_argument(
        "--perturb-pi",
        type=float,
        default=0.0,
        metavar="F",
        help="scale the investment fraction by 1+F",
    )
    simulate.add_argument(
        "--perturb-kappa",
        type=float,
        default=0.0,
        metavar="F",
        help="scale the consumption ratio by 1+F",
    )
    simulate.add_argument(
        "--constrained", action="store_true", help="simulate the policy without insurance"
    )
    simulate.add_argument(
        "--no-antithetic", action="store_true", help="draw every path independently"
    )
    simulate.add_argument(
        "--workers", type=positive_int, default=1, help="parallel block workers"
    )
    simulate.set_defaults(handler=run_simulate)

    analyze = commands.add_parser("analyze", help="write an analysis grid as CSV")
    analyses = analyze.add_subparsers(dest="analysis", metavar="ANALYSIS")
    analyses.required = True

    gap = analyses.add_parser("gap", help="value of insurance access v - v1 per regime")
    gap.add_argument("--x", type=positive_float, default=1.0, help="wealth (default 1)")
    ratio = analyses.add_parser("ratio", help="increase ratio over constant loss fractions")
    ratio.add_argument(
        "--l", type=float_list, help="loss fractions (default 0.17 to 0.93 in steps of 0.01)"
    )
    sensitivity = analyses.add_parser(
        "sensitivity", help="indemnity derivatives in the loading and the exponent"
    )
    sensitivity.add_argument(
        "--theta", type=float_list, default=[0.1, 0.2, 0.5], help="premium loadings"
    )
    sensitivity.add_argument(
        "--alpha", type=float_list, default=[-2.0, -1.0, -0.5, 0.0, 0.5], help="exponents"
    )
    sensitivity.add_argument(
        "--regime", type=positive_int, default=1, help="regime supplying eta, counted from 1"
    )
    consumption = analyses.add_parser(
        "consumption", help="consumption ratios over power exponents"
    )
    consumption.add_argument(
        "--alpha", type=float_list, default=[-2.0, -1.0, -0.5, -0.1], help="exponents"
    )
    consumption.add_argument(
        "--l", type=float_list, default=[0.3, 0.5, 0.7], help="constant loss fractions"
    )
    lambda_upsilon = analyses.add_parser(
        "lambda-upsilon", help="insured minus uninsured loss term over loss intensities"
    )
    lambda_upsilon.add_argument(
        "--theta", type=float_list, default=[0.01, 0.1, 0.2, 0.5, 0.8, 0.99], help="loadings"
    )
    lambda_upsilon.add_argument(
        "--eta", type=float_list, help="loss intensities (default 50 points per loading)"
    )
    power_gap = analyses.add_parser("power-gap", help="positive power value gaps")
    power_gap.add_argument(
        "--alpha", type=float_list, help="exponents (default 0.05 to 0.8 in steps of 0.05)"
    )
    for sub in (gap, ratio, sensitivity, consumption, lambda_upsilon, power_gap):
        _add_model_flags(sub)
        sub.add_argument("--out", metavar="FILE.csv", help="CSV file (default: stdout)")
        sub.set_defaults(handler=run_analyze)

    reproduce = commands.add_parser("reproduce", help="regenerate the published table or figures")
    targets = reproduce.add_subparsers(dest="target", metavar="TARGET")
    targets.required = True
    table1 = targets.add_parser("table1", help="value gaps for the twelve published cells")
    table1.add_argument("--out", metavar="FILE.csv", help="CSV file (default: stdout)")
    table1.add_argument(
        "--all-insured", action="store_true", help="open insurance in both regimes"
    )
    table1.set_defaults(handler=run_reproduce)
    figures = targets.add_parser("figures", help="CSV data behind the five figures")
    figures.add_argument("--out", metavar="DIR", required=True, help="output directory")
    figures.add_argument(
        "--no-notebook", action="store_true", help="skip the plotting notebook and script"
    )
    figures.set_defaults(handler=run_reproduce)
    return parser


def _model(args):
    from .config import load_config

    model, utility = load_config(args.config)
    if args.delta is not None:
        model = model.with_delta(args.delta)
    return model, utility


def _emit(frame: pd.DataFrame, out: Optional[str], stdout) -> None:
    if out is None:
        stdout.write(frame.to_csv(float_format="%.10g", index=False, lineterminator="\n"))
        return
    from . import logger
    from .analysis import write_csv

    path = write_csv(frame, out)
    logger.info("[regime-insurance] wrote %s (%d rows)", path, len(frame))


def run_solve(args, stdout) -> None:
    from .policy import policy_bundle
    from .solvers import hjb_residual, solve

    model, utility = _model(args)
    coeffs = solve(model, utility, constrained=args.constrained)
    bundle = policy_bundle(model, coeffs)
    residuals = hjb_residual(model, utility, coeffs, args.x)

    stdout.write(f"utility,{utility.describe()}\n")
    stdout.write(f"constrained,{'yes' if args.constrained else 'no'}\n")
    stdout.write("regime,A,pi_star,kappa,nu,hjb_residual\n")
    for i in range(model.size):
        nu = float(bundle.nu[i]) if bundle.insured[i] else "-"
        row = (
            i + 1,
            float(coeffs.values[i]),
            float(bundle.pi_star[i]),
            float(bundle.kappa[i]),
            nu,
            float(residuals[i]),
        )
        stdout.write(format_row(row) + "\n")


def run_simulate(args, stdout) -> None:
    from .errors import InvalidParameter
    from .policy import policy_bundle
    from .simulate import SimulationConfig, analytic_value, estimate_value
    from .solvers import solve

    model, utility = _model(args)
    if args.regime > model.size:
        raise InvalidParameter("regime", args.regime, f"the model has {model.size} regimes")
    i0 = args.regime - 1
    config = SimulationConfig(
        paths=args.paths,
        horizon=args.horizon,
        dt=args.dt,
        master_seed=args.seed,
        antithetic=not args.no_antithetic,
        workers=args.workers,
    )
    coeffs = solve(model, utility, constrained=args.constrained)
    bundle = policy_bundle(model, coeffs)
    if args.perturb_pi or args.perturb_kappa:
        bundle = bundle.perturbed(1.0 + args.perturb_pi, 1.0 + args.perturb_kappa)

    estimate = estimate_value(model, bundle, args.x0, i0, config)
    analytic = analytic_value(model, coeffs, args.x0, i0)
    difference = estimate.mean - analytic
    z = difference / estimate.std_error if estimate.std_error > 0 else float("nan")
    for name, value in (
        ("estimate", estimate.mean),
        ("std_error", estimate.std_error),
        ("analytic", analytic),
        ("difference", difference),
        ("z_score", z),
        ("truncation_bound", estimate.truncation_bound),
    ):
        stdout.write(f"{name},{format_number(value) if np.isfinite(value) else 'nan'}\n")
    stdout.write(f"paths,{estimate.paths_used}\n")


def run_analyze(args, stdout) -> None:
    from . import analysis

    model, utility = _model(args)
    if args.analysis == "gap":
        report = analysis.value_gap(model, utility, x=args.x)
        frame = pd.DataFrame(
            {"regime": range(1, model.size + 1), "x": report.x, "gap": list(report.gaps)}
        )
    elif args.analysis == "ratio":
        grid = analysis.FIGURE3_LOSSES if args.l is None else args.l
        frame = analysis.increase_ratio_curve(model, grid)
    elif args.analysis == "sensitivity":
        from .errors import InvalidParameter

        if args.regime > model.size:
            raise InvalidParameter("regime", args.regime, f"the model has {model.size} regimes")
        frame = analysis.insurance_sensitivity(
            args.theta, args.alpha, model=model, regime=args.regime - 1
        )
    elif args.analysis == "consumption":
        frame = analysis.consumption_curves(model, args.alpha, args.l)
    elif args.analysis == "lambda-upsilon":
        frame = analysis.lambda_upsilon_curve(args.theta, args.eta, utility, model.loss)
    else:
        frame = analysis.power_gap_curves(model, args.alpha)
    _emit(frame, args.out, stdout)


def run_reproduce(args, stdout) -> None:
    from . import analysis

    if args.target == "table1":
        insured = (True, True) if args.all_insured else analysis.PUBLISHED_INSURED
        frame = analysis.table_frame(analysis.reproduce_table1(insured=insured))
        _emit(frame, args.out, stdout)
    else:
        for path in analysis.reproduce_figures(args.out, notebook=not args.no_notebook):
            stdout.write(f"{path}\n")


def _log_handler(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    handler.setLevel(logging.INFO if verbose else logging.WARNING)
    return handler


def main(argv: Optional[List[str]] = None, stdout=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stdout = stdout or sys.stdout

    from . import logger

    handler = _log_handler(args.verbose)
    level = logger.logger.level
    logger.logger.addHandler(handler)
    if args.verbose:
        logger.logger.setLevel(logging.INFO)
    try:
        args.handler(args, stdout)
    except ValidationError as err:
        sys.stderr.write(f"regime-insurance: {err.category}: {err}\n")
        return EXIT_VALIDATION
    except SolverError as err:
        sys.stderr.write(f"regime-insurance: {err.category}: {err}\n")
        return EXIT_SOLVER
    except RegimeInsuranceError as err:
        sys.stderr.write(f"regime-insurance: {err}\n")
        return EXIT_SOLVER
    except (ExtensionError, OSError) as err:
        sys.stderr.write(f"regime-insurance: cannot write output: {err}\n")
        return EXIT_IO
    finally:
        logger.logger.removeHandler(handler)
        logger.logger.setLevel(level)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
