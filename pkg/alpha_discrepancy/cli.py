"""Seeded, reproducible runs of the alpha-discrepancy estimators and experiments.

Exit codes: 0 on success, 1 on a numerical failure, 2 on a usage or input error.
"""

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel

from .discrepancy import (
    alpha_discrepancy,
    conformal_alpha_discrepancy,
    empirical_alpha_discrepancy_Rp,
    empirical_alpha_discrepancy_Rq,
    quadrature_cross_check,
)
from .exceptions import AlphaDiscrepancyError, DataParseError, UsageError, WeightsParseError
from .geometry import (
    LatentPrior,
    MetricField,
    SimilarityKernel,
    SmoothMap,
    builtin_map,
    builtin_metric,
    builtin_test_maps,
    load_mlp_weights,
)
from .models import (
    ConformalConfig,
    ConformalRunConfig,
    DiscrepancyRunConfig,
    EmbedRunConfig,
    GammaMode,
    LambdaSearch,
    OracleRunConfig,
    QuadratureGrid,
    Theorem6RunConfig,
    Variant,
)
from .neighbor_embedding import input_similarities, optimize_embedding, theorem6_experiment
from .reports import build_report, matrix_csv, render_json, theorem6_csv
from .validator import load_data_csv, validate_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


@contextlib.contextmanager
def _usage_errors() -> Iterator[None]:
    """Errors raised while resolving inputs are the caller's fault, not the numerics'."""
    try:
        yield
    except (UsageError, DataParseError, WeightsParseError):
        raise
    except AlphaDiscrepancyError as e:
        raise UsageError(str(e)) from e


def _config_values(args: argparse.Namespace, config_cls: Type[BaseModel]) -> Dict[str, Any]:
    values = vars(args)
    return {
        name: values[name]
        for name in config_cls.model_fields
        if name in values and values[name] is not None
    }


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {path}")


def _resolve_map(map_name: Optional[str], weights: Optional[str]) -> SmoothMap:
    if weights is not None:
        return load_mlp_weights(weights)
    assert map_name is not None
    return builtin_map(map_name)


def _resolve_prior(kind: str, dim: int, radius: float) -> LatentPrior:
    if kind == "ball":
        return LatentPrior.uniform_ball(dim, radius)
    return LatentPrior.gaussian([0.0] * dim, (radius**2) * np.eye(dim))


def _resolve_geometry(
    map_name: Optional[str], weights: Optional[str], metric: str, prior: str, radius: float
) -> Tuple[SmoothMap, MetricField, LatentPrior]:
    with _usage_errors():
        f = _resolve_map(map_name, weights)
        M = builtin_metric(metric, f.dim_out)
        return f, M, _resolve_prior(prior, f.dim_in, radius)


def cmd_discrepancy(args: argparse.Namespace) -> int:
    config = validate_run_config(DiscrepancyRunConfig, _config_values(args, DiscrepancyRunConfig))
    if config.variant != Variant.CLOSED_FORM and args.seed is None:
        raise UsageError("--seed is required for the empirical estimators")
    if config.variant == Variant.EMPIRICAL_R_EQ_Q and config.kernel == "student":
        raise UsageError("the empirical-rq variant samples the kernel and needs --kernel gaussian")
    f, M, prior = _resolve_geometry(
        config.map, config.weights, config.metric, config.prior, config.radius
    )
    kernel = SimilarityKernel(kind=config.kernel)

    common = dict(m=config.m, seed=config.seed, workers=config.workers)
    if config.variant == Variant.CLOSED_FORM:
        estimate = alpha_discrepancy(f, M, prior, config.alpha, kernel, **common)
    elif config.variant == Variant.EMPIRICAL_R_EQ_P:
        estimate = empirical_alpha_discrepancy_Rp(
            f, M, prior, config.alpha, kernel, n=config.n, **common
        )
    else:
        estimate = empirical_alpha_discrepancy_Rq(
            f, M, prior, config.alpha, kernel, n=config.n, **common
        )

    _emit(render_json(build_report(config, estimate.report())), args.output)
    print(
        f"{f.name} alpha={config.alpha:g} {config.variant.value}: "
        f"{estimate.value:.6f} +/- {estimate.std_error:.2g}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_conformal(args: argparse.Namespace) -> int:
    values = _config_values(args, ConformalRunConfig)
    if "bracket" in values:
        values["bracket"] = tuple(values["bracket"])
    config = validate_run_config(ConformalRunConfig, values)
    f, M, prior = _resolve_geometry(
        config.map, config.weights, config.metric, config.prior, config.radius
    )
    with _usage_errors():
        cfg = ConformalConfig(
            lambda_search=config.lambda_search, bracket=config.bracket, tol=config.tol
        )

    estimate = conformal_alpha_discrepancy(
        f, M, prior, config.alpha, m=config.m, cfg=cfg, seed=config.seed
    )
    _emit(render_json(build_report(config, estimate.report())), args.output)
    summary = estimate.lambda_summary
    assert summary is not None
    print(
        f"{f.name} alpha={config.alpha:g} conformal: {estimate.value:.6f}, "
        f"lambda* mean {summary.lambda_mean:.6g}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    config = validate_run_config(EmbedRunConfig, _config_values(args, EmbedRunConfig))
    if config.kernel not in ("gaussian", "student"):
        raise UsageError(f"unknown kernel {config.kernel!r}")
    X = load_data_csv(config.input)
    if not config.perplexity <= X.shape[0] - 1:
        raise UsageError(
            f"perplexity {config.perplexity} needs at least {config.perplexity + 1:g} points, "
            f"{config.input} has {X.shape[0]}"
        )
    kernel = SimilarityKernel(kind=config.kernel)
    gamma_mode = GammaMode.optimal() if config.gamma is None else GammaMode.fixed(config.gamma)

    P = input_similarities(X, config.perplexity)
    state = optimize_embedding(
        P,
        kernel=kernel,
        alpha=config.alpha,
        gamma_mode=gamma_mode,
        max_iter=config.max_iter,
        step=config.step,
        step_mode=config.step_mode,
        momentum=config.momentum,
        seed=config.seed,
        dim=config.dim,
    )
    _emit(matrix_csv(state.Y), config.output)
    if config.trace_output is not None:
        trace = {
            "cost_trace": state.cost_trace,
            "iterations": state.iteration,
            "rejected_steps": state.rejected_steps,
            "converged": state.converged,
            "final_cost": state.cost_trace[-1],
        }
        _emit(render_json(build_report(config, trace)), config.trace_output)
    print(
        f"embedded {X.shape[0]} points in {config.dim}D, final cost {state.cost_trace[-1]:.6f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_theorem6(args: argparse.Namespace) -> int:
    config = validate_run_config(Theorem6RunConfig, _config_values(args, Theorem6RunConfig))
    if not config.perplexity <= min(config.n_list) - 1:
        raise UsageError(
            f"perplexity {config.perplexity} is too large for n = {min(config.n_list)}"
        )
    f, M, _ = _resolve_geometry(config.map, None, config.metric, "ball", config.radius)
    report = theorem6_experiment(
        f, M, config.radius, config.perplexity, config.n_list, config.seed, config.seeds
    )
    header = "# config: " + json.dumps(config.model_dump(mode="json"))
    _emit(header + "\n" + theorem6_csv(report.rows), args.output)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    config = validate_run_config(OracleRunConfig, _config_values(args, OracleRunConfig))
    with _usage_errors():
        grid = QuadratureGrid.line(config.lower, config.upper, config.points)
    report = quadrature_cross_check(config.precisions, config.alphas, grid, config.tolerance)
    _emit(render_json(build_report(config, report.model_dump(mode="json"))), args.output)
    print(
        f"oracle: max deviation {report.max_deviation:.3e} "
        f"({'pass' if report.passed else 'FAIL'} at {config.tolerance:g})",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _add_map_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--map", help=f"Built-in map: {', '.join(sorted(builtin_test_maps()))}")
    source.add_argument("--weights", help="MLP weights file")
    parser.add_argument("--metric", default="euclidean", help="euclidean or isotropic:<c>")
    parser.add_argument("--prior", choices=["ball", "gaussian"], default="ball")
    parser.add_argument("--radius", type=float, default=3.0, help="Ball radius or Gaussian scale")
    parser.add_argument("--m", type=int, default=64, help="Reference points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpha-discrepancy", description=__doc__)
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (logs go to stderr)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discrepancy", help="Alpha-discrepancy of a map")
    _add_map_arguments(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--kernel", choices=["gaussian", "student"], default="gaussian")
    p.add_argument(
        "--variant",
        choices=[v.value for v in Variant if v != Variant.CONFORMAL],
        default=Variant.CLOSED_FORM.value,
    )
    p.add_argument("--n", type=int, default=1000, help="Neighbours per reference point")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", help="JSON report path (default stdout)")
    p.set_defaults(handler=cmd_discrepancy)

    p = sub.add_parser("conformal", help="Conformal alpha-discrepancy of a map")
    _add_map_arguments(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument(
        "--lambda-search",
        choices=[s.value for s in LambdaSearch],
        default=LambdaSearch.ANALYTIC_D1.value,
    )
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", help="JSON report path (default stdout)")
    p.set_defaults(handler=cmd_conformal)

    p = sub.add_parser("embed", help="Neighbour embedding of a CSV data matrix")
    p.add_argument("--input", required=True, help="CSV data, one point per row")
    p.add_argument("--output", help="CSV path for the embedding (default stdout)")
    p.add_argument("--trace-output", help="JSON path for the cost trace")
    p.add_argument("--perplexity", type=float, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--kernel", choices=["gaussian", "student"], default="student")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, help="Fixed gamma (omit for the optimal one)")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument(
        "--step-mode",
        choices=["adaptive", "fixed"],
        default="adaptive",
        help="Whether accepted steps may grow back after a halving",
    )
    p.add_argument("--momentum", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("theorem6", help="SNE cost against the closed-form discrepancy")
    p.add_argument("--map", required=True)
    p.add_argument("--metric", default="euclidean")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--perplexity", type=float, default=20.0)
    p.add_argument("--n-list", type=int, nargs="+", default=[128, 256, 512, 1024])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1, help="Run seeds seed .. seed+k-1")
    p.add_argument("--output", help="CSV report path (default stdout)")
    p.set_defaults(handler=cmd_theorem6)

    p = sub.add_parser("oracle", help="Closed form against quadrature on 1-D Gaussians")
    p.add_argument("--lower", type=float, default=-12.0)
    p.add_argument("--upper", type=float, default=12.0)
    p.add_argument("--points", type=int, default=8001)
    p.add_argument("--precisions", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0])
    p.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--output", help="JSON report path (default stdout)")
    p.set_defaults(handler=cmd_oracle)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return int(args.handler(args))
    except (UsageError, DataParseError, WeightsParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except AlphaDiscrepancyError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
