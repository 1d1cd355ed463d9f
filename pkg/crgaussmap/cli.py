import argparse
import logging
import os
import sys
from typing import List, Optional

import yaml

from crgaussmap.common import ENV_PREFIX, CatalogName, ExitCode, MapModel, MapValidationError, NumericalFailure
from crgaussmap.common import SamplingFailure
from crgaussmap.cr_models import catalog
from crgaussmap.harness import AnalysisConfig, analyze, verify_theorem
from crgaussmap.map_io import load_map, map_to_dict, save_map, save_report
from crgaussmap.utils import FractionUtils, LoggingUtils

LOG = logging.getLogger(__name__)

LOG_LEVEL_ENV = f"{ENV_PREFIX}LOG_LEVEL"
DEFAULT_LOG_LEVEL = "INFO"


def _config_from_args(args) -> AnalysisConfig:
    return AnalysisConfig.resolve(
        args.config,
        samples=getattr(args, "samples", None),
        seed=getattr(args, "seed", None),
        precision=getattr(args, "precision", None),
        order=getattr(args, "order", None),
    )


def cmd_analyze(args) -> ExitCode:
    cfg = _config_from_args(args)
    result = analyze(load_map(args.map), cfg)
    report = result.to_report()
    if args.out:
        save_report(report, args.out)
    else:
        LOG.info("Report:\n%s", yaml.safe_dump(report, sort_keys=True))
    return result.exit_code


def cmd_catalog(args) -> ExitCode:
    theta = FractionUtils.parse_theta(args.theta) if args.theta else None
    F = catalog(CatalogName(args.name), args.n, args.N, theta=theta, model=MapModel.from_str(args.model))
    if args.out:
        save_map(F, args.out)
    else:
        LOG.info("Map %s:\n%s", F.name, yaml.safe_dump(map_to_dict(F), sort_keys=False))
    return ExitCode.OK


def cmd_verify_theorem(args) -> ExitCode:
    cfg = _config_from_args(args)
    results = verify_theorem(load_map(args.map), cfg, args.conjugations)
    for result in results:
        LOG.info("%s: %s", result.F.name, result.verdict.describe())
    if any(r.exit_code == ExitCode.INCONSISTENT for r in results):
        return ExitCode.INCONSISTENT
    return ExitCode.OK


def _add_analysis_flags(parser):
    parser.add_argument("map", help="Path of the map JSON file")
    parser.add_argument("--samples", type=int, help="Number of random sample points")
    parser.add_argument("--seed", type=int, help="Seed of the point sampler")
    parser.add_argument("--precision", type=int, help="Working precision of the floating steps, in bits")
    parser.add_argument("--order", type=int, help="Weighted jet order of the normalization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crgaussmap", description="Gauss map degeneracy of rational CR maps")
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help=f"Logging level (env: {LOG_LEVEL_ENV})",
    )
    parser.add_argument("--config", help="YAML file with analysis config overrides")
    subparsers = parser.add_subparsers(dest="command", required=True)

    analyze_parser = subparsers.add_parser("analyze", help="Analyze a map and report the verdict")
    _add_analysis_flags(analyze_parser)
    analyze_parser.add_argument("--out", help="Write the JSON report to this path")
    analyze_parser.set_defaults(func=cmd_analyze)

    catalog_parser = subparsers.add_parser("catalog", help="Generate a catalog map")
    catalog_parser.add_argument("name", choices=[c.value for c in CatalogName])
    catalog_parser.add_argument("--n", type=int, default=3, help="Source dimension")
    catalog_parser.add_argument("--N", type=int, help="Target dimension (linear only)")
    catalog_parser.add_argument("--theta", help="Exact (cos, sin) pair as 'p/q,r/s' (dangelo only)")
    catalog_parser.add_argument(
        "--model", default=MapModel.HEISENBERG.model_name, choices=[m.model_name for m in MapModel]
    )
    catalog_parser.add_argument("--out", help="Write the map JSON to this path")
    catalog_parser.set_defaults(func=cmd_catalog)

    verify_parser = subparsers.add_parser("verify-theorem", help="Check the degeneracy verdict of a map")
    _add_analysis_flags(verify_parser)
    verify_parser.add_argument(
        "--conjugations", type=int, default=0, help="Also check this many random automorphism conjugates"
    )
    verify_parser.set_defaults(func=cmd_verify_theorem)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    LoggingUtils.ensure_trace_level()
    logging.basicConfig(stream=sys.stdout, level=args.log_level)
    try:
        exit_code = args.func(args)
    except (MapValidationError, ValueError, OSError, yaml.YAMLError):
        LOG.exception("Invalid input")
        exit_code = ExitCode.INPUT_ERROR
    except (NumericalFailure, SamplingFailure):
        LOG.exception("Analysis could not be completed")
        exit_code = ExitCode.NUMERICAL_FAILURE
    LOG.info("Exiting with code %d (%s)", exit_code.code, exit_code.description)
    return exit_code.code


if __name__ == "__main__":
    sys.exit(main())
