import argparse
import logging
import sys

from pydantic import ValidationError

from lusin.catalog import MAP_CATALOG, SPACE_CATALOG, resolve
from lusin.config import settings
from lusin.errors import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_VIOLATION,
    ConfigError,
    DescriptorError,
    DomainError,
    LusinError,
    ParameterError,
)
from lusin.reporting import RUNNERS, RunConfig, emit_report, run_report


logger = logging.getLogger("lusin")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lusin",
        description="One-point compactification metrics and stratification of continuous bijections",
    )
    targets = ", ".join(sorted(SPACE_CATALOG) + sorted(MAP_CATALOG))
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("target", help=f"catalog name ({targets}) or path to a JSON descriptor")
    shared.add_argument("--seed", type=int, help=f"64-bit sampler seed (default {settings.seed})")
    shared.add_argument("--samples", type=int, help=f"domain sample count (default {settings.samples})")
    shared.add_argument("--tol", type=float, help=f"cluster and membership tolerance (default {settings.tolerance})")
    shared.add_argument("--eps", type=_float_list, help="comma-separated net radii, e.g. 0.5,0.1,0.02")
    shared.add_argument("--depth", type=int, help=f"stratification depth cap (default {settings.depth})")
    shared.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    shared.add_argument("--out", help="write the report here instead of stdout")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("verify", parents=[shared], help="run the metric and compactification suites")
    compactify = commands.add_parser("compactify", parents=[shared], help="print g, h and delta at given points")
    compactify.add_argument("points", nargs="*", type=_float_list, help="points as x or x,y")
    commands.add_parser("stratify", parents=[shared], help="stratify a catalog or descriptor map")
    report = commands.add_parser("report", parents=[shared], help="every suite, plus the certificate")
    report.add_argument("--archive", help="SQLAlchemy URL of the run archive (default: settings archive_url)")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_settings(
        args.command,
        args.target,
        seed=args.seed,
        samples=args.samples,
        tolerance=args.tol,
        epsilons=args.eps,
        depth=args.depth,
        output_format=args.format,
        output_path=args.out,
        points=getattr(args, "points", None) or None,
    )


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    try:
        config = _config(args)
        resolve(config.target)
    except ValidationError as exc:
        print(f"invalid run configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DescriptorError, DomainError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if config.command == "report" and args.archive:
            from lusin.database import session_factory

            with session_factory(args.archive)() as session:
                report = run_report(config, session=session)
        else:
            report = RUNNERS[config.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LusinError as exc:
        logger.error("%s %s failed: %s", config.command, config.target, exc)
        return EXIT_VIOLATION

    try:
        text = emit_report(report, config.output_format, config.output_path)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    if config.output_path is None:
        sys.stdout.write(text)

    return EXIT_VIOLATION if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
