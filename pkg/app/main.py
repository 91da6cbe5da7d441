"""
homgeo - homogeneous geodesics on homogeneous (α,β)-spaces
Command-line entry point
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.cli import commands
from app.cli.instance import file_digest
from app.cli.schemas import Report, render_json
from app.core.config import settings
from app.core.exceptions import EXIT_OK, EXIT_VALIDATION, HomGeoError

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None, log_file: Optional[Path] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = log_file or settings.LOG_FILE
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _vector(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated vector, got {text!r}")


VECTOR_FLAGS = ("--y",)


def _attach_vectors(argv: List[str]) -> List[str]:
    """Glue "--y -1,0,0" into "--y=-1,0,0" so argparse does not read the value as a flag"""
    out: List[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in VECTOR_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{arg}={argv[i + 1]}")
            i += 2
            continue
        out.append(arg)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homgeo", description="Homogeneous geodesics of invariant (α,β)-metrics")
    parser.add_argument("--tol", type=float, help="residual tolerance")
    parser.add_argument("--seed", type=int, help="search seed (default 0)")
    parser.add_argument("--samples", type=int, help="sphere samples for the search")
    parser.add_argument("--workers", type=int, help="polishing threads")
    parser.add_argument("--output", type=Path, help="write the report here instead of stdout")
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.add_argument("--log-level", help="logging level (default from settings)")
    parser.add_argument("--timings", action="store_true", help="include timings in the report")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance", type=Path)

    p = sub.add_parser("check", help="evaluate the geodesic criterion at one vector")
    p.add_argument("instance", type=Path)
    p.add_argument("--y", type=_vector, required=True, help="candidate in g-coordinates")

    p = sub.add_parser("find", help="search for geodesic axes")
    p.add_argument("instance", type=Path)

    p = sub.add_parser("exist", help="construct an existence certificate (Kropina)")
    p.add_argument("instance", type=Path)
    p.add_argument("--csv", type=Path, help="where to write the M(t) curve")

    p = sub.add_parser("classify3d", help="3D non-unimodular axis classification")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--metric", choices=["riemannian", "randers"], default="riemannian")
    p.add_argument("--x", type=float, help="Randers drift X = x e1")

    p = sub.add_parser("mcurve", help="tabulate M(t) = F(Y(t)) - 2")
    p.add_argument("instance", type=Path)
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--points", type=int, default=201)
    return parser


def _arguments(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"output", "log_level", "timings", "workers"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def dispatch(args: argparse.Namespace):
    if args.command == "validate":
        return commands.cmd_validate(args.instance)
    if args.command == "check":
        return commands.cmd_check(args.instance, args.y, args.tol)
    if args.command == "find":
        return commands.cmd_find(args.instance, args.samples, args.seed, args.tol, args.workers)
    if args.command == "exist":
        csv_path = args.csv
        if csv_path is None and args.output is not None:
            csv_path = args.output.with_suffix(".csv")
        return commands.cmd_exist(args.instance, csv_path, args.tol)
    if args.command == "classify3d":
        return commands.cmd_classify3d(args.alpha, args.beta, args.gamma, args.delta,
                                       args.metric, args.x, args.samples, args.seed,
                                       args.tol, args.workers)
    if args.command == "mcurve":
        frame, code = commands.cmd_mcurve(args.instance, args.t_min, args.t_max, args.points)
        if args.format == "csv":
            return commands.write_csv(frame), code
        return {"rows": frame.to_dict(orient="records")}, code
    raise ValueError(f"unknown command {args.command}")


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text, encoding="utf-8", newline="")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_vectors(argv))
    configure_logging(args.log_level)

    digest = None
    instance = getattr(args, "instance", None)
    if instance is not None and Path(instance).is_file():
        digest = file_digest(Path(instance).read_bytes())

    started = time.perf_counter()
    logger.info("COMMAND START [%s] digest=%s", args.command, digest)
    report = Report(command=args.command, arguments=_arguments(args), input_digest=digest)
    text = None
    try:
        results, code = dispatch(args)
        if isinstance(results, str):
            text = results
        else:
            report.results = results
            report.status = "ok" if code == EXIT_OK else "failed"
    except HomGeoError as e:
        code = e.exit_code
        report.status = "error"
        report.error = e.to_dict()
        logger.error("%s failed: %s: %s", args.command, type(e).__name__, e.detail)
    except OSError as e:
        code = EXIT_VALIDATION
        report.status = "error"
        report.error = {"type": "IOError", "detail": str(e)}
        logger.error("%s failed: %s", args.command, e)

    elapsed = time.perf_counter() - started
    report.exit_code = code
    if args.timings:
        report.timings = {"elapsed_seconds": elapsed}
    if text is None:
        text = render_json(report)
    _emit(text, args.output)

    status = "SUCCESS" if code == EXIT_OK else "ERROR"
    logger.info("%s COMMAND END [%s] exit=%d - %.3fs", status, args.command, code, elapsed)
    return code


if __name__ == "__main__":
    sys.exit(main())
