"""
Command line interface.

Exit status is 0 on success, 2 on bad arguments or input files and 3 when a
solver fails hard.
"""

import argparse
import json
import logging
import sys
import textwrap
from pathlib import Path
from typing import Any, Callable, List, Mapping, Optional, Sequence

import numpy as np

from lrsp import __version__
from lrsp.analysis import (
    RipProfile,
    SparcsRecursion,
    contraction_report,
    estimate_rip_profile,
    momentum_contraction,
)
from lrsp.bench import (
    REPORT_HEADER,
    BenchRowConverter,
    ObservationModelConverter,
    generate_instance,
    relative_error,
    run_completion_benchmark,
    run_rpca,
    stack_frames,
    unstack_frames,
)
from lrsp.converter import Converter, EnumConverter, ScalarListConverter, ShapeConverter
from lrsp.exc import ArgumentError, ConvergenceError, LRSError, ParseError, SolverError
from lrsp.io import (
    MatrixFormat,
    load_instance,
    read_matrix,
    save_instance,
    write_matrix,
    write_quantities,
    write_report,
    write_trace,
)
from lrsp.solvers import ProjectorKind, SolverConfig, SolverName, solve

__all__ = (
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_SOLVER",
    "get_parser",
    "main",
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3

PROG = "lrsp"

DEFAULT_BENCH_ROWS = (
    "200x400:5:0",
    "200x400:5:0.01",
    "200x400:10:0",
    "200x400:15:0",
)

_logger = logging.getLogger(__name__)


def _typed(converter: Converter, name: str) -> Callable[[str], Any]:
    """Adapt a converter to an argparse ``type``."""

    def convert(text: str) -> Any:
        return converter(text, {})

    convert.__name__ = name
    return convert


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Master seed (default: %(default)s)",
    )
    p.add_argument(
        "--eta",
        type=float,
        default=None,
        help="Stopping tolerance on the relative change of iterates",
    )
    p.add_argument(
        "--max-iters",
        dest="max_iters",
        type=int,
        default=None,
        help="Iteration cap",
    )
    p.add_argument(
        "--tau",
        type=float,
        default=None,
        help="Momentum of Matrix ALPS, also used by analyze",
    )
    p.add_argument(
        "--projector",
        type=_typed(EnumConverter(ProjectorKind), "projector"),
        default=None,
        help="Rank-k projector: exact or randomized",
    )
    p.add_argument(
        "--config",
        dest="config_file",
        default=None,
        help="JSON file of solver settings; explicit flags take precedence",
    )
    p.add_argument(
        "--out",
        "-o",
        default=None,
        help="Output directory",
    )
    p.add_argument(
        "--verbose",
        "-v",
        default=0,
        action="count",
        help="-v for progress, -vv for per-iteration logs",
    )


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--format",
        dest="fmt",
        type=_typed(EnumConverter(MatrixFormat), "format"),
        default=MatrixFormat.BIN,
        help="Matrix file format: bin or csv (default: %(default)s)",
    )


def _add_solver(p: argparse.ArgumentParser, default: SolverName) -> None:
    p.add_argument(
        "--solver",
        type=_typed(EnumConverter(SolverName), "solver"),
        default=default,
        help="sparcs or alps (default: %(default)s)",
    )


def get_parser() -> argparse.ArgumentParser:
    epilog = """
    Examples:

    $ lrsp generate --shape 200x400 --rank 5 --model mask:0.3 --out inst
    Draw a matrix completion instance and save it to inst/.

    $ lrsp solve --instance inst --solver alps --out result
    Recover the instance, writing L_hat, M_hat and trace.csv to result/.

    $ lrsp bench --reps 11 200x400:5:0 200x400:5:0.01
    Print the median report of both solvers over 11 instances per row.

    $ lrsp analyze --delta-4k 0.09 --delta-4s 0.095 --tau 0.25
    Print the stability verdict of the momentum recursion.
    """
    p = argparse.ArgumentParser(
        prog=PROG,
        description="Low-rank plus sparse recovery from linear measurements.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=textwrap.dedent(epilog),
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    # generate
    g = sub.add_parser("generate", help="Draw a synthetic instance")
    _add_common(g)
    _add_format(g)
    g.add_argument(
        "--shape",
        type=_typed(ShapeConverter(), "shape"),
        required=True,
        help="ROWSxCOLS, e.g. 200x400",
    )
    g.add_argument("--rank", "-k", type=int, required=True)
    g.add_argument("--sparsity", "-s", type=int, default=0)
    g.add_argument(
        "--model",
        type=_typed(ObservationModelConverter(), "model"),
        default="mask:0.3",
        help="mask:FRACTION, gaussian:P or identity (default: %(default)s)",
    )
    g.add_argument("--noise", dest="noise_norm", type=float, default=0.0, help="Noise norm")
    g.add_argument(
        "--sparse-scale",
        type=float,
        default=10.0,
        help="Gross entries relative to the largest low-rank entry (default: %(default)s)",
    )
    g.set_defaults(func=_cmd_generate)

    # solve
    s = sub.add_parser("solve", help="Recover a saved instance")
    _add_common(s)
    _add_format(s)
    _add_solver(s, SolverName.ALPS)
    s.add_argument("--instance", required=True, help="Instance directory")
    s.add_argument("--rank", "-k", type=int, default=None, help="Override the rank budget")
    s.add_argument("--sparsity", "-s", type=int, default=None, help="Override the sparsity")
    s.set_defaults(func=_cmd_solve)

    # bench
    b = sub.add_parser("bench", help="Monte-Carlo matrix completion benchmark")
    _add_common(b)
    b.add_argument(
        "rows",
        nargs="*",
        default=list(DEFAULT_BENCH_ROWS),
        help="Configurations MxN:K[:NOISE[:S]] (default: %s)" % " ".join(DEFAULT_BENCH_ROWS),
    )
    b.add_argument(
        "--solvers",
        type=_typed(ScalarListConverter(",", SolverName), "solvers"),
        default=[SolverName.SPARCS, SolverName.ALPS],
        help="Comma-separated solvers (default: sparcs,alps)",
    )
    b.add_argument("--reps", type=int, default=11, help="Repetitions (default: %(default)s)")
    b.add_argument(
        "--model",
        type=_typed(ObservationModelConverter(), "model"),
        default="mask:0.3",
        help="Observation model (default: %(default)s)",
    )
    b.add_argument(
        "--timings",
        action="store_true",
        default=False,
        help="Write median_secs (makes the report irreproducible)",
    )
    b.add_argument("--workers", type=int, default=None, help="Worker threads")
    b.set_defaults(func=_cmd_bench)

    # rpca
    r = sub.add_parser("rpca", help="Robust PCA of a completely observed matrix")
    _add_common(r)
    _add_format(r)
    _add_solver(r, SolverName.ALPS)
    source = r.add_mutually_exclusive_group(required=True)
    source.add_argument("--instance", help="Instance directory with an identity operator")
    source.add_argument("--matrix", help="Data matrix file")
    r.add_argument(
        "--frame-shape",
        type=_typed(ShapeConverter(), "frame_shape"),
        default=None,
        help="HxW: each row of --matrix is a flattened frame",
    )
    r.add_argument("--rank", "-k", type=int, required=True)
    r.add_argument("--sparsity", "-s", type=int, required=True)
    r.set_defaults(func=_cmd_rpca)

    # analyze
    a = sub.add_parser("analyze", help="Stability of the error recursions")
    _add_common(a)
    a.add_argument("--delta-4k", type=float, default=0.09)
    a.add_argument("--delta-4s", type=float, default=0.095)
    a.add_argument("--joint-3k3s", type=float, default=0.095)
    a.add_argument("--joint-3k4s", type=float, default=0.095)
    a.add_argument(
        "--instance",
        default=None,
        help="Estimate the RIP constants of this instance's operator instead",
    )
    a.add_argument("--trials", type=int, default=20, help="Monte-Carlo trials (default: %(default)s)")
    a.add_argument(
        "--noise",
        dest="noise_norm",
        type=float,
        default=None,
        help="Noise norm for the noise floor (default: the instance's, else 0)",
    )
    a.add_argument(
        "--constants",
        choices=("tight", "prior"),
        default="tight",
        help="SpaRCS recursion constants (default: %(default)s)",
    )
    a.set_defaults(func=_cmd_analyze)

    return p


def _load_json(path: str) -> Mapping[str, Any]:
    try:
        with open(path, encoding="utf-8") as fp:
            values = json.load(fp)
    except json.JSONDecodeError as ex:
        raise ParseError(ex.msg, path, line=ex.lineno) from ex

    if not isinstance(values, dict):
        raise ParseError("expect a JSON object", path)
    return values


def _solver_config(ns: argparse.Namespace) -> SolverConfig:
    config = SolverConfig()
    if ns.config_file is not None:
        config = SolverConfig.from_mapping(_load_json(ns.config_file))

    return config.replace(
        tolerance=ns.eta,
        max_iterations=ns.max_iters,
        momentum=ns.tau,
        projector=ns.projector,
    )


def _out_dir(ns: argparse.Namespace) -> Optional[Path]:
    if ns.out is None:
        return None
    path = Path(ns.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_generate(ns: argparse.Namespace) -> int:
    out = _out_dir(ns)
    if out is None:
        raise ArgumentError("generate needs --out")

    m, n = ns.shape
    instance = generate_instance(
        m,
        n,
        ns.rank,
        ns.sparsity,
        ns.model,
        ns.noise_norm,
        seed=ns.seed,
        sparse_scale=ns.sparse_scale,
    )
    save_instance(out, instance, ns.fmt)
    print(f"instance {instance.digest()} saved to {out}")
    return EXIT_OK


def _cmd_solve(ns: argparse.Namespace) -> int:
    config = _solver_config(ns)
    instance = load_instance(ns.instance)
    problem = instance.problem(ns.rank, ns.sparsity)

    result = solve(ns.solver, problem, config, (instance.low_rank, instance.sparse))
    if not result.converged:
        _logger.warning("%s stopped at the iteration cap %d", ns.solver, config.max_iterations)

    _logger.info("%s took %.3f s in its iterations", ns.solver, result.seconds)

    error = relative_error(result.estimate, instance.truth)
    print(
        f"solver={ns.solver} iterations={result.iterations} "
        f"converged={str(result.converged).lower()} "
        f"ls_warnings={len(result.trace.warnings)} rel_err={error:.6e}"
    )

    out = _out_dir(ns)
    if out is not None:
        write_matrix(out / f"L_hat.{ns.fmt}", result.low_rank, ns.fmt)
        write_matrix(out / f"M_hat.{ns.fmt}", result.sparse, ns.fmt)
        write_trace(out / "trace.csv", result.trace)
    return EXIT_OK


def _cmd_bench(ns: argparse.Namespace) -> int:
    config = _solver_config(ns)
    context = {"model": ns.model}
    converter = BenchRowConverter()
    rows = [converter(row, context) for row in ns.rows]

    report = run_completion_benchmark(
        rows,
        ns.solvers,
        ns.reps,
        ns.seed,
        config=config,
        timings=ns.timings,
        max_workers=ns.workers,
    )

    out = _out_dir(ns)
    if out is None:
        write_report(sys.stdout, report)
    else:
        write_report(out / "report.csv", report)
        _logger.info("Report written to %s", out / "report.csv")
    return EXIT_OK


def _cmd_rpca(ns: argparse.Namespace) -> int:
    config = _solver_config(ns)

    data: Any
    if ns.instance is not None:
        if ns.frame_shape is not None:
            raise ArgumentError("--frame-shape only applies to --matrix")
        data = load_instance(ns.instance)
    else:
        data = read_matrix(ns.matrix)
        if ns.frame_shape is not None:
            h, w = ns.frame_shape
            if data.shape[1] != h * w:
                raise ArgumentError(f"rows of {data.shape[1]} values do not hold {h}x{w} frames")
            data = stack_frames(data.reshape(-1, h, w))

    rpca = run_rpca(data, ns.rank, ns.sparsity, ns.solver, config)

    print(",".join(REPORT_HEADER))
    print(",".join(rpca.row.as_row()))

    out = _out_dir(ns)
    if out is not None:
        low_rank, sparse = rpca.low_rank, rpca.sparse
        if ns.frame_shape is not None:
            count = low_rank.shape[1]
            low_rank = unstack_frames(low_rank, ns.frame_shape).reshape(count, -1)
            sparse = unstack_frames(sparse, ns.frame_shape).reshape(count, -1)
        write_matrix(out / f"L_hat.{ns.fmt}", low_rank, ns.fmt)
        write_matrix(out / f"M_hat.{ns.fmt}", sparse, ns.fmt)
        write_trace(out / "trace.csv", rpca.result.trace)
    return EXIT_OK


def _cmd_analyze(ns: argparse.Namespace) -> int:
    config = _solver_config(ns)
    noise_norm = ns.noise_norm

    if ns.instance is not None:
        instance = load_instance(ns.instance)
        rip = estimate_rip_profile(
            instance.operator, instance.rank, instance.sparsity, ns.trials, ns.seed
        )
        if noise_norm is None:
            noise_norm = float(np.linalg.norm(instance.noise))
    else:
        rip = RipProfile.from_fourth_order(
            ns.delta_4k, ns.delta_4s, ns.joint_3k3s, ns.joint_3k4s
        )

    if noise_norm is None:
        noise_norm = 0.0
    if noise_norm < 0:
        raise ArgumentError(f"noise norm must be nonnegative: {noise_norm!r}")

    constants = (
        SparcsRecursion.tight()
        if ns.constants == "tight"
        else SparcsRecursion.prior_bound()
    )

    contraction = momentum_contraction(rip, config.momentum)
    rows: List[Any] = list(rip.as_dict().items())
    rows.extend(contraction_report(contraction, constants, noise_norm))

    print(contraction.verdict())
    out = _out_dir(ns)
    if out is None:
        write_quantities(sys.stdout, rows)
    else:
        write_quantities(out / "analysis.csv", rows)
    return EXIT_OK


def _configure_logging(verbose: int) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = get_parser()
    try:
        ns = p.parse_args(argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else EXIT_USAGE

    _configure_logging(ns.verbose)
    _logger.debug("argparse: %s", ns)

    try:
        return int(ns.func(ns))
    except (ArgumentError, ParseError) as ex:
        print(f"{PROG}: error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, ConvergenceError) as ex:
        print(f"{PROG}: solver failure: {ex}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as ex:
        print(f"{PROG}: error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except LRSError as ex:
        print(f"{PROG}: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
