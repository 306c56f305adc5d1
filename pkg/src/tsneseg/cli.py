"""Command-line front end: ``tsneseg segment|tune|generalize``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import DataError, load_csv
from .dbscan import DbscanConfig
from .evalgen import DEFAULT_GRID, NoValidEpsilonError, generalization_run, tuning_table
from .forest import ForestConfig
from .pipeline import PipelineConfig, segment
from .report import write_json, write_segmentation
from .tsne import TsneConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("tsneseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("epsilon grid needs one or more positive constants")
    return values


def _max_features(text: str):
    if text in ("sqrt", "all"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--max-features takes 'sqrt', 'all' or an integer") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    io = common.add_argument_group("input/output")
    io.add_argument("--input", required=True, type=Path, help="numeric CSV file")
    io.add_argument("--out", type=Path, default=Path("tsneseg-out"), help="output directory")
    io.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    io.add_argument("--name", default=None, help="data set name used in printed summaries")
    io.add_argument("--seed", type=int, default=0, help="master seed for every random stage")
    io.add_argument("-v", "--verbose", action="store_true")

    ts = common.add_argument_group("t-SNE")
    ts.add_argument("--perplexity", type=float, default=30.0)
    ts.add_argument("--iters", type=int, default=1000)
    ts.add_argument("--early-exag", type=float, default=12.0)
    ts.add_argument("--early-exag-iters", type=int, default=250)
    ts.add_argument("--late-exag", type=float, default=1.0)
    ts.add_argument("--late-exag-start", type=int, default=800)
    ts.add_argument("--learning-rate", type=float, default=200.0)

    db = common.add_argument_group("DBSCAN")
    db.add_argument("--eps-constant", type=float, default=DbscanConfig.epsilon_constant,
                    help="multiplier of the mean pairwise embedding distance")
    db.add_argument("--eps-grid", type=_grid, default=None,
                    help=f"comma list of constants to tune over (default {DEFAULT_GRID[0]}..{DEFAULT_GRID[-1]})")
    db.add_argument("--min-pts", type=int, default=4)
    db.add_argument("--min-clusters", type=int, default=1,
                    help="fewest non-singleton clusters a tuned constant must give")
    db.add_argument("--noise-cluster", action="store_true", help="pool DBSCAN noise into one cluster")

    rf = common.add_argument_group("random forest")
    rf.add_argument("--trees", type=int, default=100)
    rf.add_argument("--max-features", type=_max_features, default="sqrt")
    rf.add_argument("--folds", type=int, default=5)
    rf.add_argument("--no-standardize", action="store_true", help="feed raw features to every stage")

    parser = _Parser(prog="tsneseg", description="t-SNE + DBSCAN + random forest data segmentation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("segment", parents=[common], help="segment a data set and write all artifacts")
    sub.add_parser("tune", parents=[common], help="choose the epsilon constant by cross-validation")
    sub.add_parser("generalize", parents=[common], help="k-fold generalization report")
    return parser


def pipeline_config(args) -> PipelineConfig:
    try:
        cfg = PipelineConfig(
            tsne=TsneConfig(
                perplexity=args.perplexity,
                n_iterations=args.iters,
                early_exaggeration_factor=args.early_exag,
                early_exaggeration_iters=args.early_exag_iters,
                late_exaggeration_factor=args.late_exag,
                late_exaggeration_start=min(args.late_exag_start, args.iters),
                learning_rate=args.learning_rate,
                momentum_switch_iter=args.early_exag_iters,
            ),
            dbscan=DbscanConfig(
                epsilon_constant=args.eps_constant,
                min_pts=args.min_pts,
                min_clusters=args.min_clusters,
                noise_as_single_cluster=args.noise_cluster,
            ),
            forest=ForestConfig(n_trees=args.trees, max_features=args.max_features),
            standardize_input=not args.no_standardize,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.folds < 2:
        raise UsageError(f"--folds must be at least 2, got {args.folds}")
    return cfg.with_seed(args.seed)


def run_record(args, cfg: PipelineConfig, **extra) -> dict:
    rec = {
        "tool": "tsneseg",
        "version": __version__,
        "command": args.command,
        "input": str(args.input),
        "has_header": not args.no_header,
        "seed": args.seed,
        "pipeline": cfg.to_dict(),
    }
    rec.update(extra)
    return rec


def _load(args):
    d = load_csv(args.input, has_header=not args.no_header)
    if d.n_points < 4:
        raise DataError(f"need at least 4 rows, {args.input} has {d.n_points}")
    return d


def cmd_segment(args) -> int:
    cfg = pipeline_config(args)
    d = _load(args)
    result = segment(d, cfg)
    a = result.assignment
    write_segmentation(result, args.out, d, run_record(args, cfg), title=args.name)
    print(f"{a.n_clusters} clusters ({a.n_non_singleton()} non-singleton), sizes {list(a.cluster_sizes[:12])}"
          f"{' ...' if a.n_clusters > 12 else ''}")
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = pipeline_config(args)
    d = _load(args)
    grid = args.eps_grid or list(DEFAULT_GRID)
    result = tuning_table(d, grid, cfg, args.min_clusters, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "tuning.json", run_record(args, cfg, tuning=result.to_dict()))
    if result.best is None:
        raise NoValidEpsilonError(
            f"no constant in the grid gives >= {args.min_clusters} non-singleton clusters; "
            "widen --eps-grid toward smaller constants"
        )
    f1 = next(r.mean_f1 for r in result.rows if r.epsilon_constant == result.best)
    print(f"chosen epsilon constant: {result.best:g} (mean weighted F1 {f1:.3f})")
    return EXIT_OK


def cmd_generalize(args) -> int:
    cfg = pipeline_config(args)
    d = _load(args)
    if not 2 <= args.folds <= d.n_points:
        raise UsageError(f"--folds={args.folds} out of range [2, {d.n_points}]")
    grid = args.eps_grid or list(DEFAULT_GRID)
    report = generalization_run(d, cfg, args.folds, grid, args.min_clusters, seed=args.seed)
    name = args.name or args.input.stem
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "report.json", run_record(args, cfg, grid=grid, report=report.to_dict(name)))
    if report.fixed_epsilon:
        print(f"fixed epsilon constant {grid[0]:g}; inner tuning skipped")
    print("Data Set & Accuracy & Precision & Recall & F1-Score")
    print(report.summary_row(name))
    return EXIT_OK


COMMANDS = {"segment": cmd_segment, "tune": cmd_tune, "generalize": cmd_generalize}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tsneseg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NoValidEpsilonError, ValueError, FloatingPointError, OSError) as exc:
        print(f"tsneseg: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
