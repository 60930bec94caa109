"""
Command line interface ``fusion-impute``.

Exit codes: 0 on success, 1 if a benchmark record or the requested
operation failed, 2 if the configuration is invalid.
"""
import argparse
import logging
import os
import sys

from fusion_impute.bench import impute, run_benchmark, sweep_split
from fusion_impute.config import load_config, parse_splits, seeded
from fusion_impute.dataset import (
    SEEDS_URL,
    SYNTHETIC_PRESETS,
    InjectionSpec,
    SyntheticSpec,
    denormalize,
    download_seeds,
    generate_synthetic,
    inject_missing,
    load_csv,
    normalize,
    save_csv,
    save_truth_csv,
    synthetic_preset,
)
from fusion_impute.helper_functions import ConfigError, ImputeError, get_env_dict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _cmd_inject(args):
    table = load_csv(args.input, args.missing_token)
    seed = args.seed if args.seed is not None else (get_env_dict()["seed"] or 0)
    masked, truth = inject_missing(table, InjectionSpec(args.rate, seed))
    save_csv(masked, args.out, args.missing_token)
    save_truth_csv(truth, table.column_names, args.truth)
    logger.info("hid %d of %d cells", len(truth), table.n_rows * table.n_cols)
    return EXIT_OK


def _cmd_impute(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else get_env_dict()["seed"]
    if seed is not None:
        cfg = seeded(cfg, seed)
    table = load_csv(args.input, args.missing_token)
    if cfg.normalize:
        scaled, info = normalize(table)
        filled, log = impute(scaled, args.method, cfg)
        filled = denormalize(filled, info)
    else:
        filled, log = impute(table, args.method, cfg)
    save_csv(filled, args.out, fill=True)
    if args.train_log and log is not None:
        log.to_jsonl(args.train_log)
    return EXIT_OK


def _cmd_bench(args):
    cfg = load_config(args.config, args.seed)
    report = run_benchmark(cfg)
    report.write(args.out or cfg.output_dir)
    print(report.aggregate().to_string(index=False))
    return EXIT_FAILED if report.failed else EXIT_OK


def _cmd_sweep(args):
    cfg = load_config(args.config, args.seed)
    splits = parse_splits(args.splits) if args.splits else cfg.sweep_splits
    total = args.total_hidden or cfg.sweep_total_hidden
    dataset = cfg.datasets[0]
    if args.dataset:
        matching = [d for d in cfg.datasets if d.name == args.dataset]
        dataset = matching[0] if matching else args.dataset
    report = sweep_split(dataset, args.rate, total, splits, cfg.seeds, cfg)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    report.to_frame().to_csv(os.path.join(out_dir, "sweep.csv"), index=False)
    print(report.summary().to_string(index=False))
    failed = (report.to_frame()["error"] != "").any()
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_gen(args):
    seed = args.seed if args.seed is not None else (get_env_dict()["seed"] or 0)
    if args.preset:
        table = synthetic_preset(args.preset, seed, args.n_samples)
    else:
        try:
            spec = SyntheticSpec(args.n_samples, args.n_valid, args.n_noise, seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e))
        table = generate_synthetic(spec)
    save_csv(table, args.out)
    return EXIT_OK


def _cmd_fetch_seeds(args):
    table = download_seeds(args.out, args.url)
    logger.info("seeds data: %d rows, %d columns", table.n_rows, table.n_cols)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fusion-impute",
        description="Missing value imputation with de-tracking autoencoders.")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--seed", type=int, default=None,
                         help="Overrides every seed of the configuration.")
        sub.set_defaults(func=func)
        return sub

    sub = add("inject", _cmd_inject, "Hide cells of a complete CSV at random (MCAR).")
    sub.add_argument("input")
    sub.add_argument("--rate", type=float, required=True)
    sub.add_argument("--out", required=True, help="Masked CSV.")
    sub.add_argument("--truth", required=True, help="Ground truth CSV (row,column,value).")
    sub.add_argument("--missing-token", default="")

    sub = add("impute", _cmd_impute, "Fill the missing cells of a CSV.")
    sub.add_argument("input")
    sub.add_argument("--method", default="ffeam",
                     choices=["means", "knn", "ae", "ce_aann", "ffeam"])
    sub.add_argument("--config", default=None)
    sub.add_argument("--out", required=True)
    sub.add_argument("--missing-token", default="")
    sub.add_argument("--train-log", default=None,
                     help="JSON lines file receiving the mean loss per epoch.")

    sub = add("bench", _cmd_bench, "Run the benchmark grid of a config file.")
    sub.add_argument("--config", default=None)
    sub.add_argument("--out", default=None, help="Report directory.")

    sub = add("sweep", _cmd_sweep, "Compare m1/m2 allocations of the hidden layer.")
    sub.add_argument("--config", default=None)
    sub.add_argument("--dataset", default=None)
    sub.add_argument("--rate", type=float, default=0.2)
    sub.add_argument("--splits", default=None, help="e.g. '5:15, 10:10, 15:5'")
    sub.add_argument("--total-hidden", type=int, default=None)
    sub.add_argument("--out", default=None)

    sub = add("gen", _cmd_gen, "Generate a synthetic table.")
    sub.add_argument("--preset", default=None, choices=sorted(SYNTHETIC_PRESETS))
    sub.add_argument("--n-samples", type=int, default=1000)
    sub.add_argument("--n-valid", type=int, default=3)
    sub.add_argument("--n-noise", type=int, default=7)
    sub.add_argument("--out", required=True)

    sub = add("fetch-seeds", _cmd_fetch_seeds,
              "Download the UCI Seeds data as CSV, to be used through IMPUTE_SEEDS_CSV.")
    sub.add_argument("--out", required=True)
    sub.add_argument("--url", default=SEEDS_URL)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("invalid configuration: %s", e)
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except ImputeError as e:
        logger.error("%s", e)
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
