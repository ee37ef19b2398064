import os

# BLAS thread caps only take effect before numpy gets imported
_THREADS = os.environ.get("DECAF_THREADS", "1")
for _var in ["OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"]:
    os.environ.setdefault(_var, _THREADS)

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Dict

from decaf.config import ExperimentConfig, load_config, save_config, METHODS
from decaf.diagnostics import shift_report, latent_shift_report, mean_neighborhood_encoder, CLASS_MODES, CLASSES_FIRST
from decaf.errors import DecafError
from decaf.experiment import (build_graphs, generate_graphs, build_split, build_data, predict_graphs, run_experiment,
                              load_report, Experiment, FILE_CONFIG, FILE_CHECKPOINT, FILE_REPORT)
from decaf.help import HELP_FORMATS
from decaf.logging import log, handle_exception
from decaf.metrics import aggregate_reports, METRIC_MACRO_F1
from decaf.scmgen import RECIPES, SHIFTS
from decaf.serialization.checkpoint import save_checkpoint, load_checkpoint
from decaf.serialization.dataset import save_dataset

PROG = "decaf"

SPLIT_NAMES = {0: "train", 1: "val", 2: "test"}


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="PATH", default=None, help="the JSON config file to start from")
    parser.add_argument("--seed", type=int, default=None, help="the seed for all random generators")
    parser.add_argument("--method", choices=METHODS, default=None, help="the training method")
    parser.add_argument("--recipe", choices=RECIPES, default=None, help="the synthetic dataset recipe")
    parser.add_argument("--dataset", metavar="DIR", default=None, help="a stored dataset to use instead of a recipe")
    parser.add_argument("--shift", choices=SHIFTS, default=None, help="the distribution shift of the test graph")
    parser.add_argument("--magnitude", type=float, default=None, help="the shift magnitude")
    parser.add_argument("--gamma", type=float, default=None, help="the weight of the feature effect")
    parser.add_argument("--cf-samples", dest="cf_samples", type=int, default=None, help="the number of background samples")
    parser.add_argument("--set", dest="overrides", metavar="KEY=VALUE", action="append", default=[],
                        help="overrides any config option, can be used multiple times")
    parser.add_argument("--debug", action="store_true", help="outputs training progress")


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    """
    Loads the config file (if any) and applies the command-line overrides.

    :param ns: the parsed arguments
    :type ns: argparse.Namespace
    :return: the config
    :rtype: ExperimentConfig
    """
    config = load_config(ns.config) if ns.config is not None else ExperimentConfig()
    for override in ns.overrides:
        if "=" not in override:
            raise DecafError("Override must have the form KEY=VALUE: %s" % override)
        key, value = override.split("=", 1)
        config.set(key.strip(), value.strip())
    for key in ["seed", "method", "recipe", "dataset", "shift", "magnitude", "gamma", "cf_samples"]:
        value = getattr(ns, key)
        if value is not None:
            config.set(key, value)
    if ns.debug:
        config.set("debug", True)
    return config


def _generate(ns: argparse.Namespace):
    config = config_from_args(ns)
    g_train, g_test, _ = build_graphs(config)
    provenance = config.to_dict()
    save_dataset(g_train, os.path.join(ns.out, "train"), provenance=provenance)
    if g_test is not g_train:
        save_dataset(g_test, os.path.join(ns.out, "test"), provenance=provenance)
    log("train graph: %d nodes, %d edges" % (g_train.n, len(g_train.edges())))


def _split(ns: argparse.Namespace):
    config = config_from_args(ns)
    g_train, _, _ = build_graphs(config)
    masks = build_split(config, g_train)
    with open(ns.out, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["node", "split"])
        for i in range(g_train.n):
            split = 0 if masks.train[i] else (1 if masks.val[i] else 2)
            writer.writerow([i, SPLIT_NAMES[split]])
    counts = masks.class_counts(g_train.labels, g_train.num_classes)
    for split, row in zip(["train", "val", "test"], counts):
        log("%s: %s" % (split, str(row.tolist())))


def _train(ns: argparse.Namespace):
    config = config_from_args(ns)
    experiment = Experiment(config)
    data = build_data(config)
    model, _ = experiment.train(data)
    os.makedirs(ns.out, exist_ok=True)
    save_config(config, os.path.join(ns.out, FILE_CONFIG))
    save_checkpoint(model, os.path.join(ns.out, FILE_CHECKPOINT), config.fingerprint())


def _predict(ns: argparse.Namespace):
    config = load_config(os.path.join(ns.run, FILE_CONFIG))
    model, fingerprint = load_checkpoint(os.path.join(ns.run, FILE_CHECKPOINT))
    if fingerprint != config.fingerprint():
        raise DecafError("Checkpoint was trained with a different config")
    data = build_data(config)
    pred_train, pred_test = predict_graphs(model, data, config.get("seed"))
    if ns.graph == "test":
        g, pred = data.g_test, pred_test
    else:
        g, pred = data.g_train, pred_train
    with open(ns.out, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["node", "label", "prediction"])
        for i in range(g.n):
            writer.writerow([i, int(g.labels[i]), int(pred[i])])


def _diagnose(ns: argparse.Namespace):
    config = config_from_args(ns)
    if len(config.get("dataset")) > 0:
        g_train, g_test, _ = build_graphs(config)
        report = shift_report(g_train, g_test, encoder=mean_neighborhood_encoder(config.get("layers")),
                              ridge=ns.ridge, classes=ns.classes)
    else:
        synthetic = generate_graphs(config)
        report = latent_shift_report(synthetic.train, synthetic.test, ridge=ns.ridge, classes=ns.classes)
    os.makedirs(ns.out, exist_ok=True)
    report.write_csv(os.path.join(ns.out, "shift.csv"))
    report.write_json(os.path.join(ns.out, "shift.json"))
    if len(report.class_ids) > 0:
        log("mean feature T2: %.4f, mean neighborhood T2: %.4f" % (report.mean_feature_t2(), report.mean_neighbor_t2()))


def _log_report(report):
    for split in sorted(report.scores.keys()):
        log("%s Macro-F1: %.4f" % (split, report.score(split, METRIC_MACRO_F1)))


def _run(ns: argparse.Namespace):
    report = run_experiment(config_from_args(ns), output_dir=ns.out)
    _log_report(report)


def _report(ns: argparse.Namespace):
    reports = [load_report(p) for p in ns.reports]
    summary = aggregate_reports(reports)
    text = json.dumps(summary, indent=2, sort_keys=True)
    if ns.out is None:
        print(text)
    else:
        with open(ns.out, "w") as fp:
            fp.write(text)
            fp.write("\n")


def _run_seed(options: Dict, seed: int, output_dir: str) -> Dict:
    config = ExperimentConfig(options=options)
    config.set("seed", seed)
    return run_experiment(config, output_dir=output_dir).to_dict()


def _sweep(ns: argparse.Namespace):
    config = config_from_args(ns)
    options = config.to_dict()
    dirs = [os.path.join(ns.out, "seed-%d" % seed) for seed in ns.seeds]
    with ProcessPoolExecutor(max_workers=ns.workers) as executor:
        futures = [executor.submit(_run_seed, options, seed, d) for seed, d in zip(ns.seeds, dirs)]
        for future in futures:
            future.result()
    summary = aggregate_reports([load_report(d) for d in dirs])
    with open(os.path.join(ns.out, "summary.json"), "w") as fp:
        json.dump(summary, fp, indent=2, sort_keys=True)
        fp.write("\n")
    for split in sorted(summary.keys()):
        stats = summary[split][METRIC_MACRO_F1]
        log("%s Macro-F1: median=%.4f iqr=%.4f mean=%.4f std=%.4f"
            % (split, stats["median"], stats["iqr"], stats["mean"], stats["std"]))


def _options(ns: argparse.Namespace):
    HELP_FORMATS[ns.format]().generate(ExperimentConfig(), output_path=ns.out)


def create_parser() -> argparse.ArgumentParser:
    """
    Creates the parser with all subcommands.

    :return: the parser
    :rtype: argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog=PROG, description="Causal decoupling for out-of-distribution node classification.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generates the training (and shifted test) graph")
    _add_config_arguments(p)
    p.add_argument("--out", metavar="DIR", required=True, help="the directory for the datasets")
    p.set_defaults(func=_generate)

    p = sub.add_parser("split", help="splits the training graph")
    _add_config_arguments(p)
    p.add_argument("--out", metavar="FILE", required=True, help="the CSV file for the node splits")
    p.set_defaults(func=_split)

    p = sub.add_parser("train", help="trains a model and stores config and checkpoint")
    _add_config_arguments(p)
    p.add_argument("--out", metavar="DIR", required=True, help="the output directory")
    p.set_defaults(func=_train)

    p = sub.add_parser("predict", help="predicts with a trained model")
    p.add_argument("--run", metavar="DIR", required=True, help="the directory written by train or run")
    p.add_argument("--graph", choices=["train", "test"], default="test", help="the graph to predict")
    p.add_argument("--out", metavar="FILE", required=True, help="the CSV file for the predictions")
    p.set_defaults(func=_predict)

    p = sub.add_parser("diagnose", help="measures the shift between training and test graph")
    _add_config_arguments(p)
    p.add_argument("--classes", choices=CLASS_MODES, default=CLASSES_FIRST, help="which classes to compare")
    p.add_argument("--ridge", type=float, default=None, help="the ridge, default relative to the pooled variance")
    p.add_argument("--out", metavar="DIR", required=True, help="the output directory")
    p.set_defaults(func=_diagnose)

    p = sub.add_parser("run", help="runs a complete experiment")
    _add_config_arguments(p)
    p.add_argument("--out", metavar="DIR", default=None, help="the output directory")
    p.set_defaults(func=_run)

    p = sub.add_parser("report", help="aggregates several reports")
    p.add_argument("reports", metavar="PATH", nargs="+", help="report files or experiment directories")
    p.add_argument("--out", metavar="FILE", default=None, help="the JSON file for the summary, stdout if omitted")
    p.set_defaults(func=_report)

    p = sub.add_parser("sweep", help="runs an experiment for several seeds in parallel processes")
    _add_config_arguments(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5], help="the seeds to run")
    p.add_argument("--workers", type=int, default=1, help="the number of parallel processes")
    p.add_argument("--out", metavar="DIR", required=True, help="the output directory, one subdirectory per seed")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("options", help="outputs the help for all config options")
    p.add_argument("--format", choices=sorted(HELP_FORMATS.keys()), default="text", help="the output format")
    p.add_argument("--out", metavar="FILE", default=None, help="the file to write to, stdout if omitted")
    p.set_defaults(func=_options)
    return parser


def main(args: List[str] = None) -> int:
    """
    Runs the command-line interface.

    :param args: the command-line arguments, uses sys.argv if None
    :type args: list
    :return: the exit code
    :rtype: int
    """
    ns = create_parser().parse_args(args=args)
    try:
        ns.func(ns)
    except DecafError as e:
        stage = getattr(e, "stage", ns.command)
        message = str(e) if hasattr(e, "stage") else "%s: %s" % (stage, str(e))
        if getattr(ns, "debug", False):
            message = handle_exception(message)
        print(message, file=sys.stderr)
        return 1
    return 0


def sys_main() -> int:
    """
    Runs the main function using the system cli arguments, and
    returns a system error code.

    :return: 0 for success, 1 for failure.
    :rtype: int
    """
    return main()


if __name__ == "__main__":
    sys.exit(sys_main())
