"""Command-line interface: ``dlnsgpr {train,predict,evaluate,ablate,robustness,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .cmapss import (
    attach_testing_labels,
    attach_training_labels,
    format_trajectories,
    read_rul,
    read_trajectories,
)
from .evaluation import (
    REFERENCE_RMSE,
    comparison_split,
    evaluate_predictions,
    run_ablation,
    run_robustness,
    synth_generate,
)
from .exceptions import ConfigError, DataError, NumericalError
from .io import (
    atomic_write_files,
    dumps_json,
    load_model,
    load_model_dict,
    per_engine_table,
    read_config,
    save_model,
    tsv_table,
)
from .pipeline import DLNSGPR

logger = logging.getLogger("dlnsgpr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _require(cfg, *keys):
    for key in keys:
        path = getattr(cfg, key)
        if not path:
            raise ConfigError(f"missing required config key {key!r}")
        if not os.path.exists(path):
            raise ConfigError(f"{key}: file not found: {path}")


def _training_set(cfg):
    _require(cfg, "train_file")
    return attach_training_labels(read_trajectories(cfg.train_file, "training"))


def _datasets(cfg):
    """Training and labelled testing sets, honouring the preset."""
    training = _training_set(cfg)
    if cfg.preset == "comparison":
        return comparison_split(training)
    _require(cfg, "test_file", "rul_file")
    testing = read_trajectories(cfg.test_file, "testing")
    testing = attach_testing_labels(testing, read_rul(cfg.rul_file))
    return training, testing


def _phase1(cfg, training):
    """Load the model file when it exists, otherwise train on ``training``."""
    if cfg.model_file and os.path.exists(cfg.model_file):
        stored = load_model_dict(cfg.model_file).get("config", {})
        if stored.get("preset", "none") != cfg.preset:
            raise ConfigError(
                f"model file {cfg.model_file} was trained with preset "
                f"{stored.get('preset')!r}, run uses {cfg.preset!r}; retrain or remove it"
            )
        model = load_model(cfg.model_file)
        logger.info("loaded model %s", cfg.model_file)
        return model
    logger.info("training Phase I on %d engines", len(training))
    return DLNSGPR(**cfg.model_params()).fit(training)


def _check_compatible(model, testing):
    for engine_id, rows in testing.engines.items():
        if rows.shape[1] != model.n_features_in_:
            raise DataError(
                f"model file is stale: it expects {model.n_features_in_} features but the "
                f"testing data has {rows.shape[1]} (engine {engine_id})"
            )


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _trajectory_rows(predictions):
    rows = []
    for p in predictions:
        for k, rul in enumerate(p.dl_trajectory):
            rows.append({
                "engine_id": p.engine_id,
                "cycle": k + 1,
                "dl_rul": float(rul),
                "gp_mean": None if p.gp_mean is None else float(p.gp_mean[k]),
                "gp_std": None if p.gp_std is None else float(p.gp_std[k]),
            })
    return rows


def cmd_train(cfg):
    _require(cfg, "train_file")
    if not cfg.model_file:
        raise ConfigError("missing required config key 'model_file'")
    training = _training_set(cfg)
    if cfg.preset == "comparison":
        training, _ = comparison_split(training)
    start = time.perf_counter()
    model = DLNSGPR(**cfg.model_params()).fit(training)
    elapsed = time.perf_counter() - start
    save_model(model, cfg.model_file, cfg.to_dict())
    summary = {
        "model_file": cfg.model_file,
        "n_engines": len(training),
        "n_rows": training.n_rows,
        "svd_rank": model.svd_rank_,
        "initial_loss": model.mlp_.initial_loss_,
        "final_loss": model.mlp_.train_loss_,
        "residual_std": model.residual_std_,
        "elapsed_seconds": round(elapsed, 3),
    }
    sys.stdout.write(dumps_json(summary))
    return EXIT_OK


def cmd_predict(cfg):
    _require(cfg, "model_file", "test_file")
    model = load_model(cfg.model_file)
    testing = read_trajectories(cfg.test_file, "testing")
    _check_compatible(model, testing)
    preds = model.predict(testing, ci_level=cfg.effective_ci_level())
    rows = [
        {
            "engine_id": p.engine_id, "rul_prediction": p.mean_rul, "std": p.std,
            "ci_low": p.ci_low, "ci_high": p.ci_high, "truncation_cycle": p.t_c,
            "predicted_failure_cycle": p.predicted_failure_cycle, "degraded": p.degraded,
        }
        for p in preds
    ]
    columns = ("engine_id", "rul_prediction", "std", "ci_low", "ci_high",
               "truncation_cycle", "predicted_failure_cycle", "degraded")
    atomic_write_files({_out(cfg, "predictions.tsv"): tsv_table(rows, columns)})
    return EXIT_OK


def cmd_evaluate(cfg):
    training, testing = _datasets(cfg)
    model = _phase1(cfg, training)
    _check_compatible(model, testing)
    preds = model.predict(testing, ci_level=cfg.effective_ci_level())
    report = evaluate_predictions(preds, testing, "full", cfg.bucket_width)
    doc = {
        "command": "evaluate",
        "config": cfg.to_dict(),
        "svd_rank": model.svd_rank_,
        "rmse": report.rmse,
        "coverage_rate": report.coverage_rate,
        "ci_level": report.ci_level,
        "mean_ci_width": report.mean_ci_width,
        "n_engines": len(report.per_engine),
        "n_degraded": report.n_degraded,
        "per_engine": report.per_engine,
        "per_rul_bucket_rmse": report.per_rul_bucket_rmse,
        "reference_rmse": REFERENCE_RMSE.get(
            "comparison" if cfg.preset == "comparison" else cfg.dataset_name, {}
        ),
    }
    atomic_write_files({
        _out(cfg, "report.json"): dumps_json(doc),
        _out(cfg, "per_engine.tsv"): per_engine_table(report),
        _out(cfg, "rul_buckets.tsv"): tsv_table(
            report.per_rul_bucket_rmse, ("bucket_low", "bucket_high", "n", "rmse")),
        _out(cfg, "trajectories.tsv"): tsv_table(
            _trajectory_rows(preds), ("engine_id", "cycle", "dl_rul", "gp_mean", "gp_std")),
    })
    sys.stdout.write(f"rmse\t{report.rmse:.4f}\ncoverage_rate\t{report.coverage_rate:.4f}\n")
    return EXIT_OK


def cmd_ablate(cfg):
    training, testing = _datasets(cfg)
    model = _phase1(cfg, training)
    _check_compatible(model, testing)
    _, reports = run_ablation(training, testing, model, ci_level=cfg.effective_ci_level(),
                              bucket_width=cfg.bucket_width)
    ordered = sorted(reports.values(), key=lambda r: r.rmse)
    doc = {
        "command": "ablate",
        "config": cfg.to_dict(),
        "variants": {k: {"rmse": r.rmse, "coverage_rate": r.coverage_rate,
                         "mean_ci_width": r.mean_ci_width} for k, r in reports.items()},
        "order_by_rmse": [r.variant for r in ordered],
        "reference_rmse": REFERENCE_RMSE["ablation"].get(cfg.dataset_name, {}),
        "per_engine": {k: r.per_engine for k, r in reports.items()},
    }
    rows = [{"variant": k, "rmse": r.rmse, "coverage_rate": r.coverage_rate,
             "mean_ci_width": r.mean_ci_width} for k, r in reports.items()]
    atomic_write_files({
        _out(cfg, "ablation.json"): dumps_json(doc),
        _out(cfg, "ablation.tsv"): tsv_table(rows, ("variant", "rmse", "coverage_rate",
                                                   "mean_ci_width")),
    })
    for r in rows:
        sys.stdout.write(f"{r['variant']}\t{r['rmse']:.4f}\n")
    return EXIT_OK


def cmd_robustness(cfg):
    training, testing = _datasets(cfg)
    template = DLNSGPR(**cfg.model_params())
    seeds, rmses = run_robustness(training, testing, cfg.n_trials, cfg.base_seed, template,
                                  ci_level=cfg.effective_ci_level())
    values = np.asarray(rmses)
    mean, std = float(values.mean()), float(values.std(ddof=1))
    doc = {
        "command": "robustness",
        "config": cfg.to_dict(),
        "trials": [{"seed": s, "rmse": r} for s, r in zip(seeds, rmses)],
        "mean_rmse": mean,
        "std_rmse": std,
        "relative_std": std / mean if mean > 0 else None,
    }
    atomic_write_files({
        _out(cfg, "robustness.json"): dumps_json(doc),
        _out(cfg, "robustness.tsv"): tsv_table(doc["trials"], ("seed", "rmse")),
    })
    sys.stdout.write(f"mean_rmse\t{mean:.4f}\nstd_rmse\t{std:.4f}\n")
    return EXIT_OK


def cmd_synth(cfg):
    training, testing, truths = synth_generate(
        cfg.synth_engines, (cfg.synth_t_f_min, cfg.synth_t_f_max), cfg.synth_noise, cfg.seed,
    )
    rul_text = "".join(f"{int(truths[i])}\n" for i in testing.engine_ids)
    atomic_write_files({
        _out(cfg, "train_SYN.txt"): format_trajectories(training),
        _out(cfg, "test_SYN.txt"): format_trajectories(testing),
        _out(cfg, "RUL_SYN.txt"): rul_text,
    })
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "robustness": cmd_robustness,
    "synth": cmd_synth,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="dlnsgpr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="flat key = value config file")
        p.add_argument("-s", "--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = read_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"dlnsgpr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"dlnsgpr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"dlnsgpr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
