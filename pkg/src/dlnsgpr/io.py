"""Model files, run configuration and report files.

The model file is JSON. Floats are written with ``repr`` precision by the
standard library, which round-trips float64 exactly, and keys are sorted so
that identical models give byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields

import numpy as np

from .cmapss import FeatureScaler, NormStats
from .exceptions import ConfigError, DataError
from .mlp import DeepRULRegressor
from .pipeline import DLNSGPR
from .svd import SvdBasis, TruncatedSVDFeatures

__all__ = [
    "MODEL_FORMAT",
    "MODEL_FORMAT_VERSION",
    "PER_ENGINE_COLUMNS",
    "RunConfig",
    "read_config",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "dumps_json",
    "per_engine_table",
    "atomic_write_files",
]

MODEL_FORMAT = "dlnsgpr-model"
MODEL_FORMAT_VERSION = 1
PER_ENGINE_COLUMNS = (
    "engine_id", "rul_prediction", "ground_truth", "ci_low", "ci_high", "truncation_cycle",
)


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(obj):
    return json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def model_to_dict(model, config=None):
    """Serializable view of a fitted :class:`DLNSGPR`."""
    if not hasattr(model, "mlp_"):
        raise DataError("model is not fitted")
    basis = model.svd_.basis_
    mlp = model.mlp_
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "params": model.get_params(),
        "config": config or {},
        "norm_stats": {"mean": _tolist(model.scaler_.mean_), "std": _tolist(model.scaler_.scale_)},
        "svd": {
            "column_means": _tolist(basis.column_means),
            "singular_values": _tolist(basis.singular_values),
            "components": _tolist(basis.components),
            "rank": basis.rank,
        },
        "time_scaling": {"mean": model.time_mean_, "std": model.time_scale_},
        "mlp": {
            "weights": [_tolist(W) for W, _ in mlp.params_],
            "biases": [_tolist(b) for _, b in mlp.params_],
            "target_mean": mlp.target_mean_,
            "target_scale": mlp.target_scale_,
            "train_loss": mlp.train_loss_,
            "initial_loss": mlp.initial_loss_,
        },
        "residual_std": model.residual_std_,
        "n_features": model.n_features_in_,
    }


def _tupled(params):
    out = dict(params)
    for key, value in out.items():
        if isinstance(value, list):
            out[key] = tuple(value)
    return out


def model_from_dict(d):
    if d.get("format") != MODEL_FORMAT:
        raise DataError("not a dlnsgpr model file")
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version!r}")
    try:
        model = DLNSGPR(**_tupled(d["params"]))
        model.scaler_ = FeatureScaler.from_stats(
            NormStats(np.array(d["norm_stats"]["mean"]), np.array(d["norm_stats"]["std"]))
        )
        s = d["svd"]
        svd = TruncatedSVDFeatures(threshold=model.svd_threshold)
        svd.basis_ = SvdBasis(
            np.array(s["column_means"]), np.array(s["singular_values"]),
            np.array(s["components"]).reshape(len(s["column_means"]), s["rank"]), int(s["rank"]),
        )
        svd.n_components_ = svd.basis_.rank
        svd.n_features_in_ = svd.basis_.n_features
        model.svd_ = svd
        model.time_mean_ = float(d["time_scaling"]["mean"])
        model.time_scale_ = float(d["time_scaling"]["std"])
        m = d["mlp"]
        mlp = DeepRULRegressor(
            learning_rate=model.learning_rate, l2=model.l2,
            negative_slope=model.negative_slope,
            hidden_layer_sizes=tuple(model.hidden_layer_sizes), epochs=model.epochs,
            batch_size=model.batch_size, random_state=model.seed,
        )
        mlp.params_ = [
            (np.array(W, dtype=float).reshape(len(W), -1), np.array(b, dtype=float))
            for W, b in zip(m["weights"], m["biases"])
        ]
        mlp.target_mean_ = float(m["target_mean"])
        mlp.target_scale_ = float(m["target_scale"])
        mlp.train_loss_ = float(m["train_loss"])
        mlp.initial_loss_ = float(m["initial_loss"])
        mlp.n_features_in_ = mlp.params_[0][0].shape[0]
        model.mlp_ = mlp
        model.residual_std_ = float(d["residual_std"])
        model.n_features_in_ = int(d["n_features"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt model file: {exc}") from None
    if mlp.n_features_in_ != svd.basis_.rank + 1:
        raise DataError("model file is inconsistent: network input does not match SVD rank")
    return model


def save_model(model, path, config=None):
    atomic_write_files({path: dumps_json(model_to_dict(model, config))})


def load_model(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid model file ({exc})") from None
    return model_from_dict(d)


def load_model_dict(path):
    with open(path) as fh:
        return json.load(fh)


# -- configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved run configuration; every field maps to a config-file key."""

    train_file: str | None = None
    test_file: str | None = None
    rul_file: str | None = None
    model_file: str | None = None
    output_dir: str = "."
    preset: str = "none"
    dataset_name: str = "FD001"
    svd_threshold: float = 0.9
    learning_rate: float = 5e-4
    l2: float = 1e-3
    negative_slope: float = 0.2
    hidden_layer_sizes: tuple = (50, 100, 50)
    epochs: int = 150
    batch_size: int = 256
    rul_cap: float | None = None
    ci_level: float = 0.9
    seed: int = 0
    gp_restarts: int = 5
    gp_theta_bounds: tuple = (1e-3, 1e2)
    gp_sigma2_bounds: tuple = (1e-2, 1e4)
    gp_sigma0_2_bounds: tuple = (1e-6, 1e2)
    gp_noise_bounds: tuple = (1e-3, 1e2)
    ci_include_noise: bool = True
    failure_horizon: int = 500
    bucket_width: float = 25.0
    n_trials: int = 10
    base_seed: int = 1
    synth_engines: int = 100
    synth_noise: float = 0.1
    synth_t_f_min: int = 128
    synth_t_f_max: int = 362
    extra: dict = field(default_factory=dict, repr=False)

    PRESETS = ("none", "comparison")

    def model_params(self):
        names = set(DLNSGPR().get_params())
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name in names}

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}

    def validate(self):
        if not 0 < self.ci_level < 1:
            raise ConfigError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.preset not in self.PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {self.PRESETS}")
        if not 0 < self.svd_threshold <= 1:
            raise ConfigError("svd_threshold must lie in (0, 1]")
        if self.bucket_width <= 0:
            raise ConfigError("bucket_width must be positive")
        return self

    def effective_ci_level(self):
        # the comparison protocol reports 95% intervals
        return 0.95 if self.preset == "comparison" else self.ci_level


def _convert(name, raw, default):
    raw = raw.strip()
    try:
        if name == "rul_cap":
            return None if raw.lower() in ("", "none", "off") else float(raw)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            cast = int if name == "hidden_layer_sizes" else float
            return tuple(cast(p) for p in parts)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw if raw else default
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None


def read_config(path=None, overrides=None):
    """Parse a flat ``key = value`` file, then apply ``key=value`` overrides.

    ``#`` starts a comment; an optional single ``[section]`` header is ignored.
    """
    pairs = []
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            text = fh.read()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            if not text.lstrip().startswith("["):
                text = "[run]\n" + text
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            pairs.extend(parser.items(section))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value))

    cfg = RunConfig()
    defaults = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for key, value in pairs:
        key = key.strip().lower()
        if key not in defaults or key == "extra":
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _convert(key, value, defaults[key]))
    if path is not None:
        base = os.path.dirname(os.path.abspath(path))
        for key in ("train_file", "test_file", "rul_file", "model_file", "output_dir"):
            value = getattr(cfg, key)
            if value and not os.path.isabs(value):
                setattr(cfg, key, os.path.join(base, value))
    return cfg.validate()


# -- reports ---------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def tsv_table(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def per_engine_table(report):
    return tsv_table(report.per_engine, PER_ENGINE_COLUMNS)


def atomic_write_files(contents):
    """Write every ``path -> text`` pair, or none of them on failure."""
    staged = []
    try:
        for path, text in contents.items():
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
            staged.append((tmp, path))
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
