"""Reading, labelling and normalizing C-MAPSS turbofan trajectories.

A C-MAPSS data file has one row per engine cycle with 26 whitespace
separated columns: engine id, cycle, three operational settings and 21
sensor readings. The companion RUL file holds one integer per testing
engine: the ground-truth remaining life at the last recorded cycle.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, ParseError, StructuralError

__all__ = [
    "N_FEATURES",
    "FEATURE_NAMES",
    "TrajectorySet",
    "NormStats",
    "FeatureScaler",
    "parse_trajectories",
    "read_trajectories",
    "format_trajectories",
    "write_trajectories",
    "parse_rul",
    "read_rul",
    "attach_training_labels",
    "attach_testing_labels",
    "fit_norm_stats",
    "apply_norm",
    "invert_norm",
]

N_FEATURES = 24
FEATURE_NAMES = tuple(
    [f"setting_{i}" for i in range(1, 4)] + [f"sensor_{i}" for i in range(1, 22)]
)
_N_COLUMNS = N_FEATURES + 2
_KINDS = ("training", "testing")


@dataclass
class TrajectorySet:
    """Per-engine multivariate sensor trajectories.

    Parameters
    ----------
    engines : dict of int to ndarray of shape (n_cycles, 24)
        Feature rows for each engine, row ``i`` holding cycle ``i + 1``.
    kind : {"training", "testing"}
        Run-to-failure training data or truncated testing data.
    labels : dict of int to float, optional
        Ground-truth RUL at the last row of each engine.
    """

    engines: dict
    kind: str
    labels: dict | None = field(default=None)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DataError(f"kind must be one of {_KINDS}, got {self.kind!r}")

    def __len__(self):
        return len(self.engines)

    @property
    def engine_ids(self):
        return sorted(self.engines)

    @property
    def n_rows(self):
        return sum(len(rows) for rows in self.engines.values())

    def cycles(self, engine_id):
        return np.arange(1, len(self.engines[engine_id]) + 1, dtype=float)

    def truncation_cycle(self, engine_id):
        return len(self.engines[engine_id])

    def stacked(self):
        """Stack every engine into one matrix.

        Returns
        -------
        X : ndarray of shape (n_rows, 24)
        cycles : ndarray of shape (n_rows,)
        engine_index : ndarray of shape (n_rows,)
        """
        ids = self.engine_ids
        if not ids:
            return np.empty((0, N_FEATURES)), np.empty(0), np.empty(0, dtype=int)
        X = np.vstack([self.engines[i] for i in ids])
        cycles = np.concatenate([self.cycles(i) for i in ids])
        index = np.concatenate(
            [np.full(len(self.engines[i]), i, dtype=int) for i in ids]
        )
        return X, cycles, index

    def rul_targets(self, cap=None):
        """Per-row linear RUL labels ``t_f - t`` for a labelled training set.

        ``cap`` optionally clips the labels from above (piecewise-linear
        target); it is off by default.
        """
        if self.kind != "training" or self.labels is None:
            raise DataError("per-row RUL targets need a labelled training set")
        targets = []
        for i in self.engine_ids:
            t_f = len(self.engines[i]) + self.labels[i]
            targets.append(t_f - self.cycles(i))
        y = np.concatenate(targets) if targets else np.empty(0)
        if cap is not None:
            y = np.minimum(y, cap)
        return y

    def subset(self, engine_ids):
        """Return a new set restricted to ``engine_ids`` (ids are kept)."""
        missing = [i for i in engine_ids if i not in self.engines]
        if missing:
            raise DataError(f"engines not present: {missing}")
        engines = {i: self.engines[i] for i in engine_ids}
        labels = None
        if self.labels is not None:
            labels = {i: self.labels[i] for i in engine_ids}
        return TrajectorySet(engines, self.kind, labels)

    def truncate(self, cycle):
        """Cut every engine at ``cycle`` and return a labelled testing set.

        Engines shorter than ``cycle`` are dropped. Labels become the
        remaining life at the cut, which requires known labels.
        """
        if self.labels is None:
            raise DataError("truncation needs labelled engines")
        engines, labels = {}, {}
        for i in self.engine_ids:
            n = len(self.engines[i])
            if n < cycle:
                continue
            engines[i] = self.engines[i][:cycle].copy()
            labels[i] = self.labels[i] + (n - cycle)
        return TrajectorySet(engines, "testing", labels)


def _read_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            return fh.read()
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source.read()
    raise TypeError(f"expected a path or a file object, got {type(source).__name__}")


def parse_trajectories(text, kind):
    """Parse C-MAPSS rows from a string.

    Raises
    ------
    ParseError
        On a line with the wrong column count or a non-numeric token.
    StructuralError
        When an engine's cycles are not 1, 2, 3, ... in file order, or an
        engine id reappears after another engine.
    """
    grouped = {}
    cycles = {}
    order = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != _N_COLUMNS:
            raise ParseError(
                f"expected {_N_COLUMNS} columns, found {len(tokens)}", lineno
            )
        try:
            values = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseError(f"non-numeric token ({exc})", lineno) from None
        engine_f, cycle_f = values[0], values[1]
        if engine_f != int(engine_f) or engine_f < 1:
            raise ParseError(f"engine id {tokens[0]!r} is not a positive integer", lineno)
        if cycle_f != int(cycle_f) or cycle_f < 1:
            raise ParseError(f"cycle {tokens[1]!r} is not a positive integer", lineno)
        engine, cycle = int(engine_f), int(cycle_f)
        if engine not in grouped:
            grouped[engine] = []
            cycles[engine] = []
            order.append(engine)
        elif order[-1] != engine:
            raise StructuralError(f"engine {engine} rows are not contiguous (line {lineno})")
        grouped[engine].append(values[2:])
        cycles[engine].append(cycle)

    engines = {}
    for engine in order:
        c = cycles[engine]
        if c != list(range(1, len(c) + 1)):
            raise StructuralError(
                f"engine {engine}: cycles are not consecutive integers starting at 1"
            )
        engines[engine] = np.asarray(grouped[engine], dtype=float)
    return TrajectorySet(engines, kind)


def read_trajectories(path, kind):
    """Read a C-MAPSS train/test file."""
    return parse_trajectories(_read_text(path), kind)


def format_trajectories(ts):
    """Serialize a trajectory set to C-MAPSS text (exact float round-trip)."""
    lines = []
    for engine in ts.engine_ids:
        for cycle, row in enumerate(ts.engines[engine], start=1):
            lines.append(" ".join([str(engine), str(cycle)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectories(ts, path):
    with open(path, "w") as fh:
        fh.write(format_trajectories(ts))


def parse_rul(text):
    """Parse a RUL file: one non-negative integer per line."""
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 1:
            raise ParseError(f"expected 1 column, found {len(tokens)}", lineno)
        try:
            v = float(tokens[0])
        except ValueError:
            raise ParseError(f"non-numeric token {tokens[0]!r}", lineno) from None
        if v < 0 or v != int(v):
            raise ParseError(f"RUL {tokens[0]!r} is not a non-negative integer", lineno)
        values.append(int(v))
    return values


def read_rul(path):
    return parse_rul(_read_text(path))


def attach_training_labels(ts):
    """Label a run-to-failure set: each engine fails at its last cycle."""
    if ts.kind != "training":
        raise DataError("training labels apply to run-to-failure (training) sets only")
    return replace(ts, labels={i: 0.0 for i in ts.engine_ids})


def attach_testing_labels(ts, rul):
    """Attach ground-truth RUL values (a list or RUL-file source) in engine-id order."""
    if ts.kind != "testing":
        raise DataError("testing labels apply to testing sets only")
    if not isinstance(rul, (list, tuple, np.ndarray)):
        rul = parse_rul(_read_text(rul))
    ids = ts.engine_ids
    if len(rul) != len(ids):
        raise StructuralError(
            f"RUL file has {len(rul)} entries for {len(ids)} testing engines"
        )
    return replace(ts, labels={i: float(v) for i, v in zip(ids, rul)})


@dataclass(frozen=True)
class NormStats:
    """Per-column z-score statistics; constant columns carry ``std = 1``."""

    mean: np.ndarray
    std: np.ndarray


def _column_stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    std = np.where(std <= 1e-12 * scale, 1.0, std)
    # a constant column must map to exactly zero
    constant = np.all(X == X[:1], axis=0)
    mean = np.where(constant, X[0], mean)
    return mean, std


def fit_norm_stats(ts):
    X, _, _ = ts.stacked()
    if X.shape[0] == 0:
        raise DataError("cannot fit normalization on an empty set")
    mean, std = _column_stats(X)
    return NormStats(mean, std)


def apply_norm(ts, stats):
    engines = {i: (rows - stats.mean) / stats.std for i, rows in ts.engines.items()}
    return replace(ts, engines=engines)


def invert_norm(ts, stats):
    engines = {i: rows * stats.std + stats.mean for i, rows in ts.engines.items()}
    return replace(ts, engines=engines)


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Z-score scaler that maps zero-variance columns to 0.

    Attributes
    ----------
    mean_ : ndarray of shape (n_features,)
    scale_ : ndarray of shape (n_features,)
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_, self.scale_ = _column_stats(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DataError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return X * self.scale_ + self.mean_

    @property
    def stats(self):
        check_is_fitted(self, "mean_")
        return NormStats(self.mean_.copy(), self.scale_.copy())

    @classmethod
    def from_stats(cls, stats):
        scaler = cls()
        scaler.mean_ = np.asarray(stats.mean, dtype=float)
        scaler.scale_ = np.asarray(stats.std, dtype=float)
        scaler.n_features_in_ = scaler.mean_.shape[0]
        return scaler
