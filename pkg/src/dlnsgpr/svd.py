"""Truncated SVD feature extraction with the singular-mass rank rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError

__all__ = ["SvdBasis", "select_rank", "fit_svd", "project", "TruncatedSVDFeatures"]


@dataclass(frozen=True)
class SvdBasis:
    """Fitted centering vector and truncated right-singular basis.

    Attributes
    ----------
    column_means : ndarray of shape (n_features,)
    singular_values : ndarray of shape (r,)
        Full non-increasing spectrum of the centered training matrix.
    components : ndarray of shape (n_features, rank)
        Orthonormal right-singular vectors ``V_t``.
    rank : int
    """

    column_means: np.ndarray
    singular_values: np.ndarray
    components: np.ndarray
    rank: int

    @property
    def n_features(self):
        return self.column_means.shape[0]


def select_rank(singular_values, threshold=0.9):
    """Smallest ``t`` whose leading singular values hold ``threshold`` of the total.

    Parameters
    ----------
    singular_values : array-like of shape (r,)
        Non-increasing, non-negative spectrum.
    threshold : float, default=0.9

    Returns
    -------
    t : int
    """
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise DataError("singular values must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise DataError("singular values must be finite and non-negative")
    if np.any(np.diff(s) > 0):
        raise DataError("singular values must be non-increasing")
    if not 0 < threshold <= 1:
        raise DataError(f"threshold must lie in (0, 1], got {threshold}")
    total = s.sum()
    if total <= 0:
        raise DataError("degenerate spectrum: all singular values are zero")
    cumulative = np.cumsum(s)
    # relative slack so exact ties survive rounding in the cumulative sum
    hits = np.nonzero(cumulative >= threshold * total * (1 - 1e-12))[0]
    return int(hits[0]) + 1


def fit_svd(X, threshold=0.9, rank=None, center=True):
    """Center ``X`` column-wise and fit its truncated SVD.

    ``rank`` overrides the threshold rule when given. With ``center=False``
    the stored column means are zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError("X must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite entries")
    means = X.mean(axis=0) if center else np.zeros(X.shape[1])
    _, s, vt = np.linalg.svd(X - means, full_matrices=False)
    # sign convention: largest-magnitude loading of each vector is positive
    pivot = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), pivot])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    t = select_rank(s, threshold) if rank is None else int(rank)
    if not 1 <= t <= s.size:
        raise DataError(f"rank {t} outside [1, {s.size}]")
    return SvdBasis(means, s, np.ascontiguousarray(vt[:t].T), t)


def project(rows, basis):
    """Map rows to ``(rows - column_means) @ V_t``."""
    rows = np.asarray(rows, dtype=float)
    single = rows.ndim == 1
    rows = np.atleast_2d(rows)
    if rows.shape[1] != basis.n_features:
        raise DataError(
            f"rows have {rows.shape[1]} columns, basis expects {basis.n_features}"
        )
    out = (rows - basis.column_means) @ basis.components
    return out[0] if single else out


class TruncatedSVDFeatures(TransformerMixin, BaseEstimator):
    """Project features onto the leading right-singular vectors.

    Parameters
    ----------
    threshold : float, default=0.9
        Fraction of the summed singular values the kept components must
        reach; the smallest such rank is used.
    n_components : int, optional
        Fixed rank, overriding ``threshold``.

    Attributes
    ----------
    basis_ : SvdBasis
    n_components_ : int
    """

    def __init__(self, threshold=0.9, n_components=None):
        self.threshold = threshold
        self.n_components = n_components

    def fit(self, X, y=None):
        self.basis_ = fit_svd(X, self.threshold, self.n_components)
        self.n_components_ = self.basis_.rank
        self.n_features_in_ = self.basis_.n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return project(np.atleast_2d(X), self.basis_)

    def inverse_transform(self, Z):
        check_is_fitted(self, "basis_")
        return np.asarray(Z, dtype=float) @ self.basis_.components.T + self.basis_.column_means
