"""Fully connected leaky-ReLU regressor trained with Adam and an L2 penalty.

Parameters are kept as a plain list of ``(W, b)`` pairs, ``W`` of shape
``(fan_in, fan_out)``. The hidden layers apply a leaky ReLU after the
affine map; the output layer is affine only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DataError, TrainingDivergedError

__all__ = [
    "leaky_relu",
    "init_params",
    "forward",
    "loss_and_grad",
    "AdamState",
    "adam_step",
    "DeepRULRegressor",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def leaky_relu(x, alpha):
    """``x`` for ``x >= 0`` and ``alpha * x`` otherwise."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x, alpha * x)


def _leaky_relu_grad(z, alpha):
    return np.where(z >= 0, 1.0, alpha)


def init_params(layer_sizes, alpha, rng):
    """He initialization adjusted for the leaky slope; zero biases."""
    params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = np.sqrt(2.0 / ((1.0 + alpha**2) * fan_in))
        params.append((rng.normal(0.0, scale, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def _check_input(params, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params[0][0].shape[0]:
        raise DataError(
            f"input has {X.shape[1]} columns, network expects {params[0][0].shape[0]}"
        )
    return X, single


def _forward_cache(params, X, alpha):
    pre, post = [], [X]
    a = X
    for k, (W, b) in enumerate(params):
        z = a @ W + b
        if k < len(params) - 1:
            pre.append(z)
            a = leaky_relu(z, alpha)
            post.append(a)
        else:
            a = z
    return a[:, 0], pre, post


def forward(params, X, alpha):
    """Network output for one row (returns a float) or a batch of rows."""
    X, single = _check_input(params, X)
    out, _, _ = _forward_cache(params, X, alpha)
    return float(out[0]) if single else out


def loss_and_grad(params, X, y, l2, alpha):
    """Mean squared error plus ``l2 * sum ||W||^2`` and its gradient.

    Biases are not penalized.

    Returns
    -------
    loss : float
    grads : list of (dW, db)
    """
    X, _ = _check_input(params, X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n == 0 or y.shape[0] != n:
        raise DataError("batch must be non-empty and match the target length")
    out, pre, post = _forward_cache(params, X, alpha)
    resid = out - y
    penalty = sum(float(np.sum(W * W)) for W, _ in params)
    loss = float(np.mean(resid**2)) + l2 * penalty

    grads = [None] * len(params)
    delta = (2.0 / n) * resid[:, None]
    for k in range(len(params) - 1, -1, -1):
        W, _ = params[k]
        dW = post[k].T @ delta + 2.0 * l2 * W
        db = delta.sum(axis=0)
        grads[k] = (dW, db)
        if k > 0:
            delta = (delta @ W.T) * _leaky_relu_grad(pre[k - 1], alpha)
    return loss, grads


@dataclass
class AdamState:
    """First/second moment buffers and the step counter."""

    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        return cls(m, v, 0)


def adam_step(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """One bias-corrected Adam update; returns new parameters and mutates ``state``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_params = []
    for k, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
        mW, mb = state.m[k]
        vW, vb = state.v[k]
        mW = beta1 * mW + (1 - beta1) * gW
        mb = beta1 * mb + (1 - beta1) * gb
        vW = beta2 * vW + (1 - beta2) * gW * gW
        vb = beta2 * vb + (1 - beta2) * gb * gb
        state.m[k] = (mW, mb)
        state.v[k] = (vW, vb)
        W = W - lr * (mW / c1) / (np.sqrt(vW / c2) + eps)
        b = b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        new_params.append((W, b))
    return new_params


class DeepRULRegressor(RegressorMixin, BaseEstimator):
    """Three-hidden-layer leaky-ReLU network for RUL regression.

    Parameters
    ----------
    learning_rate : float, default=5e-4
        Adam step size.
    l2 : float, default=1e-3
        Weight-decay coefficient added to the loss.
    negative_slope : float, default=0.2
        Leaky-ReLU slope for negative pre-activations.
    hidden_layer_sizes : tuple of int, default=(50, 100, 50)
    epochs : int, default=150
    batch_size : int, default=256
        Minibatch size; batches are reshuffled every epoch.
    standardize_target : bool, default=True
        Train on z-scored targets and undo the scaling in ``predict``.
    random_state : int, optional
        Seeds the initialization and the shuffling.

    Attributes
    ----------
    params_ : list of (W, b)
    loss_curve_ : list of float
        Mean minibatch loss per epoch (in standardized target units).
    train_loss_ : float
        Full-data loss after the last epoch.
    initial_loss_ : float
        Full-data loss at initialization.
    """

    def __init__(
        self,
        learning_rate=5e-4,
        l2=1e-3,
        negative_slope=0.2,
        hidden_layer_sizes=(50, 100, 50),
        epochs=150,
        batch_size=256,
        standardize_target=True,
        random_state=0,
    ):
        self.learning_rate = learning_rate
        self.l2 = l2
        self.negative_slope = negative_slope
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.standardize_target = standardize_target
        self.random_state = random_state

    def _validate_hyperparams(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if not 0 <= self.negative_slope < 1:
            raise ValueError("negative_slope must lie in [0, 1)")
        if any(int(h) < 1 for h in self.hidden_layer_sizes):
            raise ValueError("hidden layer widths must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def fit(self, X, y):
        self._validate_hyperparams()
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        rng = np.random.default_rng(self.random_state)
        n, d = X.shape
        self.n_features_in_ = d

        if self.standardize_target:
            self.target_mean_ = float(y.mean())
            std = float(y.std())
            self.target_scale_ = std if std > 0 else 1.0
        else:
            self.target_mean_, self.target_scale_ = 0.0, 1.0
        ys = (y - self.target_mean_) / self.target_scale_

        sizes = [d, *[int(h) for h in self.hidden_layer_sizes], 1]
        params = init_params(sizes, self.negative_slope, rng)
        state = AdamState.zeros_like(params)
        self.initial_loss_, _ = loss_and_grad(params, X, ys, self.l2, self.negative_slope)

        self.loss_curve_ = []
        batch = min(int(self.batch_size), n)
        # overflow surfaces as a non-finite loss below, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            params = self._train(params, state, X, ys, rng, batch)
        self.train_loss_, _ = loss_and_grad(params, X, ys, self.l2, self.negative_slope)
        if not np.isfinite(self.train_loss_):
            raise TrainingDivergedError("non-finite training loss", int(self.epochs) - 1)
        self.params_ = params
        self.adam_state_ = state
        return self

    def _train(self, params, state, X, ys, rng, batch):
        n = X.shape[0]
        for epoch in range(int(self.epochs)):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                loss, grads = loss_and_grad(params, X[idx], ys[idx], self.l2, self.negative_slope)
                if not np.isfinite(loss):
                    raise TrainingDivergedError("non-finite training loss", epoch)
                params = adam_step(params, grads, state, self.learning_rate)
                total += loss * len(idx)
            self.loss_curve_.append(total / n)
        return params

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        out = forward(self.params_, X, self.negative_slope)
        return out * self.target_scale_ + self.target_mean_
