"""Gaussian process regression with a polynomial trend and a nonstationary kernel.

The model is ``Y(x) = H(x) beta + Z(x)`` where ``H(x) = [1, x, x**2]``
(per input dimension) and ``Z`` is a zero-mean GP whose covariance is a
squared-exponential term plus a dot-product term. ``beta`` is estimated by
generalized least squares for every candidate set of kernel
hyperparameters, and the hyperparameters maximize the resulting profile
log marginal likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, NumericalError

__all__ = [
    "KernelParams",
    "kernel_se",
    "kernel_dot",
    "kernel_combined",
    "gram_matrix",
    "trend_basis",
    "NonstationaryGPR",
]

KERNELS = ("combined", "se", "dot")
TRENDS = ("quadratic", "linear", "constant", "none")
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class KernelParams:
    """Covariance hyperparameters.

    Attributes
    ----------
    sigma2 : float
        Squared-exponential amplitude.
    theta : ndarray of shape (d,)
        Inverse squared length scales of the squared-exponential term.
    sigma0_2 : float
        Offset of the dot-product term.
    noise : float
        Observation noise standard deviation.
    """

    sigma2: float = 1.0
    theta: np.ndarray = field(default_factory=lambda: np.ones(1))
    sigma0_2: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        values = [self.sigma2, self.sigma0_2, self.noise, *self.theta]
        if not all(np.isfinite(values)):
            raise DataError("kernel parameters must be finite")
        if self.sigma2 < 0 or self.sigma0_2 < 0 or self.noise < 0 or np.any(self.theta < 0):
            raise DataError("kernel parameters must be non-negative")

    def to_dict(self):
        return {
            "sigma2": float(self.sigma2),
            "theta": [float(v) for v in self.theta],
            "sigma0_2": float(self.sigma0_2),
            "noise": float(self.noise),
        }


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        return x.reshape(1, -1), True
    return x, False


def _pairwise(func):
    def wrapper(xi, xj, params):
        A, single_a = _as_points(xi)
        B, single_b = _as_points(xj)
        if A.shape[1] != B.shape[1]:
            raise DataError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        K = func(A, B, params)
        return float(K[0, 0]) if single_a and single_b else K

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def _sq_dists(A, B):
    # per-dimension squared differences, shape (d, n, m)
    return (A.T[:, :, None] - B.T[:, None, :]) ** 2


def _se(A, B, params):
    theta = np.broadcast_to(params.theta, (A.shape[1],))
    return params.sigma2 * np.exp(-np.tensordot(theta, _sq_dists(A, B), axes=1))


def _dot(A, B, params):
    return params.sigma0_2 + A @ B.T


@_pairwise
def kernel_se(A, B, params):
    """``sigma2 * exp(-sum_k theta_k (a_k - b_k)**2)``."""
    return _se(A, B, params)


@_pairwise
def kernel_dot(A, B, params):
    """``sigma0_2 + <a, b>``; depends on absolute position, not separation."""
    return _dot(A, B, params)


@_pairwise
def kernel_combined(A, B, params):
    """Sum of the squared-exponential and dot-product covariances."""
    return _se(A, B, params) + _dot(A, B, params)


def gram_matrix(A, B, params, kind="combined"):
    A, _ = _as_points(A)
    B, _ = _as_points(B)
    if kind == "combined":
        return _se(A, B, params) + _dot(A, B, params)
    if kind == "se":
        return _se(A, B, params)
    if kind == "dot":
        return _dot(A, B, params)
    raise ValueError(f"unknown kernel {kind!r}")


def trend_basis(X, kind="quadratic"):
    """Regression functions of the mean: ``[1, x, x**2]`` for ``quadratic``."""
    X, _ = _as_points(X)
    n = X.shape[0]
    if kind == "quadratic":
        return np.hstack([np.ones((n, 1)), X, X**2])
    if kind == "linear":
        return np.hstack([np.ones((n, 1)), X])
    if kind == "constant":
        return np.ones((n, 1))
    if kind == "none":
        return np.empty((n, 0))
    raise ValueError(f"unknown trend {kind!r}")


def _jittered_cholesky(K, start=1e-8, stop=1e-2):
    m = K.shape[0]
    # exact factorization first, jitter only when it fails
    try:
        L = cholesky(K, lower=True)
        if np.all(np.diag(L) > 0):
            return L, 0.0
    except LinAlgError:
        pass
    base = max(np.trace(K) / m, np.finfo(float).tiny)
    factor = start
    while factor <= stop * (1 + 1e-9):
        try:
            return cholesky(K + factor * base * np.eye(m), lower=True), factor * base
        except LinAlgError:
            factor *= 10.0
    raise NumericalError("Gram matrix is not positive definite even after jitter 1e-2")


def _gls(L, H, y):
    """GLS trend coefficients and the resulting residual."""
    if H.shape[1] == 0:
        return np.empty(0), y
    KiH = cho_solve((L, True), H)
    A = H.T @ KiH
    rhs = KiH.T @ y
    try:
        beta = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return beta, y - H @ beta


class NonstationaryGPR(RegressorMixin, BaseEstimator):
    """Universal-kriging GP regressor with squared-exponential and dot-product kernels.

    Parameters
    ----------
    kernel : {"combined", "se", "dot"}, default="combined"
        ``combined`` is the nonstationary sum; ``se`` is the stationary
        squared-exponential term alone.
    trend : {"quadratic", "linear", "constant", "none"}, default="quadratic"
    kernel_params : KernelParams, optional
        Fixed hyperparameters when ``optimize=False``; otherwise an extra
        starting point for the optimizer.
    optimize : bool, default=True
    n_restarts : int, default=5
        Number of optimizer starts drawn log-uniformly inside the bounds.
    theta_bounds, sigma2_bounds, sigma0_2_bounds, noise_bounds : tuple of float
        Box constraints for the hyperparameters.
    random_state : int, sequence of int or Generator, optional
        Seeds the restart draws.

    Attributes
    ----------
    kernel_params_ : KernelParams
    beta_ : ndarray
        Trend coefficients.
    log_marginal_likelihood_value_ : float
    restarts_ : list of (float, float)
        Log marginal likelihood at each start and at its optimum.
    """

    def __init__(
        self,
        kernel="combined",
        trend="quadratic",
        kernel_params=None,
        optimize=True,
        n_restarts=5,
        theta_bounds=(1e-3, 1e2),
        sigma2_bounds=(1e-2, 1e4),
        sigma0_2_bounds=(1e-6, 1e2),
        noise_bounds=(1e-3, 1e2),
        random_state=None,
    ):
        self.kernel = kernel
        self.trend = trend
        self.kernel_params = kernel_params
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.theta_bounds = theta_bounds
        self.sigma2_bounds = sigma2_bounds
        self.sigma0_2_bounds = sigma0_2_bounds
        self.noise_bounds = noise_bounds
        self.random_state = random_state

    # -- hyperparameter vector <-> KernelParams -------------------------------

    def _log_bounds(self, d):
        bounds = []
        if self.kernel in ("combined", "se"):
            bounds.append(self.sigma2_bounds)
            bounds.extend([self.theta_bounds] * d)
        if self.kernel in ("combined", "dot"):
            bounds.append(self.sigma0_2_bounds)
        bounds.append(self.noise_bounds)
        return np.log(np.asarray(bounds, dtype=float))

    def _unpack(self, z, d):
        v = np.exp(z)
        i = 0
        sigma2, theta, sigma0_2 = 0.0, np.zeros(d), 0.0
        if self.kernel in ("combined", "se"):
            sigma2, theta = v[0], v[1:1 + d]
            i = 1 + d
        if self.kernel in ("combined", "dot"):
            sigma0_2 = v[i]
            i += 1
        return KernelParams(sigma2, theta, sigma0_2, v[i])

    def _pack(self, params, d):
        z = []
        if self.kernel in ("combined", "se"):
            z.append(params.sigma2)
            z.extend(np.broadcast_to(params.theta, (d,)))
        if self.kernel in ("combined", "dot"):
            z.append(params.sigma0_2)
        z.append(params.noise)
        return np.log(np.maximum(np.asarray(z, dtype=float), 1e-300))

    def _gram(self, A, B, params):
        return gram_matrix(A, B, params, self.kernel)

    # -- likelihood ---------------------------------------------------------------

    def _profile_lml(self, params, X, y, H, dists=None, eval_gradient=False):
        m = X.shape[0]
        K = self._gram(X, X, params)
        K[np.diag_indices(m)] += params.noise**2
        L, _ = _jittered_cholesky(K)
        beta, resid = _gls(L, H, y)
        alpha = cho_solve((L, True), resid)
        lml = -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * m * _LOG2PI
        if not eval_gradient:
            return lml
        # beta sits at its conditional optimum, so its total derivative drops out
        W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(m))
        grads = []
        if self.kernel in ("combined", "se"):
            Kse = _se(X, X, params)
            grads.append(0.5 * np.sum(W * Kse))
            for k in range(X.shape[1]):
                dK = -params.theta[k] * dists[k] * Kse
                grads.append(0.5 * np.sum(W * dK))
        if self.kernel in ("combined", "dot"):
            grads.append(0.5 * params.sigma0_2 * W.sum())
        grads.append(0.5 * np.trace(W) * 2.0 * params.noise**2)
        return lml, np.asarray(grads)

    def log_marginal_likelihood(self, params=None, eval_gradient=False):
        """Profile log marginal likelihood; gradient is w.r.t. log-parameters."""
        check_is_fitted(self, "X_train_")
        params = self.kernel_params_ if params is None else params
        H = trend_basis(self.X_train_, self.trend)
        dists = _sq_dists(self.X_train_, self.X_train_)
        return self._profile_lml(params, self.X_train_, self.y_train_, H, dists, eval_gradient)

    # -- fitting ------------------------------------------------------------------

    def _validate(self, X, y):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.trend not in TRENDS:
            raise ValueError(f"trend must be one of {TRENDS}")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DataError("X and y have inconsistent shapes")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("X and y must be finite")
        p = trend_basis(X[:1], self.trend).shape[1]
        if X.shape[0] < max(p, 1):
            raise DataError(f"need at least {max(p, 1)} points for a {self.trend} trend")
        return X, y

    def fit(self, X, y):
        X, y = self._validate(X, y)
        m, d = X.shape
        self.n_features_in_ = d
        H = trend_basis(X, self.trend)
        dists = _sq_dists(X, X)

        if not self.optimize:
            if self.kernel_params is None:
                raise ValueError("kernel_params are required when optimize=False")
            params = self.kernel_params
            self.restarts_ = []
        else:
            params = self._optimize(X, y, H, dists)

        K = self._gram(X, X, params)
        K[np.diag_indices(m)] += params.noise**2
        L, jitter = _jittered_cholesky(K)
        beta, resid = _gls(L, H, y)
        self.kernel_params_ = params
        self.beta_ = beta
        self.X_train_ = X
        self.y_train_ = y
        self.L_ = L
        self.jitter_ = jitter
        self.alpha_ = cho_solve((L, True), resid)
        self.log_marginal_likelihood_value_ = float(
            self._profile_lml(params, X, y, H, dists)
        )
        return self

    def _optimize(self, X, y, H, dists):
        d = X.shape[1]
        bounds = self._log_bounds(d)
        rng = np.random.default_rng(self.random_state)
        starts = [rng.uniform(bounds[:, 0], bounds[:, 1]) for _ in range(int(self.n_restarts))]
        if self.kernel_params is not None:
            starts.insert(0, np.clip(self._pack(self.kernel_params, d), bounds[:, 0], bounds[:, 1]))
        if not starts:
            raise ValueError("at least one optimizer start is required")

        def objective(z):
            try:
                lml, grad = self._profile_lml(self._unpack(z, d), X, y, H, dists, True)
            except NumericalError:
                return np.inf, np.zeros_like(z)
            if not np.isfinite(lml):
                return np.inf, np.zeros_like(z)
            return -lml, -grad

        best_z, best_val = None, -np.inf
        self.restarts_ = []
        for z0 in starts:
            f0, _ = objective(z0)
            res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds)
            z, fz = res.x, float(res.fun)
            if not np.isfinite(fz) or fz > f0:
                z, fz = z0, f0
            self.restarts_.append((-f0, -fz))
            if -fz > best_val:
                best_z, best_val = z, -fz
        if best_z is None or not np.isfinite(best_val):
            raise NumericalError("marginal likelihood could not be evaluated at any start")
        return self._unpack(best_z, d)

    # -- prediction ---------------------------------------------------------------

    def predict(self, X, return_std=False, return_var=False):
        """Posterior mean (and standard deviation or variance) at ``X``.

        The variance is the latent-function variance
        ``k(x, x) - k_*^T (K + noise**2 I)^-1 k_*``, clipped at zero.
        """
        check_is_fitted(self, "X_train_")
        X = np.asarray(X, dtype=float)
        if X.ndim <= 1:
            X = X.reshape(-1, self.n_features_in_)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} input dimensions, got {X.shape[1]}")
        Ks = self._gram(X, self.X_train_, self.kernel_params_)
        mean = trend_basis(X, self.trend) @ self.beta_ + Ks @ self.alpha_
        if not (return_std or return_var):
            return mean
        v = cho_solve((self.L_, True), Ks.T)
        prior = np.diag(self._gram(X, X, self.kernel_params_)).copy()
        var = np.maximum(prior - np.einsum("ij,ji->i", Ks, v), 0.0)
        if return_var:
            return mean, var
        return mean, np.sqrt(var)
