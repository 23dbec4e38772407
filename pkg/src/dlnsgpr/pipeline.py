"""Two-phase RUL model: deep network over SVD features, then per-engine GP smoothing.

Phase I normalizes the 24 raw features, projects them onto a truncated SVD
basis, appends a standardized cycle index and trains the network on the
linear RUL labels. Phase II takes the per-cycle network output of a single
truncated engine, fits a GP over ``(cycle / t_c, RUL_t)`` and reports the
posterior at ``t_c`` with a Gaussian confidence interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cmapss import FeatureScaler, TrajectorySet
from .exceptions import DataError, DLNSGPRError, NumericalError
from .gp import NonstationaryGPR
from .mlp import DeepRULRegressor
from .svd import TruncatedSVDFeatures

__all__ = ["RulPrediction", "DLNSGPR", "z_value", "confidence_interval", "VARIANTS"]

logger = logging.getLogger(__name__)

VARIANTS = ("full", "stationary_gpr", "dl_only")
MIN_GP_POINTS = 3


def z_value(ci_level):
    """Two-sided standard normal quantile, e.g. 1.6449 for 0.90."""
    if not 0 < ci_level < 1:
        raise ValueError(f"ci_level must lie in (0, 1), got {ci_level}")
    return float(norm.ppf(0.5 + ci_level / 2.0))


def confidence_interval(mean, std, ci_level):
    """Symmetric Gaussian interval clipped at zero remaining life."""
    z = z_value(ci_level)
    return max(mean - z * std, 0.0), max(mean + z * std, 0.0)


@dataclass
class RulPrediction:
    """Stochastic RUL prediction for one engine at its truncation cycle."""

    engine_id: int
    t_c: int
    mean_rul: float
    std: float
    ci_low: float
    ci_high: float
    ci_level: float
    variant: str = "full"
    predicted_failure_cycle: float | None = None
    degraded: bool = False
    dl_trajectory: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    gp_mean: np.ndarray | None = field(default=None, repr=False)
    gp_std: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None


class DLNSGPR(BaseEstimator):
    """Deep network plus nonstationary GP remaining-useful-life model.

    Parameters
    ----------
    svd_threshold : float, default=0.9
        Singular-mass fraction used to choose the SVD rank.
    learning_rate, l2, negative_slope, hidden_layer_sizes, epochs, batch_size
        Network hyperparameters, see :class:`DeepRULRegressor`.
    rul_cap : float, optional
        Clip training labels from above; off by default.
    ci_level : float, default=0.9
    gp_restarts : int, default=5
    gp_theta_bounds, gp_sigma2_bounds, gp_sigma0_2_bounds, gp_noise_bounds : tuple
        Hyperparameter boxes for the Phase II GP.
    ci_include_noise : bool, default=True
        Report the predictive spread of the observed trajectory, i.e. add
        the fitted noise variance to the latent posterior variance.
    failure_horizon : int, default=500
        Cycles past ``t_c`` to search for the predicted zero crossing.
    seed : int, default=0
        Seeds the network and, combined with the engine id, the GP restarts.

    Attributes
    ----------
    scaler_ : FeatureScaler
    svd_ : TruncatedSVDFeatures
    time_mean_, time_scale_ : float
        Standardization of the appended cycle input.
    mlp_ : DeepRULRegressor
    residual_std_ : float
        Standard deviation of the training residuals of the network.
    """

    def __init__(
        self,
        svd_threshold=0.9,
        learning_rate=5e-4,
        l2=1e-3,
        negative_slope=0.2,
        hidden_layer_sizes=(50, 100, 50),
        epochs=150,
        batch_size=256,
        rul_cap=None,
        ci_level=0.9,
        gp_restarts=5,
        gp_theta_bounds=(1e-3, 1e2),
        gp_sigma2_bounds=(1e-2, 1e4),
        gp_sigma0_2_bounds=(1e-6, 1e2),
        gp_noise_bounds=(1e-3, 1e2),
        ci_include_noise=True,
        failure_horizon=500,
        seed=0,
    ):
        self.svd_threshold = svd_threshold
        self.learning_rate = learning_rate
        self.l2 = l2
        self.negative_slope = negative_slope
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.rul_cap = rul_cap
        self.ci_level = ci_level
        self.gp_restarts = gp_restarts
        self.gp_theta_bounds = gp_theta_bounds
        self.gp_sigma2_bounds = gp_sigma2_bounds
        self.gp_sigma0_2_bounds = gp_sigma0_2_bounds
        self.gp_noise_bounds = gp_noise_bounds
        self.ci_include_noise = ci_include_noise
        self.failure_horizon = failure_horizon
        self.seed = seed

    # -- Phase I ----------------------------------------------------------------

    def fit(self, X, y=None):
        """Train Phase I on a labelled run-to-failure :class:`TrajectorySet`."""
        if not isinstance(X, TrajectorySet):
            raise TypeError("fit expects a labelled training TrajectorySet")
        if X.kind != "training" or X.labels is None:
            raise DataError("Phase I needs a labelled run-to-failure training set")
        if len(X) == 0:
            raise DataError("training set is empty")
        raw, cycles, _ = X.stacked()
        targets = X.rul_targets(self.rul_cap)

        self.scaler_ = FeatureScaler().fit(raw)
        self.svd_ = TruncatedSVDFeatures(threshold=self.svd_threshold).fit(
            self.scaler_.transform(raw)
        )
        self.time_mean_ = float(cycles.mean())
        std = float(cycles.std())
        self.time_scale_ = std if std > 0 else 1.0

        inputs = self._network_inputs(raw, cycles)
        self.mlp_ = DeepRULRegressor(
            learning_rate=self.learning_rate,
            l2=self.l2,
            negative_slope=self.negative_slope,
            hidden_layer_sizes=tuple(self.hidden_layer_sizes),
            epochs=self.epochs,
            batch_size=self.batch_size,
            random_state=self.seed,
        ).fit(inputs, targets)
        self.residual_std_ = float(np.std(targets - self.mlp_.predict(inputs)))
        self.n_features_in_ = raw.shape[1]
        return self

    @property
    def svd_rank_(self):
        return self.svd_.n_components_

    def _network_inputs(self, raw, cycles):
        z = self.svd_.transform(self.scaler_.transform(raw))
        t = (np.asarray(cycles, dtype=float) - self.time_mean_) / self.time_scale_
        return np.hstack([z, t[:, None]])

    def predict_trajectory(self, engine_rows):
        """Network estimate ``RUL_t`` at every available cycle of one engine.

        Returns
        -------
        cycles : ndarray of shape (n,)
        rul : ndarray of shape (n,)
        """
        check_is_fitted(self, "mlp_")
        rows = np.asarray(engine_rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise DataError("engine trajectory is empty")
        if rows.shape[1] != self.n_features_in_:
            raise DataError(
                f"engine rows have {rows.shape[1]} features, model was trained on "
                f"{self.n_features_in_}"
            )
        cycles = np.arange(1, rows.shape[0] + 1, dtype=float)
        return cycles, self.mlp_.predict(self._network_inputs(rows, cycles))

    # -- Phase II ---------------------------------------------------------------

    def _gp(self, variant, engine_id):
        kernel, trend = ("combined", "quadratic") if variant == "full" else ("se", "constant")
        return NonstationaryGPR(
            kernel=kernel,
            trend=trend,
            n_restarts=self.gp_restarts,
            theta_bounds=self.gp_theta_bounds,
            sigma2_bounds=self.gp_sigma2_bounds,
            sigma0_2_bounds=self.gp_sigma0_2_bounds,
            noise_bounds=self.gp_noise_bounds,
            random_state=[int(self.seed), int(engine_id)],
        )

    def fit_engine_gp(self, engine_id, engine_rows, variant="full"):
        """Fit the Phase II GP on one engine's network trajectory."""
        cycles, rul = self.predict_trajectory(engine_rows)
        t_c = cycles[-1]
        gp = self._gp(variant, engine_id).fit(cycles / t_c, rul)
        return gp, cycles, rul

    def predict_engine(self, engine_id, engine_rows, ci_level=None, variant="full",
                       extrapolate=True):
        """Predict the RUL of one truncated engine at its last cycle."""
        check_is_fitted(self, "mlp_")
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        ci_level = self.ci_level if ci_level is None else ci_level
        cycles, rul = self.predict_trajectory(engine_rows)
        t_c = int(cycles[-1])

        if variant == "dl_only" or t_c < MIN_GP_POINTS:
            return self._network_only(engine_id, t_c, rul, ci_level, variant,
                                      degraded=variant != "dl_only")
        try:
            gp = self._gp(variant, engine_id).fit(cycles / t_c, rul)
            gp_mean, gp_var = gp.predict(cycles / t_c, return_var=True)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            logger.warning("engine %s: GP failed (%s); reporting network output", engine_id, exc)
            pred = self._network_only(engine_id, t_c, rul, ci_level, variant, degraded=True)
            pred.error = str(exc)
            return pred

        if self.ci_include_noise:
            gp_var = gp_var + gp.kernel_params_.noise**2
        gp_std = np.sqrt(gp_var)
        mean = max(float(gp_mean[-1]), 0.0)
        std = float(gp_std[-1])
        low, high = confidence_interval(mean, std, ci_level)
        failure = self._zero_crossing(gp, t_c) if extrapolate else None
        return RulPrediction(
            engine_id=int(engine_id), t_c=t_c, mean_rul=mean, std=std,
            ci_low=low, ci_high=high, ci_level=ci_level, variant=variant,
            predicted_failure_cycle=failure, dl_trajectory=rul,
            gp_mean=gp_mean, gp_std=gp_std,
        )

    def _network_only(self, engine_id, t_c, rul, ci_level, variant, degraded):
        mean = max(float(rul[-1]), 0.0)
        std = self.residual_std_
        low, high = confidence_interval(mean, std, ci_level)
        return RulPrediction(
            engine_id=int(engine_id), t_c=t_c, mean_rul=mean, std=std,
            ci_low=low, ci_high=high, ci_level=ci_level, variant=variant,
            predicted_failure_cycle=t_c + mean, degraded=degraded, dl_trajectory=rul,
        )

    def _zero_crossing(self, gp, t_c):
        if gp.predict(np.array([1.0]))[0] <= 0:
            return float(t_c)
        horizon = np.arange(t_c + 1, t_c + int(self.failure_horizon) + 1, dtype=float)
        mean = gp.predict(horizon / t_c)
        hits = np.nonzero(mean <= 0)[0]
        return float(horizon[hits[0]]) if hits.size else None

    def extrapolate_failure(self, engine_id, engine_rows, variant="full"):
        """Smallest integer cycle ``>= t_c`` where the GP mean reaches zero.

        Returns ``None`` when no crossing occurs within ``failure_horizon``.
        """
        gp, cycles, _ = self.fit_engine_gp(engine_id, engine_rows, variant)
        return self._zero_crossing(gp, int(cycles[-1]))

    def predict(self, X, ci_level=None, variant="full", extrapolate=True, n_jobs=None):
        """Predict every engine of a testing set, in engine-id order.

        Per-engine failures are recorded on the returned prediction instead
        of aborting the batch.
        """
        check_is_fitted(self, "mlp_")
        if not isinstance(X, TrajectorySet):
            raise TypeError("predict expects a TrajectorySet")

        def one(engine_id):
            try:
                return self.predict_engine(engine_id, X.engines[engine_id], ci_level,
                                           variant, extrapolate)
            except DLNSGPRError as exc:
                logger.warning("engine %s: %s", engine_id, exc)
                return RulPrediction(
                    engine_id=int(engine_id), t_c=X.truncation_cycle(engine_id),
                    mean_rul=float("nan"), std=float("nan"), ci_low=float("nan"),
                    ci_high=float("nan"), ci_level=self.ci_level if ci_level is None else ci_level,
                    variant=variant, degraded=True, error=str(exc),
                )

        ids = X.engine_ids
        if n_jobs in (None, 1):
            return [one(i) for i in ids]
        from joblib import Parallel, delayed

        return Parallel(n_jobs=n_jobs)(delayed(one)(i) for i in ids)
