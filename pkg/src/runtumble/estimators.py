"""scikit-learn style wrapper around the log-space decay-rate fit."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .convergence import DecayCurve, RateModel, fit_rate


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Fit d(t) ~ C e^{-sigma t} or d(t) ~ C / t.

    ``X`` is a column of times, ``y`` the measured distances.  Points at or below
    ``floor_factor * noise_floor`` are dropped before the fit.  ``score`` is R^2 of log d.
    """

    def __init__(self, model="Exponential", window=None, noise_floor=0.0, floor_factor=1.0):
        self.model = model
        self.window = window
        self.noise_floor = noise_floor
        self.floor_factor = floor_factor

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        order = np.argsort(t, kind="stable")
        curve = DecayCurve(t[order], y[order], "Plain-TV", float(self.noise_floor))
        self.fit_ = fit_rate(curve, RateModel(self.model), self.window, self.floor_factor)
        self.rate_ = self.fit_.rate
        self.intercept_ = self.fit_.intercept
        self.residual_ = self.fit_.residual
        self.free_slope_ = self.fit_.free_slope
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.predict(np.asarray(X, dtype=float).reshape(-1))

    def score(self, X, y, sample_weight=None):
        y = np.log(np.asarray(y, dtype=float).reshape(-1))
        p = np.log(self.predict(X))
        ss = np.sum((y - p) ** 2)
        tot = np.sum((y - y.mean()) ** 2)
        return float(1.0 - ss / tot) if tot > 0 else 0.0
