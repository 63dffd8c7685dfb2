"""Scikit-learn style estimators wrapping the trainers and solvers.

These are thin adapters so the networks compose with the wider ecosystem
(pipelines, ``clone``, grid search): constructor arguments are stored
verbatim, fitting produces trailing-underscore attributes, and inputs run
through the standard validation helpers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import InvalidInputError
from .geometry import find_cluster
from .losses import Dataset, LossConfig
from .models import forward_batch
from .paths import solve_lterm
from .experiments import ExperimentConfig, TrainerSpec, train


def _as_dataset(X, y) -> Dataset:
    X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
    return Dataset(X=np.asarray(X, dtype=np.float64),
                   Y=np.asarray(y, dtype=np.float64))


class _NetRegressor(RegressorMixin, BaseEstimator):
    """Shared fit/predict plumbing for the network families."""

    _family = ""

    def __init__(self, m=32, kappa=0.0, loss="mse", huber_delta=1.0, steps=400,
                 finish_steps=200, lr=0.05, batch=128, random_state=0):
        self.m = m
        self.kappa = kappa
        self.loss = loss
        self.huber_delta = huber_delta
        self.steps = steps
        self.finish_steps = finish_steps
        self.lr = lr
        self.batch = batch
        self.random_state = random_state

    def _config(self, d: Dataset) -> ExperimentConfig:
        return ExperimentConfig(
            seed=self.random_state,
            n=d.n,
            d_y=d.d_y,
            kappa=self.kappa,
            loss=self.loss,
            huber_delta=self.huber_delta,
            trainer=TrainerSpec(steps=self.steps, finish_steps=self.finish_steps,
                                lr=self.lr, batch=self.batch),
        )

    def fit(self, X, y):
        d = _as_dataset(X, y)
        self.n_features_in_ = d.n
        cfg = self._config(d)
        self.params_, self.loss_trace_ = train(self._family, d, cfg, int(self.m),
                                               seed=int(self.random_state))
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = forward_batch(self.params_, np.asarray(X, dtype=np.float64))
        return out[:, 0] if out.shape[1] == 1 else out


class TwoLayerRegressor(_NetRegressor):
    """Width-m two-layer ReLU network trained on the regularized objective."""

    _family = "two-layer"


class SkipNetRegressor(_NetRegressor):
    """Two-layer ReLU network with a skip connection around an inner ReLU block."""

    _family = "skip"

    def __init__(self, m=32, d_g=4, d_o=4, inner=(8,), kappa=0.0, loss="mse",
                 huber_delta=1.0, steps=400, finish_steps=200, lr=0.05, batch=128,
                 random_state=0):
        super().__init__(m=m, kappa=kappa, loss=loss, huber_delta=huber_delta,
                         steps=steps, finish_steps=finish_steps, lr=lr,
                         batch=batch, random_state=random_state)
        self.d_g = d_g
        self.d_o = d_o
        self.inner = inner

    def _config(self, d: Dataset) -> ExperimentConfig:
        cfg = super()._config(d)
        from dataclasses import replace

        return replace(cfg, d_g=self.d_g, d_o=self.d_o, inner=tuple(self.inner))


class LinearSkipRegressor(_NetRegressor):
    """Linear model with a skip connection through a frozen random feature map."""

    _family = "linear-skip"


class SparseTwoLayerApproximator(RegressorMixin, BaseEstimator):
    """Best two-layer fit with at most l nonzero output columns.

    ``fit`` runs the multi-restart projected-gradient solver; the achieved
    objective value (an upper bound on the true infimum) lands in ``e_l_``.
    """

    def __init__(self, l=4, width=None, kappa=0.0, loss="mse", huber_delta=1.0,
                 restarts=8, iters=1500, random_state=0):
        self.l = l
        self.width = width
        self.kappa = kappa
        self.loss = loss
        self.huber_delta = huber_delta
        self.restarts = restarts
        self.iters = iters
        self.random_state = random_state

    def fit(self, X, y, warm_start=None):
        d = _as_dataset(X, y)
        self.n_features_in_ = d.n
        cfg = LossConfig(kind=self.loss, delta=self.huber_delta, kappa=self.kappa)
        width = int(self.width) if self.width is not None else max(int(self.l), 1)
        self.solution_ = solve_lterm(d, cfg, int(self.l), width,
                                     restarts=int(self.restarts),
                                     seed=int(self.random_state),
                                     iters=int(self.iters), warm_start=warm_start)
        self.e_l_ = self.solution_.e_l
        self.params_ = self.solution_.two_layer
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        out = forward_batch(self.params_, np.asarray(X, dtype=np.float64))
        return out[:, 0] if out.shape[1] == 1 else out


class DirectionClusterer(ClusterMixin, BaseEstimator):
    """Densest angular ball among unit directions (rows of X).

    ``labels_`` marks the returned cluster with 1 (representative and
    members) and everything else with 0; the detailed cluster object is in
    ``cluster_``.
    """

    def __init__(self, eta=0.5):
        self.eta = eta

    def fit(self, X, y=None):
        X = check_array(X)
        self.cluster_ = find_cluster(np.asarray(X, dtype=np.float64), float(self.eta))
        labels = np.zeros(X.shape[0], dtype=int)
        labels[list(self.cluster_.all_indices)] = 1
        self.labels_ = labels
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_
