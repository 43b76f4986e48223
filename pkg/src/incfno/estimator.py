"""Scikit-learn style front end over the operator-learning stack.

``FnoRegressor`` fits a Fourier neural operator on batches of discretized
functions and predicts on any grid at least as fine as its retained
modes, so it drops into pipelines, cross-validation, and grid search like
any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .datasets import Sample
from .model import FnoConfig, init_model
from .scheduler import SchedulerConfig
from .training import TrainConfig, relative_l2, train
from .validation import check_function_batch, check_paired_batches


class FnoRegressor(BaseEstimator):
    """Fourier neural operator regressor with incremental mode growth.

    Parameters mirror the model, scheduler, and optimizer settings; all
    are plain constructor arguments so ``get_params``/``set_params``/
    ``clone`` behave the usual way.  ``scheduler='frequency'`` grows the
    retained modes from ``initial_modes`` whenever the observed strength
    spectrum stops being explained at level ``alpha``; ``'loss'`` grows on
    training-loss plateaus; ``'none'`` trains a fixed-mode operator.
    """

    def __init__(
        self,
        spatial_dims=1,
        layers=4,
        channels=32,
        initial_modes=1,
        buffer_modes=5,
        activation="relu",
        normalization="none",
        init_scale=None,
        coords="periodic",
        scheduler="frequency",
        alpha=0.99,
        check_interval=1,
        loss_epsilon=0.001,
        loss_patience=5,
        loss_step=1,
        max_modes=None,
        growth_init_factor=0.1,
        epochs=500,
        batch_size=8,
        lr=0.001,
        lr_halving_period=100,
        weight_decay=0.0005,
        decay_style="l2",
        seed=0,
    ):
        self.spatial_dims = spatial_dims
        self.layers = layers
        self.channels = channels
        self.initial_modes = initial_modes
        self.buffer_modes = buffer_modes
        self.activation = activation
        self.normalization = normalization
        self.init_scale = init_scale
        self.coords = coords
        self.scheduler = scheduler
        self.alpha = alpha
        self.check_interval = check_interval
        self.loss_epsilon = loss_epsilon
        self.loss_patience = loss_patience
        self.loss_step = loss_step
        self.max_modes = max_modes
        self.growth_init_factor = growth_init_factor
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_halving_period = lr_halving_period
        self.weight_decay = weight_decay
        self.decay_style = decay_style
        self.seed = seed

    # -- config assembly ------------------------------------------------

    def _model_config(self):
        return FnoConfig(
            spatial_dims=self.spatial_dims,
            layers=self.layers,
            channels=self.channels,
            initial_modes=self.initial_modes,
            buffer_modes=self.buffer_modes,
            activation=self.activation,
            normalization=self.normalization,
            init_scale=self.init_scale,
            coords=self.coords,
        )

    def _scheduler_config(self):
        return SchedulerConfig(
            variant=self.scheduler,
            alpha=self.alpha,
            check_interval=self.check_interval,
            loss_epsilon=self.loss_epsilon,
            loss_patience=self.loss_patience,
            loss_step=self.loss_step,
            max_modes=self.max_modes,
            growth_init_factor=self.growth_init_factor,
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr,
            lr_halving_period=self.lr_halving_period,
            weight_decay=self.weight_decay,
            decay_style=self.decay_style,
            seed=self.seed,
        )

    # -- estimator API ----------------------------------------------------

    def fit(self, X, y, eval_set=None):
        """Train on ``(X, y)`` batches of shape ``(n, *grid[, channels])``.

        ``eval_set=(X_val, y_val)`` supplies the per-epoch test split;
        without one the training split doubles as it.
        """
        X, y = check_paired_batches(X, y, self.spatial_dims)
        train_samples = [Sample(xi, yi) for xi, yi in zip(X, y)]
        if eval_set is None:
            test_samples = train_samples
        else:
            Xv, yv = check_paired_batches(eval_set[0], eval_set[1], self.spatial_dims)
            test_samples = [Sample(xi, yi) for xi, yi in zip(Xv, yv)]

        model = init_model(
            self._model_config(), X.shape[-1], y.shape[-1], seed=self.seed
        )
        result = train(
            model, train_samples, test_samples, self._train_config(), self._scheduler_config()
        )
        self.model_ = result.model
        self.history_ = result.records
        self.spectrum_log_ = result.spectrum_rows
        self.expansion_log_ = result.action_rows
        self.modes_ = result.model.modes()
        return self

    def predict(self, X):
        """Evaluate the trained operator sample by sample."""
        self._check_fitted()
        X = check_function_batch(X, self.spatial_dims)
        if X.shape[-1] != self.model_.input_channels:
            raise ValueError(
                f"X has {X.shape[-1]} channels, the model expects {self.model_.input_channels}"
            )
        return np.stack([self.model_.forward(xi) for xi in X])

    def score(self, X, y):
        """Negative mean relative L2 error (higher is better)."""
        X, y = check_paired_batches(X, y, self.spatial_dims)
        preds = self.predict(X)
        return -float(np.mean([relative_l2(p, t) for p, t in zip(preds, y)]))

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this FnoRegressor is not fitted yet; call fit first")
