"""scikit-learn style wrapper around the DeepMoTIon network."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .encoding import N_BINS
from .network.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network.model import HiddenState, NetworkConfig, forward_sequence
from .network.train import train
from .rollout import NetworkPolicy


def check_states(X, config: NetworkConfig) -> np.ndarray:
    """Validate a state sequence: ``(rows, 2)`` or ``(T, rows, 2)`` -> ``(T, rows, 2)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (config.rows, 2):
        raise ValueError(f"expected states of shape (T, {config.rows}, 2), got {X.shape}")
    if len(X) == 0:
        raise ValueError("empty state sequence")
    if not np.all(np.isfinite(X)):
        raise ValueError("states contain non-finite values")
    return X


class DeepMotion(BaseEstimator):
    """Imitation policy predicting (heading, speed) from scans and target.

    ``fit`` accepts a :class:`~deepmotion.dataset.TrajectoryDataset`, a list
    of them (e.g. rotated replicas) or prebuilt training sequences.
    ``predict`` runs one sequence of state matrices through the network in
    eval mode, carrying the recurrent state from step to step.
    ``conv_layers=None`` means 9 for the LSTM variant and 13 for ``"conv"``.
    """

    def __init__(self, variant="lstm", conv_layers=None, filters=8, kernel=3, lstm_units=64,
                 dense_units=64, dropout_rate=0.2, sigma=5.0, bptt_window=20, bn_momentum=0.9,
                 bins=N_BINS, epochs=10, batch_size=8, l2_weight=0.001, max_range=30.0,
                 agent_radius=0.2, random_state=0):
        self.variant = variant
        self.conv_layers = conv_layers
        self.filters = filters
        self.kernel = kernel
        self.lstm_units = lstm_units
        self.dense_units = dense_units
        self.dropout_rate = dropout_rate
        self.sigma = sigma
        self.bptt_window = bptt_window
        self.bn_momentum = bn_momentum
        self.bins = bins
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2_weight = l2_weight
        self.max_range = max_range
        self.agent_radius = agent_radius
        self.random_state = random_state

    def network_config(self) -> NetworkConfig:
        depth = self.conv_layers
        if depth is None:
            depth = 9 if self.variant == "lstm" else 13
        return NetworkConfig(self.variant, depth, self.filters, self.kernel, self.lstm_units,
                             self.dense_units, self.dropout_rate, self.sigma, self.bptt_window,
                             self.bn_momentum, self.bins)

    def fit(self, X, y=None):
        config = self.network_config()
        result = train(X, config, self.epochs, int(self.random_state or 0),
                       l2_weight=self.l2_weight, batch_size=self.batch_size,
                       max_range=self.max_range, agent_radius=self.agent_radius)
        self.config_ = config
        self.params_ = result.params
        self.log_ = result.log
        self.optimizer_ = result.optimizer
        return self

    def _run(self, X):
        check_is_fitted(self, "params_")
        X = check_states(X, self.config_)
        out, _, _ = forward_sequence(self.params_, self.config_, X[:, None],
                                     hidden=HiddenState.zeros(self.config_), train=False)
        return out

    def predict_proba(self, X) -> np.ndarray:
        """Direction distributions, shape ``(T, bins)``."""
        return self._run(X)["direction"][:, 0]

    def predict(self, X) -> np.ndarray:
        """``(T, 2)`` array of ``[heading_degrees, speed]`` per step."""
        out = self._run(X)
        heading = np.argmax(out["direction"][:, 0], axis=1) * (360.0 / self.config_.bins)
        return np.column_stack([heading, out["speed"][:, 0]])

    def policy(self) -> NetworkPolicy:
        check_is_fitted(self, "params_")
        return NetworkPolicy(self.params_, self.config_)

    def save(self, path, meta: dict | None = None) -> None:
        check_is_fitted(self, "params_")
        save_checkpoint(path, Checkpoint(self.params_, self.config_, self.optimizer_,
                                         int(self.random_state or 0),
                                         {"estimator": self.get_params(), **(meta or {})}))

    @classmethod
    def load(cls, path) -> "DeepMotion":
        ckpt = load_checkpoint(path)
        est = cls(**ckpt.meta.get("estimator", {}))
        est.config_ = ckpt.config
        est.params_ = ckpt.params
        est.optimizer_ = ckpt.optimizer
        est.log_ = []
        return est
