"""DeepMoTIon network: shared conv stack with input skips, batch norm, dropout,
then separate direction and speed branches (LSTM + dense, or dense only for
the conv-only ablation).

Sequences are laid out time-major: states ``(T, B, rows, 2)``, step mask
``(T, B)``. Everything runs in float64.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..encoding import N_BINS, gaussian_direction_labels
from . import layers as L

BRANCHES = ("dir", "speed")
BUFFERS = ("bn.running_mean", "bn.running_var")


class NonFiniteError(FloatingPointError):
    """Raised when an activation or gradient stops being finite."""


@dataclass
class NetworkConfig:
    variant: str = "lstm"
    conv_layers: int = 9
    filters: int = 8
    kernel: int = 3
    lstm_units: int = 64
    dense_units: int = 64
    dropout_rate: float = 0.2
    sigma: float = 5.0
    bptt_window: int = 20
    bn_momentum: float = 0.9
    bins: int = N_BINS

    def __post_init__(self):
        if self.variant not in ("lstm", "conv"):
            raise ValueError(f"variant must be 'lstm' or 'conv', got {self.variant!r}")
        for name in ("conv_layers", "filters", "lstm_units", "dense_units", "bptt_window", "bins"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel must be a positive odd number")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 <= self.bn_momentum < 1:
            raise ValueError("bn_momentum must lie in [0, 1)")

    @classmethod
    def conv_only(cls, **overrides) -> "NetworkConfig":
        """Ablation without LSTMs; deeper conv stack to compensate."""
        return cls(**{"variant": "conv", "conv_layers": 13, **overrides})

    @property
    def rows(self) -> int:
        return 2 * self.bins + 1

    @property
    def n_features(self) -> int:
        return self.rows * 2 * self.filters + self.bins + 1

    @property
    def recurrent(self) -> bool:
        return self.variant == "lstm"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HiddenState:
    """Per-branch ``(h, c)`` carry, each ``(batch, lstm_units)``."""

    branches: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @classmethod
    def zeros(cls, config: NetworkConfig, batch: int = 1) -> "HiddenState":
        if not config.recurrent:
            return cls({})
        h = config.lstm_units
        return cls({b: (np.zeros((batch, h)), np.zeros((batch, h))) for b in BRANCHES})

    def detached(self) -> "HiddenState":
        return HiddenState({k: (h.copy(), c.copy()) for k, (h, c) in self.branches.items()})


@dataclass
class Prediction:
    direction: np.ndarray
    speed: float


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: NetworkConfig, rng: np.random.Generator | int = 0) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases (LSTM forget bias 1)."""
    rng = np.random.default_rng(rng)
    p: dict[str, np.ndarray] = {}
    f, k = config.filters, config.kernel
    for i in range(config.conv_layers):
        cin = 1 if i == 0 else f + 1
        p[f"conv{i}.weight"] = _uniform(rng, (k, cin, f), k * cin)
        p[f"conv{i}.bias"] = np.zeros(f)
    nf = config.n_features
    p["bn.gamma"] = np.ones(nf)
    p["bn.beta"] = np.zeros(nf)
    p["bn.running_mean"] = np.zeros(nf)
    p["bn.running_var"] = np.ones(nf)
    out_dims = {"dir": config.bins, "speed": 1}
    for br in BRANCHES:
        width = nf
        if config.recurrent:
            h = config.lstm_units
            p[f"{br}.lstm.wx"] = _uniform(rng, (nf, 4 * h), nf)
            p[f"{br}.lstm.wh"] = _uniform(rng, (h, 4 * h), h)
            bias = np.zeros(4 * h)
            bias[h:2 * h] = 1.0
            p[f"{br}.lstm.bias"] = bias
            width = h
        d = config.dense_units
        p[f"{br}.dense.weight"] = _uniform(rng, (width, d), width)
        p[f"{br}.dense.bias"] = np.zeros(d)
        p[f"{br}.out.weight"] = _uniform(rng, (d, out_dims[br]), d)
        p[f"{br}.out.bias"] = np.zeros(out_dims[br])
    return p


def expected_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(config, 0).items()}


def check_params(params: dict[str, np.ndarray], config: NetworkConfig) -> None:
    for name, shape in expected_shapes(config).items():
        if name not in params:
            raise KeyError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise NonFiniteError(f"parameter {name} is not finite")


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite activations in layer {name}")


def forward_sequence(params, config: NetworkConfig, states, mask=None, hidden=None, *,
                     train=False, bn_batch_stats=None, dropout=None):
    """Run the network over a batch of sequences.

    ``bn_batch_stats`` selects batch statistics for batch norm (defaults to
    ``train``); ``dropout`` is an explicit multiplier array of shape
    ``(T, B, n_features)`` or a Generator to draw one from (train only).

    Returns ``(outputs, cache, new_hidden)``; ``outputs`` holds
    ``direction`` (T, B, bins), ``speed`` (T, B) and, when batch statistics
    were used, ``bn_mean``/``bn_var``.
    """
    states = np.asarray(states, dtype=float)
    steps, batch, rows, cols = states.shape
    if rows != config.rows or cols != 2:
        raise ValueError(f"state shape {(rows, cols)} does not match config {(config.rows, 2)}")
    mask = np.ones((steps, batch)) if mask is None else np.asarray(mask, dtype=float)
    hidden = HiddenState.zeros(config, batch) if hidden is None else hidden
    use_batch = train if bn_batch_stats is None else bn_batch_stats
    n = steps * batch
    f = config.filters

    raw = states.reshape(n, rows, 2).transpose(0, 2, 1).reshape(n * 2, rows, 1)
    x = raw
    conv_cache = []
    for i in range(config.conv_layers):
        inp = raw if i == 0 else np.concatenate([x, raw], axis=2)
        pre, xp = L.conv_forward(inp, params[f"conv{i}.weight"], params[f"conv{i}.bias"])
        x = np.tanh(pre)
        _check(f"conv{i}", x)
        conv_cache.append((xp, x))
    target = states[:, :, config.bins:, 0].reshape(n, config.bins + 1)
    feats = np.concatenate([x.reshape(n, 2 * rows * f), target], axis=1)

    outputs = {}
    if use_batch:
        normed, bn_cache, mean, var = L.batchnorm_train_forward(
            feats, params["bn.gamma"], params["bn.beta"], mask.reshape(n))
        outputs["bn_mean"], outputs["bn_var"] = mean, var
    else:
        normed, bn_cache = L.batchnorm_eval_forward(
            feats, params["bn.gamma"], params["bn.beta"],
            params["bn.running_mean"], params["bn.running_var"])
    _check("bn", normed)

    drop = None
    if train and config.dropout_rate > 0:
        if isinstance(dropout, np.random.Generator):
            drop = L.dropout_mask(dropout, normed.shape, config.dropout_rate)
        elif dropout is not None:
            drop = np.asarray(dropout, dtype=float).reshape(normed.shape)
        else:
            raise ValueError("train mode with dropout needs a Generator or an explicit mask")
        normed = normed * drop
    seq = normed.reshape(steps, batch, -1)

    branch_cache = {}
    new_hidden = {}
    for br in BRANCHES:
        c = {}
        h_in = seq
        if config.recurrent:
            h0, c0 = hidden.branches[br]
            hs, carry, c["lstm"] = L.lstm_forward(
                seq, params[f"{br}.lstm.wx"], params[f"{br}.lstm.wh"], params[f"{br}.lstm.bias"], h0, c0)
            _check(f"{br}.lstm", hs)
            new_hidden[br] = carry
            h_in = hs
        c["dense_in"] = h_in
        d = np.tanh(L.dense_forward(h_in, params[f"{br}.dense.weight"], params[f"{br}.dense.bias"]))
        _check(f"{br}.dense", d)
        c["dense_out"] = d
        z = L.dense_forward(d, params[f"{br}.out.weight"], params[f"{br}.out.bias"])
        _check(f"{br}.out", z)
        c["z"] = z
        branch_cache[br] = c

    outputs["direction"] = L.softmax(branch_cache["dir"]["z"])
    speed_z = branch_cache["speed"]["z"][..., 0]
    outputs["speed"] = L.softplus(speed_z)
    outputs["speed_z"] = speed_z
    cache = {"conv": conv_cache, "raw": raw, "bn": bn_cache, "bn_batch": use_batch,
             "drop": drop, "branch": branch_cache, "shape": (steps, batch, rows)}
    return outputs, cache, HiddenState(new_hidden)


def step_losses(outputs, speeds, dir_targets):
    """Per-step speed and direction losses, each (T, B)."""
    speed_loss = (np.asarray(speeds) - outputs["speed"]) ** 2
    dir_loss = L.cross_entropy(dir_targets, outputs["direction"])
    return speed_loss, dir_loss


def backward_sequence(params, config: NetworkConfig, outputs, cache, speeds, dir_targets, mask,
                      scale=1.0):
    """Gradients of ``scale * mean_valid(speed_loss + dir_loss)``."""
    steps, batch, rows = cache["shape"]
    n = steps * batch
    f = config.filters
    weight = scale * mask / mask.sum()
    grads: dict[str, np.ndarray] = {}

    dz = {
        "dir": L.softmax_cross_entropy_backward(outputs["direction"], dir_targets, weight),
        "speed": L.softplus_squared_error_backward(
            outputs["speed_z"], outputs["speed"], speeds, weight)[..., None],
    }
    dseq = np.zeros((steps, batch, config.n_features))
    for br in BRANCHES:
        c = cache["branch"][br]
        dd, grads[f"{br}.out.weight"], grads[f"{br}.out.bias"] = L.dense_backward(
            dz[br], c["dense_out"], params[f"{br}.out.weight"])
        dd = dd * (1.0 - c["dense_out"] ** 2)
        dh, grads[f"{br}.dense.weight"], grads[f"{br}.dense.bias"] = L.dense_backward(
            dd, c["dense_in"], params[f"{br}.dense.weight"])
        if config.recurrent:
            dx, dwx, dwh, db, _, _ = L.lstm_backward(dh, c["lstm"])
            grads[f"{br}.lstm.wx"], grads[f"{br}.lstm.wh"], grads[f"{br}.lstm.bias"] = dwx, dwh, db
            dseq += dx
        else:
            dseq += dh

    dnormed = dseq.reshape(n, -1)
    if cache["drop"] is not None:
        dnormed = dnormed * cache["drop"]
    if cache["bn_batch"]:
        dfeats, grads["bn.gamma"], grads["bn.beta"] = L.batchnorm_train_backward(dnormed, cache["bn"])
    else:
        dfeats, grads["bn.gamma"], grads["bn.beta"] = L.batchnorm_eval_backward(dnormed, cache["bn"])

    dx = dfeats[:, :2 * rows * f].reshape(n * 2, rows, f)
    for i in reversed(range(config.conv_layers)):
        xp, out = cache["conv"][i]
        dpre = dx * (1.0 - out * out)
        dinp, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = L.conv_backward(
            dpre, xp, params[f"conv{i}.weight"])
        dx = dinp[:, :, :f]

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name}")
    return grads


def forward(params, state, hidden=None, mode="eval", *, config: NetworkConfig, rng=None):
    """Single-step prediction for one state matrix ``(rows, 2)``.

    Batch norm uses the running moments in both modes (a single step has no
    batch statistics); ``mode="train"`` only switches dropout on.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and config.dropout_rate > 0 and rng is None:
        rng = np.random.default_rng(0)
    out, _, new_hidden = forward_sequence(
        params, config, np.asarray(state, dtype=float)[None, None], hidden=hidden,
        train=train, bn_batch_stats=False, dropout=rng if train else None)
    pred = Prediction(out["direction"][0, 0], float(out["speed"][0, 0]))
    return pred, new_hidden


def loss(pred: Prediction, label, sigma: float, bins: int | None = None) -> float:
    """Squared speed error plus cross-entropy against the smoothed direction label."""
    bins = len(pred.direction) if bins is None else bins
    target = gaussian_direction_labels([label.heading], sigma, bins)[0]
    return float((label.speed - pred.speed) ** 2 + L.cross_entropy(target, pred.direction))


def batch_loss(preds, labels, sigma: float) -> float:
    """Mean of per-step losses."""
    return float(np.mean([loss(p, y, sigma) for p, y in zip(preds, labels)]))


def sequence_arrays(sequence, config: NetworkConfig):
    """Stack ``[(state, StepLabel), ...]`` into (T, 1, rows, 2), speeds, targets."""
    states = np.stack([np.asarray(s, dtype=float) for s, _ in sequence])[:, None]
    speeds = np.array([[lab.speed] for _, lab in sequence])
    headings = np.array([lab.heading for _, lab in sequence])
    targets = gaussian_direction_labels(headings, config.sigma, config.bins)[:, None]
    return states, speeds, targets


def loss_and_gradients(params, config: NetworkConfig, states, speeds, dir_targets, mask=None,
                       hidden=None, *, dropout=None, scale=1.0):
    """Train-mode forward + backward over one window.

    Returns ``(loss, grads, outputs, new_hidden)``; the loss is the mean
    over valid steps, multiplied by ``scale``.
    """
    states = np.asarray(states, dtype=float)
    mask = np.ones(states.shape[:2]) if mask is None else np.asarray(mask, dtype=float)
    outputs, cache, new_hidden = forward_sequence(
        params, config, states, mask, hidden, train=True, dropout=dropout)
    sl, dl = step_losses(outputs, speeds, dir_targets)
    outputs["speed_loss"], outputs["dir_loss"] = sl, dl
    total = scale * float(np.sum((sl + dl) * mask) / mask.sum())
    grads = backward_sequence(params, config, outputs, cache, speeds, dir_targets, mask, scale)
    return total, grads, outputs, new_hidden


def gradients(params, sequence, config: NetworkConfig, seed: int = 0, scale: float = 1.0):
    """Exact gradients of the mean loss over ``[(state, StepLabel), ...]``.

    The LSTM is unrolled over the whole sequence; dropout masks come from
    ``seed``.
    """
    if len(sequence) < 1:
        raise ValueError("sequence must contain at least one step")
    states, speeds, targets = sequence_arrays(sequence, config)
    _, grads, _, _ = loss_and_gradients(params, config, states, speeds, targets,
                                        dropout=np.random.default_rng(seed), scale=scale)
    return grads
