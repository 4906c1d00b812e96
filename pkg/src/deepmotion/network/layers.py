"""Layer primitives with hand-written backward passes (float64 numpy).

Each ``*_forward`` returns its output plus whatever the matching
``*_backward`` needs. Shapes are documented per function.
"""
from __future__ import annotations

import numpy as np

LOG_EPS = 1e-12
BN_EPS = 1e-5


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def conv_forward(x, w, b):
    """Same-padded 1D convolution, stride 1.

    x: (N, L, Cin); w: (K, Cin, Cout) with odd K; b: (Cout,) -> (N, L, Cout)
    """
    k = w.shape[0]
    pad = k // 2
    length = x.shape[1]
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    out = np.broadcast_to(b, x.shape[:2] + b.shape).copy()
    for i in range(k):
        out += xp[:, i:i + length] @ w[i]
    return out, xp


def conv_backward(dout, xp, w):
    k = w.shape[0]
    pad = k // 2
    length = dout.shape[1]
    cin = xp.shape[2]
    flat_dout = dout.reshape(-1, dout.shape[2])
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for i in range(k):
        window = xp[:, i:i + length]
        dw[i] = window.reshape(-1, cin).T @ flat_dout
        dxp[:, i:i + length] += dout @ w[i].T
    db = flat_dout.sum(axis=0)
    return dxp[:, pad:pad + length], dw, db


def batchnorm_train_forward(x, gamma, beta, mask=None):
    """Normalize with batch statistics over the rows selected by ``mask``.

    x: (n, F); mask: (n,) of 0/1 or None. Returns (out, cache, mean, var).
    """
    m = np.ones(len(x)) if mask is None else np.asarray(mask, dtype=float)
    count = m.sum()
    if count == 0:
        raise ValueError("batch norm needs at least one valid row")
    mean = (m[:, None] * x).sum(axis=0) / count
    xc = x - mean
    var = (m[:, None] * xc * xc).sum(axis=0) / count
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv, gamma, m, count), mean, var


def batchnorm_train_backward(dout, cache):
    xhat, inv, gamma, m, count = cache
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    s1 = dxhat.sum(axis=0)
    s2 = (dxhat * xhat).sum(axis=0)
    dx = inv * dxhat - (m[:, None] * inv / count) * (s1 + xhat * s2)
    return dx, dgamma, dbeta


def batchnorm_eval_forward(x, gamma, beta, running_mean, running_var):
    inv = 1.0 / np.sqrt(running_var + BN_EPS)
    xhat = (x - running_mean) * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def batchnorm_eval_backward(dout, cache):
    xhat, inv, gamma = cache
    return dout * gamma * inv, (dout * xhat).sum(axis=0), dout.sum(axis=0)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def lstm_forward(x, wx, wh, b, h0, c0):
    """Unrolled LSTM, gate order (input, forget, output, candidate).

    x: (T, B, F); wx: (F, 4H); wh: (H, 4H); b: (4H,); h0, c0: (B, H).
    Returns hs (T, B, H), (hT, cT) and a cache.
    """
    steps, batch, _ = x.shape
    hidden = wh.shape[0]
    xw = x @ wx + b
    gates = np.empty((steps, batch, 4 * hidden))
    cs = np.empty((steps, batch, hidden))
    hs = np.empty((steps, batch, hidden))
    h, c = h0, c0
    for t in range(steps):
        z = xw[t] + h @ wh
        g = gates[t]
        g[:, :3 * hidden] = sigmoid(z[:, :3 * hidden])
        g[:, 3 * hidden:] = np.tanh(z[:, 3 * hidden:])
        c = g[:, hidden:2 * hidden] * c + g[:, :hidden] * g[:, 3 * hidden:]
        h = g[:, 2 * hidden:3 * hidden] * np.tanh(c)
        cs[t], hs[t] = c, h
    return hs, (h, c), (x, wx, wh, h0, c0, gates, cs, hs)


def lstm_backward(dhs, cache, dh_last=None, dc_last=None):
    x, wx, wh, h0, c0, gates, cs, hs = cache
    steps, batch, hidden = hs.shape
    dz_all = np.empty_like(gates)
    dwh = np.zeros_like(wh)
    dh_next = np.zeros((batch, hidden)) if dh_last is None else dh_last.copy()
    dc_next = np.zeros((batch, hidden)) if dc_last is None else dc_last.copy()
    for t in reversed(range(steps)):
        g = gates[t]
        i, f, o, cand = (g[:, :hidden], g[:, hidden:2 * hidden],
                         g[:, 2 * hidden:3 * hidden], g[:, 3 * hidden:])
        c_prev = cs[t - 1] if t > 0 else c0
        h_prev = hs[t - 1] if t > 0 else h0
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :hidden] = dc * cand * i * (1.0 - i)
        dz[:, hidden:2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hidden:3 * hidden] = dh * tc * o * (1.0 - o)
        dz[:, 3 * hidden:] = dc * i * (1.0 - cand * cand)
        dwh += h_prev.T @ dz
        dh_next = dz @ wh.T
        dc_next = dc * f
    flat_dz = dz_all.reshape(-1, 4 * hidden)
    dwx = x.reshape(-1, x.shape[2]).T @ flat_dz
    db = flat_dz.sum(axis=0)
    dx = dz_all @ wx.T
    return dx, dwx, dwh, db, dh_next, dc_next


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(dout, x, w):
    flat_x = x.reshape(-1, x.shape[-1])
    flat_d = dout.reshape(-1, dout.shape[-1])
    return dout @ w.T, flat_x.T @ flat_d, flat_d.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(target, prob):
    """Per-row ``-sum(p * log(q + eps))``."""
    return -np.sum(target * np.log(prob + LOG_EPS), axis=-1)


def softmax_cross_entropy_backward(prob, target, weight):
    """Gradient of ``sum_i weight_i * CE(target_i, softmax(logits_i))`` w.r.t. logits.

    Uses the exact derivative of the eps-guarded log, not the ``q - p`` shortcut.
    """
    dq = -target / (prob + LOG_EPS) * weight[..., None]
    return prob * (dq - np.sum(prob * dq, axis=-1, keepdims=True))


def softplus(z):
    return np.logaddexp(0.0, z)


def softplus_squared_error_backward(z, speed_pred, speed_true, weight):
    """Gradient of ``sum_i weight_i * (v_i - softplus(z_i))**2`` w.r.t. ``z``."""
    return 2.0 * (speed_pred - speed_true) * sigmoid(z) * weight
