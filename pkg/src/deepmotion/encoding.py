"""Network input and label encodings.

The state matrix has ``2 * bins + 1`` rows and two columns: the previous
and current scans (normalized by their max range) each stacked on top of
the same target encoding (one-hot direction plus distance in meters).
"""
from __future__ import annotations

import math

import numpy as np

from .lidar import LidarScan

N_BINS = 360


def heading_bin(heading: float, bins: int = N_BINS) -> int:
    """Nearest bin; bin ``b`` covers ``[b - 0.5, b + 0.5)`` in bin units."""
    return int(math.floor(heading * bins / 360.0 + 0.5)) % bins


def encode_target(robot_pos, target_pos, bins: int = N_BINS) -> np.ndarray:
    """One-hot target direction (``bins`` entries) followed by the distance."""
    dx = float(target_pos[0]) - float(robot_pos[0])
    dy = float(target_pos[1]) - float(robot_pos[1])
    dist = math.hypot(dx, dy)
    out = np.zeros(bins + 1)
    b = heading_bin(math.degrees(math.atan2(dy, dx)), bins) if dist >= 1e-9 else 0
    out[b] = 1.0
    out[bins] = dist
    return out


def encode_state(scan_prev: LidarScan, scan_cur: LidarScan, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if len(scan_prev) != len(scan_cur):
        raise ValueError(f"scan lengths differ: {len(scan_prev)} vs {len(scan_cur)}")
    if len(target) != len(scan_cur) + 1:
        raise ValueError(f"target encoding has {len(target)} entries, expected {len(scan_cur) + 1}")
    prev = scan_prev.ranges / scan_prev.max_range
    cur = scan_cur.ranges / scan_cur.max_range
    return np.column_stack([np.concatenate([prev, target]), np.concatenate([cur, target])])


def gaussian_direction_label(heading: float, sigma: float, bins: int = N_BINS) -> np.ndarray:
    """Wrapped Gaussian over heading bins, centred on the rounded heading.

    ``sigma`` is in degrees; ``sigma == 0`` gives a one-hot vector.
    """
    return gaussian_direction_labels(np.array([heading]), sigma, bins)[0]


def gaussian_direction_labels(headings, sigma: float, bins: int = N_BINS) -> np.ndarray:
    """Vectorized :func:`gaussian_direction_label`, shape ``(len(headings), bins)``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    headings = np.asarray(headings, dtype=float).reshape(-1)
    centers = np.floor(headings * bins / 360.0 + 0.5).astype(int) % bins
    if sigma == 0:
        out = np.zeros((len(headings), bins))
        out[np.arange(len(headings)), centers] = 1.0
        return out
    delta = np.abs(np.arange(bins)[None, :] - centers[:, None])
    w = np.minimum(delta, bins - delta).astype(float)
    sigma_bins = sigma * bins / 360.0
    # divide before squaring so a tiny sigma cannot turn the peak into 0/0
    with np.errstate(over="ignore"):
        z = w / sigma_bins
        out = np.exp(-0.5 * z * z)
    return out / out.sum(axis=1, keepdims=True)


def decode_direction(dist) -> float:
    """Argmax bin as a heading in degrees (ties go to the lowest bin)."""
    dist = np.asarray(dist, dtype=float)
    return float(np.argmax(dist)) * 360.0 / len(dist)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))
