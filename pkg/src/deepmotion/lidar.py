"""Simulated 2D LiDAR: exact ray casting against map segments and agent circles.

Beam ``i`` points at ``i`` degrees in the world frame (bin 0 along +x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import ObstacleMap, TrajectoryDataset

N_BEAMS = 360
DEFAULT_MAX_RANGE = 30.0
AGENT_RADIUS = 0.2
_PARALLEL_EPS = 1e-12
_EDGE_EPS = 1e-12


@dataclass
class LidarScan:
    ranges: np.ndarray
    max_range: float

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.ranges.ndim != 1:
            raise ValueError("ranges must be one-dimensional")

    def __len__(self) -> int:
        return len(self.ranges)


@dataclass
class SceneSnapshot:
    """Static map plus agent positions at one instant.

    The agent whose id equals ``excluded_id`` (the one the robot replaced)
    is never cast against.
    """

    map: ObstacleMap = field(default_factory=ObstacleMap)
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    agent_radius: float = AGENT_RADIUS
    excluded_id: int | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=int).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(self.ids) != len(self.positions):
            raise ValueError("ids and positions differ in length")
        if not self.agent_radius > 0:
            raise ValueError("agent_radius must be positive")

    def others(self) -> np.ndarray:
        """Positions of every agent except the excluded one."""
        if self.excluded_id is None:
            return self.positions
        return self.positions[self.ids != self.excluded_id]

    @classmethod
    def from_dataset(cls, dataset: TrajectoryDataset, t: float, excluded_id: int | None = None,
                     agent_radius: float = AGENT_RADIUS, table=None) -> "SceneSnapshot":
        table = dataset.scene_table() if table is None else table
        ids, pos = table.get(dataset.step_index(t), (np.zeros(0, dtype=int), np.zeros((0, 2))))
        return cls(dataset.map, ids, pos, agent_radius, excluded_id)


def _direction(angle_deg: float) -> np.ndarray:
    th = math.radians(angle_deg)
    return np.array([math.cos(th), math.sin(th)])


def ray_segment_distance(origin, angle: float, segment) -> float | None:
    """Distance along the ray to its first contact with ``segment``, or None.

    A ray collinear with the segment returns the nearest overlapping point
    (0.0 if the origin lies on the segment).
    """
    o = np.asarray(origin, dtype=float)
    p = np.asarray(segment[:2], dtype=float)
    q = np.asarray(segment[2:], dtype=float)
    d = _direction(angle)
    e = q - p
    if not np.any(e):
        raise ValueError("segment has zero length")
    w = p - o
    denom = d[0] * e[1] - d[1] * e[0]
    scale = float(np.hypot(*e))
    if abs(denom) <= _PARALLEL_EPS * scale:
        if abs(w[0] * d[1] - w[1] * d[0]) > 1e-12 * max(1.0, float(np.hypot(*w))):
            return None
        tp, tq = float(w @ d), float((q - o) @ d)
        if max(tp, tq) < 0:
            return None
        return max(0.0, min(tp, tq))
    t = (w[0] * e[1] - w[1] * e[0]) / denom
    u = (w[0] * d[1] - w[1] * d[0]) / denom
    if t < -_EDGE_EPS or u < -_EDGE_EPS or u > 1 + _EDGE_EPS:
        return None
    return max(0.0, float(t))


def ray_circle_distance(origin, angle: float, center, radius: float) -> float | None:
    """Smallest non-negative root of the ray/circle quadratic, or None."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    o = np.asarray(origin, dtype=float)
    c = np.asarray(center, dtype=float)
    d = _direction(angle)
    oc = o - c
    b = float(d @ oc)
    cc = float(oc @ oc) - radius * radius
    disc = b * b - cc
    if disc < 0:
        return None
    root = math.sqrt(disc)
    t1, t2 = -b - root, -b + root
    tol = 1e-12 * max(1.0, radius)
    if t1 >= -tol:
        return max(0.0, t1)
    if t2 >= -tol:
        return max(0.0, t2)
    return None


def beam_angles(n_beams: int = N_BEAMS) -> np.ndarray:
    return np.arange(n_beams) * (360.0 / n_beams)


def _cast_segments(origin: np.ndarray, dirs: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """(beams,) nearest hit distance over all segments; inf where nothing is hit."""
    if len(segments) == 0:
        return np.full(len(dirs), np.inf)
    p = segments[None, :, :2]
    e = segments[None, :, 2:] - segments[None, :, :2]
    w = p - origin
    dx, dy = dirs[:, None, 0], dirs[:, None, 1]
    denom = dx * e[..., 1] - dy * e[..., 0]
    scale = np.hypot(e[..., 0], e[..., 1])
    t_num = w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]
    u_num = w[..., 0] * dy - w[..., 1] * dx
    parallel = np.abs(denom) <= _PARALLEL_EPS * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        u = u_num / denom
    hit = (~parallel) & (t >= -_EDGE_EPS) & (u >= -_EDGE_EPS) & (u <= 1 + _EDGE_EPS)
    dist = np.where(hit, np.maximum(t, 0.0), np.inf)
    # collinear rays: nearest overlapping point
    wn = np.hypot(w[..., 0], w[..., 1])
    collinear = parallel & (np.abs(u_num) <= 1e-12 * np.maximum(1.0, wn))
    if np.any(collinear):
        tp = w[..., 0] * dx + w[..., 1] * dy
        q = segments[None, :, 2:] - origin
        tq = q[..., 0] * dx + q[..., 1] * dy
        lo, hi = np.minimum(tp, tq), np.maximum(tp, tq)
        col = np.where(hi >= 0, np.maximum(lo, 0.0), np.inf)
        dist = np.where(collinear, col, dist)
    return dist.min(axis=1)


def _cast_circles(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray,
                  radius: float) -> np.ndarray:
    if len(centers) == 0:
        return np.full(len(dirs), np.inf)
    oc = origin - centers                      # (C, 2)
    # elementwise rather than matmul so each circle's result does not depend on the others
    b = dirs[:, None, 0] * oc[None, :, 0] + dirs[:, None, 1] * oc[None, :, 1]
    cc = np.sum(oc * oc, axis=1) - radius * radius
    disc = b * b - cc[None, :]
    root = np.sqrt(np.maximum(disc, 0.0))
    t1, t2 = -b - root, -b + root
    tol = 1e-12 * max(1.0, radius)
    dist = np.where(t1 >= -tol, np.maximum(t1, 0.0), np.where(t2 >= -tol, np.maximum(t2, 0.0), np.inf))
    dist = np.where(disc >= 0, dist, np.inf)
    return dist.min(axis=1)


def simulate_scan(scene: SceneSnapshot, origin, max_range: float = DEFAULT_MAX_RANGE,
                  n_beams: int = N_BEAMS) -> LidarScan:
    """Cast ``n_beams`` rays from ``origin``; misses read ``max_range``."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    origin = np.asarray(origin, dtype=float)
    if origin.shape != (2,) or not np.all(np.isfinite(origin)):
        raise ValueError("origin must be a finite 2D point")
    th = np.radians(beam_angles(n_beams))
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    ranges = np.minimum(_cast_segments(origin, dirs, scene.map.segments),
                        _cast_circles(origin, dirs, scene.others(), scene.agent_radius))
    return LidarScan(np.minimum(ranges, max_range), float(max_range))
