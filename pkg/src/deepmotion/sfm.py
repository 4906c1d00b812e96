"""Social Force Model baseline (Helbing & Molnar style).

The SFM agent sees ground-truth positions of the other pedestrians, not the
simulated scan.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import heading_degrees
from .lidar import SceneSnapshot

_FALLBACK = np.array([1.0, 0.0])


@dataclass
class SfmParams:
    desired_speed: float = 1.3
    relaxation_time: float = 0.5
    agent_strength: float = 2.0
    agent_range: float = 0.3
    obstacle_strength: float = 2.0
    obstacle_range: float = 0.2
    max_speed: float = 2.5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"sfm.{name} must be positive")


def _unit(v: np.ndarray) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    return v / n if n > 0 else np.zeros(2)


def closest_points(pos: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Nearest point on each segment to ``pos``, shape (K, 2)."""
    p, q = segments[:, :2], segments[:, 2:]
    e = q - p
    u = np.clip(np.sum((pos - p) * e, axis=1) / np.sum(e * e, axis=1), 0.0, 1.0)
    return p + u[:, None] * e


def _repulsion(pos, sources, strength, rng, offset):
    if len(sources) == 0:
        return np.zeros(2)
    diff = pos - sources
    d = np.hypot(diff[:, 0], diff[:, 1])
    safe = np.where(d > 0, d, 1.0)
    dirs = np.where((d > 0)[:, None], diff / safe[:, None], _FALLBACK)
    mag = strength * np.exp((offset - d) / rng)
    return (mag[:, None] * dirs).sum(axis=0)


def sfm_acceleration(pos, vel, target, scene: SceneSnapshot, params: SfmParams) -> np.ndarray:
    """Drive toward ``target`` plus exponential repulsion from agents and segments."""
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    r = scene.agent_radius
    drive = (params.desired_speed * _unit(np.asarray(target, dtype=float) - pos) - vel) / params.relaxation_time
    agents = _repulsion(pos, scene.others(), params.agent_strength, params.agent_range, 2 * r)
    walls = np.zeros(2)
    if len(scene.map.segments):
        walls = _repulsion(pos, closest_points(pos, scene.map.segments),
                           params.obstacle_strength, params.obstacle_range, r)
    return drive + agents + walls


def sfm_policy_step(pos, vel, target, scene: SceneSnapshot, params: SfmParams, dt: float,
                    target_radius: float = 0.5) -> tuple[float, float]:
    """Euler-integrate one step and return the commanded ``(heading, speed)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    to_target = np.asarray(target, dtype=float) - pos
    if math.hypot(*to_target) <= target_radius:
        return heading_degrees(*to_target), 0.0
    new_vel = vel + sfm_acceleration(pos, vel, target, scene, params) * dt
    speed = math.hypot(*new_vel)
    if speed > params.max_speed:
        new_vel *= params.max_speed / speed
        speed = params.max_speed
    return heading_degrees(*new_vel), speed
