"""Synthetic corridor crowds for demos and tests (the ETH files are not bundled)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import DEFAULT_DT, DEFAULT_FPS, AgentTrack, ObstacleMap, TrajectoryDataset


def corridor_map(length: float = 16.0, width: float = 8.0) -> ObstacleMap:
    """Two walls along x plus a square pillar in the middle."""
    half = width / 2
    c = 0.5
    segs = [[0, -half, length, -half], [0, half, length, half],
            [length / 2 - c, -c, length / 2 + c, -c], [length / 2 + c, -c, length / 2 + c, c],
            [length / 2 + c, c, length / 2 - c, c], [length / 2 - c, c, length / 2 - c, -c]]
    return ObstacleMap(np.array(segs, dtype=float), (0.0, -half, length, half))


def make_crowd(n_agents: int = 12, seed: int = 0, dt: float = DEFAULT_DT, length: float = 16.0,
               width: float = 8.0, span: float = 20.0, steps: tuple[int, int] = (8, 16),
               obstacles: bool = True) -> TrajectoryDataset:
    """Pedestrians crossing a corridor in both directions on gently curved paths.

    Each track walks ``steps`` (inclusive range) samples at 0.9-1.5 m/s,
    starting at a random grid time in ``[0, span)``.
    """
    rng = np.random.default_rng(seed)
    half = width / 2 - 0.8
    agents = []
    for i in range(n_agents):
        n = int(rng.integers(steps[0], steps[1] + 1))
        speed = rng.uniform(0.9, 1.5)
        leftward = bool(rng.integers(2))
        y0 = rng.uniform(-half, half)
        x0 = rng.uniform(0.5, 2.0)
        sway = rng.uniform(-0.6, 0.6)
        s = np.arange(n) * speed * dt
        x = x0 + s
        y = y0 + sway * np.sin(np.pi * s / max(s[-1], 1e-9))
        # steer around the pillar band
        if obstacles:
            near = np.abs(y) < 1.0
            y = np.where(near, np.sign(y + 1e-9) * (1.0 + 0.2 * np.abs(np.sin(s))), y)
        if leftward:
            x = length - x
        t0 = int(rng.integers(0, max(1, int(span / dt)))) * dt
        agents.append(AgentTrack(i + 1, t0 + np.arange(n) * dt, np.column_stack([x, y])))
    mp = corridor_map(length, width) if obstacles else ObstacleMap(np.zeros((0, 4)), None)
    return TrajectoryDataset(agents, mp, dt)


def write_obsmat(dataset: TrajectoryDataset, path, fps: float = DEFAULT_FPS) -> None:
    """Write tracks as ETH obsmat rows (frame, id, px, pz, py, vx, vz, vy)."""
    rows = []
    for a in dataset.all_tracks():
        vel = np.gradient(a.positions, a.times, axis=0) if len(a) > 1 else np.zeros((1, 2))
        for t, p, v in zip(a.times, a.positions, vel):
            rows.append((round(t * fps), a.id, p[0], 0.0, p[1], v[0], 0.0, v[1]))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(Path(path), "w") as fh:
        for r in rows:
            fh.write("   ".join(f"{v:.8e}" for v in r) + "\n")


def write_map(dataset: TrajectoryDataset, path) -> None:
    Path(path).write_text(json.dumps(dataset.map.to_dict()))
