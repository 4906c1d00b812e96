"""Closed-loop rollouts: the robot replaces one human and follows a policy while
the other pedestrians replay their recorded tracks."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .dataset import TrajectoryDataset, split_train_test, velocity_labels
from .encoding import decode_direction, encode_state, encode_target
from .lidar import AGENT_RADIUS, DEFAULT_MAX_RANGE, LidarScan, SceneSnapshot, simulate_scan
from .network.model import HiddenState, NetworkConfig, forward
from .sfm import SfmParams, sfm_policy_step

MAX_STEPS = 400


@dataclass
class RolloutSettings:
    max_steps: int = MAX_STEPS
    target_radius: float = 0.5
    collision_distance: float = 0.4
    max_speed: float = 2.5
    agent_radius: float = AGENT_RADIUS

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        for name in ("target_radius", "collision_distance", "max_speed", "agent_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"rollout.{name} must be positive")


@dataclass
class Observation:
    step: int
    human_id: int
    position: np.ndarray
    target: np.ndarray
    scene: SceneSnapshot
    dt: float
    target_radius: float
    scan_prev: LidarScan | None = None
    scan_cur: LidarScan | None = None
    target_encoding: np.ndarray | None = None


class Policy:
    """Maps observations to world-frame ``(heading_degrees, speed)`` commands."""

    name = "policy"
    uses_scans = False

    def reset(self) -> None:
        pass

    def step(self, obs: Observation) -> tuple[float, float]:
        raise NotImplementedError

    def fresh(self) -> "Policy":
        """A reset shallow copy, for running scenarios independently."""
        other = copy.copy(self)
        other.reset()
        return other


class OraclePolicy(Policy):
    """Replays the replaced human's own labels; speed 0 once they run out."""

    name = "oracle"

    def __init__(self, dataset: TrajectoryDataset):
        self.dataset = dataset
        self._labels: dict[int, list] = {}

    def step(self, obs):
        labels = self._labels.get(obs.human_id)
        if labels is None:
            labels = self._labels[obs.human_id] = velocity_labels(
                self.dataset.agent(obs.human_id), self.dataset.dt)
        if obs.step >= len(labels):
            return 0.0, 0.0
        return labels[obs.step].heading, labels[obs.step].speed


class SfmPolicy(Policy):
    name = "sfm"

    def __init__(self, params: SfmParams | None = None):
        self.params = params or SfmParams()
        self.velocity = np.zeros(2)

    def reset(self):
        self.velocity = np.zeros(2)

    def step(self, obs):
        heading, speed = sfm_policy_step(obs.position, self.velocity, obs.target, obs.scene,
                                         self.params, obs.dt, obs.target_radius)
        th = math.radians(heading)
        self.velocity = speed * np.array([math.cos(th), math.sin(th)])
        return heading, speed


class NetworkPolicy(Policy):
    """Eval-mode network: argmax heading and predicted speed."""

    uses_scans = True

    def __init__(self, params, config: NetworkConfig):
        self.params = params
        self.config = config
        self.name = "deepmotion" if config.recurrent else "deepmotion-conv"
        self.hidden = HiddenState.zeros(config)

    def reset(self):
        self.hidden = HiddenState.zeros(self.config)

    def step(self, obs):
        state = encode_state(obs.scan_prev, obs.scan_cur, obs.target_encoding)
        pred, self.hidden = forward(self.params, state, self.hidden, "eval", config=self.config)
        return decode_direction(pred.direction), pred.speed


@dataclass
class Scenario:
    human_id: int
    start: np.ndarray
    target: np.ndarray


@dataclass
class RolloutResult:
    human_id: int
    dt: float
    robot_path: np.ndarray
    human_path: np.ndarray
    reached: bool
    steps: int
    min_proximity: float
    collision_count: int
    commands: list[tuple[float, float]] = field(default_factory=list)
    target: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "human_id": self.human_id,
            "dt": self.dt,
            "robot_path": self.robot_path.tolist(),
            "human_path": self.human_path.tolist(),
            "reached": self.reached,
            "steps": self.steps,
            "min_proximity": self.min_proximity if math.isfinite(self.min_proximity) else None,
            "collision_count": self.collision_count,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def make_scenarios(dataset: TrajectoryDataset, split: str = "all", train_fraction: float = 2 / 3,
                   seed: int = 0) -> list[Scenario]:
    """One scenario per track with 2+ samples in the chosen split ('train', 'test' or 'all')."""
    if split in ("train", "test"):
        train, test = split_train_test(dataset, train_fraction, seed)
        dataset = train if split == "train" else test
    elif split != "all":
        raise ValueError(f"split must be 'train', 'test' or 'all', got {split!r}")
    return [Scenario(a.id, a.start.copy(), a.end.copy()) for a in dataset.agents if len(a) >= 2]


def reference_path(positions: np.ndarray, target_radius: float) -> np.ndarray:
    """Human path up to the first sample inside the target radius.

    The robot is stopped by the same rule, so both paths end on arrival.
    """
    d = np.hypot(*(positions - positions[-1]).T)
    inside = np.flatnonzero(d <= target_radius)
    return positions[:inside[0] + 1].copy()


def rollout(policy: Policy, dataset: TrajectoryDataset, human_id: int, max_steps: int | None = None,
            lidar_range: float = DEFAULT_MAX_RANGE, settings: RolloutSettings | None = None,
            table=None) -> RolloutResult:
    """Run ``policy`` from the human's first position toward their last one."""
    settings = settings or RolloutSettings()
    max_steps = settings.max_steps if max_steps is None else max_steps
    try:
        track = dataset.agent(human_id)
    except KeyError:
        raise KeyError(f"unknown human id {human_id}") from None
    if len(track) < 2:
        raise ValueError(f"human {human_id} has fewer than 2 samples")
    table = dataset.scene_table() if table is None else table
    dt = dataset.dt
    t0 = track.times[0]
    target = track.end.copy()
    pos = track.start.copy()
    path = [pos.copy()]
    commands = []
    scan_prev = None
    min_prox = math.inf
    collisions = 0
    touching: set[int] = set()
    bins = getattr(getattr(policy, "config", None), "bins", 360)

    def scene_at(k):
        return SceneSnapshot.from_dataset(dataset, t0 + k * dt, human_id, settings.agent_radius, table)

    def safety(k, p):
        nonlocal min_prox, collisions, touching
        scene = scene_at(k)
        mask = scene.ids != human_id
        others, ids = scene.positions[mask], scene.ids[mask]
        if len(others):
            d = np.hypot(*(others - p).T)
            min_prox = min(min_prox, max(0.0, float(d.min()) - settings.collision_distance))
            now = {int(i) for i in ids[d < settings.collision_distance]}
            collisions += len(now - touching)
            touching = now
        else:
            touching = set()
        return scene

    policy.reset()
    steps = 0
    reached = False
    for k in range(max_steps):
        scene = safety(k, pos)
        if math.hypot(*(target - pos)) <= settings.target_radius:
            reached = True
            break
        obs = Observation(k, human_id, pos.copy(), target, scene, dt, settings.target_radius)
        if policy.uses_scans:
            scan = simulate_scan(scene, pos, lidar_range, n_beams=bins)
            scan_prev = scan if scan_prev is None else scan_prev
            obs.scan_prev, obs.scan_cur = scan_prev, scan
            obs.target_encoding = encode_target(pos, target, bins)
            scan_prev = scan
        heading, speed = policy.step(obs)
        speed = min(max(float(speed), 0.0), settings.max_speed)
        th = math.radians(heading)
        pos = pos + speed * dt * np.array([math.cos(th), math.sin(th)])
        path.append(pos.copy())
        commands.append((float(heading), speed))
        steps += 1
    else:
        safety(steps, pos)
        reached = math.hypot(*(target - pos)) <= settings.target_radius

    return RolloutResult(human_id, dt, np.array(path),
                         reference_path(track.positions, settings.target_radius),
                         reached, steps, min_prox, collisions, commands, target)


def write_svg(result: RolloutResult, dataset: TrajectoryDataset, path, scale: float = 40.0) -> None:
    """Overlay of map segments, robot path (blue), human path (red), start and goal."""
    seg = dataset.map.segments
    pts = np.concatenate([result.robot_path, result.human_path, seg[:, :2], seg[:, 2:]]
                         + ([result.target[None]] if result.target is not None else []))
    lo, hi = pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0
    w, h = (hi - lo) * scale

    def xy(p):
        return f"{(p[0] - lo[0]) * scale:.2f},{(hi[1] - p[1]) * scale:.2f}"

    def poly(points, color, label):
        coords = " ".join(xy(p) for p in points)
        return (f'<polyline class="{label}" points="{coords}" fill="none" '
                f'stroke="{color}" stroke-width="2"/>')

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
             f'viewBox="0 0 {w:.2f} {h:.2f}">',
             f"<title>{escape(f'human {result.human_id}')}</title>"]
    for s in seg:
        (x1, y1), (x2, y2) = (v.split(",") for v in (xy(s[:2]), xy(s[2:])))
        parts.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="black" stroke-width="2"/>')
    parts.append(poly(result.human_path, "red", "human"))
    parts.append(poly(result.robot_path, "blue", "robot"))
    goal = result.human_path[-1] if result.target is None else result.target
    for p, color in ((result.robot_path[0], "green"), (goal, "red")):
        cx, cy = xy(p).split(",")
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="5" fill="{color}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
