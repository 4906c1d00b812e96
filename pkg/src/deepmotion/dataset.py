"""Pedestrian trajectory datasets: ETH obsmat import, resampling, labels, splits.

Positions are ground-plane meters, times are seconds. A dataset holds the
tracks that can be replaced by the robot (``agents``) and, optionally,
``context`` tracks that only populate the scene (e.g. the other half of a
train/test split).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DT = 0.4
# seq_eth video rate; annotations are every 6th frame, i.e. 0.4 s apart
DEFAULT_FPS = 15.0
_TIME_TOL = 1e-9


class DatasetError(ValueError):
    """Malformed or unusable trajectory data."""


@dataclass
class ObstacleMap:
    """Static obstacles as line segments ``(x1, y1, x2, y2)`` inside ``bounds``."""

    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        if not np.all(np.isfinite(seg)):
            raise DatasetError("map segments must be finite")
        lengths = np.hypot(seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1])
        if np.any(lengths <= 0):
            bad = int(np.flatnonzero(lengths <= 0)[0])
            raise DatasetError(f"map segment {bad} has zero length")
        self.segments = seg
        if self.bounds is not None:
            xmin, ymin, xmax, ymax = (float(v) for v in self.bounds)
            if xmin > xmax or ymin > ymax:
                raise DatasetError("map bounds are inverted")
            self.bounds = (xmin, ymin, xmax, ymax)
            if len(seg):
                xs, ys = seg[:, [0, 2]], seg[:, [1, 3]]
                tol = 1e-9 * max(1.0, abs(xmin), abs(xmax), abs(ymin), abs(ymax))
                if (xs.min() < xmin - tol or xs.max() > xmax + tol
                        or ys.min() < ymin - tol or ys.max() > ymax + tol):
                    raise DatasetError("map segments extend outside bounds")

    @classmethod
    def load(cls, path: str | Path) -> "ObstacleMap":
        """Read a map from JSON (``{"segments": [...], "bounds": [...]}``) or
        from a text file with four whitespace-separated numbers per line."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"map not found: {path}")
        if path.suffix.lower() == ".json":
            doc = json.loads(path.read_text())
            return cls.from_dict(doc.get("map", doc))
        rows = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric map row") from None
            if len(vals) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 columns, got {len(vals)}")
            rows.append(vals)
        return cls(np.array(rows).reshape(-1, 4))

    @classmethod
    def from_dict(cls, doc: dict) -> "ObstacleMap":
        bounds = doc.get("bounds")
        return cls(np.array(doc.get("segments", []), dtype=float).reshape(-1, 4),
                   tuple(bounds) if bounds is not None else None)

    def to_dict(self) -> dict:
        doc = {"segments": self.segments.tolist()}
        if self.bounds is not None:
            doc["bounds"] = list(self.bounds)
        return doc


@dataclass
class AgentTrack:
    """One pedestrian: strictly increasing ``times`` and matching ``positions``."""

    id: int
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.id = int(self.id)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(self.times) != len(self.positions):
            raise DatasetError(f"track {self.id}: times and positions differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DatasetError(f"track {self.id}: sample times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> np.ndarray:
        return self.positions[0]

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1]


@dataclass(frozen=True)
class StepLabel:
    """Ground-truth command for one step: speed (m/s) and heading in [0, 360)."""

    speed: float
    heading: float


@dataclass
class TrajectoryDataset:
    agents: list[AgentTrack]
    map: ObstacleMap = field(default_factory=ObstacleMap)
    dt: float = DEFAULT_DT
    context: list[AgentTrack] = field(default_factory=list)
    rotation: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise DatasetError("dt must be positive")
        ids = [a.id for a in self.agents] + [a.id for a in self.context]
        if len(set(ids)) != len(ids):
            raise DatasetError("agent ids must be unique")

    def __len__(self) -> int:
        return len(self.agents)

    @property
    def ids(self) -> list[int]:
        return [a.id for a in self.agents]

    def agent(self, agent_id: int) -> AgentTrack:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"unknown human id {agent_id}")

    def all_tracks(self) -> list[AgentTrack]:
        return list(self.agents) + list(self.context)

    def bounds(self) -> tuple[float, float, float, float]:
        """Map bounds if given, else the bounding box of segments and tracks."""
        if self.map.bounds is not None:
            return self.map.bounds
        pts = [self.map.segments[:, :2], self.map.segments[:, 2:]]
        pts += [a.positions for a in self.all_tracks()]
        pts = np.concatenate([p for p in pts if len(p)] or [np.zeros((1, 2))])
        return (float(pts[:, 0].min()), float(pts[:, 1].min()),
                float(pts[:, 0].max()), float(pts[:, 1].max()))

    def step_index(self, t: float) -> int:
        return int(round(t / self.dt))

    def scene_table(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Map step index -> (ids, positions) of every track alive at that step.

        Assumes resampled tracks (sample times on the ``dt`` grid).
        """
        buckets: dict[int, list[tuple[int, np.ndarray]]] = {}
        for a in self.all_tracks():
            for t, p in zip(a.times, a.positions):
                buckets.setdefault(self.step_index(t), []).append((a.id, p))
        return {k: (np.array([i for i, _ in v], dtype=int), np.array([p for _, p in v]))
                for k, v in buckets.items()}

    def duration(self) -> float:
        tracks = self.all_tracks()
        if not tracks:
            return 0.0
        return float(max(a.times[-1] for a in tracks) - min(a.times[0] for a in tracks))

    # native JSON format

    def to_dict(self) -> dict:
        def enc(tracks):
            return [{"id": a.id,
                     "samples": np.column_stack([a.times, a.positions]).tolist()}
                    for a in tracks]
        doc = {"dt": self.dt, "map": self.map.to_dict(), "agents": enc(self.agents)}
        if self.context:
            doc["context"] = enc(self.context)
        if self.rotation:
            doc["rotation"] = self.rotation
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrajectoryDataset":
        def dec(items):
            out = []
            for item in items:
                s = np.array(item["samples"], dtype=float).reshape(-1, 3)
                out.append(AgentTrack(item["id"], s[:, 0], s[:, 1:]))
            return out
        try:
            return cls(agents=dec(doc["agents"]), map=ObstacleMap.from_dict(doc.get("map", {})),
                       dt=float(doc["dt"]), context=dec(doc.get("context", [])),
                       rotation=float(doc.get("rotation", 0.0)))
        except KeyError as exc:
            raise DatasetError(f"dataset document is missing {exc.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TrajectoryDataset":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"dataset not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def import_obsmat(path: str | Path, fps: float = DEFAULT_FPS, dt: float = DEFAULT_DT,
                  obstacle_map: ObstacleMap | None = None) -> TrajectoryDataset:
    """Load an ETH BIWI ``obsmat.txt`` file.

    Rows are ``frame id px pz py vx vz vy``; the ground plane is ``(px, py)``
    and time is ``frame / fps``. Annotated velocities are ignored. Tracks
    with fewer than two samples are dropped with a warning. The returned
    tracks keep their original timestamps; see :func:`resample_dataset`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"obsmat file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 8:
            raise DatasetError(f"row {lineno}: expected 8 columns, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise DatasetError(f"row {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise DatasetError(f"row {lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise DatasetError("no rows")
    data = np.array(rows)
    agents = []
    for agent_id in np.unique(data[:, 1]):
        sel = data[data[:, 1] == agent_id]
        times = sel[:, 0] / fps
        order = np.argsort(times, kind="stable")
        times, pos = times[order], sel[order][:, [2, 4]]
        # duplicated frames: keep the first annotation
        keep = np.concatenate([[True], np.diff(times) > 0])
        times, pos = times[keep], pos[keep]
        if len(times) < 2:
            warnings.warn(f"dropping track {int(agent_id)}: fewer than 2 samples", stacklevel=2)
            continue
        agents.append(AgentTrack(int(agent_id), times, pos))
    return TrajectoryDataset(agents, obstacle_map or ObstacleMap(), dt)


def resample_track(track: AgentTrack, dt: float) -> AgentTrack:
    """Linearly interpolate ``track`` onto the ``dt`` time grid.

    The first sample is the first grid time at or after the original start
    (identical to it whenever the start is already a multiple of ``dt``).
    No extrapolation past the last original sample.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if len(track) < 2:
        raise DatasetError(f"track {track.id}: need at least 2 samples to resample")
    t0, t1 = track.times[0], track.times[-1]
    k0 = math.ceil(t0 / dt - _TIME_TOL)
    k1 = math.floor(t1 / dt + _TIME_TOL)
    times = np.arange(k0, k1 + 1) * dt
    if len(times) == 0:
        times = np.array([t0])
    src = np.clip(times, t0, t1)
    pos = np.column_stack([np.interp(src, track.times, track.positions[:, 0]),
                           np.interp(src, track.times, track.positions[:, 1])])
    return AgentTrack(track.id, times, pos)


def resample_dataset(dataset: TrajectoryDataset, dt: float | None = None) -> TrajectoryDataset:
    """Resample every track; tracks left with <2 samples are dropped with a warning."""
    dt = dataset.dt if dt is None else dt

    def run(tracks):
        out = []
        for a in tracks:
            r = resample_track(a, dt) if len(a) >= 2 else a
            if len(r) < 2:
                warnings.warn(f"dropping track {a.id}: shorter than one time step", stacklevel=3)
                continue
            out.append(r)
        return out

    return replace(dataset, agents=run(dataset.agents), context=run(dataset.context), dt=dt)


def heading_degrees(dx: float, dy: float) -> float:
    """atan2 heading in degrees, normalized to [0, 360)."""
    h = math.degrees(math.atan2(dy, dx)) % 360.0
    return 0.0 if h >= 360.0 else h


def velocity_labels(track: AgentTrack, dt: float | None = None) -> list[StepLabel]:
    """Speed/heading labels from consecutive displacements.

    A zero displacement keeps the previous heading (0 for the first step).
    ``dt`` defaults to the track's own sample spacing.
    """
    if len(track) < 2:
        raise DatasetError(f"track {track.id}: need at least 2 samples for a velocity label")
    if dt is None:
        dt = float(track.times[1] - track.times[0])
    disp = np.diff(track.positions, axis=0)
    labels = []
    heading = 0.0
    for dx, dy in disp:
        dist = math.hypot(dx, dy)
        if dist > 0:
            heading = heading_degrees(dx, dy)
        labels.append(StepLabel(dist / dt, heading))
    return labels


def split_train_test(dataset: TrajectoryDataset, train_fraction: float = 2 / 3,
                     seed: int = 0) -> tuple[TrajectoryDataset, TrajectoryDataset]:
    """Shuffle tracks by ``seed`` and cut after ``ceil(train_fraction * n)``.

    Each half keeps the other half's tracks as scene context, so simulated
    scans still see every pedestrian.
    """
    n = len(dataset.agents)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must lie in (0, 1]")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n, math.ceil(train_fraction * n - 1e-9))
    train = [dataset.agents[i] for i in order[:n_train]]
    test = [dataset.agents[i] for i in order[n_train:]]
    return (replace(dataset, agents=train, context=dataset.context + test),
            replace(dataset, agents=test, context=dataset.context + train))


def rotate_points(points: np.ndarray, angle_deg: float, center: Sequence[float]) -> np.ndarray:
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, -s], [s, c]])
    center = np.asarray(center, dtype=float)
    return (np.asarray(points, dtype=float) - center) @ rot.T + center


def rotate_dataset(dataset: TrajectoryDataset, angle_deg: float,
                   center: Sequence[float] | None = None) -> TrajectoryDataset:
    """Rotate map and every track by ``angle_deg`` about ``center`` (bounds center)."""
    if center is None:
        xmin, ymin, xmax, ymax = dataset.bounds()
        center = ((xmin + xmax) / 2, (ymin + ymax) / 2)
    seg = dataset.map.segments
    new_seg = np.column_stack([rotate_points(seg[:, :2], angle_deg, center),
                               rotate_points(seg[:, 2:], angle_deg, center)])
    bounds = None
    if dataset.map.bounds is not None:
        xmin, ymin, xmax, ymax = dataset.map.bounds
        corners = rotate_points([[xmin, ymin], [xmin, ymax], [xmax, ymin], [xmax, ymax]],
                                angle_deg, center)
        bounds = (*corners.min(axis=0), *corners.max(axis=0))

    def rot(tracks):
        return [AgentTrack(a.id, a.times.copy(), rotate_points(a.positions, angle_deg, center))
                for a in tracks]

    return replace(dataset, agents=rot(dataset.agents), context=rot(dataset.context),
                   map=ObstacleMap(new_seg, bounds),
                   rotation=(dataset.rotation + angle_deg) % 360.0)


def augment_rotate(dataset: TrajectoryDataset, copies: int,
                   seed: int = 0) -> list[TrajectoryDataset]:
    """The original dataset followed by ``copies`` randomly rotated replicas.

    Each replica is its own scene (rotated map plus rotated tracks), so the
    result is a list of datasets rather than one merged dataset.
    """
    if copies < 0:
        raise ValueError("copies must be non-negative")
    angles = np.random.default_rng(seed).uniform(0.0, 360.0, size=copies)
    return [dataset] + [rotate_dataset(dataset, float(a)) for a in angles]


def path_length(positions: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(positions, axis=0).T)))


def iter_eligible(tracks: Iterable[AgentTrack], min_samples: int = 2):
    return (a for a in tracks if len(a) >= min_samples)
