"""Path-similarity and safety metrics, aggregated into a Table-I-style report."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import TrajectoryDataset
from .lidar import DEFAULT_MAX_RANGE
from .rollout import Policy, RolloutResult, RolloutSettings, make_scenarios, rollout

REPORT_COLUMNS = ("scenario_id", "spd", "dtw", "proximity", "collisions", "reached", "steps")
TABLE_COLUMNS = ("SPD", "DTW", "Proximity", "Collisions", "Target")


def _as_path(path) -> np.ndarray:
    arr = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        raise ValueError("path must contain at least one point")
    return arr


def spd(path_a, path_b) -> float:
    """Squared path difference: step-aligned squared distances, the shorter
    path padded with its final point."""
    a, b = _as_path(path_a), _as_path(path_b)
    n = max(len(a), len(b))
    a = np.concatenate([a, np.repeat(a[-1:], n - len(a), axis=0)])
    b = np.concatenate([b, np.repeat(b[-1:], n - len(b), axis=0)])
    return float(np.sum((a - b) ** 2))


def dtw(path_a, path_b) -> float:
    """Dynamic time warping with Euclidean point cost (match/insert/delete)."""
    a, b = _as_path(path_a), _as_path(path_b)
    cost = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev, c = acc[i], acc[i - 1], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = c[j - 1] + min(prev[j - 1], prev[j], row[j - 1])
    return float(acc[n, m])


@dataclass
class MetricsRow:
    scenario_id: int
    spd: float
    dtw: float
    proximity: float
    collisions: int
    reached: bool
    steps: int


@dataclass
class MetricsReport:
    """Per-rollout rows plus their means.

    ``proximity`` averages only rollouts that met at least one pedestrian;
    a rollout alone in the scene has no closest human.
    """

    rows: list[MetricsRow] = field(default_factory=list)
    policy: str = ""

    @property
    def spd(self) -> float:
        return float(np.mean([r.spd for r in self.rows])) if self.rows else math.nan

    @property
    def dtw(self) -> float:
        return float(np.mean([r.dtw for r in self.rows])) if self.rows else math.nan

    @property
    def proximity(self) -> float:
        vals = [r.proximity for r in self.rows if math.isfinite(r.proximity)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def collisions(self) -> float:
        return float(np.mean([r.collisions for r in self.rows])) if self.rows else math.nan

    @property
    def target_rate(self) -> float:
        return float(np.mean([r.reached for r in self.rows])) if self.rows else math.nan

    def table_row(self) -> dict[str, float]:
        return dict(zip(TABLE_COLUMNS, (self.spd, self.dtw, self.proximity, self.collisions,
                                        self.target_rate)))

    def summary(self) -> dict:
        return {"spd": self.spd, "dtw": self.dtw, "proximity": self.proximity,
                "collisions": self.collisions, "target_rate": self.target_rate}

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {"policy": self.policy,
                "summary": {k: clean(v) for k, v in self.summary().items()},
                "rows": [{c: clean(getattr(r, c)) for c in REPORT_COLUMNS} for r in self.rows]}

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        rows = []
        for r in doc["rows"]:
            prox = r["proximity"]
            rows.append(MetricsRow(int(r["scenario_id"]), float(r["spd"]), float(r["dtw"]),
                                   math.inf if prox is None else float(prox),
                                   int(r["collisions"]), bool(r["reached"]), int(r["steps"])))
        return cls(rows, doc.get("policy", ""))

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path) -> None:
        """One row per rollout, then a ``mean`` summary row (reached column = target rate)."""
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for r in self.rows:
                prox = r.proximity if math.isfinite(r.proximity) else ""
                writer.writerow([r.scenario_id, repr(r.spd), repr(r.dtw), prox,
                                 r.collisions, int(r.reached), r.steps])
            writer.writerow(["mean", repr(self.spd), repr(self.dtw), repr(self.proximity),
                             repr(self.collisions), repr(self.target_rate),
                             repr(float(np.mean([r.steps for r in self.rows])) if self.rows else math.nan)])


def row_from_result(result: RolloutResult) -> MetricsRow:
    return MetricsRow(result.human_id, spd(result.robot_path, result.human_path),
                      dtw(result.robot_path, result.human_path), result.min_proximity,
                      result.collision_count, result.reached, result.steps)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CROWDNAV_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(policy: Policy, dataset: TrajectoryDataset, split: str = "test",
             lidar_range: float = DEFAULT_MAX_RANGE, settings: RolloutSettings | None = None,
             train_fraction: float = 2 / 3, seed: int = 0,
             results: list | None = None) -> MetricsReport:
    """Roll out every scenario of ``split`` and aggregate the metrics.

    Scenarios may run on ``CROWDNAV_THREADS`` workers; rows keep scenario
    order. Finished rollouts are appended to ``results`` when given.
    """
    scenarios = make_scenarios(dataset, split, train_fraction, seed)
    if not scenarios:
        raise ValueError(f"split {split!r} has no eligible scenarios")
    table = dataset.scene_table()

    def run(sc):
        return rollout(policy.fresh(), dataset, sc.human_id, lidar_range=lidar_range,
                       settings=settings, table=table)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(run, scenarios))
    else:
        outs = [run(sc) for sc in scenarios]
    if results is not None:
        results.extend(outs)
    return MetricsReport([row_from_result(r) for r in outs], policy.name)


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Plain-text table with one line per policy and the five metric columns."""
    header = f"{'Policy':<18}" + "".join(f"{c:>12}" for c in TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        row = rep.table_row()
        cells = [f"{row['SPD']:12.2f}", f"{row['DTW']:12.2f}", f"{row['Proximity']:12.3f}",
                 f"{row['Collisions']:12.2f}", f"{100 * row['Target']:11.0f}%"]
        lines.append(f"{name:<18}" + "".join(cells))
    return "\n".join(lines)
