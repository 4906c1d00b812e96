"""Training-set construction and the training loop."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dataset import TrajectoryDataset, velocity_labels
from ..encoding import encode_state, encode_target, gaussian_direction_labels
from ..lidar import AGENT_RADIUS, DEFAULT_MAX_RANGE, SceneSnapshot, simulate_scan
from .model import BUFFERS, HiddenState, NetworkConfig, init_params, loss_and_gradients
from .optim import AdadeltaState, adadelta_step

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "mean_loss", "mean_speed_loss", "mean_direction_loss", "wall_seconds")


@dataclass
class TrainingSequence:
    """Inputs and labels for one replaced human, one entry per step."""

    human_id: int
    states: np.ndarray      # (T, rows, 2)
    speeds: np.ndarray      # (T,)
    headings: np.ndarray    # (T,)

    def __len__(self) -> int:
        return len(self.speeds)


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    mean_speed_loss: float
    mean_direction_loss: float
    wall_seconds: float


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    config: NetworkConfig
    log: list[EpochLog] = field(default_factory=list)
    optimizer: AdadeltaState = field(default_factory=AdadeltaState)
    seed: int = 0


def build_sequence(dataset: TrajectoryDataset, human_id: int, *, max_range=DEFAULT_MAX_RANGE,
                   agent_radius=AGENT_RADIUS, bins=360, table=None) -> TrainingSequence:
    """Scans, target encodings and labels along one human's recorded path.

    Step ``t`` pairs the scans at ``t-1`` and ``t`` (the first step repeats
    its scan) with the label for the move from ``l_t`` to ``l_{t+1}``.
    """
    track = dataset.agent(human_id)
    table = dataset.scene_table() if table is None else table
    labels = velocity_labels(track, dataset.dt)
    goal = track.end
    states = []
    prev = None
    for t, pos in zip(track.times[:-1], track.positions[:-1]):
        scene = SceneSnapshot.from_dataset(dataset, t, human_id, agent_radius, table)
        scan = simulate_scan(scene, pos, max_range, n_beams=bins)
        prev = scan if prev is None else prev
        states.append(encode_state(prev, scan, encode_target(pos, goal, bins)))
        prev = scan
    return TrainingSequence(human_id, np.stack(states),
                            np.array([lab.speed for lab in labels]),
                            np.array([lab.heading for lab in labels]))


def build_sequences(datasets, *, max_range=DEFAULT_MAX_RANGE, agent_radius=AGENT_RADIUS,
                    bins=360) -> list[TrainingSequence]:
    if isinstance(datasets, TrajectoryDataset):
        datasets = [datasets]
    out = []
    for ds in datasets:
        table = ds.scene_table()
        for track in ds.agents:
            if len(track) >= 2:
                out.append(build_sequence(ds, track.id, max_range=max_range,
                                          agent_radius=agent_radius, bins=bins, table=table))
    return out


def _windows(length: int, window: int) -> list[tuple[int, int]]:
    bounds = [(s, min(s + window, length)) for s in range(0, length, window)]
    # a trailing single step would leave batch norm with one row per sequence
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        bounds[-2:] = [(bounds[-2][0], length)]
    return bounds


def _pad_batch(seqs: Sequence[TrainingSequence], config: NetworkConfig):
    steps = max(len(s) for s in seqs)
    batch = len(seqs)
    states = np.zeros((steps, batch, config.rows, 2))
    speeds = np.zeros((steps, batch))
    headings = np.zeros((steps, batch))
    mask = np.zeros((steps, batch))
    for j, s in enumerate(seqs):
        n = len(s)
        states[:n, j], speeds[:n, j], headings[:n, j], mask[:n, j] = s.states, s.speeds, s.headings, 1
    targets = gaussian_direction_labels(headings.reshape(-1), config.sigma, config.bins)
    return states, speeds, targets.reshape(steps, batch, config.bins), mask


def train(data, config: NetworkConfig, epochs: int, seed: int = 0, *, l2_weight: float = 0.001,
          batch_size: int = 8, max_range: float = DEFAULT_MAX_RANGE,
          agent_radius: float = AGENT_RADIUS, params=None, callback=None) -> TrainResult:
    """Fit the network to human steps with truncated BPTT and Adadelta.

    ``data`` is a dataset, a list of datasets (e.g. rotated replicas) or a
    prebuilt list of :class:`TrainingSequence`. Each epoch shuffles the
    sequences, groups them into batches of ``batch_size`` and walks each
    batch in ``config.bptt_window``-step windows, carrying the LSTM state
    across windows. Shuffling, dropout and initialization all derive from
    ``seed``.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], TrainingSequence):
        seqs = list(data)
    else:
        seqs = build_sequences(data, max_range=max_range, agent_radius=agent_radius, bins=config.bins)
    if not seqs:
        raise ValueError("no trainable tracks (need at least one track with 2+ samples)")
    if max(len(s) for s in seqs) < 2:
        raise ValueError("need at least one track with 3 or more samples")

    init_seq, shuffle_seq, drop_seq = np.random.SeedSequence(seed).spawn(3)
    params = init_params(config, np.random.default_rng(init_seq)) if params is None else dict(params)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    drop_rng = np.random.default_rng(drop_seq)
    opt = AdadeltaState()
    result = TrainResult(params, config, [], opt, seed)
    momentum = config.bn_momentum

    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(seqs))
        sums = np.zeros(3)
        count = 0
        for b0 in range(0, len(order), batch_size):
            batch = [seqs[i] for i in order[b0:b0 + batch_size]]
            states, speeds, targets, mask = _pad_batch(batch, config)
            hidden = HiddenState.zeros(config, len(batch))
            for w0, w1 in _windows(len(states), config.bptt_window):
                m = mask[w0:w1]
                if m.sum() == 0:
                    continue
                _, grads, out, hidden = loss_and_gradients(
                    params, config, states[w0:w1], speeds[w0:w1], targets[w0:w1], m,
                    hidden.detached(), dropout=drop_rng)
                params, opt = adadelta_step(params, grads, opt, l2_weight)
                params["bn.running_mean"] = momentum * params["bn.running_mean"] + (1 - momentum) * out["bn_mean"]
                params["bn.running_var"] = momentum * params["bn.running_var"] + (1 - momentum) * out["bn_var"]
                sums += [np.sum((out["speed_loss"] + out["dir_loss"]) * m),
                         np.sum(out["speed_loss"] * m), np.sum(out["dir_loss"] * m)]
                count += m.sum()
        entry = EpochLog(epoch, *(float(v) for v in sums / count), time.perf_counter() - start)
        result.log.append(entry)
        log.info("epoch %d loss %.5f (speed %.5f, direction %.5f)", epoch,
                 entry.mean_loss, entry.mean_speed_loss, entry.mean_direction_loss)
        if callback is not None:
            callback(entry)
    result.params, result.optimizer = params, opt
    return result


def write_log_csv(entries: Sequence[EpochLog], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for e in entries:
            writer.writerow([e.epoch, repr(e.mean_loss), repr(e.mean_speed_loss),
                             repr(e.mean_direction_loss), f"{e.wall_seconds:.3f}"])


def trainable(name: str) -> bool:
    return name not in BUFFERS
