"""Self-describing model checkpoints.

A checkpoint is a zip archive holding ``meta.json`` (network config, seed
record and any extra metadata) and one ``.npy`` member per tensor:
``params/<name>.npy``, ``optimizer/square_avg/<name>.npy`` and
``optimizer/acc_delta/<name>.npy``. Tensors are float64, row-major. Member
timestamps are fixed so identical runs produce identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import NetworkConfig, check_params
from .optim import AdadeltaState

FORMAT = "deepmotion-checkpoint/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: NetworkConfig
    optimizer: AdadeltaState = field(default_factory=AdadeltaState)
    seed: int = 0
    meta: dict = field(default_factory=dict)


def _write_member(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    meta = {"format": FORMAT, "config": ckpt.config.to_dict(), "seed": ckpt.seed,
            "optimizer_steps": ckpt.optimizer.steps, "params": sorted(ckpt.params),
            "meta": ckpt.meta}
    with zipfile.ZipFile(Path(path), "w") as zf:
        _write_member(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode())
        for name in sorted(ckpt.params):
            _write_member(zf, f"params/{name}.npy", _npy_bytes(ckpt.params[name]))
        for group, tensors in (("square_avg", ckpt.optimizer.square_avg),
                               ("acc_delta", ckpt.optimizer.acc_delta)):
            for name in sorted(tensors):
                _write_member(zf, f"optimizer/{group}/{name}.npy", _npy_bytes(tensors[name]))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise ValueError(f"{path} is not a checkpoint archive") from None
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        config = NetworkConfig(**meta["config"])
        params, sq, acc = {}, {}, {}
        for member in zf.namelist():
            if not member.endswith(".npy"):
                continue
            arr = np.lib.format.read_array(io.BytesIO(zf.read(member)), allow_pickle=False)
            name = member.rsplit("/", 1)[1][:-4]
            if member.startswith("params/"):
                params[name] = arr
            elif member.startswith("optimizer/square_avg/"):
                sq[name] = arr
            elif member.startswith("optimizer/acc_delta/"):
                acc[name] = arr
    check_params(params, config)
    return Checkpoint(params, config, AdadeltaState(sq, acc, int(meta.get("optimizer_steps", 0))),
                      int(meta.get("seed", 0)), meta.get("meta", {}))
