"""``crowdnav`` command line: import, train, eval, rollout, table, synth, config.

Exit codes: 0 success, 1 user error, 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, config_from_dict, dump_config, load_config
from .dataset import (DatasetError, ObstacleMap, TrajectoryDataset, augment_rotate, import_obsmat,
                      resample_dataset, split_train_test)
from .metrics import MetricsReport, evaluate, format_table
from .network.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network.train import train, write_log_csv
from .rollout import NetworkPolicy, OraclePolicy, SfmPolicy, rollout, write_svg

log = logging.getLogger("crowdnav")

POLICIES = ("deepmotion", "deepmotion-conv", "sfm", "oracle")


class UserError(Exception):
    pass


def _load_checkpoint(path) -> Checkpoint | None:
    if not path:
        return None
    try:
        return load_checkpoint(path)
    except ValueError as exc:
        raise UserError(str(exc)) from None


def _load_dataset(cfg: RunConfig) -> TrajectoryDataset:
    ds = TrajectoryDataset.load(cfg.dataset_path())
    if abs(ds.dt - cfg.data.dt) > 1e-12:
        ds = resample_dataset(ds, cfg.data.dt)
    return ds


def cmd_import(args) -> int:
    if not args.dt > 0:
        raise UserError("dt must be positive")
    if not Path(args.obsmat).exists():
        raise UserError(f"obsmat not found: {args.obsmat}")
    if args.map is not None and not Path(args.map).exists():
        raise UserError(f"map not found: {args.map}")
    mp = ObstacleMap.load(args.map) if args.map else ObstacleMap()
    ds = resample_dataset(import_obsmat(args.obsmat, fps=args.fps, dt=args.dt, obstacle_map=mp))
    ds.save(args.out)
    print(f"wrote {args.out}: {len(ds)} tracks, {ds.duration():.1f} s, {len(mp.segments)} map segments")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    ds = _load_dataset(cfg)
    train_ds, _ = split_train_test(ds, cfg.data.train_fraction, cfg.data.split_seed)
    scenes = augment_rotate(train_ds, cfg.data.augment_copies, cfg.training.seed)
    net = cfg.network_config()
    result = train(scenes, net, cfg.training.epochs, cfg.training.seed,
                   l2_weight=cfg.training.l2_weight, batch_size=cfg.training.batch_size,
                   max_range=cfg.lidar.max_range, agent_radius=cfg.lidar.agent_radius)
    meta = {"run_config": cfg.to_dict(), "config_dir": str(cfg.base_dir),
            "train_tracks": len(train_ds), "scenes": len(scenes)}
    save_checkpoint(args.out, Checkpoint(result.params, net, result.optimizer, cfg.training.seed, meta))
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.csv")
    write_log_csv(result.log, log_path)
    last = result.log[-1].mean_loss if result.log else float("nan")
    print(f"trained {net.variant} on {len(train_ds)} tracks x {len(scenes)} scenes, "
          f"{cfg.training.epochs} epochs, final loss {last:.4f}; wrote {args.out} and {log_path}")
    return 0


def _config_for(args, ckpt: Checkpoint | None) -> RunConfig:
    if args.config:
        return load_config(args.config)
    if ckpt is None or "run_config" not in ckpt.meta:
        raise UserError("--config is required when no training checkpoint is given")
    cfg = config_from_dict(ckpt.meta["run_config"], Path(ckpt.meta.get("config_dir", ".")))
    if not cfg.dataset_path().exists():
        raise UserError(f"dataset not found: {cfg.dataset_path()}")
    return cfg


def _make_policy(name: str, ckpt: Checkpoint | None, cfg: RunConfig, ds: TrajectoryDataset):
    if name == "oracle":
        return OraclePolicy(ds)
    if name == "sfm":
        return SfmPolicy(cfg.sfm)
    if ckpt is None:
        raise UserError(f"policy {name} needs --checkpoint")
    want = "lstm" if name == "deepmotion" else "conv"
    if ckpt.config.variant != want:
        raise UserError(f"checkpoint holds a {ckpt.config.variant!r} network, policy {name} needs {want!r}")
    return NetworkPolicy(ckpt.params, ckpt.config)


def _report_paths(path: str) -> tuple[Path, Path]:
    p = Path(path)
    base = p.with_suffix("") if p.suffix.lower() in (".csv", ".json") else p
    return base.with_suffix(".csv"), base.with_suffix(".json")


def cmd_eval(args) -> int:
    if args.policy not in POLICIES:
        raise UserError(f"unknown policy {args.policy!r}; choose from {', '.join(POLICIES)}")
    ckpt = _load_checkpoint(args.checkpoint)
    cfg = _config_for(args, ckpt)
    ds = _load_dataset(cfg)
    policy = _make_policy(args.policy, ckpt, cfg, ds)
    lidar_range = args.lidar_range if args.lidar_range is not None else cfg.lidar.max_range
    if not lidar_range > 0:
        raise UserError("lidar range must be positive")
    report = evaluate(policy, ds, args.split, lidar_range, cfg.rollout_settings(),
                      cfg.data.train_fraction, cfg.data.split_seed)
    report.policy = args.policy
    csv_path, json_path = _report_paths(args.report)
    report.write_csv(csv_path)
    report.write_json(json_path)
    print(format_table({args.policy: report}))
    print(f"wrote {csv_path} and {json_path} ({len(report.rows)} rollouts, lidar range {lidar_range:g} m)")
    return 0


def cmd_rollout(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    cfg = _config_for(args, ckpt)
    ds = _load_dataset(cfg)
    name = args.policy
    if name is None:
        if ckpt is None:
            raise UserError("give --policy or --checkpoint")
        name = "deepmotion" if ckpt.config.recurrent else "deepmotion-conv"
    if name not in POLICIES:
        raise UserError(f"unknown policy {name!r}")
    if args.human_id not in ds.ids:
        raise UserError(f"unknown human id {args.human_id}")
    policy = _make_policy(name, ckpt, cfg, ds)
    lidar_range = args.lidar_range if args.lidar_range is not None else cfg.lidar.max_range
    result = rollout(policy, ds, args.human_id, lidar_range=lidar_range,
                     settings=cfg.rollout_settings())
    if args.trace:
        result.write_json(args.trace)
    if args.svg:
        write_svg(result, ds, args.svg)
    print(f"human {args.human_id}: reached={result.reached} steps={result.steps} "
          f"collisions={result.collision_count}")
    return 0


def cmd_table(args) -> int:
    reports = {}
    for item in args.reports:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        p = Path(path)
        if not p.exists():
            raise UserError(f"report not found: {p}")
        reports[name] = MetricsReport.from_dict(json.loads(p.read_text()))
    print(format_table(reports))
    return 0


def cmd_synth(args) -> int:
    from .synthetic import make_crowd, write_map, write_obsmat

    ds = make_crowd(args.agents, args.seed, obstacles=not args.empty)
    ds.save(args.out)
    if args.obsmat:
        write_obsmat(ds, args.obsmat)
    if args.map:
        write_map(ds, args.map)
    print(f"wrote {args.out}: {len(ds)} tracks")
    return 0


def cmd_config(args) -> int:
    text = dump_config(RunConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdnav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert an ETH obsmat file + map to the native JSON dataset")
    p.add_argument("--obsmat", required=True)
    p.add_argument("--map")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=0.4)
    p.add_argument("--fps", type=float, default=15.0, help="video frame rate of the frame column")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("train", help="train a network from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy over a split")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--policy", required=True)
    p.add_argument("--lidar-range", type=float)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--report", required=True, help="report path; .csv and .json are both written")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="run one scenario and export trace/SVG")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--policy")
    p.add_argument("--human-id", type=int, required=True)
    p.add_argument("--lidar-range", type=float)
    p.add_argument("--trace")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("table", help="print a side-by-side comparison of report JSON files")
    p.add_argument("reports", nargs="+", help="NAME=report.json or report.json")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("synth", help="generate a synthetic corridor crowd")
    p.add_argument("--out", required=True)
    p.add_argument("--agents", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--empty", action="store_true", help="no obstacles")
    p.add_argument("--obsmat")
    p.add_argument("--map")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("config", help="print the default run config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, ConfigError, DatasetError, FileNotFoundError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
