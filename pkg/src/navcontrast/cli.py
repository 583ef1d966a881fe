"""Command-line surface for the whole pipeline.

Subcommands mirror the experiment stages: gen-scene, record, serve,
render-dataset, pretrain, probe, compare. Every command resolves its
configuration (defaults, then --config file, then --set overrides), writes
the resolved INI into its output directory, and uses only that resolved
view — so the file next to an artifact always reproduces it.

Exit codes: 0 success, 2 configuration or missing-input error, 3 generation
failure, 4 network error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as cfgmod
from .contrast import pretrain
from .errors import ConfigError, DatasetError, PlacementError
from .probe import evaluate, format_results
from .scene import generate_scene, load_scene, save_scene
from .trajectory import (
    load_dataset,
    load_trajectory,
    random_walk,
    replay,
    save_trajectory,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_NETWORK = 4
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code pinned to 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sub):
    sub.add_argument("--config", metavar="FILE",
                     help="INI config file layered over built-in defaults")
    sub.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append",
                     default=[], dest="overrides",
                     help="override a single config value (repeatable)")
    sub.add_argument("--out", metavar="DIR", required=True,
                     help="output directory (created if absent)")


def _resolve(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    return cfgmod.apply_overrides(cfg, args.overrides)


def _prepare_out(args, cfg: dict) -> str:
    os.makedirs(args.out, exist_ok=True)
    cfgmod.save_config(cfg, os.path.join(args.out, "config.ini"))
    return args.out


def _require(path, what: str):
    if not os.path.exists(path):
        raise ConfigError(f"missing {what}: {path}")


def cmd_gen_scene(args) -> int:
    cfg = _resolve(args)
    scene = generate_scene(args.seed, cfgmod.scene_config(cfg))
    out = _prepare_out(args, cfg)
    path = os.path.join(out, "scene.json")
    save_scene(scene, path)
    print(f"wrote {path} ({len(scene.objects)} objects, "
          f"{len(scene.lighting_presets)} lighting presets)")
    return EXIT_OK


def cmd_record(args) -> int:
    cfg = _resolve(args)
    _require(args.scene, "scene file")
    scene = load_scene(args.scene)
    steps = args.steps if args.steps is not None else cfg["walk"]["steps"]
    seed = args.seed if args.seed is not None else cfg["walk"]["seed"]
    policy = _walk_policy(cfg)
    traj = random_walk(scene, seed=seed, n_steps=steps,
                       params=cfgmod.motion_params(cfg), policy=policy)
    out = _prepare_out(args, cfg)
    path = os.path.join(out, "trajectory.jsonl")
    save_trajectory(traj, path)
    print(f"wrote {path} ({len(traj.poses)} poses)")
    return EXIT_OK


def _walk_policy(cfg: dict):
    from .trajectory import WalkPolicy

    return WalkPolicy(persistence=cfg["walk"]["persistence"],
                      light_block=cfg["walk"]["light_block"])


def cmd_serve(args) -> int:
    from .serve import run_server

    cfg = _resolve(args)
    _require(args.scene, "scene file")
    scene = load_scene(args.scene)
    out = _prepare_out(args, cfg)
    host = cfg["serve"]["host"]
    port = args.port if args.port is not None else cfg["serve"]["port"]
    try:
        run_server(scene, out, host=host, port=port,
                   params=cfgmod.motion_params(cfg),
                   render_cfg=cfgmod.render_config(cfg))
    except OSError as exc:
        print(f"cannot serve on {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    return EXIT_OK


def cmd_render_dataset(args) -> int:
    cfg = _resolve(args)
    _require(args.scene, "scene file")
    _require(args.trajectory, "trajectory file")
    scene = load_scene(args.scene)
    traj = load_trajectory(args.trajectory)
    out = _prepare_out(args, cfg)
    replay(scene, traj, out, cfgmod.render_config(cfg),
           cfgmod.motion_params(cfg))
    print(f"wrote {len(traj.poses)} frames and labels under {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _resolve(args)
    dataset = load_dataset(args.dataset)
    tc = cfgmod.train_config(cfg, mode=args.mode, seed=args.seed)
    out = _prepare_out(args, cfg)
    summary = pretrain(dataset, tc, out, resume=args.resume)
    print(f"pretrained {tc.pairing_mode} for {summary['epochs']} epochs "
          f"({summary['steps']} steps)")
    if summary["final_metrics"] is not None:
        print(f"final loss {summary['final_metrics']['loss']:.4f}")
    return EXIT_OK


def _model_label(run_dir) -> str:
    state_path = os.path.join(run_dir, "state.json")
    _require(state_path, "run state")
    with open(state_path, "r", encoding="utf-8") as f:
        mode = json.load(f)["config"]["pairing_mode"]
    return f"{mode.capitalize()} MoCo"


def cmd_probe(args) -> int:
    cfg = _resolve(args)
    ckpt = os.path.join(args.run, "encoder_q.ckpt")
    _require(ckpt, "encoder checkpoint")
    label = _model_label(args.run)
    train_ds = load_dataset(args.train_dataset)
    test_ds = load_dataset(args.test_dataset)
    out = _prepare_out(args, cfg)
    result = evaluate({label: [ckpt]}, train_ds, test_ds,
                      cfg["scene"]["category_count"],
                      cfgmod.probe_config(cfg), out_dir=out)
    print(format_results(result), end="")
    return EXIT_OK


def _pretrain_one(dataset_dir: str, tc, run_dir: str) -> None:
    dataset = load_dataset(dataset_dir)
    pretrain(dataset, tc, run_dir, resume=True)


def cmd_compare(args) -> int:
    cfg = _resolve(args)
    modes = [m.strip() for m in
             (args.modes or cfg["compare"]["modes"]).split(",") if m.strip()]
    if not modes:
        raise ConfigError("compare needs at least one mode")
    runs = args.runs if args.runs is not None else cfg["compare"]["runs"]
    if runs < 1:
        raise ConfigError("compare needs at least one run per mode")
    out = _prepare_out(args, cfg)

    jobs = []
    for mode in modes:
        for i in range(runs):
            tc = cfgmod.train_config(cfg, mode=mode,
                                     seed=cfg["train"]["seed"] + i)
            jobs.append((mode, i, tc,
                         os.path.join(out, "runs", f"{mode}_{i:02d}")))

    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_pretrain_one, args.train_dataset, tc,
                                   run_dir)
                       for (_, _, tc, run_dir) in jobs]
            for future in futures:
                future.result()
    else:
        dataset = load_dataset(args.train_dataset)
        for mode, i, tc, run_dir in jobs:
            print(f"pretraining {mode} run {i}...", flush=True)
            pretrain(dataset, tc, run_dir, resume=True)

    encoders: dict[str, list] = {}
    for mode, i, _, run_dir in jobs:
        encoders.setdefault(f"{mode.capitalize()} MoCo", []).append(
            os.path.join(run_dir, "encoder_q.ckpt"))

    train_ds = load_dataset(args.train_dataset)
    test_ds = load_dataset(args.test_dataset)
    result = evaluate(encoders, train_ds, test_ds,
                      cfg["scene"]["category_count"],
                      cfgmod.probe_config(cfg), out_dir=out)
    print(format_results(result), end="")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="navcontrast",
                     description="Egocentric contrastive pretraining: scene "
                                 "generation through probe comparison.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-scene", help="generate a procedural scene")
    p.add_argument("--seed", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_scene)

    p = subs.add_parser("record", help="record an algorithmic random walk")
    p.add_argument("--scene", required=True, metavar="FILE")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_record)

    p = subs.add_parser("serve",
                        help="serve the interactive walkthrough recorder")
    p.add_argument("--scene", required=True, metavar="FILE")
    p.add_argument("--port", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    p = subs.add_parser("render-dataset",
                        help="render a trajectory into frames and labels")
    p.add_argument("--scene", required=True, metavar="FILE")
    p.add_argument("--trajectory", required=True, metavar="FILE")
    _add_common(p)
    p.set_defaults(func=cmd_render_dataset)

    p = subs.add_parser("pretrain", help="run contrastive pretraining")
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--mode", choices=("standard", "time", "space"),
                   default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = subs.add_parser("probe",
                        help="linear-probe one pretrained encoder")
    p.add_argument("--run", required=True, metavar="DIR")
    p.add_argument("--train-dataset", required=True, metavar="DIR")
    p.add_argument("--test-dataset", required=True, metavar="DIR")
    _add_common(p)
    p.set_defaults(func=cmd_probe)

    p = subs.add_parser("compare",
                        help="pretrain every mode several times and probe "
                             "them all")
    p.add_argument("--train-dataset", required=True, metavar="DIR")
    p.add_argument("--test-dataset", required=True, metavar="DIR")
    p.add_argument("--modes", default=None,
                   help="comma-separated subset of standard,time,space")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel pretraining processes")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlacementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
