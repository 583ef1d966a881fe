"""
A small pretraining run, watched closely
========================================

Pretrain a query/key encoder pair on a short walk and watch the loss,
the query-positive similarity, and the pairing fallback rate evolve.
Small enough to finish in about a minute on a laptop core.

Usage::

    python demos/pretrain_small.py --mode time --out /tmp/pretrain_small
"""

import argparse
import json
import os

from navcontrast.config import apply_overrides, default_config, train_config
from navcontrast.contrast import pretrain
from navcontrast.render import RenderConfig
from navcontrast.scene import SceneConfig, generate_scene
from navcontrast.trajectory import random_walk, replay, load_dataset

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--mode", default="time",
                    choices=("standard", "time", "space"))
parser.add_argument("--out", default="/tmp/pretrain_small")
args = parser.parse_args()

# Build a small dataset in place: one scene, one 300-step walk, 32x32
# frames. The walk spans 30 seconds, comfortably wider than the 10 s
# time-similarity window, so the time rule has genuine negatives.
scene = generate_scene(5, SceneConfig())
walk = random_walk(scene, seed=7, n_steps=300)
data_dir = os.path.join(args.out, "data")
replay(scene, walk, data_dir, RenderConfig(width=32, height=32))
dataset = load_dataset(data_dir)
print(f"dataset: {len(dataset.frames)} frames at "
      f"{dataset.frames.shape[1]}x{dataset.frames.shape[2]}")

# Shrink the training recipe to match: a narrow encoder, a small queue,
# a handful of epochs. Everything else (momentum encoder, queue
# metadata, the similarity rule) is exactly the full machinery.
cfg = apply_overrides(default_config(), [
    "arch.conv_channels=4,8",
    "arch.hidden_dim=16",
    "arch.feat_dim=8",
    "arch.input_size=32",
    "render.width=32",
    "render.height=32",
    "train.epochs=8",
    "train.batch_size=16",
    "train.queue_capacity=128",
])
tc = train_config(cfg, mode=args.mode, seed=0)

run_dir = os.path.join(args.out, f"run_{args.mode}")
result = pretrain(dataset, tc, run_dir)
print(f"trained {result['epochs']} epochs, {result['steps']} steps")

# The metrics stream is JSONL, one row per step; sample it to see the
# trend without drowning in lines.
with open(os.path.join(run_dir, "metrics.jsonl")) as fh:
    rows = [json.loads(line) for line in fh]
for row in rows[:: max(1, len(rows) // 10)]:
    print(f"  step {row['step']:4d}  loss {row['loss']:7.4f}  "
          f"pos_sim {row['pos_sim']:6.3f}  fallback {row['fallback_frac']:.2f}")
print(f"run directory: {run_dir} (checkpoints, queue, metrics, pair manifest)")
