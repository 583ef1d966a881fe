"""Frozen-encoder evaluation: a linear classifier over pooled features.

Pretraining quality is measured the usual indirect way: freeze the encoder,
extract features for every frame, and fit only a linear softmax layer to
predict each frame's dominant object category. Frames where no category
fills enough of the view are labeled as a dedicated background class, so a
scene with C categories yields a (C + 1)-way problem.

The probe itself is deliberately minimal — standardized inputs, zero-
initialized weights, minibatch SGD — so differences in its accuracy trace
back to the features, not to classifier tuning.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .augment import augment_batch, identity_config
from .errors import ConfigError, MissingClassError
from .nn import EncoderArch, forward, load_params

BACKGROUND_MIN_FRAC = 0.15


def derive_labels(catmaps: np.ndarray, category_count: int,
                  min_frac: float = BACKGROUND_MIN_FRAC) -> np.ndarray:
    """Label each frame with its most visible category, or with the
    background class `category_count` when no category covers at least
    `min_frac` of the pixels. Ties go to the smaller category id."""
    if catmaps.ndim != 3:
        raise ValueError("expected (N, H, W) category maps")
    n, h, w = catmaps.shape
    flat = catmaps.reshape(n, -1)
    counts = np.zeros((n, category_count), dtype=np.int64)
    for c in range(category_count):
        counts[:, c] = (flat == c).sum(axis=1)
    dominant = counts.argmax(axis=1)
    visible = counts.max(axis=1) >= min_frac * h * w
    return np.where(visible, dominant, category_count).astype(np.int64)


def extract_features(params: dict, arch: EncoderArch, frames: np.ndarray,
                     batch_size: int = 256) -> np.ndarray:
    """Pooled backbone features for uint8 frames, without augmentation.

    Frames are only resized (deterministically, full field of view) to the
    encoder's input size; when they already match, the pixels pass through
    untouched."""
    cfg = identity_config(arch.input_size)
    out = np.empty((len(frames), arch.pooled_dim), dtype=np.float32)
    for lo in range(0, len(frames), batch_size):
        chunk = frames[lo:lo + batch_size]
        views = augment_batch(chunk, cfg, np.zeros((len(chunk), 7)))
        pooled, _, _ = forward(params, views, arch, need_tape=False)
        out[lo:lo + len(chunk)] = pooled
    return out


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("probe epochs and batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ConfigError("probe lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("probe momentum must lie in [0, 1)")


def linear_probe(train_feats: np.ndarray, train_labels: np.ndarray,
                 test_feats: np.ndarray, test_labels: np.ndarray,
                 n_classes: int, cfg: ProbeConfig = ProbeConfig()) -> float:
    """Fit a linear softmax classifier on the training features and return
    its top-1 accuracy on the test features.

    Inputs are standardized by training-set statistics. Refuses to score a
    test split containing classes the training split never showed."""
    cfg.validate()
    missing = sorted(int(c) for c in
                     set(np.unique(test_labels)) - set(np.unique(train_labels)))
    if missing:
        raise MissingClassError(
            f"test split contains classes absent from training: {missing}")

    x_train = np.asarray(train_feats, dtype=np.float64)
    x_test = np.asarray(test_feats, dtype=np.float64)
    mu = x_train.mean(axis=0)
    sd = np.maximum(x_train.std(axis=0), 1e-8)
    x_train = (x_train - mu) / sd
    x_test = (x_test - mu) / sd

    n, d = x_train.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    vel_w = np.zeros_like(w)
    vel_b = np.zeros_like(b)
    onehot = np.eye(n_classes)[train_labels]

    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.seed, epoch)).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            xb, yb = x_train[sel], onehot[sel]
            logits = xb @ w + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            err = (p - yb) / len(sel)
            grad_w = xb.T @ err
            grad_b = err.sum(axis=0)
            vel_w = cfg.momentum * vel_w + grad_w
            vel_b = cfg.momentum * vel_b + grad_b
            w -= cfg.lr * vel_w
            b -= cfg.lr * vel_b

    pred = (x_test @ w + b).argmax(axis=1)
    return float((pred == np.asarray(test_labels)).mean())


def evaluate(encoders: dict[str, list], train_ds, test_ds,
             category_count: int, cfg: ProbeConfig = ProbeConfig(),
             out_dir=None) -> dict:
    """Score each model's encoder checkpoints with the linear probe.

    `encoders` maps a display name to the checkpoint paths of that model's
    independently trained runs. Every run is probed against the same two
    datasets; per-model accuracy is reported in percent, summarized as mean
    and sample standard deviation (ddof=1; zero when only one run exists).
    When `out_dir` is given, writes results.json and a plain-text
    results.txt table."""
    y_train = derive_labels(train_ds.catmaps, category_count)
    y_test = derive_labels(test_ds.catmaps, category_count)
    rows = []
    for model, paths in encoders.items():
        accs = []
        for path in paths:
            params, arch = load_params(path)
            f_train = extract_features(params, arch, train_ds.frames)
            f_test = extract_features(params, arch, test_ds.frames)
            accs.append(100.0 * linear_probe(f_train, y_train, f_test,
                                             y_test, category_count + 1, cfg))
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        rows.append({"model": model, "N": len(accs),
                     "top1_mean": float(np.mean(accs)), "top1_std": std,
                     "runs": accs})
    result = {"n_classes": category_count + 1,
              "train_frames": len(train_ds), "test_frames": len(test_ds),
              "rows": rows}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.json"), "w",
                  encoding="utf-8") as f:
            json.dump(result, f, indent=2)
            f.write("\n")
        with open(os.path.join(out_dir, "results.txt"), "w",
                  encoding="utf-8") as f:
            f.write(format_results(result))
    return result


def format_results(result: dict) -> str:
    """Fixed-width text table of probe accuracies, one row per model."""
    header = ("Model", "N", "top-1 acc.", "Std Dev")
    body = [(row["model"], str(row["N"]), f"{row['top1_mean']:.2f}",
             f"{row['top1_std']:.2f}") for row in result["rows"]]
    widths = [max(len(col[i]) for col in [header] + body)
              for i in range(len(header))]
    lines = []
    for cells in [header] + body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines) + "\n"
