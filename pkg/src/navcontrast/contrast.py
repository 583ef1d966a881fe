"""Momentum-contrast pretraining with pluggable positive-pair rules.

The query encoder is trained by SGD; the key encoder trails it as an
exponential moving average, and its outputs fill a fixed-capacity FIFO queue
that supplies negatives. The positive key is always encoded fresh — the
queue only ever contributes negatives — and queue entries that the pairing
rule deems similar to a query are masked out of that query's denominator.

Per-query loss, with s(a, b) = a.b / tau:

    l_i = -s(q_i, k_pos_i) + logsumexp over D_i

where D_i is the masked queue (mode "negatives_only"), optionally extended
by the positive itself (mode "with_positive", the classic softmax form).
With "negatives_only" the loss can be negative; that is the intended shape,
not a bug.

Every random draw is keyed by (seed, stream tag, step), so training is
reproducible to the byte and can resume from an epoch boundary without
changing any result.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_batch, draw_view_params
from .errors import ConfigError, DegenerateBatchError
from .nn import (
    EncoderArch,
    backward,
    forward,
    init_params,
    load_params,
    save_params,
    sgd_step,
    zero_velocity,
)
from .pairing import (
    assign_all,
    fallback_fraction,
    make_rule,
    negative_masks,
    save_pair_manifest,
    select_positive,
)
from .trajectory import Dataset, FrameRecords

# rng stream tags; each draw site is keyed (seed, tag, counter)
_TAG_INIT = 0
_TAG_WARMUP = 1
_TAG_ORDER = 2
_TAG_PAIR = 3
_TAG_AUG_Q = 4
_TAG_AUG_K = 5
_TAG_MANIFEST = 6


class KeyQueue:
    """Fixed-capacity FIFO of key features plus the navigational record of
    the frame each key came from (needed to mask unfair negatives)."""

    _META = ("index", "step", "t", "pos", "yaw", "light")

    def __init__(self, capacity: int, feat_dim: int):
        if capacity < 1:
            raise ConfigError("queue capacity must be >= 1")
        self.capacity = capacity
        self.keys = np.zeros((capacity, feat_dim), dtype=np.float32)
        self.meta = {
            "index": np.zeros(capacity, dtype=np.int64),
            "step": np.zeros(capacity, dtype=np.int64),
            "t": np.zeros(capacity, dtype=float),
            "pos": np.zeros((capacity, 3), dtype=float),
            "yaw": np.zeros(capacity, dtype=float),
            "light": np.zeros(capacity, dtype=np.int64),
        }
        self.head = 0   # next write slot
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def enqueue(self, keys: np.ndarray, records: FrameRecords) -> None:
        """Append a batch; once full, the oldest entries are overwritten."""
        n = len(keys)
        if n != len(records):
            raise ValueError("keys and records length mismatch")
        if n > self.capacity:
            keys = keys[-self.capacity:]
            records = records.take(np.arange(n - self.capacity, n))
            n = self.capacity
        slots = (self.head + np.arange(n)) % self.capacity
        self.keys[slots] = keys.astype(np.float32)
        for name in self._META:
            self.meta[name][slots] = getattr(records, name)
        self.head = int((self.head + n) % self.capacity)
        self.count = min(self.count + n, self.capacity)

    def _order(self) -> np.ndarray:
        if self.count < self.capacity:
            return np.arange(self.count)
        return (self.head + np.arange(self.capacity)) % self.capacity

    def ordered_keys(self) -> np.ndarray:
        """Keys oldest to newest."""
        return self.keys[self._order()]

    def ordered_records(self) -> FrameRecords:
        o = self._order()
        m = self.meta
        return FrameRecords(index=m["index"][o], step=m["step"][o],
                            t=m["t"][o], pos=m["pos"][o], yaw=m["yaw"][o],
                            light=m["light"][o])

    def save(self, path) -> None:
        np.savez(path, keys=self.keys, head=self.head, count=self.count,
                 **{f"meta_{k}": v for k, v in self.meta.items()})

    @classmethod
    def load(cls, path) -> "KeyQueue":
        with np.load(path) as z:
            q = cls(int(z["keys"].shape[0]), int(z["keys"].shape[1]))
            q.keys = z["keys"].copy()
            q.head = int(z["head"])
            q.count = int(z["count"])
            for name in cls._META:
                q.meta[name] = z[f"meta_{name}"].copy()
        return q


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.2
    denominator_mode: str = "negatives_only"

    def validate(self) -> None:
        if self.tau <= 0.0:
            raise ConfigError("tau must be positive")
        if self.denominator_mode not in ("negatives_only", "with_positive"):
            raise ConfigError(
                f"unknown denominator_mode {self.denominator_mode!r}")


def info_nce(q: np.ndarray, k_pos: np.ndarray, neg_keys: np.ndarray,
             neg_mask: np.ndarray, cfg: LossConfig):
    """Mean contrastive loss over a batch and its gradients.

    q, k_pos: (B, D); neg_keys: (Q, D); neg_mask: (B, Q) with True marking
    usable negatives. Returns (loss, grad_q, grad_k_pos). All arithmetic
    stays in the dtype of `q`, so float64 inputs give a float64 check path.
    """
    cfg.validate()
    b, d = q.shape
    if k_pos.shape != (b, d):
        raise ValueError("k_pos shape mismatch")
    if neg_keys.ndim != 2 or neg_keys.shape[1] != d:
        raise ValueError("neg_keys shape mismatch")
    if neg_mask.shape != (b, len(neg_keys)):
        raise ValueError("neg_mask shape mismatch")
    dtype = q.dtype
    inv_tau = np.asarray(1.0, dtype=dtype) / np.asarray(cfg.tau, dtype=dtype)

    l_pos = (q * k_pos).sum(axis=1) * inv_tau            # (B,)
    logits = (q @ neg_keys.T) * inv_tau                   # (B, Q)
    neg_inf = np.array(-np.inf, dtype=dtype)
    masked = np.where(neg_mask, logits, neg_inf)

    with_pos = cfg.denominator_mode == "with_positive"
    if not with_pos:
        empty = ~neg_mask.any(axis=1)
        if np.any(empty):
            i = int(np.flatnonzero(empty)[0])
            raise DegenerateBatchError(
                f"query at batch slot {i} has no admissible negatives; "
                "use denominator_mode='with_positive' or a larger queue")
        shift = masked.max(axis=1)
    else:
        shift = np.maximum(masked.max(axis=1, initial=-np.inf), l_pos)

    exp_neg = np.where(neg_mask, np.exp(masked - shift[:, None]), 0.0)
    denom = exp_neg.sum(axis=1)
    if with_pos:
        exp_pos = np.exp(l_pos - shift)
        denom = denom + exp_pos
    lse = shift + np.log(denom)
    losses = lse - l_pos
    loss = float(losses.mean())

    p_neg = exp_neg / denom[:, None]
    p_pos = (exp_pos / denom) if with_pos else np.zeros(b, dtype=dtype)
    scale = inv_tau / np.asarray(b, dtype=dtype)
    grad_q = (p_neg @ neg_keys + (p_pos - 1.0)[:, None] * k_pos) * scale
    grad_k_pos = (p_pos - 1.0)[:, None] * q * scale
    return loss, grad_q.astype(dtype), grad_k_pos.astype(dtype)


def momentum_update(key_params: dict, query_params: dict,
                    m: float) -> dict[str, np.ndarray]:
    """EMA tracking: theta_k <- m * theta_k + (1 - m) * theta_q."""
    if not 0.0 <= m < 1.0:
        raise ConfigError("key momentum must lie in [0, 1)")
    return {k: m * key_params[k] + (1.0 - m) * query_params[k]
            for k in key_params}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.06
    sgd_momentum: float = 0.9
    key_momentum: float = 0.99
    queue_capacity: int = 1024
    tau: float = 0.2
    denominator_mode: str = "negatives_only"
    pairing_mode: str = "standard"
    t_max: float = 10.0
    d_max: float = 0.2
    a_max: float = 3.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    arch: EncoderArch = field(default_factory=EncoderArch)
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.sgd_momentum < 1.0:
            raise ConfigError("sgd_momentum must lie in [0, 1)")
        if not 0.0 <= self.key_momentum < 1.0:
            raise ConfigError("key_momentum must lie in [0, 1)")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        LossConfig(self.tau, self.denominator_mode).validate()
        if self.pairing_mode not in ("standard", "time", "space"):
            raise ConfigError(f"unknown pairing_mode {self.pairing_mode!r}")
        self.augment.validate()
        self.arch.validate()

    def rule(self):
        return make_rule(self.pairing_mode, t_max=self.t_max,
                         d_max=self.d_max, a_max=self.a_max)


@dataclass
class TrainState:
    """Everything that evolves across steps; serializable between epochs."""

    params_q: dict
    params_k: dict
    velocity: dict
    queue: KeyQueue
    step: int
    epoch: int


def _encode_keys(params_k, frames_u8, draws, cfg: TrainConfig):
    views = augment_batch(frames_u8, cfg.augment, draws)
    _, vhat, _ = forward(params_k, views, cfg.arch, need_tape=False)
    return vhat


def train_step(state: TrainState, dataset: Dataset, batch: np.ndarray,
               cfg: TrainConfig) -> dict:
    """One optimization step on a batch of frame indices; mutates `state`
    and returns the metrics row."""
    records = dataset.records
    rule = cfg.rule()
    b = len(batch)

    rng_pair = np.random.default_rng((cfg.seed, _TAG_PAIR, state.step))
    assignments = [select_positive(rule, records, int(i), rng_pair)
                   for i in batch]
    pos_idx = np.array([a.positive_index for a in assignments], dtype=np.int64)

    draws_q = draw_view_params(
        np.random.default_rng((cfg.seed, _TAG_AUG_Q, state.step)), b)
    draws_k = draw_view_params(
        np.random.default_rng((cfg.seed, _TAG_AUG_K, state.step)), b)
    views_q = augment_batch(dataset.frames[batch], cfg.augment, draws_q)
    _, q_feat, tape = forward(state.params_q, views_q, cfg.arch)
    k_feat = _encode_keys(state.params_k, dataset.frames[pos_idx], draws_k, cfg)

    neg_keys = state.queue.ordered_keys()
    neg_mask = negative_masks(rule, records, batch, state.queue.ordered_records())
    loss, grad_q, _ = info_nce(q_feat, k_feat, neg_keys, neg_mask,
                               LossConfig(cfg.tau, cfg.denominator_mode))

    grads = backward(state.params_q, tape, grad_q, cfg.arch)
    state.params_q, state.velocity = sgd_step(
        state.params_q, grads, state.velocity, cfg.lr, cfg.sgd_momentum)
    state.params_k = momentum_update(state.params_k, state.params_q,
                                     cfg.key_momentum)
    state.queue.enqueue(k_feat, records.take(pos_idx))

    row = {
        "step": state.step,
        "loss": loss,
        "pos_sim": float((q_feat * k_feat).sum(axis=1).mean()),
        "fallback_frac": fallback_fraction(assignments),
    }
    state.step += 1
    return row


def _warmup(state: TrainState, dataset: Dataset, cfg: TrainConfig) -> None:
    """Fill the queue with keys of randomly chosen frames before training,
    so early steps see a populated negative pool."""
    n = len(dataset)
    take = min(cfg.queue_capacity, n)
    rng = np.random.default_rng((cfg.seed, _TAG_WARMUP))
    idx = rng.choice(n, size=take, replace=False)
    draws = draw_view_params(rng, take)
    for lo in range(0, take, cfg.batch_size):
        sel = idx[lo:lo + cfg.batch_size]
        vhat = _encode_keys(state.params_k, dataset.frames[sel],
                            draws[lo:lo + cfg.batch_size], cfg)
        state.queue.enqueue(vhat, dataset.records.take(sel))


def init_state(dataset: Dataset, cfg: TrainConfig) -> TrainState:
    cfg.validate()
    rng = np.random.default_rng((cfg.seed, _TAG_INIT))
    params_q = init_params(cfg.arch, rng)
    params_k = {k: v.copy() for k, v in params_q.items()}
    state = TrainState(params_q=params_q, params_k=params_k,
                       velocity=zero_velocity(params_q),
                       queue=KeyQueue(cfg.queue_capacity, cfg.arch.feat_dim),
                       step=0, epoch=0)
    _warmup(state, dataset, cfg)
    return state


def epoch_batches(n: int, epoch: int, cfg: TrainConfig) -> list[np.ndarray]:
    """Shuffled batch index lists for one epoch; the trailing partial batch
    is kept."""
    order = np.random.default_rng((cfg.seed, _TAG_ORDER, epoch)).permutation(n)
    return [order[lo:lo + cfg.batch_size]
            for lo in range(0, n, cfg.batch_size)]


# ---------------------------------------------------------------------------
# run directory management


_STATE_FILES = {
    "params_q": "encoder_q.ckpt",
    "params_k": "encoder_k.ckpt",
    "velocity": "velocity.ckpt",
    "queue": "queue.npz",
    "state": "state.json",
    "metrics": "metrics.jsonl",
    "pairs": "pairs.jsonl",
}


def _save_state(out_dir, state: TrainState, cfg: TrainConfig) -> None:
    save_params(os.path.join(out_dir, _STATE_FILES["params_q"]),
                state.params_q, cfg.arch)
    save_params(os.path.join(out_dir, _STATE_FILES["params_k"]),
                state.params_k, cfg.arch)
    save_params(os.path.join(out_dir, _STATE_FILES["velocity"]),
                state.velocity, cfg.arch)
    state.queue.save(os.path.join(out_dir, _STATE_FILES["queue"]))
    blob = {"epoch": state.epoch, "step": state.step, "config": _config_dict(cfg)}
    with open(os.path.join(out_dir, _STATE_FILES["state"]), "w",
              encoding="utf-8") as f:
        json.dump(blob, f, indent=2)
        f.write("\n")


def _config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["augment"]["crop_scale_range"] = list(d["augment"]["crop_scale_range"])
    d["arch"]["conv_channels"] = list(d["arch"]["conv_channels"])
    return d


def _load_state(out_dir, cfg: TrainConfig) -> TrainState:
    with open(os.path.join(out_dir, _STATE_FILES["state"]), "r",
              encoding="utf-8") as f:
        blob = json.load(f)
    stored, current = dict(blob["config"]), _config_dict(cfg)
    # The epoch budget is only a loop bound — extending it cannot change any
    # computed value — so a resume may raise it. Everything else must match.
    stored.pop("epochs", None)
    current.pop("epochs", None)
    if stored != current:
        raise ConfigError("run directory was created with a different config; "
                          "refusing to resume")
    params_q, _ = load_params(os.path.join(out_dir, _STATE_FILES["params_q"]))
    params_k, _ = load_params(os.path.join(out_dir, _STATE_FILES["params_k"]))
    velocity, _ = load_params(os.path.join(out_dir, _STATE_FILES["velocity"]))
    queue = KeyQueue.load(os.path.join(out_dir, _STATE_FILES["queue"]))
    return TrainState(params_q=params_q, params_k=params_k, velocity=velocity,
                      queue=queue, step=int(blob["step"]),
                      epoch=int(blob["epoch"]))


def pretrain(dataset: Dataset, cfg: TrainConfig, out_dir,
             resume: bool = False) -> dict:
    """Train on a rendered dataset, writing metrics, a pair manifest, and
    resumable state into `out_dir`.

    With `resume=True` an interrupted run continues from its last completed
    epoch and finishes with outputs identical to an uninterrupted run.
    Returns a summary with final paths and the last metrics row.
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    state_path = os.path.join(out_dir, _STATE_FILES["state"])
    metrics_path = os.path.join(out_dir, _STATE_FILES["metrics"])

    if resume and os.path.exists(state_path):
        state = _load_state(out_dir, cfg)
    else:
        state = init_state(dataset, cfg)
        manifest_rng = np.random.default_rng((cfg.seed, _TAG_MANIFEST))
        assignments = assign_all(cfg.rule(), dataset.records, manifest_rng)
        save_pair_manifest(assignments, cfg.rule(),
                           os.path.join(out_dir, _STATE_FILES["pairs"]))
        with open(metrics_path, "w", encoding="utf-8"):
            pass  # truncate

    last_row = None
    n = len(dataset)
    for epoch in range(state.epoch, cfg.epochs):
        rows = []
        for batch in epoch_batches(n, epoch, cfg):
            rows.append(train_step(state, dataset, batch, cfg))
        state.epoch = epoch + 1
        with open(metrics_path, "a", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        _save_state(out_dir, state, cfg)
        if rows:
            last_row = rows[-1]

    return {
        "out_dir": str(out_dir),
        "steps": state.step,
        "epochs": state.epoch,
        "final_metrics": last_row,
        "files": {k: os.path.join(out_dir, v) for k, v in _STATE_FILES.items()},
    }
