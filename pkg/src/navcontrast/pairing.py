"""Positive-pair rules for contrastive pretraining.

Instead of always contrasting two augmentations of the same frame, a pairing
rule may declare two *different* frames a positive pair when they were taken
close together in time, or from nearly the same place and heading. Frames
within the rule's thresholds are also withheld from the negative pool, since
treating a near-duplicate view as a negative would push apart features that
the rule considers equivalent.

All threshold comparisons are inclusive: a pair sitting exactly on a
boundary counts as similar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .trajectory import FrameRecords

MODES = ("standard", "time", "space")


def circular_yaw_distance(a, b):
    """Shortest angular distance in degrees, in [0, 180]. Accepts scalars or
    arrays; inputs may lie outside [0, 360)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    out = np.minimum(d, 360.0 - d)
    return float(out) if np.isscalar(a) and np.isscalar(b) else out


@dataclass(frozen=True)
class StandardPairing:
    """Instance discrimination: the only frame similar to i is i itself."""

    mode: str = "standard"

    def mask(self, records: FrameRecords, query: int) -> np.ndarray:
        return records.index == records.index[query]


@dataclass(frozen=True)
class TimePairing:
    """Frames within `t_max` seconds of the query are similar."""

    t_max: float = 10.0
    mode: str = "time"

    def mask(self, records: FrameRecords, query: int) -> np.ndarray:
        return np.abs(records.t - records.t[query]) <= self.t_max


@dataclass(frozen=True)
class SpacePairing:
    """Frames within `d_max` meters and `a_max` degrees of heading are
    similar; both conditions must hold."""

    d_max: float = 0.2
    a_max: float = 3.0
    mode: str = "space"

    def mask(self, records: FrameRecords, query: int) -> np.ndarray:
        delta = records.pos - records.pos[query]
        near = np.linalg.norm(delta, axis=1) <= self.d_max
        aligned = circular_yaw_distance(records.yaw, records.yaw[query]) <= self.a_max
        return near & aligned


PairingRule = StandardPairing | TimePairing | SpacePairing


def make_rule(mode: str, t_max: float = 10.0, d_max: float = 0.2,
              a_max: float = 3.0) -> PairingRule:
    if mode == "standard":
        return StandardPairing()
    if mode == "time":
        return TimePairing(t_max)
    if mode == "space":
        return SpacePairing(d_max, a_max)
    raise ValueError(f"unknown pairing mode {mode!r}")


def is_similar(rule: PairingRule, records: FrameRecords, i: int, j: int) -> bool:
    """Pairwise view of a rule: is frame j similar to frame i?

    Evaluates the rule's own mask on just the two frames, so this can never
    drift from the vectorized path."""
    pair = records.take(np.array([i, j], dtype=np.int64))
    return bool(rule.mask(pair, 0)[1])


@dataclass(frozen=True)
class PairAssignment:
    query_index: int
    positive_index: int
    fallback_used: bool


def select_positive(rule: PairingRule, records: FrameRecords, query: int,
                    rng: np.random.Generator) -> PairAssignment:
    """Pick the positive partner for a query frame.

    Standard pairing always uses the query itself (two augmented views).
    Otherwise the partner is drawn uniformly from the similar frames other
    than the query; if none exist, the rule falls back to the query frame
    and says so.
    """
    if isinstance(rule, StandardPairing):
        return PairAssignment(query, query, False)
    mask = rule.mask(records, query)
    mask = mask.copy()
    mask[query] = False
    candidates = np.flatnonzero(mask)
    if len(candidates) == 0:
        return PairAssignment(query, query, True)
    j = int(candidates[rng.integers(len(candidates))])
    return PairAssignment(query, j, False)


def negative_masks(rule: PairingRule, records: FrameRecords, queries,
                   pool: FrameRecords) -> np.ndarray:
    """(B, P) mask of which pool entries are fair negatives for each query:
    exactly those the rule does not consider similar."""
    q = records.take(np.asarray(queries, dtype=np.int64))
    if isinstance(rule, StandardPairing):
        sim = pool.index[None, :] == q.index[:, None]
    elif isinstance(rule, TimePairing):
        sim = np.abs(pool.t[None, :] - q.t[:, None]) <= rule.t_max
    else:
        d = np.linalg.norm(pool.pos[None, :, :] - q.pos[:, None, :], axis=2)
        aligned = circular_yaw_distance(pool.yaw[None, :], q.yaw[:, None]) \
            <= rule.a_max
        sim = (d <= rule.d_max) & aligned
    return ~sim


def negative_mask(rule: PairingRule, records: FrameRecords, query: int,
                  pool: FrameRecords) -> np.ndarray:
    return negative_masks(rule, records, [query], pool)[0]


def assign_all(rule: PairingRule, records: FrameRecords,
               rng: np.random.Generator) -> list[PairAssignment]:
    """One positive assignment per frame, in frame order."""
    return [select_positive(rule, records, i, rng) for i in range(len(records))]


def fallback_fraction(assignments) -> float:
    if not assignments:
        return 0.0
    return sum(a.fallback_used for a in assignments) / len(assignments)


def save_pair_manifest(assignments, rule: PairingRule, path) -> None:
    """One JSON line per assignment: i, j, mode, fallback."""
    with open(path, "w", encoding="utf-8") as f:
        for a in assignments:
            f.write(json.dumps({"i": a.query_index, "j": a.positive_index,
                                "mode": rule.mode,
                                "fallback": a.fallback_used}) + "\n")


def load_pair_manifest(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
