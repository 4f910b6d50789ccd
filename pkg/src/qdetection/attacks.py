"""Seeded dataset poisoners with ground-truth flags.

Every attacker is a pure function of ``(dataset, spec, seed)`` and poisons
exactly ``ceil(ratio * pool)`` samples, where the pool is the source class,
the whole dataset or the target class depending on the attack.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .domain_model import LabeledBatch

__all__ = [
    "AttackError",
    "PoisonedDataset",
    "TriggerSpec",
    "flip_labels_targeted",
    "badnets",
    "narcissus_like",
    "apply_trigger_to_all",
    "poison_count",
    "default_trigger",
]


class AttackError(ValueError):
    pass


@dataclass(eq=False)
class PoisonedDataset:
    features: np.ndarray
    labels: np.ndarray
    flags: np.ndarray | None = None
    original_labels: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError("features must be an (n, d) array matching labels")
        self.flags = (np.zeros(n, dtype=bool) if self.flags is None
                      else np.asarray(self.flags, dtype=bool))
        self.original_labels = (self.labels.copy() if self.original_labels is None
                                else np.asarray(self.original_labels, dtype=np.int64))
        if self.flags.shape != (n,) or self.original_labels.shape != (n,):
            raise ValueError("flags and original_labels need one entry per sample")
        if np.any(self.labels < 0):
            raise ValueError("labels must be non-negative class indices")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if np.any(self.features < 0.0) or np.any(self.features > 1.0):
            raise ValueError("features must lie in [0, 1]")
        clean = ~self.flags
        if np.any(self.original_labels[clean] != self.labels[clean]):
            raise ValueError("unflagged samples must keep their original labels")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if "n_classes" in self.meta:
            return int(self.meta["n_classes"])
        top = max(self.labels.max(initial=-1), self.original_labels.max(initial=-1))
        return int(top) + 1

    def batch(self) -> LabeledBatch:
        return LabeledBatch(self.features, self.labels)

    def subset(self, indices) -> PoisonedDataset:
        idx = np.asarray(indices, dtype=np.int64)
        return PoisonedDataset(self.features[idx], self.labels[idx], self.flags[idx],
                               self.original_labels[idx], dict(self.meta))

    def copy(self) -> PoisonedDataset:
        return PoisonedDataset(self.features.copy(), self.labels.copy(), self.flags.copy(),
                               self.original_labels.copy(), dict(self.meta))

    def equals(self, other: PoisonedDataset) -> bool:
        return (np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.flags, other.flags)
                and np.array_equal(self.original_labels, other.original_labels))


@dataclass(frozen=True)
class TriggerSpec:
    positions: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    amplitude: float = 1.0

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        vals = tuple(float(v) for v in np.broadcast_to(
            np.asarray(self.values, dtype=np.float64), (len(pos),)))
        if len(set(pos)) != len(pos):
            raise AttackError("trigger positions must be unique")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise AttackError("trigger values must lie in [0, 1]")
        if not 0.0 <= self.amplitude <= 1.0:
            raise AttackError("trigger amplitude must lie in [0, 1]")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)

    def check(self, n_features: int) -> None:
        if any(not 0 <= p < n_features for p in self.positions):
            raise AttackError(f"trigger position out of range for {n_features} features")

    def to_dict(self) -> dict:
        return {"positions": list(self.positions), "values": list(self.values),
                "amplitude": self.amplitude}


def default_trigger(kind: str = "badnets") -> TriggerSpec:
    """Three corner features set to 1; the clean-label variant blends at 0.2."""
    return TriggerSpec((0, 1, 2), (1.0, 1.0, 1.0), 0.2 if kind == "narcissus" else 1.0)


def poison_count(ratio: float, pool: int) -> int:
    if not 0.0 <= ratio <= 1.0:
        raise AttackError(f"poison ratio must lie in [0, 1], got {ratio}")
    # round first so float noise such as 0.07 * 100 = 7.000000000000001 stays 7
    return int(math.ceil(round(ratio * pool, 9)))


def _choose(pool: np.ndarray, count: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.permutation(pool)[:count])


def _check_class(d: PoisonedDataset, cls: int, what: str) -> None:
    if not 0 <= cls < d.n_classes:
        raise AttackError(f"unknown {what} class {cls}")


def flip_labels_targeted(d: PoisonedDataset, source_class: int, target_class: int,
                         ratio: float, seed=0) -> PoisonedDataset:
    """Relabel ``ceil(ratio * |source|)`` source-class samples as ``target_class``."""
    _check_class(d, source_class, "source")
    _check_class(d, target_class, "target")
    if source_class == target_class:
        raise AttackError("source and target class must differ")
    pool = np.flatnonzero(d.labels == source_class)
    chosen = _choose(pool, poison_count(ratio, len(pool)), seed)
    out = d.copy()
    out.labels[chosen] = target_class
    out.flags[chosen] = True
    out.meta["attack"] = {"type": "label_flip", "ratio": ratio, "source_class": source_class,
                          "target_class": target_class, "seed": seed}
    return out


def _write_trigger(features: np.ndarray, rows: np.ndarray, trigger: TriggerSpec,
                   amplitude: float) -> None:
    if not trigger.positions:
        return
    cols = np.asarray(trigger.positions)
    vals = np.asarray(trigger.values)
    block = features[np.ix_(rows, cols)]
    features[np.ix_(rows, cols)] = np.clip((1.0 - amplitude) * block + amplitude * vals, 0.0, 1.0)


def badnets(d: PoisonedDataset, trigger: TriggerSpec, target_class: int, ratio: float,
            seed=0) -> PoisonedDataset:
    """Stamp the trigger on ``ceil(ratio * n)`` samples and relabel them."""
    _check_class(d, target_class, "target")
    trigger.check(d.n_features)
    chosen = _choose(np.arange(len(d)), poison_count(ratio, len(d)), seed)
    out = d.copy()
    _write_trigger(out.features, chosen, trigger, 1.0)
    out.labels[chosen] = target_class
    out.flags[chosen] = True
    out.meta["attack"] = {"type": "badnets", "ratio": ratio, "target_class": target_class,
                          "trigger": trigger.to_dict(), "seed": seed}
    return out


def narcissus_like(d: PoisonedDataset, trigger: TriggerSpec, target_class: int,
                   ratio: float, seed=0) -> PoisonedDataset:
    """Clean-label backdoor: blend the trigger into target-class samples only.

    A fixed low-amplitude blend replaces the surrogate-optimised perturbation
    of the original attack.
    """
    _check_class(d, target_class, "target")
    trigger.check(d.n_features)
    if trigger.amplitude == 0.0:
        warnings.warn("trigger amplitude 0 leaves flagged samples unchanged", stacklevel=2)
    pool = np.flatnonzero(d.labels == target_class)
    chosen = _choose(pool, poison_count(ratio, len(pool)), seed)
    out = d.copy()
    _write_trigger(out.features, chosen, trigger, trigger.amplitude)
    out.flags[chosen] = True
    out.meta["attack"] = {"type": "narcissus", "ratio": ratio, "target_class": target_class,
                          "trigger": trigger.to_dict(), "seed": seed}
    return out


def apply_trigger_to_all(testset, trigger: TriggerSpec) -> LabeledBatch:
    """Copy of ``testset`` with the trigger blended into every row."""
    X, y = testset
    X = np.array(X, dtype=np.float64, copy=True)
    trigger.check(X.shape[1])
    _write_trigger(X, np.arange(X.shape[0]), trigger, trigger.amplitude)
    return LabeledBatch(X, np.array(y, copy=True))
