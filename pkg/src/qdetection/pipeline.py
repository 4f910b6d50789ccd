"""Bilevel poisoned-data detection loop, subset metrics and baseline selectors.

Each batch runs four stages against a Q-WAN ``psi`` and a domain classifier
``theta``:

1. the domain classifier is cloned into a virtual one;
2. adversarial filtering: ``psi`` learns to push weights of high-loss samples
   toward 0 (guided targets -1 above the batch loss quantile, +1 below);
3. selective learning: the virtual classifier takes a weighted step, losses
   are recomputed and ``psi`` gets a second update with refreshed targets;
4. actual update: the domain classifier takes a weighted step with weights
   from the updated ``psi``.

After the last epoch every sample is weighted by the frozen ``psi`` and the
``subset_size`` highest-weight samples form the selected subset.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .attacks import PoisonedDataset
from .domain_model import (ClassifierParams, accuracy, clone_virtual, fit_classifier,
                           init_classifier, per_class_accuracy, per_sample_loss,
                           weighted_step)
from .qwan import (QwanParams, QwanTopology, TrainConfig, apply_delta, encode_loss,
                   ep_delta, infer_weight, run_phase)
from .samplers import SamplerConfig, SimulatedAnnealingSampler

__all__ = [
    "SelectionError",
    "StageError",
    "DetectionConfig",
    "RetrainConfig",
    "SelectionResult",
    "run_q_detection",
    "select_top",
    "corruption_ratio",
    "ncr",
    "cr_rand_expected",
    "normalize_losses",
    "guided_targets",
    "per_label",
    "baseline_random",
    "baseline_loss_scan",
    "baseline_dcm",
    "retrain_eval",
]

log = logging.getLogger(__name__)

LOSS_SCALINGS = {"minmax", "log-minmax", "rank"}


class SelectionError(ValueError):
    pass


class StageError(RuntimeError):
    """A sampler or model failure inside one stage of the detection loop."""


@dataclass(frozen=True)
class DetectionConfig:
    """Hyperparameters of :func:`run_q_detection`.

    Q-WAN deltas are summed over a batch, so ``lr_qwan`` is per sample and
    small.  With ``per_class`` the loss scaling and the guided-target split
    are computed separately within each label, which keeps one class from
    absorbing all the weight.  ``lr_qwan=None`` falls back to
    ``qwan.learning_rate``.
    """

    epochs: int = 8
    batch_size: int = 100
    subset_size: int = 200
    loss_threshold_quantile: float = 0.5
    lr_qwan: float | None = 0.001
    lr_virtual: float = 0.5
    lr_actual: float = 0.5
    n_hidden: int = 32
    qwan: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(num_reads=10,
                                                                          sweeps=300))
    classifier_hidden: int | None = None
    infer_reads: int = 1
    warmup_epochs: int = 1
    loss_scaling: str = "rank"
    per_class: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.subset_size < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and subset_size >= 1 required")
        if not 0.0 < self.loss_threshold_quantile < 1.0:
            raise ValueError("loss_threshold_quantile must lie in (0, 1)")
        if self.lr_qwan is not None and self.lr_qwan <= 0:
            raise ValueError("lr_qwan must be positive")
        if self.lr_virtual <= 0 or self.lr_actual <= 0:
            raise ValueError("stage learning rates must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.loss_scaling not in LOSS_SCALINGS:
            raise ValueError(f"loss_scaling must be one of {sorted(LOSS_SCALINGS)}")

    @property
    def qwan_lr(self) -> float:
        return self.qwan.learning_rate if self.lr_qwan is None else self.lr_qwan

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RetrainConfig:
    steps: int = 300
    lr: float = 0.5
    hidden: int | None = None
    target_class: int | None = None
    seed: int = 0


@dataclass
class SelectionResult:
    """Selected indices (best first), full-dataset weights and CR / NCR in percent.

    ``ncr`` is None when the dataset has no poisoned samples.
    """

    selected: np.ndarray
    weights: np.ndarray
    cr: float
    ncr: float | None
    cr_rand: float
    method: str = "q-detection"
    diagnostics: list[dict] = field(default_factory=list)
    qwan: QwanParams | None = None
    classifier: ClassifierParams | None = None

    @property
    def ncr_applicable(self) -> bool:
        return self.ncr is not None

    def to_dict(self, include_weights: bool = True) -> dict:
        out = {
            "method": self.method,
            "cr": self.cr,
            "cr_rand": self.cr_rand,
            "ncr": self.ncr,
            "ncr_applicable": self.ncr_applicable,
            "subset_size": int(len(self.selected)),
            "selected": [int(i) for i in self.selected],
            "diagnostics": self.diagnostics,
        }
        if include_weights:
            out["weights"] = [float(w) for w in self.weights]
        return out


def select_top(weights, n: int) -> np.ndarray:
    """Indices of the ``n`` largest weights; ties go to the lower index."""
    w = np.asarray(weights, dtype=np.float64)
    if not 0 <= n <= len(w):
        raise SelectionError(f"cannot select {n} of {len(w)} samples")
    order = np.lexsort((np.arange(len(w)), -w))
    return order[:n]


def corruption_ratio(selected, flags) -> float:
    """Percent of poisoned samples inside the selection."""
    selected = np.asarray(selected, dtype=np.int64)
    flags = np.asarray(flags, dtype=bool)
    if len(selected) == 0:
        raise SelectionError("corruption ratio of an empty selection is undefined")
    if selected.min() < 0 or selected.max() >= len(flags):
        raise SelectionError("selected index out of range")
    return 100.0 * int(flags[selected].sum()) / len(selected)


def ncr(cr: float, cr_rand: float) -> float | None:
    """``100 * cr / cr_rand``; None (not applicable) when ``cr_rand`` is 0."""
    if cr_rand <= 0:
        return None
    return 100.0 * cr / cr_rand


def cr_rand_expected(d: PoisonedDataset) -> float:
    """Expected CR of a uniformly random subset, i.e. the poisoned percentage."""
    return 100.0 * int(np.count_nonzero(d.flags)) / len(d)


def normalize_losses(losses, scaling: str = "minmax") -> np.ndarray:
    """Scale to ``[0, 1]``; a constant vector maps to zeros.

    ``minmax`` rescales the raw losses, ``log-minmax`` rescales their logs
    (floored at 1e-12) and ``rank`` uses the mid-rank empirical CDF.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if scaling == "log-minmax":
        losses = np.log(np.maximum(losses, 1e-12))
    elif scaling == "rank":
        if len(losses) < 2:
            return np.zeros_like(losses)
        return (rankdata(losses) - 1.0) / (len(losses) - 1.0)
    elif scaling != "minmax":
        raise ValueError(f"unknown loss scaling {scaling!r}")
    lo, hi = losses.min(), losses.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(losses)
    return np.clip((losses - lo) / (hi - lo), 0.0, 1.0)


def guided_targets(losses, quantile: float) -> np.ndarray:
    """-1 for losses above the batch quantile, +1 otherwise."""
    losses = np.asarray(losses, dtype=np.float64)
    return np.where(losses > np.quantile(losses, quantile), -1, 1).astype(np.int8)


def per_label(fn, losses, labels, per_class: bool):
    """Apply ``fn`` to the whole vector, or separately within each label."""
    losses = np.asarray(losses, dtype=np.float64)
    if not per_class:
        return fn(losses)
    out = None
    for cls in np.unique(labels):
        mask = labels == cls
        part = fn(losses[mask])
        if out is None:
            out = np.empty(len(losses), dtype=part.dtype)
        out[mask] = part
    return out


class _QwanRunner:
    """Memoises phases per input code for one parameter snapshot.

    Samplers are deterministic in the problem, so samples sharing a
    thermometer code share their phase results.
    """

    def __init__(self, sampler, cfg: DetectionConfig):
        self.sampler = sampler
        self.cfg = cfg

    def codes(self, norm_losses):
        k = self.cfg.qwan.thermometer_bits
        return [encode_loss(x, k) for x in norm_losses]

    def delta(self, psi: QwanParams, norm_losses, targets):
        beta = self.cfg.qwan.beta_nudge
        free_cache, guided_cache = {}, {}
        total = [np.zeros_like(psi.j_ih), np.zeros_like(psi.j_ho), np.zeros_like(psi.bias)]
        for clamp, target in zip(self.codes(norm_losses), targets):
            key = clamp.values().tobytes()
            if key not in free_cache:
                free_cache[key] = run_phase(psi, clamp, self.sampler)
            if (key, target) not in guided_cache:
                guided = run_phase(psi, clamp, self.sampler, target=int(target),
                                   beta_nudge=beta)
                guided_cache[(key, target)] = ep_delta(psi, clamp, free_cache[key], guided)
            for acc, part in zip(total, guided_cache[(key, target)]):
                acc += part
        return total

    def weights(self, psi: QwanParams, norm_losses):
        cache = {}
        out = np.empty(len(norm_losses))
        k = self.cfg.qwan.thermometer_bits
        thresholds = (np.arange(k) + 0.5) / k
        for i, x in enumerate(norm_losses):
            key = int(np.count_nonzero(x >= thresholds))
            if key not in cache:
                cache[key] = infer_weight(psi, x, self.sampler, reads=self.cfg.infer_reads,
                                          seed=None if self.cfg.infer_reads == 1
                                          else self.cfg.sampler.seed)
            out[i] = cache[key]
        return out


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        raise StageError(f"{name} stage failed: {exc}") from exc


def run_q_detection(d: PoisonedDataset, cfg: DetectionConfig = DetectionConfig(),
                    sampler=None, weight_override: Callable[[np.ndarray], np.ndarray] | None = None,
                    callback: Callable[[str, dict], None] | None = None) -> SelectionResult:
    """Run the detection loop and select ``cfg.subset_size`` samples.

    ``sampler`` defaults to simulated annealing built from ``cfg.sampler``.
    ``weight_override`` maps sample indices to final weights in place of the
    trained Q-WAN (a test hook); ``callback(stage, state)`` observes every
    stage.  The input dataset is never modified.
    """
    n = len(d)
    if n == 0:
        raise SelectionError("dataset is empty")
    if cfg.subset_size > n:
        raise SelectionError(f"subset_size {cfg.subset_size} exceeds dataset size {n}")
    sampler = sampler if sampler is not None else SimulatedAnnealingSampler(cfg.sampler)
    runner = _QwanRunner(sampler, cfg)
    X, y, flags = d.features, d.labels, d.flags
    k = cfg.qwan.thermometer_bits
    clip = cfg.qwan.weight_clip
    lr_q = cfg.qwan_lr

    psi = QwanParams.random(QwanTopology(k, cfg.n_hidden, 1), seed=[cfg.seed, 7])
    theta = init_classifier(d.n_features, d.n_classes, cfg.classifier_hidden, seed=[cfg.seed, 11])
    diagnostics = []
    notify = callback or (lambda stage, state: None)

    def scale(losses, labels):
        return per_label(lambda v: normalize_losses(v, cfg.loss_scaling), losses, labels,
                         cfg.per_class)

    def split(losses, labels):
        return per_label(lambda v: guided_targets(v, cfg.loss_threshold_quantile), losses,
                         labels, cfg.per_class)

    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 13, epoch]).permutation(n)
        seen_w, seen_flags = [], []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]

            virtual = clone_virtual(theta)
            notify("virtual_copy", {"theta": theta, "virtual": virtual, "psi": psi})

            losses = per_sample_loss(virtual, Xb, yb)
            norm = scale(losses, yb)
            targets = split(losses, yb)
            delta = _stage("adversarial filtering", runner.delta, psi, norm, targets)
            psi = apply_delta(psi, delta, lr_q, clip)
            notify("adversarial_filtering", {"theta": theta, "virtual": virtual, "psi": psi})

            w = _stage("selective learning", runner.weights, psi, norm)
            virtual = weighted_step(virtual, Xb, yb, w, cfg.lr_virtual)
            losses_v = per_sample_loss(virtual, Xb, yb)
            delta = _stage("selective learning", runner.delta, psi, scale(losses_v, yb),
                           split(losses_v, yb))
            psi = apply_delta(psi, delta, lr_q, clip)
            notify("selective_learning", {"theta": theta, "virtual": virtual, "psi": psi})

            if epoch < cfg.warmup_epochs:
                w_actual = np.ones(len(idx))
            else:
                w_actual = _stage("actual update", runner.weights, psi, norm)
            theta = weighted_step(theta, Xb, yb, w_actual, cfg.lr_actual)
            notify("actual_update", {"theta": theta, "virtual": virtual, "psi": psi})
            seen_w.append(w_actual)
            seen_flags.append(flags[idx])

        ew, ef = np.concatenate(seen_w), np.concatenate(seen_flags)
        diag = {
            "epoch": epoch,
            "mean_weight_clean": float(ew[~ef].mean()) if (~ef).any() else None,
            "mean_weight_poisoned": float(ew[ef].mean()) if ef.any() else None,
            "train_accuracy": accuracy(theta, X, y),
        }
        diagnostics.append(diag)
        log.info("epoch %d: clean %.3f poisoned %s acc %.3f", epoch, diag["mean_weight_clean"],
                 diag["mean_weight_poisoned"], diag["train_accuracy"])

    if weight_override is not None:
        weights = np.asarray(weight_override(np.arange(n)), dtype=np.float64)
    else:
        norm_all = scale(per_sample_loss(theta, X, y), y)
        weights = _stage("final weighting", runner.weights, psi, norm_all)
    if weights.shape != (n,) or np.any(weights < 0) or np.any(weights > 1):
        raise SelectionError("final weights must be a length-n vector in [0, 1]")
    if flags.any():
        diagnostics.append({
            "epoch": "final",
            "mean_weight_clean": float(weights[~flags].mean()) if (~flags).any() else None,
            "mean_weight_poisoned": float(weights[flags].mean()),
        })
    return _result(d, weights, cfg.subset_size, "q-detection", diagnostics, psi, theta)


def _result(d: PoisonedDataset, weights, n_select: int, method: str, diagnostics=None,
            psi=None, theta=None) -> SelectionResult:
    selected = select_top(weights, n_select)
    cr = corruption_ratio(selected, d.flags)
    rand = cr_rand_expected(d)
    return SelectionResult(selected, np.asarray(weights, dtype=np.float64), cr, ncr(cr, rand),
                           rand, method, diagnostics or [], psi, theta)


def baseline_random(d: PoisonedDataset, n_select: int, seed=0) -> SelectionResult:
    if not 0 < n_select <= len(d):
        raise SelectionError(f"cannot select {n_select} of {len(d)} samples")
    chosen = np.random.default_rng(seed).choice(len(d), n_select, replace=False)
    weights = np.zeros(len(d))
    weights[chosen] = 1.0
    return _result(d, weights, n_select, "random")


def baseline_loss_scan(d: PoisonedDataset, n_select: int, warm_epochs: int = 2,
                       lr: float = 0.5, batch_size: int = 32, seed=0) -> SelectionResult:
    """Keep the lowest-loss samples after a short unweighted warm-up."""
    if not 0 < n_select <= len(d):
        raise SelectionError(f"cannot select {n_select} of {len(d)} samples")
    theta = fit_classifier(d.features, d.labels, d.n_classes, steps=warm_epochs, lr=lr,
                           batch_size=batch_size, seed=seed)
    losses = per_sample_loss(theta, d.features, d.labels)
    return _result(d, np.exp(-losses), n_select, "loss-scan")


def baseline_dcm(d: PoisonedDataset, n_select: int) -> SelectionResult:
    """Keep samples closest to their label's class mean in standardised space."""
    if not 0 < n_select <= len(d):
        raise SelectionError(f"cannot select {n_select} of {len(d)} samples")
    X = d.features
    std = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(std > 0, std, 1.0)
    dist = np.empty(len(d))
    for cls in np.unique(d.labels):
        mask = d.labels == cls
        dist[mask] = np.linalg.norm(Z[mask] - Z[mask].mean(axis=0), axis=1)
    return _result(d, 1.0 / (1.0 + dist), n_select, "dcm")


def retrain_eval(d: PoisonedDataset, selected, testset, cfg: RetrainConfig = RetrainConfig()
                 ) -> dict:
    """Train a fresh classifier on the selected rows (stored labels) and score it."""
    selected = np.asarray(selected, dtype=np.int64)
    if len(selected) == 0:
        raise SelectionError("cannot retrain on an empty selection")
    X_test, y_test = testset
    theta = fit_classifier(d.features[selected], d.labels[selected], d.n_classes,
                           steps=cfg.steps, lr=cfg.lr, hidden=cfg.hidden, seed=cfg.seed)
    out = {"overall_acc": accuracy(theta, X_test, y_test), "target_acc": None}
    if cfg.target_class is not None:
        out["target_acc"] = per_class_accuracy(theta, X_test, y_test, cfg.target_class)
    return out
