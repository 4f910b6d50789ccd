"""scikit-learn style wrappers around the detection loop and its parts.

The selectors pick *samples*, not features: after ``fit(X, y)`` they expose
``support_`` (a boolean row mask), ``get_support`` and ``fit_resample``,
which returns the kept rows in the same way imbalanced-learn samplers do.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import domain_model as dm
from .attacks import PoisonedDataset
from .pipeline import (DetectionConfig, SelectionResult, per_label, baseline_dcm,
                       baseline_loss_scan, baseline_random, normalize_losses, run_q_detection)
from .qwan import QwanParams, QwanTopology, TrainConfig, infer_weight, train_qwan
from .samplers import ExhaustiveSampler, SamplerConfig, SimulatedAnnealingSampler
from .validation import (check_flags, check_labeled, check_losses, check_unit_features,
                         seed_from)

__all__ = [
    "QDetection",
    "RandomSelector",
    "LossScanSelector",
    "DCMSelector",
    "QuantumWeightAssigner",
    "SoftmaxClassifier",
]


def _dataset(X, y, flags) -> tuple[PoisonedDataset, np.ndarray]:
    X, dense, classes = check_labeled(X, y)
    flags = check_flags(flags, len(dense))
    meta = {"n_classes": len(classes)}
    return PoisonedDataset(X, dense, flags, meta=meta), classes


class _SubsetSelector(BaseEstimator):
    """Shared plumbing for estimators that keep ``subset_size`` rows."""

    def _select(self, d: PoisonedDataset, seed: int) -> SelectionResult:
        raise NotImplementedError

    def fit(self, X, y, poison_flags=None):
        d, self.classes_ = _dataset(X, y, poison_flags)
        self.n_features_in_ = d.n_features
        self.result_ = self._select(d, seed_from(getattr(self, "random_state", 0)))
        self.weights_ = self.result_.weights
        self.selected_ = self.result_.selected
        self.support_ = np.zeros(len(d), dtype=bool)
        self.support_[self.selected_] = True
        return self

    def get_support(self, indices: bool = False):
        check_is_fitted(self, "support_")
        return self.selected_.copy() if indices else self.support_.copy()

    def fit_resample(self, X, y, poison_flags=None):
        self.fit(X, y, poison_flags)
        keep = self.selected_
        return np.asarray(X)[keep], np.asarray(y)[keep]


class QDetection(_SubsetSelector):
    """Select a clean-looking training subset with a Q-WAN-weighted classifier.

    ``poison_flags`` (optional, ground truth) only feed the reported
    CR / NCR and per-epoch diagnostics; they never influence the selection.

    Attributes after fitting: ``weights_`` (per-sample weight in [0, 1]),
    ``support_``, ``selected_`` (indices, best first), ``result_`` and the
    trained ``qwan_`` and ``classifier_``.
    """

    def __init__(self, subset_size=200, epochs=8, batch_size=100, n_hidden=32,
                 thermometer_bits=8, loss_threshold_quantile=0.5, lr_qwan=0.001,
                 lr_virtual=0.5, lr_actual=0.5, beta_nudge=1.0, weight_clip=2.0,
                 num_reads=10, sweeps=300, warmup_epochs=1, loss_scaling="rank",
                 per_class=True, classifier_hidden=None, random_state=0):
        self.subset_size = subset_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_hidden = n_hidden
        self.thermometer_bits = thermometer_bits
        self.loss_threshold_quantile = loss_threshold_quantile
        self.lr_qwan = lr_qwan
        self.lr_virtual = lr_virtual
        self.lr_actual = lr_actual
        self.beta_nudge = beta_nudge
        self.weight_clip = weight_clip
        self.num_reads = num_reads
        self.sweeps = sweeps
        self.warmup_epochs = warmup_epochs
        self.loss_scaling = loss_scaling
        self.per_class = per_class
        self.classifier_hidden = classifier_hidden
        self.random_state = random_state

    def to_config(self) -> DetectionConfig:
        seed = seed_from(self.random_state)
        return DetectionConfig(
            epochs=self.epochs, batch_size=self.batch_size, subset_size=self.subset_size,
            loss_threshold_quantile=self.loss_threshold_quantile, lr_qwan=self.lr_qwan,
            lr_virtual=self.lr_virtual, lr_actual=self.lr_actual, n_hidden=self.n_hidden,
            qwan=TrainConfig(beta_nudge=self.beta_nudge,
                             thermometer_bits=self.thermometer_bits,
                             weight_clip=self.weight_clip),
            sampler=SamplerConfig(num_reads=self.num_reads, sweeps=self.sweeps, seed=seed),
            classifier_hidden=self.classifier_hidden, warmup_epochs=self.warmup_epochs,
            loss_scaling=self.loss_scaling, per_class=self.per_class, seed=seed)

    def _select(self, d, seed):
        result = run_q_detection(d, self.to_config())
        self.qwan_ = result.qwan
        self.classifier_ = result.classifier
        return result

    def score_samples(self, X, y):
        """Weights the trained Q-WAN assigns to new labelled samples."""
        check_is_fitted(self, "qwan_")
        X = check_unit_features(X)
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise ValueError("y must have one label per row of X")
        pos = np.clip(np.searchsorted(self.classes_, y), 0, len(self.classes_) - 1)
        if not np.array_equal(self.classes_[pos], y):
            raise ValueError("y contains labels not seen during fit")
        y = pos
        cfg = self.to_config()
        losses = dm.per_sample_loss(self.classifier_, X, y)
        norm = per_label(lambda v: normalize_losses(v, cfg.loss_scaling), losses, y,
                         cfg.per_class)
        sampler = SimulatedAnnealingSampler(cfg.sampler)
        cache = {}
        out = np.empty(len(norm))
        for i, x in enumerate(norm):
            code = int(np.count_nonzero(x >= (np.arange(self.thermometer_bits) + 0.5)
                                        / self.thermometer_bits))
            if code not in cache:
                cache[code] = infer_weight(self.qwan_, x, sampler)
            out[i] = cache[code]
        return out


class RandomSelector(_SubsetSelector):
    def __init__(self, subset_size=200, random_state=0):
        self.subset_size = subset_size
        self.random_state = random_state

    def _select(self, d, seed):
        return baseline_random(d, self.subset_size, seed)


class LossScanSelector(_SubsetSelector):
    """Keep the samples with the lowest loss after a short unweighted warm-up."""

    def __init__(self, subset_size=200, warm_epochs=2, lr=0.5, batch_size=32, random_state=0):
        self.subset_size = subset_size
        self.warm_epochs = warm_epochs
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state

    def _select(self, d, seed):
        return baseline_loss_scan(d, self.subset_size, self.warm_epochs, self.lr,
                                  self.batch_size, seed)


class DCMSelector(_SubsetSelector):
    """Keep the samples closest to their label's class mean."""

    def __init__(self, subset_size=200):
        self.subset_size = subset_size

    def _select(self, d, seed):
        return baseline_dcm(d, self.subset_size)


class QuantumWeightAssigner(BaseEstimator):
    """A standalone Q-WAN mapping normalised losses to weights in [0, 1].

    ``fit(losses, targets)`` trains on (loss, ±1 target) pairs with one EP
    update per step; ``loss_curve_`` records the squared error over the
    training pairs after every step.
    """

    def __init__(self, n_hidden=8, thermometer_bits=9, learning_rate=0.05, beta_nudge=1.0,
                 weight_clip=2.0, n_steps=200, sampler="exhaustive", num_reads=10,
                 sweeps=300, random_state=0):
        self.n_hidden = n_hidden
        self.thermometer_bits = thermometer_bits
        self.learning_rate = learning_rate
        self.beta_nudge = beta_nudge
        self.weight_clip = weight_clip
        self.n_steps = n_steps
        self.sampler = sampler
        self.num_reads = num_reads
        self.sweeps = sweeps
        self.random_state = random_state

    def _sampler(self, seed):
        if self.sampler == "exhaustive":
            return ExhaustiveSampler()
        if self.sampler == "sa":
            return SimulatedAnnealingSampler(SamplerConfig(num_reads=self.num_reads,
                                                           sweeps=self.sweeps, seed=seed))
        raise ValueError(f"sampler must be 'exhaustive' or 'sa', got {self.sampler!r}")

    def fit(self, losses, targets):
        losses = check_losses(losses)
        targets = np.asarray(targets)
        seed = seed_from(self.random_state)
        config = TrainConfig(self.learning_rate, self.beta_nudge, self.thermometer_bits,
                             self.weight_clip)
        self.sampler_ = self._sampler(seed)
        start = QwanParams.random(QwanTopology(self.thermometer_bits, self.n_hidden, 1), seed)
        self.params_, self.loss_curve_ = train_qwan(start, losses, targets, self.sampler_,
                                                    self.n_steps, config, seed)
        return self

    def predict_proba(self, losses) -> np.ndarray:
        """Mean ``rho(output)`` per loss, i.e. the weight."""
        check_is_fitted(self, "params_")
        return np.array([infer_weight(self.params_, x, self.sampler_)
                         for x in check_losses(losses)])

    def predict(self, losses) -> np.ndarray:
        """+1 where the weight exceeds 0.5, else -1."""
        return np.where(self.predict_proba(losses) > 0.5, 1, -1)


class SoftmaxClassifier(ClassifierMixin, BaseEstimator):
    """Softmax regression (or one ReLU hidden layer) trained by gradient descent."""

    def __init__(self, hidden=None, steps=300, lr=0.5, batch_size=None, random_state=0):
        self.hidden = hidden
        self.steps = steps
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, dense, self.classes_ = check_labeled(X, y)
        self.n_features_in_ = X.shape[1]
        self.params_ = dm.fit_classifier(X, dense, len(self.classes_), self.steps, self.lr,
                                         self.hidden, self.batch_size, sample_weight,
                                         seed_from(self.random_state))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return dm.logits(self.params_, check_unit_features(X))

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
