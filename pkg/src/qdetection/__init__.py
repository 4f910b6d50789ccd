"""Poisoned-training-data detection with a spin-network weight assigner.

The package splits into a QUBO / Ising layer (:mod:`qdetection.qubo`,
:mod:`qdetection.samplers`), the weight-assigning network
(:mod:`qdetection.qwan`), a small classifier (:mod:`qdetection.domain_model`),
poisoning attacks and data formats (:mod:`qdetection.attacks`,
:mod:`qdetection.data`), the detection loop (:mod:`qdetection.pipeline`) and
scikit-learn style wrappers (:mod:`qdetection.estimators`).
"""

from .attacks import PoisonedDataset, badnets, flip_labels_targeted, narcissus_like
from .data import SyntheticSpec, export, ingest, synth, synth_split
from .estimators import (DCMSelector, LossScanSelector, QDetection, QuantumWeightAssigner,
                         RandomSelector, SoftmaxClassifier)
from .pipeline import DetectionConfig, SelectionResult, run_q_detection
from .qubo import IsingProblem, QuboProblem, ising_to_qubo, qubo_to_ising
from .samplers import ExhaustiveSampler, SamplerConfig, SimulatedAnnealingSampler

__version__ = "0.1.0"

__all__ = [
    "PoisonedDataset", "badnets", "flip_labels_targeted", "narcissus_like",
    "SyntheticSpec", "export", "ingest", "synth", "synth_split",
    "DCMSelector", "LossScanSelector", "QDetection", "QuantumWeightAssigner",
    "RandomSelector", "SoftmaxClassifier",
    "DetectionConfig", "SelectionResult", "run_q_detection",
    "IsingProblem", "QuboProblem", "ising_to_qubo", "qubo_to_ising",
    "ExhaustiveSampler", "SamplerConfig", "SimulatedAnnealingSampler",
]
