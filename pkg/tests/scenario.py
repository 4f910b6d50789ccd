"""The 20 % targeted label-flip scenario shared by pipeline and acceptance tests."""

import functools
import time

import numpy as np

from qdetection.attacks import flip_labels_targeted
from qdetection.data import SyntheticSpec, synth_split
from qdetection.pipeline import (DetectionConfig, baseline_random, retrain_eval,
                                 run_q_detection)
from qdetection.samplers import SamplerConfig

SEEDS = (0, 1, 2, 3, 4)


def flip_dataset(seed, n=600, spread=0.2, ratio=0.2):
    train, test = synth_split(SyntheticSpec(n=n, d=16, classes=3, spread=spread, seed=seed,
                                            test_n=600))
    return flip_labels_targeted(train, 0, 1, ratio, seed=seed), test


@functools.lru_cache(maxsize=None)
def flip_run(seed):
    d, test = flip_dataset(seed)
    cfg = DetectionConfig(n_hidden=32, seed=seed,
                          sampler=SamplerConfig(num_reads=10, sweeps=300, seed=seed))
    start = time.perf_counter()
    result = run_q_detection(d, cfg)
    seconds = time.perf_counter() - start
    rand = baseline_random(d, cfg.subset_size, seed)
    testset = (test.features, test.labels)
    return {
        "dataset": d,
        "result": result,
        "seconds": seconds,
        "clean_weight": float(result.weights[~d.flags].mean()),
        "poisoned_weight": float(result.weights[d.flags].mean()),
        "acc_q": retrain_eval(d, result.selected, testset)["overall_acc"],
        "acc_random": retrain_eval(d, rand.selected, testset)["overall_acc"],
    }


def moving_average(values, window):
    return np.convolve(values, np.ones(window) / window, "valid")


CRITERIA: list[str] = []


def report(number: int, passed: bool, detail: str) -> bool:
    """Record and print one acceptance line."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}"
    CRITERIA.append(line)
    print(line)
    return passed
