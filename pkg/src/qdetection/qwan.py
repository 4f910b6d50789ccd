"""Quantum weight-assigning network (Q-WAN).

A one-hidden-layer spin network ``input -> hidden -> output`` written as an
Ising problem.  Input spins carry a thermometer code of a sample's normalised
loss and are clamped; the hidden and output spins are found by a sampler.
Training contrasts a free ground state with a guided one whose outputs are
nudged toward a target, and moves each coupling by the difference of spin
correlations between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .qubo import IsingProblem, check_spins
from .samplers import ClampError, ClampSet, apply_clamps, apply_nudge

__all__ = [
    "EncodingError",
    "QwanTopology",
    "QwanParams",
    "PhaseResult",
    "TrainConfig",
    "encode_loss",
    "build_free",
    "run_phase",
    "ep_delta",
    "apply_delta",
    "ep_update",
    "infer_weight",
    "train_qwan",
    "rho",
]


class EncodingError(ValueError):
    pass


def rho(spins):
    """Map spins onto ``[0, 1]``: ``(s + 1) / 2``."""
    return (np.asarray(spins, dtype=np.float64) + 1.0) / 2.0


@dataclass(frozen=True)
class QwanTopology:
    """Spin layout: inputs first, then hidden, then outputs."""

    n_input: int
    n_hidden: int
    n_output: int = 1

    def __post_init__(self):
        if self.n_input < 0 or self.n_hidden < 1 or self.n_output < 1:
            raise ValueError("need n_input >= 0, n_hidden >= 1 and n_output >= 1")

    @property
    def n_total(self) -> int:
        return self.n_input + self.n_hidden + self.n_output

    @property
    def input_idx(self) -> np.ndarray:
        return np.arange(self.n_input)

    @property
    def hidden_idx(self) -> np.ndarray:
        return np.arange(self.n_input, self.n_input + self.n_hidden)

    @property
    def output_idx(self) -> np.ndarray:
        return np.arange(self.n_input + self.n_hidden, self.n_total)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    beta_nudge: float = 1.0
    thermometer_bits: int = 8
    weight_clip: float = 2.0

    def __post_init__(self):
        if min(self.learning_rate, self.beta_nudge, self.weight_clip) <= 0:
            raise ValueError("learning_rate, beta_nudge and weight_clip must be positive")
        if self.thermometer_bits < 1:
            raise ValueError("thermometer_bits must be >= 1")


@dataclass(frozen=True, eq=False)
class QwanParams:
    """Trainable couplings and biases.

    ``j_ih`` is ``(n_input, n_hidden)``, ``j_ho`` is ``(n_hidden, n_output)``
    and ``bias`` covers hidden then output spins.  No other couplings exist.
    """

    topology: QwanTopology
    j_ih: np.ndarray
    j_ho: np.ndarray
    bias: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        t = self.topology
        shapes = {"j_ih": (t.n_input, t.n_hidden), "j_ho": (t.n_hidden, t.n_output),
                  "bias": (t.n_hidden + t.n_output,)}
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, topology: QwanTopology) -> QwanParams:
        return cls(topology, np.zeros((topology.n_input, topology.n_hidden)),
                   np.zeros((topology.n_hidden, topology.n_output)),
                   np.zeros(topology.n_hidden + topology.n_output))

    @classmethod
    def random(cls, topology: QwanTopology, seed=0, scale: float = 0.1) -> QwanParams:
        rng = np.random.default_rng(seed)
        return cls(topology,
                   rng.uniform(-scale, scale, (topology.n_input, topology.n_hidden)),
                   rng.uniform(-scale, scale, (topology.n_hidden, topology.n_output)),
                   rng.uniform(-scale, scale, topology.n_hidden + topology.n_output))

    def to_ising(self) -> IsingProblem:
        """Full network energy over all ``n_total`` spins (cached)."""
        if "ising" not in self._cache:
            t = self.topology
            hid, out = t.hidden_idx, t.output_idx
            couplings = {}
            for i in range(t.n_input):
                for k in range(t.n_hidden):
                    if self.j_ih[i, k] != 0.0:
                        couplings[(int(hid[k]), i)] = float(self.j_ih[i, k])
            for k in range(t.n_hidden):
                for o in range(t.n_output):
                    if self.j_ho[k, o] != 0.0:
                        couplings[(int(out[o]), int(hid[k]))] = float(self.j_ho[k, o])
            h = np.concatenate([np.zeros(t.n_input), self.bias])
            self._cache["ising"] = IsingProblem(t.n_total, couplings, h)
        return self._cache["ising"]

    def equals(self, other: QwanParams) -> bool:
        return (self.topology == other.topology and np.array_equal(self.j_ih, other.j_ih)
                and np.array_equal(self.j_ho, other.j_ho)
                and np.array_equal(self.bias, other.bias))

    def to_dict(self) -> dict:
        t = self.topology
        couplings = self.to_ising().j
        return {
            "topology": {"n_input": t.n_input, "n_hidden": t.n_hidden, "n_output": t.n_output},
            "couplings": [[a, b, v] for (a, b), v in sorted(couplings.items())],
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> QwanParams:
        t = QwanTopology(**data["topology"])
        params = cls.zeros(t)
        j_ih = np.zeros_like(params.j_ih)
        j_ho = np.zeros_like(params.j_ho)
        hid0, out0 = t.n_input, t.n_input + t.n_hidden
        for a, b, v in data["couplings"]:
            a, b = int(a), int(b)
            if hid0 <= a < out0 and b < hid0:
                j_ih[b, a - hid0] = v
            elif a >= out0 and hid0 <= b < out0:
                j_ho[b - hid0, a - out0] = v
            else:
                raise ValueError(f"coupling ({a}, {b}) is not between adjacent layers")
        return cls(t, j_ih, j_ho, data["bias"])


@dataclass(frozen=True)
class PhaseResult:
    """Lowest-energy read of one phase; ``state`` covers hidden then output spins."""

    state: np.ndarray
    energy: float
    phase: Literal["free", "guided"]


def encode_loss(loss_norm: float, k: int) -> ClampSet:
    """Thermometer code: input spin ``j`` is +1 iff ``loss_norm >= (j + 0.5) / k``."""
    loss_norm = float(loss_norm)
    if not 0.0 <= loss_norm <= 1.0:
        raise EncodingError(f"normalised loss must lie in [0, 1], got {loss_norm}")
    thresholds = (np.arange(k) + 0.5) / k
    return ClampSet({j: 1 if loss_norm >= thresholds[j] else -1 for j in range(k)})


def build_free(params: QwanParams, inputs: ClampSet) -> IsingProblem:
    """Network energy with the input spins folded in; spins are hidden then output."""
    t = params.topology
    if sorted(inputs.spins) != list(range(t.n_input)):
        raise ClampError(f"input clamps must cover exactly spins 0..{t.n_input - 1}")
    key = ("free", inputs.values().tobytes())
    if key not in params._cache:
        params._cache[key] = apply_clamps(params.to_ising(), inputs)[0]
    return params._cache[key]


def run_phase(params: QwanParams, inputs: ClampSet, sampler, target=None,
              beta_nudge: float = 0.0, seed: int | None = None) -> PhaseResult:
    """Free phase when ``target`` is None, guided phase otherwise."""
    problem = build_free(params, inputs)
    phase = "free"
    if target is not None:
        t = params.topology
        outputs = np.arange(t.n_hidden, t.n_hidden + t.n_output)
        problem = apply_nudge(problem, outputs, np.atleast_1d(target), beta_nudge)
        phase = "guided"
    best = sampler.sample(problem, seed=seed).best()
    return PhaseResult(best.state, best.energy, phase)


def ep_delta(params: QwanParams, inputs: ClampSet, free: PhaseResult,
             guided: PhaseResult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Negated correlation differences ``-[(s_i s_j)^guided - (s_i s_j)^free]``.

    Returned in the shapes of ``(j_ih, j_ho, bias)``; the bias entry is the
    single-spin analogue.
    """
    t = params.topology
    n_free = t.n_hidden + t.n_output
    sf = check_spins(free.state, n_free).astype(np.float64)
    sg = check_spins(guided.state, n_free).astype(np.float64)
    x = inputs.values().astype(np.float64)
    hf, of = sf[: t.n_hidden], sf[t.n_hidden:]
    hg, og = sg[: t.n_hidden], sg[t.n_hidden:]
    d_ih = -np.outer(x, hg - hf)
    d_ho = -(np.outer(hg, og) - np.outer(hf, of))
    d_bias = -(sg - sf)
    return d_ih, d_ho, d_bias


def apply_delta(params: QwanParams, delta, lr: float, weight_clip: float = 2.0) -> QwanParams:
    d_ih, d_ho, d_bias = delta
    return QwanParams(
        params.topology,
        np.clip(params.j_ih + lr * d_ih, -weight_clip, weight_clip),
        np.clip(params.j_ho + lr * d_ho, -weight_clip, weight_clip),
        np.clip(params.bias + lr * d_bias, -weight_clip, weight_clip),
    )


def ep_update(params: QwanParams, inputs: ClampSet, free: PhaseResult, guided: PhaseResult,
              lr: float, weight_clip: float = 2.0) -> QwanParams:
    return apply_delta(params, ep_delta(params, inputs, free, guided), lr, weight_clip)


def _read_seed(seed: int, read: int) -> int:
    return int(np.random.SeedSequence([seed, read]).generate_state(1, np.uint64)[0])


def infer_weight(params: QwanParams, loss_norm: float, sampler, reads: int = 1,
                 seed: int | None = None) -> float:
    """Mean of ``rho(output)`` over ``reads`` free phases.

    Each read averages over every ground-state record the sampler returns
    (weighted by occurrences), so an exactly degenerate output gives 0.5.
    With ``reads == 1`` and no ``seed`` the sampler's own seed is used.
    """
    if reads < 1:
        raise ValueError("reads must be >= 1")
    t = params.topology
    problem = build_free(params, encode_loss(loss_norm, t.n_input))
    total = 0.0
    for r in range(reads):
        read_seed = None if (reads == 1 and seed is None) else _read_seed(seed or 0, r)
        ground = sampler.sample(problem, seed=read_seed).ground()
        occ = np.array([g.occurrences for g in ground], dtype=np.float64)
        outs = np.array([rho(g.state[t.n_hidden:]).mean() for g in ground])
        total += float(occ @ outs / occ.sum())
    return total / reads


def train_qwan(params: QwanParams, losses, targets, sampler, steps: int,
               config: TrainConfig = TrainConfig(), seed=0):
    """Single-sample EP training on ``(loss_norm, target)`` pairs.

    Each step draws one pair uniformly at random, runs the free and guided
    phases and applies the update.  Returns the trained parameters and the
    squared error ``mean (rho(output) - rho(target))**2`` over all pairs,
    measured after every step.
    """
    losses = np.asarray(losses, dtype=np.float64)
    targets = check_spins(targets, len(losses))
    if len(losses) == 0:
        raise ValueError("need at least one training pair")
    goal = rho(targets)
    rng = np.random.default_rng(seed)
    k = params.topology.n_input
    curve = np.empty(steps)
    for step in range(steps):
        i = rng.integers(len(losses))
        code = encode_loss(losses[i], k)
        free = run_phase(params, code, sampler)
        guided = run_phase(params, code, sampler, target=int(targets[i]),
                           beta_nudge=config.beta_nudge)
        params = ep_update(params, code, free, guided, config.learning_rate, config.weight_clip)
        out = np.array([infer_weight(params, x, sampler) for x in losses])
        curve[step] = np.mean((out - goal) ** 2)
    return params, curve
