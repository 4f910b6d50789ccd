"""Ground-state search for Ising problems.

Two backends share the ``sample(problem, seed=None) -> SampleSet`` seam:

* :class:`ExhaustiveSampler` enumerates every state (``n <= 24``) and is the
  ground-truth oracle used by the tests.
* :class:`SimulatedAnnealingSampler` runs independent Metropolis anneals with a
  geometric inverse-temperature schedule.  It stands in for annealers, coherent
  Ising machines and QAOA devices.

The module also provides the two problem transformations the Q-WAN needs:
clamping spins to fixed values and adding the quadratic output nudge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .qubo import DimensionError, IsingProblem, check_spins

__all__ = [
    "SamplerError",
    "ClampError",
    "NudgeError",
    "SamplerConfig",
    "SampleRecord",
    "SampleSet",
    "ClampSet",
    "exhaustive_solve",
    "sa_sample",
    "apply_clamps",
    "apply_nudge",
    "ExhaustiveSampler",
    "SimulatedAnnealingSampler",
    "EXHAUSTIVE_LIMIT",
]

EXHAUSTIVE_LIMIT = 24
TIE_TOL = 1e-9


class SamplerError(RuntimeError):
    pass


class ClampError(ValueError):
    pass


class NudgeError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    num_reads: int = 50
    sweeps: int = 2000
    beta_start: float = 0.1
    beta_end: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if int(self.num_reads) < 1 or int(self.sweeps) < 1:
            raise ValueError("num_reads and sweeps must be >= 1")
        if not (0 < self.beta_start < self.beta_end):
            raise ValueError("need 0 < beta_start < beta_end")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_end])
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)


@dataclass(frozen=True)
class SampleRecord:
    state: np.ndarray
    energy: float
    occurrences: int = 1


@dataclass(frozen=True)
class SampleSet:
    """Distinct states sorted by energy, ties kept in first-found order."""

    records: tuple[SampleRecord, ...]

    @classmethod
    def from_states(cls, states: np.ndarray, energies: np.ndarray) -> SampleSet:
        """Merge duplicate rows, then sort stably by energy."""
        seen: dict[bytes, int] = {}
        merged: list[list] = []
        for row, e in zip(np.asarray(states, dtype=np.int8), energies):
            key = row.tobytes()
            if key in seen:
                merged[seen[key]][2] += 1
            else:
                seen[key] = len(merged)
                merged.append([row.copy(), float(e), 1])
        order = sorted(range(len(merged)), key=lambda k: (merged[k][1], k))
        return cls(tuple(SampleRecord(*merged[k]) for k in order))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def best(self) -> SampleRecord:
        if not self.records:
            raise SamplerError("empty sample set")
        return self.records[0]

    def ground(self, tol: float = TIE_TOL) -> list[SampleRecord]:
        """Records within ``tol`` of the lowest energy."""
        e0 = self.best().energy
        return [r for r in self.records if r.energy <= e0 + tol]

    @property
    def num_occurrences(self) -> int:
        return sum(r.occurrences for r in self.records)

    def states(self) -> np.ndarray:
        return np.array([r.state for r in self.records])

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    def identical_to(self, other: SampleSet) -> bool:
        if len(self) != len(other):
            return False
        return all(
            np.array_equal(a.state, b.state) and a.energy == b.energy
            and a.occurrences == b.occurrences
            for a, b in zip(self.records, other.records)
        )


@dataclass(frozen=True)
class ClampSet:
    """Fixed spin values, ``{index: +1 | -1}``."""

    spins: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for i, s in dict(self.spins).items():
            if s not in (-1, 1):
                raise ClampError(f"clamp value for spin {i} must be -1 or +1")
            clean[int(i)] = int(s)
        object.__setattr__(self, "spins", clean)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> ClampSet:
        pairs = list(pairs)
        idx = [int(i) for i, _ in pairs]
        if len(set(idx)) != len(idx):
            raise ClampError("duplicate clamp index")
        return cls(dict(pairs))

    @property
    def indices(self) -> np.ndarray:
        return np.array(sorted(self.spins), dtype=np.int64)

    def values(self) -> np.ndarray:
        return np.array([self.spins[i] for i in sorted(self.spins)], dtype=np.int8)

    def __len__(self) -> int:
        return len(self.spins)


def _all_spins(n: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def exhaustive_solve(p: IsingProblem, chunk: int = 1 << 16) -> SampleSet:
    """Every ground state of ``p``, each with one occurrence.

    State ``k`` in enumeration order sets spin ``i`` to ``+1`` iff bit ``i`` of
    ``k`` is set, so ties come back in ascending ``k``.
    """
    if p.n > EXHAUSTIVE_LIMIT:
        raise SamplerError(f"exhaustive search limited to {EXHAUSTIVE_LIMIT} spins, got {p.n}")
    if p.n == 0:
        return SampleSet((SampleRecord(np.zeros(0, dtype=np.int8), p.offset, 1),))
    coupling = np.tril(p.coupling_matrix(), k=-1)
    total = 1 << p.n
    best = np.inf
    found: list[np.ndarray] = []
    for start in range(0, total, chunk):
        s = _all_spins(p.n, start, min(total, start + chunk))
        sf = s.astype(np.float64)
        e = sf @ p.h + ((sf @ coupling) * sf).sum(axis=1) + p.offset
        lo = e.min()
        if lo < best - TIE_TOL:
            best = lo
            found = []
        if lo <= best + TIE_TOL:
            found.extend(s[e <= best + TIE_TOL])
    states = np.array(found)
    # energies recomputed term by term so they match energy_ising exactly
    return SampleSet(tuple(SampleRecord(row, float(e), 1)
                           for row, e in zip(states, p.energies(states))))


def _anneal_one(coupling, h, betas, init, uniforms):
    n = h.shape[0]
    s = init.astype(np.float64)
    field_ = h + coupling @ s
    sweeps = betas.shape[0]
    for t in range(sweeps):
        beta = betas[t]
        for i in range(n):
            de = -2.0 * s[i] * field_[i]
            if de <= 0.0 or uniforms[t, i] < np.exp(-beta * de):
                s[i] = -s[i]
                for k in range(n):
                    field_[k] += 2.0 * s[i] * coupling[k, i]
    return s


_anneal_one_jit = numba.njit(cache=True)(_anneal_one)


@numba.njit(cache=True)
def _anneal_serial(coupling, h, betas, inits, uniforms):
    out = np.empty(inits.shape, dtype=np.int8)
    for r in range(inits.shape[0]):
        out[r] = _anneal_one_jit(coupling, h, betas, inits[r], uniforms[r]).astype(np.int8)
    return out


@numba.njit(cache=True, parallel=True)
def _anneal_parallel(coupling, h, betas, inits, uniforms):
    out = np.empty(inits.shape, dtype=np.int8)
    for r in numba.prange(inits.shape[0]):
        out[r] = _anneal_one_jit(coupling, h, betas, inits[r], uniforms[r]).astype(np.int8)
    return out


def _read_streams(seed: int, num_reads: int, sweeps: int, n: int):
    """Initial states and acceptance draws, one child generator per read."""
    inits = np.empty((num_reads, n), dtype=np.int8)
    uniforms = np.empty((num_reads, sweeps, n))
    for r in range(num_reads):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))
        inits[r] = 2 * rng.integers(0, 2, size=n, dtype=np.int8) - 1
        uniforms[r] = rng.random((sweeps, n))
    return inits, uniforms


def sa_sample(p: IsingProblem, cfg: SamplerConfig = SamplerConfig(),
              parallel: bool = False) -> SampleSet:
    """Simulated annealing; a pure function of ``(p, cfg)``.

    Read ``r`` draws its initial state and acceptance uniforms from a child
    generator keyed on ``(cfg.seed, r)``, so ``parallel`` never changes the
    result.
    """
    if p.n < 1:
        raise SamplerError("simulated annealing needs at least one spin")
    inits, uniforms = _read_streams(int(cfg.seed), cfg.num_reads, cfg.sweeps, p.n)
    kernel = _anneal_parallel if parallel else _anneal_serial
    states = kernel(p.coupling_matrix(), np.ascontiguousarray(p.h, dtype=np.float64),
                    cfg.betas(), inits, uniforms)
    return SampleSet.from_states(states, p.energies(states))


def apply_clamps(p: IsingProblem, c: ClampSet) -> tuple[IsingProblem, np.ndarray]:
    """Fix the clamped spins and fold them into fields and the offset.

    Returns the reduced problem over the free spins and ``index_map`` with
    ``index_map[k]`` the original index of reduced spin ``k``.
    """
    fixed = dict(c.spins)
    for i in fixed:
        if not 0 <= i < p.n:
            raise ClampError(f"clamp index {i} out of range for n={p.n}")
    index_map = np.array([i for i in range(p.n) if i not in fixed], dtype=np.int64)
    position = {int(i): k for k, i in enumerate(index_map)}
    h = p.h[index_map].copy()
    offset = p.offset + sum(p.h[i] * s for i, s in fixed.items())
    couplings: dict[tuple[int, int], float] = {}
    for (a, b), v in p.j.items():
        sa_, sb = fixed.get(a), fixed.get(b)
        if sa_ is not None and sb is not None:
            offset += v * sa_ * sb
        elif sa_ is not None:
            h[position[b]] += v * sa_
        elif sb is not None:
            h[position[a]] += v * sb
        else:
            couplings[(position[a], position[b])] = v
    return IsingProblem(len(index_map), couplings, h, offset), index_map


def apply_nudge(p: IsingProblem, outputs: Sequence[int], targets, beta_n: float) -> IsingProblem:
    """Add ``(beta_n / 2) * sum_y (s_y - t_y)^2`` as exact linear terms.

    For spins ``(s - t)^2 / 2 = 1 - s t``, so each output gets
    ``h_y -= beta_n * t_y`` and the offset grows by ``beta_n``.
    """
    outputs = [int(o) for o in outputs]
    if len(set(outputs)) != len(outputs):
        raise NudgeError("output indices must be distinct")
    if any(not 0 <= o < p.n for o in outputs):
        raise NudgeError(f"output index out of range for n={p.n}")
    try:
        targets = check_spins(targets, len(outputs))
    except (DimensionError, ValueError) as exc:
        raise NudgeError(str(exc)) from exc
    if beta_n < 0:
        raise NudgeError("beta_n must be >= 0")
    if beta_n == 0:
        return p
    h = p.h.copy()
    h[outputs] -= beta_n * targets
    return IsingProblem(p.n, p.j, h, p.offset + beta_n * len(outputs))


class ExhaustiveSampler:
    """Brute-force sampler; ``seed`` is accepted and ignored."""

    def sample(self, problem: IsingProblem, seed: int | None = None) -> SampleSet:
        return exhaustive_solve(problem)

    def __repr__(self):
        return "ExhaustiveSampler()"


class SimulatedAnnealingSampler:
    def __init__(self, config: SamplerConfig | None = None, parallel: bool = False, **kwargs):
        self.config = config if config is not None else SamplerConfig(**kwargs)
        self.parallel = parallel

    def sample(self, problem: IsingProblem, seed: int | None = None) -> SampleSet:
        cfg = self.config
        if seed is not None:
            cfg = SamplerConfig(cfg.num_reads, cfg.sweeps, cfg.beta_start, cfg.beta_end,
                                int(seed) % 2**64)
        return sa_sample(problem, cfg, parallel=self.parallel)

    def __repr__(self):
        return f"SimulatedAnnealingSampler({self.config!r})"
