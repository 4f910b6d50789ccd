"""QUBO and Ising problem containers with exact conversion between them.

Both containers keep their quadratic terms sparsely as ``{(i, j): value}``
dictionaries with a canonical key order (``i <= j`` for QUBO, ``i > j`` for
Ising) and a linear vector ``h``.  Energies are evaluated in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "DimensionError",
    "QuboProblem",
    "IsingProblem",
    "energy_qubo",
    "energy_ising",
    "qubo_to_ising",
    "ising_to_qubo",
    "spin_to_bit",
    "bit_to_spin",
    "check_spins",
    "check_bits",
    "random_ising",
]


class DimensionError(ValueError):
    """A state or coefficient vector does not match the problem size."""


def _check_finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return value


def _linear(h, n: int) -> np.ndarray:
    if h is None:
        return np.zeros(n)
    arr = np.array(h, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n:
        raise DimensionError(f"linear vector has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("linear coefficients must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuboProblem:
    """Minimise ``x^T Q x + h.x + offset`` over ``x in {0, 1}^n``.

    ``q`` holds upper-triangular pairs ``(i, j)`` with ``i <= j``; the energy
    uses the symmetric completion, so an off-diagonal entry ``q[i, j]``
    contributes ``2 * q[i, j] * x_i * x_j``.
    """

    n: int
    q: Mapping[tuple[int, int], float] = field(default_factory=dict)
    h: np.ndarray = None
    offset: float = 0.0

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise ValueError("n must be non-negative")
        q = {}
        for (i, j), v in dict(self.q).items():
            i, j = int(i), int(j)
            if i > j:
                raise ValueError(f"QUBO key ({i}, {j}) must satisfy i <= j")
            if not (0 <= i < n and 0 <= j < n):
                raise DimensionError(f"QUBO key ({i}, {j}) out of range for n={n}")
            q[(i, j)] = _check_finite(v, f"q[{i}, {j}]")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "h", _linear(self.h, n))
        object.__setattr__(self, "offset", _check_finite(self.offset, "offset"))

    def to_dense(self) -> np.ndarray:
        """Full symmetric ``n x n`` matrix."""
        m = np.zeros((self.n, self.n))
        for (i, j), v in self.q.items():
            m[i, j] = v
            m[j, i] = v
        return m

    def __add__(self, other: QuboProblem) -> QuboProblem:
        if not isinstance(other, QuboProblem):
            return NotImplemented
        if other.n != self.n:
            raise DimensionError("cannot add problems of different size")
        q = dict(self.q)
        for k, v in other.q.items():
            q[k] = q.get(k, 0.0) + v
        return QuboProblem(self.n, q, self.h + other.h, self.offset + other.offset)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "quadratic": [[i, j, v] for (i, j), v in sorted(self.q.items())],
            "linear": self.h.tolist(),
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> QuboProblem:
        return cls(
            int(data["n"]),
            {(int(i), int(j)): float(v) for i, j, v in data.get("quadratic", [])},
            data.get("linear"),
            float(data.get("offset", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class IsingProblem:
    """Ising energy ``sum_{i>j} J_ij s_i s_j + sum_i h_i s_i + offset``.

    ``j`` maps ``(i, j)`` with ``i > j`` to a coupling.  ``offset`` carries the
    constants produced by conversions and clamping so energies match exactly.
    """

    n: int
    j: Mapping[tuple[int, int], float] = field(default_factory=dict)
    h: np.ndarray = None
    offset: float = 0.0

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise ValueError("n must be non-negative")
        couplings = {}
        for (a, b), v in dict(self.j).items():
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-coupling ({a}, {b}) is not allowed")
            if a < b:
                raise ValueError(f"Ising key ({a}, {b}) must satisfy i > j")
            if not (0 <= b and a < n):
                raise DimensionError(f"Ising key ({a}, {b}) out of range for n={n}")
            couplings[(a, b)] = _check_finite(v, f"J[{a}, {b}]")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "j", couplings)
        object.__setattr__(self, "h", _linear(self.h, n))
        object.__setattr__(self, "offset", _check_finite(self.offset, "offset"))

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric dense coupling matrix with zero diagonal."""
        m = np.zeros((self.n, self.n))
        for (a, b), v in self.j.items():
            m[a, b] += v
            m[b, a] += v
        return m

    @classmethod
    def from_dense(cls, coupling: np.ndarray, h, offset: float = 0.0) -> IsingProblem:
        """Build from a dense matrix; only the strict lower triangle is read."""
        coupling = np.asarray(coupling, dtype=np.float64)
        n = coupling.shape[0]
        rows, cols = np.nonzero(np.tril(coupling, k=-1))
        return cls(n, {(int(a), int(b)): float(coupling[a, b]) for a, b in zip(rows, cols)},
                   h, offset)

    def energies(self, spins: np.ndarray) -> np.ndarray:
        """Vectorised energy for a ``(m, n)`` array of spin rows."""
        s = np.asarray(spins, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != self.n:
            raise DimensionError(f"expected spin rows of length {self.n}")
        out = s @ self.h + self.offset
        for (a, b), v in self.j.items():
            out = out + v * s[:, a] * s[:, b]
        return out

    def __add__(self, other: IsingProblem) -> IsingProblem:
        if not isinstance(other, IsingProblem):
            return NotImplemented
        if other.n != self.n:
            raise DimensionError("cannot add problems of different size")
        couplings = dict(self.j)
        for k, v in other.j.items():
            couplings[k] = couplings.get(k, 0.0) + v
        return IsingProblem(self.n, couplings, self.h + other.h, self.offset + other.offset)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "quadratic": [[a, b, v] for (a, b), v in sorted(self.j.items())],
            "linear": self.h.tolist(),
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> IsingProblem:
        return cls(
            int(data["n"]),
            {(int(a), int(b)): float(v) for a, b, v in data.get("quadratic", [])},
            data.get("linear"),
            float(data.get("offset", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_spins(s, n: int | None = None) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1:
        raise DimensionError("spin state must be one-dimensional")
    if n is not None and s.shape[0] != n:
        raise DimensionError(f"spin state has length {s.shape[0]}, expected {n}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spin entries must be exactly -1 or +1")
    return s.astype(np.int8)


def check_bits(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError("bit state must be one-dimensional")
    if n is not None and x.shape[0] != n:
        raise DimensionError(f"bit state has length {x.shape[0]}, expected {n}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("bit entries must be exactly 0 or 1")
    return x.astype(np.int8)


def spin_to_bit(s) -> np.ndarray:
    return ((check_spins(s) + 1) // 2).astype(np.int8)


def bit_to_spin(x) -> np.ndarray:
    return (2 * check_bits(x) - 1).astype(np.int8)


def energy_qubo(p: QuboProblem, x) -> float:
    x = check_bits(x, p.n).astype(np.float64)
    e = float(x @ p.h) + p.offset
    for (i, j), v in p.q.items():
        e += v * x[i] * x[j] if i == j else 2.0 * v * x[i] * x[j]
    return e


def energy_ising(p: IsingProblem, s) -> float:
    s = check_spins(s, p.n).astype(np.float64)
    e = float(s @ p.h) + p.offset
    for (a, b), v in p.j.items():
        e += v * s[a] * s[b]
    return e


def qubo_to_ising(p: QuboProblem) -> IsingProblem:
    """Substitute ``x = (1 + s) / 2``; energies agree state by state."""
    h = np.zeros(p.n)
    couplings: dict[tuple[int, int], float] = {}
    offset = p.offset
    lin = p.h.copy()
    for (i, j), v in p.q.items():
        if i == j:
            lin[i] += v
            continue
        c = 2.0 * v / 4.0
        key = (j, i)
        couplings[key] = couplings.get(key, 0.0) + c
        h[i] += c
        h[j] += c
        offset += c
    h += lin / 2.0
    offset += float(lin.sum()) / 2.0
    return IsingProblem(p.n, couplings, h, offset)


def ising_to_qubo(p: IsingProblem) -> QuboProblem:
    """Substitute ``s = 2x - 1``; linear terms land in ``h``, constants in ``offset``."""
    h = 2.0 * p.h
    offset = p.offset - float(p.h.sum())
    q: dict[tuple[int, int], float] = {}
    for (a, b), v in p.j.items():
        # J s_a s_b = 4J x_a x_b - 2J x_a - 2J x_b + J; symmetric completion doubles q
        q[(b, a)] = q.get((b, a), 0.0) + 2.0 * v
        h[a] -= 2.0 * v
        h[b] -= 2.0 * v
        offset += v
    return QuboProblem(p.n, q, h, offset)


def random_ising(n: int, seed=0, scale: float = 1.0) -> IsingProblem:
    """Fully connected instance with couplings and fields drawn from U(-scale, scale)."""
    rng = np.random.default_rng(seed)
    coupling = np.tril(rng.uniform(-scale, scale, (n, n)), -1)
    return IsingProblem.from_dense(coupling, rng.uniform(-scale, scale, n))
