import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from qdetection.qubo import (DimensionError, IsingProblem, QuboProblem, bit_to_spin,
                             check_spins, energy_ising, energy_qubo, ising_to_qubo,
                             qubo_to_ising, random_ising, spin_to_bit)


def all_bits(n):
    return [np.array(b) for b in itertools.product((0, 1), repeat=n)]


def expand_qubo(q: dict, h, x) -> Fraction:
    """Oracle: sum every term of x^T Q x + h.x with exact rationals."""
    total = Fraction(0)
    n = len(x)
    for a in range(n):
        for b in range(n):
            key = (min(a, b), max(a, b))
            total += Fraction(q.get(key, 0)) * int(x[a]) * int(x[b])
    for a in range(n):
        total += Fraction(h[a]) * int(x[a])
    return total


def random_qubo(rng, n, integer=False):
    q = {}
    for i in range(n):
        for j in range(i, n):
            q[(i, j)] = int(rng.integers(-3, 4)) if integer else float(rng.uniform(-1, 1))
    h = rng.integers(-3, 4, n) if integer else rng.uniform(-1, 1, n)
    return QuboProblem(n, q, h)


class TestEnergyQubo:
    def test_symmetric_cross_term(self):
        p = QuboProblem(2, {(0, 1): 0.5})
        assert energy_qubo(p, [1, 1]) == 1.0
        assert energy_qubo(p, [0, 0]) == 0.0

    def test_matches_term_expansion(self, rng):
        for _ in range(20):
            p = random_qubo(rng, 3, integer=True)
            for x in all_bits(3):
                assert energy_qubo(p, x) == float(expand_qubo(p.q, p.h, x))

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            energy_qubo(QuboProblem(2), [1, 0, 1])

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            energy_qubo(QuboProblem(2), [2, 0])

    def test_rejects_lower_triangle_key(self):
        with pytest.raises(ValueError):
            QuboProblem(2, {(1, 0): 1.0})

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            QuboProblem(1, {(0, 0): np.inf})


class TestEnergyIsing:
    def test_single_coupling(self):
        assert energy_ising(IsingProblem(2, {(1, 0): 1.0}), [1, -1]) == -1.0

    def test_null_problem(self):
        p = IsingProblem(3)
        for s in itertools.product((-1, 1), repeat=3):
            assert energy_ising(p, s) == 0.0

    def test_cross_path(self, rng):
        for _ in range(10):
            p = random_ising(4, seed=rng.integers(1 << 30))
            q = ising_to_qubo(p)
            for x in all_bits(4):
                assert energy_ising(p, bit_to_spin(x)) == pytest.approx(energy_qubo(q, x),
                                                                        abs=1e-12)

    def test_rejects_self_coupling(self):
        with pytest.raises(ValueError):
            IsingProblem(2, {(1, 1): 1.0})

    def test_rejects_upper_key(self):
        with pytest.raises(ValueError):
            IsingProblem(2, {(0, 1): 1.0})

    def test_vectorised_energies_agree(self, rng):
        p = random_ising(6, seed=3)
        states = rng.choice([-1, 1], size=(20, 6))
        expected = [energy_ising(p, s) for s in states]
        np.testing.assert_allclose(p.energies(states), expected, atol=1e-12)

    def test_bad_spin_value(self):
        with pytest.raises(ValueError):
            check_spins([1, 0])


class TestConversions:
    def test_single_variable_hand_algebra(self):
        p = qubo_to_ising(QuboProblem(1, h=[2.0]))
        assert p.h[0] == 1.0 and p.offset == 1.0
        assert energy_ising(p, [1]) == 2.0
        assert energy_ising(p, [-1]) == 0.0

    def test_zero_problem(self):
        p = qubo_to_ising(QuboProblem(3))
        assert p.j == {} or all(v == 0 for v in p.j.values())
        assert np.all(p.h == 0) and p.offset == 0.0
        back = ising_to_qubo(IsingProblem(3))
        assert all(v == 0 for v in back.q.values()) and np.all(back.h == 0)
        assert back.offset == 0.0

    def test_exhaustive_equality(self, rng):
        for _ in range(10):
            p = random_qubo(rng, 3)
            s = qubo_to_ising(p)
            for x in all_bits(3):
                assert energy_qubo(p, x) == pytest.approx(energy_ising(s, bit_to_spin(x)),
                                                          abs=1e-12)

    def test_round_trip(self, rng):
        p = random_qubo(rng, 3)
        back = ising_to_qubo(qubo_to_ising(p))
        for x in all_bits(3):
            assert energy_qubo(back, x) == pytest.approx(energy_qubo(p, x), abs=1e-12)

    def test_single_coupling_structure(self):
        # sigma_1 sigma_0 = (2 x_1 - 1)(2 x_0 - 1) = 4 x_0 x_1 - 2 x_0 - 2 x_1 + 1
        q = ising_to_qubo(IsingProblem(2, {(1, 0): 1.0}))
        for x in all_bits(2):
            assert energy_qubo(q, x) == (2 * x[1] - 1) * (2 * x[0] - 1)
        assert 2 * q.q[(0, 1)] == 4.0

    def test_linearity(self, rng):
        a, b = random_qubo(rng, 4), random_qubo(rng, 4)
        lhs, rhs = qubo_to_ising(a + b), qubo_to_ising(a) + qubo_to_ising(b)
        for s in itertools.product((-1, 1), repeat=4):
            assert energy_ising(lhs, s) == pytest.approx(energy_ising(rhs, s), abs=1e-12)
        assert lhs.offset == pytest.approx(rhs.offset)
        np.testing.assert_allclose(lhs.h, rhs.h)


class TestStateMaps:
    def test_examples(self):
        assert spin_to_bit([1, -1]).tolist() == [1, 0]
        assert spin_to_bit([-1, -1, -1]).tolist() == [0, 0, 0]

    def test_inverse(self, rng):
        s = rng.choice([-1, 1], 10)
        assert np.array_equal(bit_to_spin(spin_to_bit(s)), s)


class TestSerialisation:
    def test_qubo_json(self, rng):
        p = random_qubo(rng, 3)
        data = json.loads(p.to_json())
        assert set(data) == {"n", "quadratic", "linear", "offset"}
        back = QuboProblem.from_dict(data)
        assert back.q == p.q and np.array_equal(back.h, p.h)

    def test_ising_json(self):
        p = random_ising(4, seed=1)
        back = IsingProblem.from_dict(json.loads(p.to_json()))
        assert back.j == p.j and np.array_equal(back.h, p.h) and back.offset == p.offset
