import itertools
import json

import numpy as np
import pytest

from qdetection.qubo import energy_ising
from qdetection.qwan import (EncodingError, PhaseResult, QwanParams, QwanTopology, TrainConfig,
                             apply_delta, build_free, encode_loss, ep_delta, ep_update,
                             infer_weight, rho, run_phase)
from qdetection.samplers import (ClampError, ClampSet, ExhaustiveSampler, SamplerConfig,
                                 SimulatedAnnealingSampler)

EXACT = ExhaustiveSampler()


def params_with(topology, **arrays):
    p = QwanParams.zeros(topology)
    parts = {"j_ih": p.j_ih.copy(), "j_ho": p.j_ho.copy(), "bias": p.bias.copy()}
    for name, value in arrays.items():
        parts[name] = value
    return QwanParams(topology, **parts)


def phase(state, kind="free"):
    return PhaseResult(np.array(state, dtype=np.int8), 0.0, kind)


class TestEncoding:
    @pytest.mark.parametrize("loss,code", [(0.0, [-1, -1, -1, -1]), (1.0, [1, 1, 1, 1]),
                                           (0.5, [1, 1, -1, -1])])
    def test_thermometer(self, loss, code):
        assert encode_loss(loss, 4).values().tolist() == code

    @pytest.mark.parametrize("loss", [-0.01, 1.01, np.nan])
    def test_out_of_range(self, loss):
        with pytest.raises(EncodingError):
            encode_loss(loss, 4)

    def test_monotone(self):
        counts = [int((encode_loss(x, 9).values() > 0).sum()) for x in np.linspace(0, 1, 101)]
        assert counts == sorted(counts) and counts[0] == 0 and counts[-1] == 9


class TestBuildFree:
    def test_zero_params_flat(self):
        t = QwanTopology(3, 2, 1)
        problem = build_free(QwanParams.zeros(t), encode_loss(0.3, 3))
        energies = {energy_ising(problem, s) for s in itertools.product((-1, 1), repeat=3)}
        assert energies == {0.0}

    def test_fold_and_sign(self):
        t = QwanTopology(1, 1, 1)
        p = params_with(t, j_ih=[[2.0]])
        problem = build_free(p, ClampSet({0: 1}))
        assert problem.h[0] == 2.0
        assert exhaustive_ground_hidden(problem) == {-1}

    def test_completion_energy(self):
        t = QwanTopology(3, 2, 1)
        p = QwanParams.random(t, seed=5, scale=1.0)
        clamps = encode_loss(0.6, 3)
        problem = build_free(p, clamps)
        full = p.to_ising()
        for free in itertools.product((-1, 1), repeat=3):
            state = np.concatenate([clamps.values(), free])
            assert energy_ising(problem, free) == pytest.approx(energy_ising(full, state),
                                                                abs=1e-12)

    def test_clamps_must_cover_inputs(self):
        t = QwanTopology(3, 2, 1)
        with pytest.raises(ClampError):
            build_free(QwanParams.zeros(t), ClampSet({0: 1, 1: 1}))

    def test_bipartite_structure(self):
        p = QwanParams.random(QwanTopology(3, 2, 1), seed=0)
        t = p.topology
        for a, b in p.to_ising().j:
            layers = {int(np.isin(a, t.hidden_idx)) + 2 * int(np.isin(a, t.output_idx)),
                      int(np.isin(b, t.hidden_idx)) + 2 * int(np.isin(b, t.output_idx))}
            assert layers in ({0, 1}, {1, 2})


def exhaustive_ground_hidden(problem):
    return {int(r.state[0]) for r in EXACT.sample(problem).ground()}


class TestRunPhase:
    def test_zero_nudge_matches_free(self):
        p = QwanParams.random(QwanTopology(4, 3, 1), seed=1)
        sampler = SimulatedAnnealingSampler(SamplerConfig(num_reads=5, sweeps=50, seed=2))
        code = encode_loss(0.4, 4)
        free = run_phase(p, code, sampler)
        guided = run_phase(p, code, sampler, target=1, beta_nudge=0.0)
        assert np.array_equal(free.state, guided.state) and guided.phase == "guided"

    def test_dominant_nudge(self):
        p = QwanParams.random(QwanTopology(4, 3, 1), seed=1, scale=1.0)
        guided = run_phase(p, encode_loss(0.9, 4), EXACT, target=1, beta_nudge=100.0)
        assert guided.state[-1] == 1

    def test_guided_energy_not_below_free(self):
        t = QwanTopology(4, 2, 1)
        for seed in range(10):
            p = QwanParams.random(t, seed=seed, scale=1.0)
            code = encode_loss(seed / 10, 4)
            free = run_phase(p, code, EXACT)
            guided = run_phase(p, code, EXACT, target=-int(free.state[-1]), beta_nudge=0.5)
            original = build_free(p, code)
            assert energy_ising(original, guided.state) >= free.energy - 1e-12


class TestEpUpdate:
    def test_same_state_no_change(self):
        p = QwanParams.random(QwanTopology(2, 2, 1), seed=0)
        code = encode_loss(0.7, 2)
        new = ep_update(p, code, phase([1, -1, 1]), phase([1, -1, 1], "guided"), lr=0.1)
        assert new.equals(p)

    def test_rule_arithmetic(self):
        # one hidden, one output: product h*o is +1 guided and -1 free
        t = QwanTopology(1, 1, 1)
        p = QwanParams.zeros(t)
        new = ep_update(p, ClampSet({0: 1}), phase([1, -1]), phase([1, 1], "guided"), lr=0.1)
        assert new.j_ho[0, 0] == pytest.approx(-0.2)
        assert new.j_ih[0, 0] == 0.0
        assert new.bias.tolist() == pytest.approx([0.0, -0.2])

    def test_clipping(self):
        t = QwanTopology(1, 1, 1)
        p = params_with(t, j_ho=[[1.95]])
        new = ep_update(p, ClampSet({0: 1}), phase([1, 1]), phase([1, -1], "guided"), lr=0.1,
                        weight_clip=2.0)
        assert new.j_ho[0, 0] == 2.0

    def test_antisymmetric(self):
        p = QwanParams.random(QwanTopology(3, 2, 1), seed=3)
        code = encode_loss(0.2, 3)
        a, b = phase([1, -1, 1]), phase([-1, -1, -1], "guided")
        forward = ep_delta(p, code, a, b)
        backward = ep_delta(p, code, b, a)
        for f, g in zip(forward, backward):
            np.testing.assert_array_equal(f, -g)

    def test_shape_mismatch(self):
        p = QwanParams.zeros(QwanTopology(2, 2, 1))
        with pytest.raises(ValueError):
            ep_delta(p, encode_loss(0.1, 2), phase([1, 1]), phase([1, 1], "guided"))

    def test_structure_preserved_under_training(self):
        t = QwanTopology(3, 2, 1)
        p = QwanParams.random(t, seed=0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            code = encode_loss(rng.uniform(), 3)
            free = run_phase(p, code, EXACT)
            guided = run_phase(p, code, EXACT, target=int(rng.choice([-1, 1])), beta_nudge=1.0)
            p = ep_update(p, code, free, guided, 0.3)
        n_in, n_hid = t.n_input, t.n_hidden
        for a, b in p.to_ising().j:
            assert (n_in <= a < n_in + n_hid and b < n_in) or (a >= n_in + n_hid
                                                               and n_in <= b < n_in + n_hid)

    def test_apply_delta_uses_learning_rate(self):
        p = QwanParams.zeros(QwanTopology(1, 1, 1))
        delta = (np.ones((1, 1)), np.ones((1, 1)), np.ones(2))
        new = apply_delta(p, delta, 0.25)
        assert new.j_ih[0, 0] == new.j_ho[0, 0] == 0.25 and new.bias.tolist() == [0.25, 0.25]


class TestInferWeight:
    t = QwanTopology(2, 2, 1)

    def test_negative_bias_gives_one(self):
        p = params_with(self.t, bias=[0.0, 0.0, -10.0])
        assert infer_weight(p, 0.3, EXACT) == 1.0

    def test_positive_bias_gives_zero(self):
        p = params_with(self.t, bias=[0.0, 0.0, 10.0])
        assert infer_weight(p, 0.3, EXACT) == 0.0

    def test_zero_params_near_half(self):
        sampler = SimulatedAnnealingSampler(SamplerConfig(num_reads=1, sweeps=5))
        w = infer_weight(QwanParams.zeros(self.t), 0.5, sampler, reads=100, seed=0)
        assert abs(w - 0.5) <= 0.2

    def test_exhaustive_degenerate_is_half(self):
        assert infer_weight(QwanParams.zeros(self.t), 0.5, EXACT) == 0.5

    def test_values_in_allowed_set(self):
        for seed in range(10):
            p = QwanParams.random(QwanTopology(3, 2, 1), seed=seed)
            assert infer_weight(p, seed / 10, EXACT) in (0.0, 0.5, 1.0)

    def test_reads_must_be_positive(self):
        with pytest.raises(ValueError):
            infer_weight(QwanParams.zeros(self.t), 0.5, EXACT, reads=0)


class TestParams:
    def test_json_round_trip(self):
        p = QwanParams.random(QwanTopology(3, 4, 1), seed=9)
        back = QwanParams.from_dict(json.loads(json.dumps(p.to_dict())))
        assert back.equals(p)

    def test_rejects_skip_coupling(self):
        data = QwanParams.zeros(QwanTopology(1, 1, 1)).to_dict()
        data["couplings"] = [[2, 0, 1.0]]
        with pytest.raises(ValueError):
            QwanParams.from_dict(data)

    def test_immutable_arrays(self):
        p = QwanParams.zeros(QwanTopology(1, 1, 1))
        with pytest.raises(ValueError):
            p.bias[0] = 1.0

    def test_rho(self):
        assert rho([-1, 1]).tolist() == [0.0, 1.0]

    def test_train_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
