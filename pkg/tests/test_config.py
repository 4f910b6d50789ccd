import json

import pytest

from qdetection.config import ConfigError, ExperimentConfig, load_config, with_output

BASE = {
    "dataset": {"synthetic": {"n": 60, "d": 4, "classes": 3, "spread": 0.1, "test_n": 30}},
    "attack": {"type": "label_flip", "ratio": 0.2, "source_class": 0, "target_class": 1},
    "detection": {"epochs": 1, "subset_size": 20, "n_hidden": 4,
                  "sampler": {"num_reads": 2, "sweeps": 10}},
    "output_dir": "out",
    "seed": 3,
}


def config(**changes):
    data = json.loads(json.dumps(BASE))
    for key, value in changes.items():
        data[key] = value
    return data


class TestStrictParsing:
    def test_valid(self):
        cfg = ExperimentConfig.from_dict(config())
        assert cfg.detection.n_hidden == 4 and cfg.detection.sampler.num_reads == 2
        assert cfg.baselines == {"random": True, "loss_scan": True, "dcm": True}

    @pytest.mark.parametrize("section,key", [(None, "epochs"), ("detection", "epoch"),
                                             ("attack", "ratoi"), ("baselines", "metasift")])
    def test_unknown_keys(self, section, key):
        data = config()
        target = data if section is None else data.setdefault(section, {})
        target[key] = 1
        with pytest.raises(ConfigError, match=key):
            ExperimentConfig.from_dict(data)

    def test_unknown_nested_sampler_key(self):
        data = config()
        data["detection"]["sampler"]["temperature"] = 1.0
        with pytest.raises(ConfigError, match="detection.sampler"):
            ExperimentConfig.from_dict(data)

    def test_seed_only_at_top_level(self):
        data = config()
        data["detection"]["seed"] = 1
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)

    def test_exactly_one_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            ExperimentConfig.from_dict(config(dataset={}))
        with pytest.raises(ConfigError, match="exactly one"):
            ExperimentConfig.from_dict(config(dataset={"path": "a.csv", "synthetic": {}}))

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(config(attack={"type": "meta_poison", "target_class": 0}))
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(config(seed=-1))
        with pytest.raises(ConfigError, match="loss_threshold_quantile"):
            ExperimentConfig.from_dict(config(detection={"loss_threshold_quantile": 1.5}))

    def test_label_flip_needs_source(self):
        with pytest.raises(ConfigError, match="source_class"):
            ExperimentConfig.from_dict(config(attack={"type": "label_flip", "ratio": 0.1,
                                                      "target_class": 1}))

    def test_bad_trigger(self):
        attack = {"type": "badnets", "ratio": 0.1, "target_class": 0,
                  "trigger": {"positions": [0, 0], "values": [1.0]}}
        with pytest.raises(ConfigError, match="trigger"):
            ExperimentConfig.from_dict(config(attack=attack))


class TestSeedAndHash:
    def test_seed_drives_subsections(self):
        cfg = ExperimentConfig.from_dict(config())
        assert cfg.detection.seed == cfg.detection.sampler.seed == cfg.retrain.seed == 3
        assert cfg.dataset.synthetic_spec(cfg.seed).seed == 3

    def test_with_seed(self):
        cfg = ExperimentConfig.from_dict(config()).with_seed(9)
        assert cfg.seed == 9 and cfg.detection.sampler.seed == 9

    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict(config())
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_hash_ignores_output_dir_only(self):
        cfg = ExperimentConfig.from_dict(config())
        assert with_output(cfg, "elsewhere").hash() == cfg.hash()
        assert cfg.with_seed(4).hash() != cfg.hash()


class TestLoadConfig:
    def test_relative_paths(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"dataset": {"path": "data.csv"}}))
        cfg = load_config(tmp_path / "cfg.json")
        assert cfg.dataset.path == str(tmp_path / "data.csv")
        assert cfg.dataset.format == "csv"

    def test_invalid_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{\"dataset\": ")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(tmp_path / "bad.json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
