"""Strict JSON experiment configuration.

Every section rejects keys it does not know.  A single top-level ``seed``
drives the synthetic data, the attack, the detector and the sampler, so a
run is fully determined by the resolved config.

Example::

    {
      "dataset": {"synthetic": {"n": 600, "d": 16, "classes": 3, "spread": 0.2,
                                "test_n": 600}},
      "attack": {"type": "label_flip", "ratio": 0.2, "source_class": 0,
                 "target_class": 1},
      "detection": {"epochs": 8, "sampler": {"num_reads": 10, "sweeps": 300}},
      "baselines": {"random": true, "loss_scan": true, "dcm": true},
      "output_dir": "runs/flip20",
      "seed": 0
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .attacks import TriggerSpec, default_trigger
from .data import SyntheticSpec
from .pipeline import DetectionConfig, RetrainConfig
from .qwan import TrainConfig
from .samplers import SamplerConfig

__all__ = ["ConfigError", "DatasetSource", "AttackSpec", "ExperimentConfig", "load_config",
           "ATTACK_TYPES", "with_output"]

ATTACK_TYPES = ("none", "label_flip", "badnets", "narcissus")


class ConfigError(ValueError):
    pass


def _strict(section: str, data: Any, allowed) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}; "
                          f"allowed: {', '.join(sorted(allowed))}")
    return data


def _names(cls, exclude=()) -> list[str]:
    return [f.name for f in fields(cls) if f.name not in exclude and not f.name.startswith("_")]


def _build(section: str, cls, data: dict, **extra):
    try:
        return cls(**data, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


@dataclass(frozen=True)
class DatasetSource:
    """Either a file (``path`` + ``format``) or a synthetic spec, never both."""

    path: str | None = None
    format: str | None = None
    test_path: str | None = None
    synthetic: dict | None = None

    def synthetic_spec(self, seed: int) -> SyntheticSpec:
        return _build("dataset.synthetic", SyntheticSpec, dict(self.synthetic), seed=seed)


@dataclass(frozen=True)
class AttackSpec:
    type: str = "none"
    ratio: float = 0.0
    source_class: int | None = None
    target_class: int | None = None
    trigger: dict | None = None

    def trigger_spec(self) -> TriggerSpec:
        if self.trigger is None:
            return default_trigger("narcissus" if self.type == "narcissus" else "badnets")
        data = _strict("attack.trigger", self.trigger, ("positions", "values", "amplitude"))
        try:
            return TriggerSpec(**data)
        except ValueError as exc:
            raise ConfigError(f"attack.trigger: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource
    attack: AttackSpec = field(default_factory=AttackSpec)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    retrain: RetrainConfig = field(default_factory=RetrainConfig)
    baselines: dict = field(default_factory=lambda: {"random": True, "loss_scan": True,
                                                     "dcm": True})
    output_dir: str = "runs/out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> ExperimentConfig:
        top = _strict("config", data, ("dataset", "attack", "detection", "retrain",
                                       "baselines", "output_dir", "seed"))
        if "dataset" not in top:
            raise ConfigError("config: missing required key 'dataset'")
        seed = top.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed: expected a non-negative integer")
        return cls(
            dataset=_parse_dataset(top["dataset"], base_dir),
            attack=_parse_attack(top.get("attack", {"type": "none"})),
            detection=_parse_detection(top.get("detection", {}), seed),
            retrain=_parse_retrain(top.get("retrain", {}), seed),
            baselines=_parse_baselines(top.get("baselines", {})),
            output_dir=str(top.get("output_dir", "runs/out")),
            seed=seed,
        )

    def with_seed(self, seed: int) -> ExperimentConfig:
        """The same experiment under another global seed."""
        data = self.to_dict()
        data["seed"] = seed
        return ExperimentConfig.from_dict(data)

    def to_dict(self, with_output: bool = True) -> dict:
        det = asdict(self.detection)
        det.pop("seed")
        det["sampler"].pop("seed")
        ret = asdict(self.retrain)
        ret.pop("seed")
        ds = {k: v for k, v in asdict(self.dataset).items() if v is not None}
        if "synthetic" in ds:
            ds["synthetic"] = {k: v for k, v in ds["synthetic"].items() if k != "seed"}
        out = {"dataset": ds, "attack": asdict(self.attack), "detection": det,
               "retrain": ret, "baselines": dict(self.baselines), "seed": self.seed}
        if with_output:
            out["output_dir"] = self.output_dir
        return out

    def canonical_json(self) -> str:
        """Stable encoding of the experiment; the output directory is not part of it."""
        return json.dumps(self.to_dict(with_output=False), sort_keys=True,
                          separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _parse_dataset(data, base_dir) -> DatasetSource:
    data = _strict("dataset", data, ("path", "format", "test_path", "synthetic"))
    has_path, has_synth = "path" in data, "synthetic" in data
    if has_path == has_synth:
        raise ConfigError("dataset: give exactly one of 'path' or 'synthetic'")
    if has_synth:
        if set(data) != {"synthetic"}:
            raise ConfigError("dataset: 'format' and 'test_path' only apply to file datasets")
        synth = _strict("dataset.synthetic", data["synthetic"], _names(SyntheticSpec, ("seed",)))
        _build("dataset.synthetic", SyntheticSpec, synth)
        return DatasetSource(synthetic=dict(synth))
    fmt = data.get("format", "csv")
    if fmt not in ("csv", "qds1"):
        raise ConfigError(f"dataset.format: expected 'csv' or 'qds1', got {fmt!r}")

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() or base_dir is None else base_dir / p)

    test = data.get("test_path")
    return DatasetSource(path=resolve(data["path"]), format=fmt,
                         test_path=resolve(test) if test is not None else None)


def _parse_attack(data) -> AttackSpec:
    data = _strict("attack", data, _names(AttackSpec))
    spec = _build("attack", AttackSpec, data)
    if spec.type not in ATTACK_TYPES:
        raise ConfigError(f"attack.type: expected one of {', '.join(ATTACK_TYPES)}, "
                          f"got {spec.type!r}")
    if spec.type != "none" and spec.target_class is None:
        raise ConfigError(f"attack: type {spec.type!r} needs 'target_class'")
    if spec.type == "label_flip" and spec.source_class is None:
        raise ConfigError("attack: type 'label_flip' needs 'source_class'")
    if spec.type in ("badnets", "narcissus"):
        spec.trigger_spec()
    return spec


def _parse_detection(data, seed: int) -> DetectionConfig:
    data = dict(_strict("detection", data, _names(DetectionConfig, ("seed",))))
    qwan = _strict("detection.qwan", data.pop("qwan", {}), _names(TrainConfig))
    sampler_defaults = asdict(DetectionConfig().sampler)
    sampler_defaults.pop("seed")
    sampler = _strict("detection.sampler", data.pop("sampler", {}),
                      _names(SamplerConfig, ("seed",)))
    return _build("detection", DetectionConfig, data,
                  qwan=_build("detection.qwan", TrainConfig, qwan),
                  sampler=_build("detection.sampler", SamplerConfig,
                                 {**sampler_defaults, **sampler}, seed=seed),
                  seed=seed)


def _parse_retrain(data, seed: int) -> RetrainConfig:
    data = _strict("retrain", data, _names(RetrainConfig, ("seed",)))
    return _build("retrain", RetrainConfig, data, seed=seed)


def _parse_baselines(data) -> dict:
    data = _strict("baselines", data, ("random", "loss_scan", "dcm"))
    out = {"random": True, "loss_scan": True, "dcm": True}
    for key, value in data.items():
        if not isinstance(value, bool):
            raise ConfigError(f"baselines.{key}: expected true or false")
        out[key] = value
    return out


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; relative dataset paths resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def with_output(cfg: ExperimentConfig, output_dir: str) -> ExperimentConfig:
    return replace(cfg, output_dir=str(output_dir))
