"""YAML experiment configuration with schema checking and environment
overrides.

A config is a two-level dictionary validated against SCHEMA: unknown
sections or keys are errors (catching typos early beats silently ignored
settings), every key has a type and a default, and the canonical dump
round-trips to an identical config. Environment variables override file
values with the pattern

    LDPCBOOST_<SECTION>__<KEY>=<yaml value>

e.g. LDPCBOOST_TRAINING__BATCH_SIZE=200; values go through the YAML
parser so booleans, numbers and lists spell the same as in the file.
Command-line flags override both.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelSpec
from .codes import TannerGraph, load_code
from .quantize import Quantizer
from .training import LossSpec, ScheduleSpec
from .weights import WeightSet

ENV_PREFIX = "LDPCBOOST_"


class ConfigError(Exception):
    """Malformed, mistyped, or unknown configuration."""


# section -> key -> (type, default); None default means "no constraint
# beyond type", list types check the element type
SCHEMA = {
    "code": {
        "file": (str, "wimax_576_r34.bm"),
    },
    "channel": {
        "kind": (str, "awgn"),
        "ebno_db": (float, 3.5),
        "code_rate": (float, 0.0),  # 0 = derive from the code dimensions
    },
    "quantizer": {
        "mode": (str, "uniform"),
        "step": (float, 0.5),
        "max_magnitude": (float, 7.5),
    },
    "base": {
        "num_iters": (int, 20),
        "sharing": (str, "spatial"),
    },
    "post": {
        "num_iters": (int, 10),
        "sharing": (str, "dynamic"),
    },
    "training": {
        "loss": (str, "fer"),
        "fer_sharpness": (float, 10.0),
        "schedule": (str, "one_shot"),
        "delta1": (int, 0),
        "delta2": (int, 0),
        "epochs_per_stage": (int, 100),
        "batch_size": (int, 500),
        "base_lr": (float, 0.001),
        "clip_weights": (bool, True),
        "train_frames": (int, 5000),
        "snr_list": (list, [2.0, 2.5, 3.0, 3.5, 4.0]),
    },
    "collect": {
        "target_failures": (int, 5000),
        "batch_size": (int, 2048),
    },
    "augment": {
        "beta": (float, 0.7),
        "per_source": (int, 10),
        "batch_size": (int, 256),
    },
    "eval": {
        "stop_errors": (int, 100),
        "batch_size": (int, 4096),
        "ebno_list": (list, [2.0, 2.5, 3.0, 3.5, 4.0]),
        "histogram_boundary": (int, 11),
        "histogram_frames": (int, 20000),
    },
    "run": {
        "seed": (int, 12345),
        "workers": (int, 1),
        "deterministic": (bool, True),
        "budget_frames": (int, 10 ** 9),
    },
}


def _check_type(section: str, key: str, want, value):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")
        return value
    if want is list:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{section}.{key}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: (v[1].copy() if isinstance(v[1], list) else v[1])
                        for k, v in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("top level of the config must be a mapping")
        data = cls.defaults().data
        for section, keys in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(keys, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key, value in keys.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                want = SCHEMA[section][key][0]
                data[section][key] = _check_type(section, key, want, value)
        return cls(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}")
        return cls.from_dict(raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=False)

    def get(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.data[section][key]

    def with_updates(self, updates: dict) -> "ExperimentConfig":
        """updates: {"section.key": value} with schema checking."""
        merged = {s: dict(k) for s, k in self.data.items()}
        for dotted, value in updates.items():
            section, key = dotted.split(".", 1)
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {dotted}")
            merged[section][key] = _check_type(section, key,
                                               SCHEMA[section][key][0], value)
        return ExperimentConfig(merged)

    def apply_env(self, environ) -> "ExperimentConfig":
        updates = {}
        for name, raw in sorted(environ.items()):
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX):]
            if "__" not in rest:
                raise ConfigError(f"environment override {name} must look like "
                                  f"{ENV_PREFIX}SECTION__KEY")
            section, key = rest.lower().split("__", 1)
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError:
                raise ConfigError(f"environment override {name} is not valid YAML: {raw!r}")
            updates[f"{section}.{key}"] = value
        return self.with_updates(updates) if updates else self

    # -- object builders -----------------------------------------------

    def build_graph(self) -> TannerGraph:
        return load_code(self.get("code.file"))

    def build_quantizer(self) -> Quantizer:
        try:
            return Quantizer(self.get("quantizer.mode"),
                             self.get("quantizer.step"),
                             self.get("quantizer.max_magnitude"))
        except ValueError as e:
            raise ConfigError(str(e))

    def code_rate(self, graph: TannerGraph) -> float:
        r = self.get("channel.code_rate")
        if r:
            return r
        return (graph.num_vns - graph.num_cns) / graph.num_vns

    def build_channel(self, graph: TannerGraph,
                      ebno_db: float | None = None) -> ChannelSpec:
        try:
            return ChannelSpec(self.get("channel.kind"),
                               self.get("channel.ebno_db") if ebno_db is None else ebno_db,
                               self.code_rate(graph))
        except ValueError as e:
            raise ConfigError(str(e))

    def build_base_weights(self, graph: TannerGraph) -> WeightSet:
        try:
            return WeightSet.all_ones(
                graph, [(self.get("base.num_iters"), self.get("base.sharing"))],
                self.build_quantizer())
        except ValueError as e:
            raise ConfigError(str(e))

    def loss_spec(self) -> LossSpec:
        try:
            return LossSpec(self.get("training.loss"),
                            fer_sharpness=self.get("training.fer_sharpness"))
        except ValueError as e:
            raise ConfigError(str(e))

    def schedule_spec(self) -> ScheduleSpec:
        try:
            return ScheduleSpec(self.get("training.schedule"),
                                delta1=self.get("training.delta1"),
                                delta2=self.get("training.delta2"),
                                epochs_per_stage=self.get("training.epochs_per_stage"),
                                batch_size=self.get("training.batch_size"))
        except ValueError as e:
            raise ConfigError(str(e))

    def weight_clip(self) -> tuple[float, float] | None:
        return (0.0, 2.0) if self.get("training.clip_weights") else None

    def info_mask(self, graph: TannerGraph) -> np.ndarray | None:
        """Systematic convention: the first n - m positions carry data."""
        k = graph.num_vns - graph.num_cns
        if k <= 0:
            return None
        mask = np.zeros(graph.num_vns, dtype=bool)
        mask[:k] = True
        return mask
