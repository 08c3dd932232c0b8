#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Pipeline configuration.

The YAML file goes through EnvYAML, so `${VAR}` references are expanded from
the environment, then through a fastjsonschema validator.
Cross-field invariants are left to each sub-config's `validate()`, which
`PreflightCheck` runs before any work starts.
"""
import os

import fastjsonschema
import yaml
from envyaml import EnvYAML

from headguard.attack import SIMILARITY_ENCODERS, AttackConfig
from headguard.corpus.split import RebalanceStrategy
from headguard.logger import logger
from headguard.model.encoder import ModelConfig
from headguard.model.training import TrainConfig, TrainingError
from headguard.patching.classify import DEFAULT_TAU_C
from headguard.patching.spec import AblationMode
from headguard.patching.sweep import SweepConfigurationError
from headguard.utils import fingerprint

DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), "..", "config.yml")
SECTIONS = (
    "model",
    "train",
    "attack",
    "sweep",
    "mitigate",
    "corpus",
    "paths",
    "seed",
    "workers",
    "service",
)
MITIGATION_TARGETS = ("vulnerable", "crucial")
LOG_LEVELS = ("debug", "info", "warning", "error", "critical")


class ConfigError(ValueError):
    pass


class CompatibilityError(RuntimeError):
    pass


class MissingArtifactError(RuntimeError):
    pass


class EmptyDatasetError(MissingArtifactError):
    pass


def _section(fields, types):
    return {
        "type": "object",
        "properties": {field: types.get(field, {}) for field in fields},
        "additionalProperties": False,
    }


class SweepSettings:
    FIELDS = ("mode", "tau_c", "batch_size")

    def __init__(self, mode="zero", tau_c=DEFAULT_TAU_C, batch_size=64):
        self.mode = mode
        self.tau_c = tau_c
        self.batch_size = batch_size

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def validate(self):
        AblationMode.from_string(self.mode)
        if not self.tau_c > 0:
            raise SweepConfigurationError(f"tau_c must be > 0, got {self.tau_c}")
        if self.batch_size < 1:
            raise SweepConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


class MitigateSettings:
    FIELDS = ("k", "target")

    def __init__(self, k=1, target="vulnerable"):
        self.k = k
        self.target = target

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def validate(self):
        if self.k < 0:
            raise ConfigError(f"mitigate.k must be >= 0, got {self.k}")
        if self.target not in MITIGATION_TARGETS:
            raise ConfigError(f"mitigate.target must be one of {MITIGATION_TARGETS}")


class CorpusSettings:
    """Where the corpus comes from. Without a path the toy corpus is synthesized."""

    FIELDS = (
        "path",
        "format",
        "strict",
        "synthetic",
        "test_fraction",
        "stratify",
        "rebalance",
        "readers",
        "seed",
    )

    def __init__(
        self,
        path=None,
        format=None,
        strict=True,
        synthetic=None,
        test_fraction=0.2,
        stratify=False,
        rebalance="none",
        readers=None,
        seed=0,
    ):
        self.path = path
        self.format = format
        self.strict = strict
        self.synthetic = {
            "n": 400,
            "groups": ["women", "muslim"],
            "group_specific": False,
            "context": True,
        }
        self.synthetic.update(synthetic or {})
        self.test_fraction = test_fraction
        self.stratify = stratify
        self.rebalance = rebalance
        self.readers = readers
        self.seed = seed

    def to_dict(self):
        return {field: getattr(self, field) for field in self.FIELDS}

    def validate(self):
        RebalanceStrategy.from_string(self.rebalance)
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"corpus.test_fraction must be in (0, 1), got {self.test_fraction}")


_INT = {"type": "integer"}
_NUMBER = {"type": "number"}
_BOOL = {"type": "boolean"}
_OPTIONAL_NUMBER = {"type": ["number", "null"]}

CONFIG_DEFINITION = {
    "type": "object",
    "properties": {
        "model": _section(ModelConfig.FIELDS, {field: _INT for field in ModelConfig.FIELDS}),
        "train": _section(
            TrainConfig.FIELDS,
            {
                "learning_rate": _NUMBER,
                "epochs": _INT,
                "batch_size": _INT,
                "seed": _INT,
                "beta1": _NUMBER,
                "beta2": _NUMBER,
                "adam_eps": _NUMBER,
            },
        ),
        "attack": _section(
            AttackConfig.FIELDS,
            {
                "norm": {"enum": ["l2", "linf"]},
                "epsilon": _OPTIONAL_NUMBER,
                "relative_epsilon": _NUMBER,
                "step_size": _OPTIONAL_NUMBER,
                "relative_step": _NUMBER,
                "iterations": _INT,
                "similarity_threshold": _NUMBER,
                "similarity_encoder": {"enum": list(SIMILARITY_ENCODERS)},
                "reproject_every": _INT,
                "max_substitutions": {"type": "integer", "minimum": 1},
                "seed": _INT,
                "random_start": _BOOL,
                "skip_misclassified": _BOOL,
            },
        ),
        "sweep": _section(
            SweepSettings.FIELDS,
            {"mode": {"enum": [m.value for m in AblationMode]}, "tau_c": _NUMBER, "batch_size": _INT},
        ),
        "mitigate": _section(
            MitigateSettings.FIELDS,
            {"k": {"type": "integer", "minimum": 0}, "target": {"enum": list(MITIGATION_TARGETS)}},
        ),
        "corpus": _section(
            CorpusSettings.FIELDS,
            {
                "path": {"type": ["string", "null"]},
                "format": {"type": ["string", "null"]},
                "strict": _BOOL,
                "synthetic": _section(
                    ("n", "groups", "group_specific", "context"),
                    {
                        "n": _INT,
                        "groups": {"type": "array", "items": {"type": "string", "minLength": 1}},
                        "group_specific": _BOOL,
                        "context": _BOOL,
                    },
                ),
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "stratify": _BOOL,
                "rebalance": {"enum": [s.value for s in RebalanceStrategy]},
                "readers": {"type": ["object", "null"], "additionalProperties": {"type": "string"}},
                "seed": _INT,
            },
        ),
        "paths": _section(("workdir",), {"workdir": {"type": "string", "minLength": 1}}),
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "service": _section(("log_level",), {"log_level": {"enum": list(LOG_LEVELS)}}),
    },
}

CONFIG_SCHEMA = fastjsonschema.compile(definition=CONFIG_DEFINITION)


class PipelineConfig:
    def __init__(
        self,
        model=None,
        train=None,
        attack=None,
        sweep=None,
        mitigate=None,
        corpus=None,
        workdir="workdir",
        seed=0,
        workers=1,
        log_level="info",
        source=None,
    ):
        self.model = model or ModelConfig(seed=seed)
        self.train = train or TrainConfig(seed=seed)
        self.attack = attack or AttackConfig(seed=seed)
        self.sweep = sweep or SweepSettings()
        self.mitigate = mitigate or MitigateSettings()
        self.corpus = corpus or CorpusSettings(seed=seed)
        self.workdir = workdir
        self.seed = seed
        self.workers = workers
        self.log_level = log_level
        self.source = source

    @classmethod
    def from_dict(cls, data, source=None):
        """Builds the config from a schema-valid mapping.

        Sub-sections without an explicit `seed` inherit the global one.
        """
        try:
            CONFIG_SCHEMA(data)
        except fastjsonschema.JsonSchemaValueException as e:
            raise ConfigError(f"Invalid configuration{f' in {source}' if source else ''}: {e.message}")

        seed = data.get("seed", 0)

        def _seeded(name):
            section = dict(data.get(name) or {})
            section.setdefault("seed", seed)
            return section

        return cls(
            model=ModelConfig(**_seeded("model")),
            train=TrainConfig(**_seeded("train")),
            attack=AttackConfig(**_seeded("attack")),
            sweep=SweepSettings(**(data.get("sweep") or {})),
            mitigate=MitigateSettings(**(data.get("mitigate") or {})),
            corpus=CorpusSettings(**_seeded("corpus")),
            workdir=(data.get("paths") or {}).get("workdir", "workdir"),
            seed=seed,
            workers=data.get("workers", 1),
            log_level=(data.get("service") or {}).get("log_level", "info"),
            source=source,
        )

    def validate(self):
        """Runs every sub-config's own invariants. Returns the list of problems."""
        problems = []
        for name in ("model", "train", "attack", "sweep", "mitigate", "corpus"):
            try:
                getattr(self, name).validate()
            except (ValueError, TrainingError) as e:
                problems.append(f"{name}: {e}")
        return problems

    def fingerprints(self):
        return {
            name: fingerprint(getattr(self, name).to_dict())
            for name in ("model", "train", "attack", "sweep", "mitigate", "corpus")
        }

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "attack": self.attack.to_dict(),
            "sweep": self.sweep.to_dict(),
            "mitigate": self.mitigate.to_dict(),
            "corpus": self.corpus.to_dict(),
            "paths": {"workdir": self.workdir},
            "seed": self.seed,
            "workers": self.workers,
            "service": {"log_level": self.log_level},
        }


def _apply_overrides(data, workdir=None, seed=None, workers=None):
    if workdir is not None:
        data.setdefault("paths", {})["workdir"] = workdir
    if seed is not None:
        data["seed"] = seed
        # an explicit --seed wins over seeds pinned in the file
        for name in ("model", "train", "attack", "corpus"):
            if isinstance(data.get(name), dict):
                data[name].pop("seed", None)
    if workers is not None:
        data["workers"] = workers
    return data


def load_config(config_file=None, workdir=None, seed=None, workers=None):
    """Loads and schema-checks `config_file`, then applies command-line overrides."""
    config_file = config_file or DEFAULT_CONFIG
    logger.info(f"Loading config from {config_file}")
    if not os.path.isfile(config_file):
        raise ConfigError(f"Config file {config_file} not found")
    try:
        configuration = EnvYAML(config_file)
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not read {config_file}: {e}")

    data = {}
    for section in SECTIONS:
        if section in configuration:
            value = configuration[section]
            data[section] = dict(value) if isinstance(value, dict) else value
    data = _apply_overrides(data, workdir, seed, workers)
    return PipelineConfig.from_dict(data, source=config_file)
