"""Run configuration: TOML manifests, environment overrides, validation.

A manifest has four tables: [experiment] (name, out_dir, seeds, protocol),
[data] (synthetic recipe or folder source), [model] (architecture toggles)
and [train] (optimizer and schedule).  Any scalar key can be overridden by
an environment variable DGFD_<TABLE>__<KEY> whose value is parsed as TOML,
e.g. DGFD_TRAIN__LAM=0.5 or DGFD_MODEL__USE_DDA=true.

Unknown keys and invalid values are collected and reported together, one
message listing every offending field.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import MISSING as dataclasses_MISSING
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backbone import ModelConfig
from .data import SynthSpec

ENV_PREFIX = "DGFD_"
PROTOCOLS = ("leave-one-domain-out", "in-domain")
LR_SCHEDULES = ("cosine", "constant")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    lr_schedule: str = "cosine"
    lam: float = 1.0
    C: int = 8
    bank_refresh_epochs: int = 1
    bank_max_per_class: int = 256
    grl_strength: float = 1.0
    grl_warmup_epochs: int = 0
    temperature_start: float = 30.0
    temperature_end: float = 1.0

    def validate(self) -> list[str]:
        errors = []
        if self.epochs < 1:
            errors.append(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            errors.append(f"train.batch_size must be >= 2, got {self.batch_size}")
        if self.lr <= 0:
            errors.append(f"train.lr must be positive, got {self.lr}")
        if self.lr_schedule not in LR_SCHEDULES:
            errors.append(f"train.lr_schedule must be one of {LR_SCHEDULES}, got '{self.lr_schedule}'")
        if self.lam < 0:
            errors.append(f"train.lam must be >= 0, got {self.lam}")
        if self.C < 1:
            errors.append(f"train.C must be >= 1, got {self.C}")
        if self.bank_refresh_epochs < 1:
            errors.append(f"train.bank_refresh_epochs must be >= 1, got {self.bank_refresh_epochs}")
        if self.bank_max_per_class < self.C:
            errors.append(
                f"train.bank_max_per_class ({self.bank_max_per_class}) must be >= C ({self.C})")
        if self.grl_strength < 0:
            errors.append(f"train.grl_strength must be >= 0, got {self.grl_strength}")
        if self.grl_warmup_epochs < 0:
            errors.append(f"train.grl_warmup_epochs must be >= 0, got {self.grl_warmup_epochs}")
        if self.temperature_start <= 0 or self.temperature_end <= 0:
            errors.append("train.temperature_start/end must be positive")
        return errors


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"          # "synthetic" | "folder"
    n_domains: int = 4
    samples_per_domain: int = 500
    image_size: int = 64
    seed: int = 0
    holdout_domain: int | None = None  # None -> last domain
    train_fraction: float = 0.8
    seam_width: int = 2
    patch_amplitude: float = 0.5
    path: str | None = None            # folder source: manifest.csv or its directory

    def validate(self) -> list[str]:
        errors = []
        if self.source not in ("synthetic", "folder"):
            errors.append(f"data.source must be 'synthetic' or 'folder', got '{self.source}'")
        if self.source == "folder" and not self.path:
            errors.append("data.path is required when data.source = 'folder'")
        if self.n_domains < 1:
            errors.append(f"data.n_domains must be >= 1, got {self.n_domains}")
        if self.samples_per_domain < 2:
            errors.append(f"data.samples_per_domain must be >= 2, got {self.samples_per_domain}")
        if not 0 < self.train_fraction < 1:
            errors.append(f"data.train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.holdout_domain is not None and not 1 <= self.holdout_domain <= self.n_domains:
            errors.append(
                f"data.holdout_domain must be in 1..{self.n_domains}, got {self.holdout_domain}")
        return errors

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            n_domains=self.n_domains,
            image_size=self.image_size,
            samples_per_domain=self.samples_per_domain,
            seed=self.seed,
            holdout_domain=self.holdout_domain,
            train_fraction=self.train_fraction,
            seam_width=self.seam_width,
            patch_amplitude=self.patch_amplitude,
        )


@dataclass(frozen=True)
class ExperimentManifest:
    name: str = "run"
    out_dir: str = "runs/run"
    seeds: tuple = (0,)
    protocol: str = "leave-one-domain-out"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> list[str]:
        errors = self.data.validate() + self.train.validate()
        if not self.seeds:
            errors.append("experiment.seeds must be non-empty")
        if self.protocol not in PROTOCOLS:
            errors.append(f"experiment.protocol must be one of {PROTOCOLS}, got '{self.protocol}'")
        if self.protocol == "leave-one-domain-out" and self.data.n_domains < 2:
            errors.append("leave-one-domain-out needs data.n_domains >= 2")
        if self.model.use_dd and self.model.n_domains != self.data.n_domains:
            errors.append(
                f"model.n_domains ({self.model.n_domains}) must match "
                f"data.n_domains ({self.data.n_domains})")
        if self.model.image_size != self.data.image_size:
            errors.append(
                f"model.image_size ({self.model.image_size}) must match "
                f"data.image_size ({self.data.image_size})")
        return errors

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


_TUPLE_KEYS = {"widths", "dfe_stages", "class_ids", "seeds"}

# Fields whose default is None cannot reveal their expected type.
_OPTIONAL_TYPES = {"holdout_domain": int, "path": str}


def _coerce(label: str, key: str, value, default, errors: list[str]):
    """Check a TOML/env value against the field's expected scalar type."""
    if default is dataclasses_MISSING:
        return value
    expected = _OPTIONAL_TYPES.get(key, type(default)) if default is not None else _OPTIONAL_TYPES.get(key)
    if expected is None or isinstance(default, (tuple, list)):
        return value
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(value, expected):
        return value
    errors.append(
        f"{label}.{key} must be {expected.__name__}, got {value!r}")
    return default


def _build_section(cls, table: dict, label: str, errors: list[str], defaults: dict | None = None):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        errors.append(f"unknown key(s) in [{label}]: {', '.join(unknown)}")
    values = dict(defaults or {})
    for key, value in table.items():
        if key not in known:
            continue
        if key in _TUPLE_KEYS and isinstance(value, list):
            values[key] = tuple(value)
        else:
            values[key] = _coerce(label, key, value, known[key].default, errors)
    try:
        return cls(**values)
    except (ValueError, TypeError) as exc:
        errors.append(f"[{label}]: {exc}")
        return cls(**(defaults or {}))


def _env_overrides(env) -> dict[str, dict]:
    """DGFD_<TABLE>__<KEY>=<toml value> -> nested {table: {key: value}}."""
    out: dict[str, dict] = {}
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        table, _, key = name[len(ENV_PREFIX):].partition("__")
        table, key = table.lower(), key.lower()
        if table not in ("experiment", "data", "model", "train"):
            continue
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw  # bare strings may arrive unquoted
        out.setdefault(table, {})[key] = value
    return out


def build_manifest(raw: dict, env=None) -> ExperimentManifest:
    """Assemble and validate a manifest from parsed TOML plus env overrides."""
    tables = {k: dict(v) for k, v in raw.items() if isinstance(v, dict)}
    stray = sorted(set(raw) - set(tables))
    errors: list[str] = []
    if stray:
        errors.append(f"top-level keys must live in a [table]: {', '.join(stray)}")
    for table, overrides in _env_overrides(env if env is not None else os.environ).items():
        tables.setdefault(table, {}).update(overrides)

    known_tables = {"experiment", "data", "model", "train"}
    unknown_tables = sorted(set(tables) - known_tables)
    if unknown_tables:
        errors.append(f"unknown table(s): {', '.join(unknown_tables)}")

    data = _build_section(DataConfig, tables.get("data", {}), "data", errors)
    model_defaults = {"image_size": data.image_size, "n_domains": data.n_domains}
    model = _build_section(ModelConfig, tables.get("model", {}), "model", errors, model_defaults)

    exp_table = dict(tables.get("experiment", {}))
    train = _build_section(TrainConfig, tables.get("train", {}), "train", errors)
    known_exp = {"name", "out_dir", "seeds", "protocol"}
    unknown_exp = sorted(set(exp_table) - known_exp)
    if unknown_exp:
        errors.append(f"unknown key(s) in [experiment]: {', '.join(unknown_exp)}")
    seeds = exp_table.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)):
        seeds = [seeds]
    manifest = ExperimentManifest(
        name=str(exp_table.get("name", "run")),
        out_dir=str(exp_table.get("out_dir", "runs/run")),
        seeds=tuple(int(s) for s in seeds),
        protocol=str(exp_table.get("protocol", "leave-one-domain-out")),
        data=data, model=model, train=train,
    )
    errors.extend(manifest.validate())
    if errors:
        raise ValueError("invalid manifest:\n  " + "\n  ".join(errors))
    return manifest


def load_manifest_file(path, env=None) -> ExperimentManifest:
    with open(Path(path), "rb") as fh:
        raw = tomllib.load(fh)
    return build_manifest(raw, env=env)


def with_toggles(manifest: ExperimentManifest, use_dda: bool, use_dfe: bool,
                 use_dd: bool) -> ExperimentManifest:
    """The same experiment with a different ablation switch setting."""
    model = replace(manifest.model, use_dda=use_dda, use_dfe=use_dfe, use_dd=use_dd)
    return replace(manifest, model=model)


def with_lambda(manifest: ExperimentManifest, lam: float) -> ExperimentManifest:
    return replace(manifest, train=replace(manifest.train, lam=lam))
