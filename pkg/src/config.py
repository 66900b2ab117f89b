"""Experiment configuration: dataclasses, the ``section.key = value`` file format and presets."""

from __future__ import annotations

import hashlib
import types
import typing
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Union

from .autodiff import ModelConfig
from .data.dataset import DataConfig
from .errors import ArtifactError, ConfigParseError, ConfigurationError
from .training.mixup import MixupConfig
from .training.schedule import TrainSchedule
from .transfer.losses import TransferConfig, TransferMethod

DEFAULT_METHODS = ("none", "onehot_finetune", "tsl", "vbkt")
# Transfer learning rate; the latent KL diverges at the pretraining rate.
TRANSFER_MAX_LR = 1e-3
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass
class ExperimentConfig:
    """Everything one ``run`` needs; the ``experiment`` section holds the top-level fields.

    ``devices`` defaults to every device in ``data.devices``. ``methods`` are
    transfer keys (``vbkt``, ``at+tsl``, ...) run against the shared
    ``transfer`` settings. An empty ``source_checkpoint`` pretrains a source
    model into the output directory.
    """

    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    pretrain: TrainSchedule = field(
        default_factory=lambda: TrainSchedule(total_epochs=30, cycle_length_epochs=10)
    )
    schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(max_lr=TRANSFER_MAX_LR))
    mixup: MixupConfig = field(default_factory=lambda: MixupConfig(enabled=True))
    methods: tuple[str, ...] = DEFAULT_METHODS
    devices: tuple[str, ...] = ()
    trials: int = 4
    output_dir: str = "output/experiment"
    source_checkpoint: str = ""
    workers: int = 1
    discrepancy_class: int = 0
    discrepancy_samples: int = 30

    def __post_init__(self) -> None:
        self.methods = tuple(self.methods)
        self.devices = tuple(self.devices) or tuple(self.data.devices)
        unknown = [d for d in self.devices if d not in self.data.devices]
        if unknown:
            raise ConfigurationError(
                f"experiment.devices {unknown} are not generated by "
                f"data.devices {list(self.data.devices)}"
            )
        if self.trials < 1:
            raise ConfigurationError(f"experiment.trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigurationError(f"experiment.workers must be >= 1, got {self.workers}")
        if not self.methods:
            raise ConfigurationError("experiment.methods must name at least one method")
        for key in self.methods:
            self.transfer.variant(key)
        if len(set(self.methods)) != len(self.methods):
            raise ConfigurationError(f"experiment.methods has duplicates: {list(self.methods)}")
        if self.model.input_shape != self.data.shape:
            raise ConfigurationError(
                f"model.input_shape {self.model.input_shape} "
                f"must equal data.shape {self.data.shape}"
            )
        if self.model.num_classes != self.data.num_classes:
            raise ConfigurationError(
                f"model.num_classes ({self.model.num_classes}) "
                f"must equal data.num_classes ({self.data.num_classes})"
            )
        if not 0 <= self.discrepancy_class < self.data.num_classes:
            raise ConfigurationError(
                f"experiment.discrepancy_class must be a class id, got {self.discrepancy_class}"
            )
        if self.discrepancy_samples < 2:
            raise ConfigurationError("experiment.discrepancy_samples must be >= 2")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with every seed set to ``seed``."""
        return replace(
            self,
            data=replace(self.data, seed=seed),
            model=replace(self.model, seed=seed),
            pretrain=replace(self.pretrain, seed=seed),
            schedule=replace(self.schedule, seed=seed),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(dump_config(self).encode("utf-8")).hexdigest()


SECTIONS = ("data", "model", "transfer", "pretrain", "schedule", "mixup")
EXPERIMENT_SECTION = "experiment"


def _section_types(cls: type) -> dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _coerce(raw: str, hint: Any) -> Any:
    origin = typing.get_origin(hint)
    if origin is tuple:
        (item_type, *_) = typing.get_args(hint)
        return tuple(_coerce(part.strip(), item_type) for part in raw.split(",") if part.strip())
    if origin is Union or origin is types.UnionType:
        options = [arg for arg in typing.get_args(hint) if arg is not type(None)]
        return _coerce(raw, options[0])
    if hint is bool:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got '{raw}'")
    if isinstance(hint, type) and issubclass(hint, Enum):
        return hint(raw)
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    return raw


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``section.key = value`` lines on top of ``base`` (defaults when None).

    Raises:
        ConfigParseError: Naming the line and field of a malformed line, an
            unknown key or a value that cannot be coerced or validated
    """
    base = base or default_config()
    all_sections = (*SECTIONS, EXPERIMENT_SECTION)
    overrides: dict[str, dict[str, Any]] = {name: {} for name in all_sections}
    first_line: dict[str, int] = {}
    experiment_types = {
        name: hint
        for name, hint in _section_types(ExperimentConfig).items()
        if name not in SECTIONS
    }

    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigParseError("expected 'section.key = value'", line=number)
        name, raw = (part.strip() for part in content.split("=", 1))
        section, dot, key = name.partition(".")
        if not dot or section not in overrides:
            raise ConfigParseError(
                f"unknown section '{section}' (expected one of {', '.join(all_sections)})",
                line=number,
                field=name,
            )
        if section == EXPERIMENT_SECTION:
            known = experiment_types
        else:
            known = _section_types(type(getattr(base, section)))
        if key not in known:
            raise ConfigParseError(f"unknown key '{key}'", line=number, field=name)
        try:
            overrides[section][key] = _coerce(raw, known[key])
        except ValueError as exc:
            raise ConfigParseError(f"bad value '{raw}': {exc}", line=number, field=name) from None
        first_line.setdefault(section, number)

    sections: dict[str, Any] = {}
    for section in SECTIONS:
        try:
            sections[section] = replace(getattr(base, section), **overrides[section])
        except ConfigurationError as exc:
            raise ConfigParseError(str(exc), line=first_line.get(section), field=section) from None
    experiment = overrides[EXPERIMENT_SECTION]
    if "devices" not in experiment and "devices" in overrides["data"]:
        experiment["devices"] = ()
    try:
        return replace(base, **sections, **experiment)
    except ConfigurationError as exc:
        raise ConfigParseError(str(exc), line=first_line.get(EXPERIMENT_SECTION)) from None


def load_config(path: Union[str, Path], base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), base)


def dump_config(config: ExperimentConfig) -> str:
    """Serialize every field; ``parse_config`` of the result reproduces ``config``."""
    lines: list[str] = []
    for section in SECTIONS:
        values = getattr(config, section)
        for f in fields(values):
            lines.append(f"{section}.{f.name} = {_format(getattr(values, f.name))}")
        lines.append("")
    for f in fields(config):
        if f.name in SECTIONS:
            continue
        lines.append(f"{EXPERIMENT_SECTION}.{f.name} = {_format(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def default_config() -> ExperimentConfig:
    """Desk-scale benchmark: 10 classes, 8 devices, 4 trials."""
    return ExperimentConfig()


def ci_config() -> ExperimentConfig:
    """The ``--small`` preset: 3 classes, 2 devices, 2 trials, short schedules, no mixup."""
    data = replace(DataConfig.small(), shape=(1, 20, 32))
    return ExperimentConfig(
        data=data,
        model=ModelConfig(
            input_shape=data.shape,
            num_classes=data.num_classes,
            conv_channels=(4, 8),
            head_units=32,
        ),
        transfer=TransferConfig(method=TransferMethod.VBKT),
        pretrain=TrainSchedule(total_epochs=8, cycle_length_epochs=8),
        schedule=TrainSchedule(max_lr=TRANSFER_MAX_LR, total_epochs=6, cycle_length_epochs=3),
        mixup=MixupConfig(enabled=False),
        methods=DEFAULT_METHODS,
        trials=2,
        output_dir="output/ci",
    )
