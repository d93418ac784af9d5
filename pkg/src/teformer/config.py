"""Run configuration: model/train/data sections, file parsing, overrides, hashing.

A config file is YAML with up to three top-level sections (``model``,
``train``, ``data``).  Every field has a default; unknown keys are rejected
with the offending key named, dotted ``--set`` overrides win over the file.
The config hash is a sha256 digest of the canonicalized (sorted-key) JSON
dump, so it is stable under key reordering.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigurationError

# ISPRS-style 6-class color coding (impervious surface, building, low
# vegetation, tree, car, clutter).  Declared here as a default, not hardcoded
# at the IO layer; datasets with other class counts get a generated palette.
ISPRS_PALETTE = [
    (255, 255, 255),
    (0, 0, 255),
    (0, 255, 255),
    (0, 255, 0),
    (255, 255, 0),
    (255, 0, 0),
]

TAM_MODES = ("off", "qco_only", "full")


@dataclass
class ModelConfig:
    """Architecture hyperparameters and ablation switches."""

    num_classes: int = 5
    in_channels: int = 3
    stage_channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    stage_depths: tuple[int, int, int, int] = (2, 2, 2, 2)
    head_dim: int = 16
    stripe_width: int = 2
    ffn_ratio: float = 2.0
    # quantization-and-counting operator
    qco_levels: int = 8
    qco_channels: int = 24
    # texture-aware module
    tam_reproject_channels: int = 16
    tam_branch_channels: int = 16
    tam_scales: tuple[int, ...] = (8, 4, 2, 1)
    tam_branch_levels: tuple[int, ...] | None = None  # per-branch override of qco_levels
    # decoder
    decoder_channels: int = 64
    dam_embed_channels: int = 32
    pasppm_branch_channels: int = 32
    pasppm_pool_sizes: tuple[int, int] = (5, 9)
    pasppm_dilations: tuple[int, int] = (2, 4)
    # upsampler: "dynamic" (offset-predicting point sampling) or "bilinear"
    upsampler: str = "dynamic"
    # ablation switches
    tam_mode: str = "full"
    use_pasppm: bool = True
    use_dam: bool = True
    use_egffm: bool = True
    # restore the printed fusion form (edge map in the low-gate slot) instead
    # of the context stream
    literal_edge_operand: bool = False
    seed: int = 0

    def __post_init__(self):
        self.stage_channels = tuple(self.stage_channels)
        self.stage_depths = tuple(self.stage_depths)
        self.tam_scales = tuple(self.tam_scales)
        self.pasppm_pool_sizes = tuple(self.pasppm_pool_sizes)
        self.pasppm_dilations = tuple(self.pasppm_dilations)
        if self.tam_branch_levels is not None:
            self.tam_branch_levels = tuple(self.tam_branch_levels)
        self.validate()

    def validate(self):
        if self.qco_levels < 2:
            raise ConfigurationError("qco_levels must be >= 2")
        if len(self.stage_channels) != 4 or len(self.stage_depths) != 4:
            raise ConfigurationError("stage_channels and stage_depths must have 4 entries")
        ints = (
            self.num_classes,
            self.in_channels,
            *self.stage_channels,
            *self.stage_depths,
            self.head_dim,
            self.stripe_width,
            self.qco_channels,
            self.tam_reproject_channels,
            self.tam_branch_channels,
            self.decoder_channels,
            self.dam_embed_channels,
            self.pasppm_branch_channels,
        )
        if any(int(v) != v or v <= 0 for v in ints):
            raise ConfigurationError("all model dimensions must be positive integers")
        if any(a > b for a, b in zip(self.stage_channels, self.stage_channels[1:])):
            raise ConfigurationError("stage_channels must be non-decreasing")
        if self.tam_mode not in TAM_MODES:
            raise ConfigurationError(f"tam_mode must be one of {TAM_MODES}")
        if self.upsampler not in ("dynamic", "bilinear"):
            raise ConfigurationError("upsampler must be 'dynamic' or 'bilinear'")
        if self.tam_branch_levels is not None:
            if len(self.tam_branch_levels) != len(self.tam_scales):
                raise ConfigurationError("tam_branch_levels must match tam_scales in length")
            if any(n < 2 for n in self.tam_branch_levels):
                raise ConfigurationError("tam_branch_levels entries must be >= 2")
        for c in self.stage_channels:
            if c % self.head_dim and c // self.head_dim == 0:
                raise ConfigurationError("stage channels must allow at least one attention head")


@dataclass
class TrainConfig:
    """Optimization settings (AdamW with decoupled weight decay, poly LR decay)."""

    lr: float = 6e-5
    weight_decay: float = 0.01
    batch_size: int = 2
    iterations: int = 300
    crop: int = 64  # published setting uses 512; desk-scale default is 64
    poly_power: float = 1.0
    augment: bool = True
    checkpoint_every: int = 0  # 0 = only final
    val_every: int = 0  # 0 = only final
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if min(self.lr, self.weight_decay) < 0 or min(self.batch_size, self.iterations, self.crop) <= 0:
            raise ConfigurationError("train settings must be positive")
        if self.poly_power < 0:
            raise ConfigurationError("poly_power must be >= 0")


@dataclass
class DataConfig:
    """Dataset source: a generated texture set or a tiled raster directory."""

    source: str = "synthetic"  # "synthetic" | "tiles"
    root: str = ""
    # synthetic generator settings
    count: int = 500
    size: int = 64
    num_classes: int = 5
    seed: int = 0
    # tiling settings
    tile: int = 512
    stride: int = 512
    ignore_index: int = 255
    palette: list | None = None  # class -> [r, g, b]; default generated per class count
    include_background_class: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.source not in ("synthetic", "tiles"):
            raise ConfigurationError("data.source must be 'synthetic' or 'tiles'")
        if self.size % 64:
            raise ConfigurationError("data.size must be divisible by 64")
        if min(self.count, self.num_classes, self.tile, self.stride) <= 0:
            raise ConfigurationError("data settings must be positive")


@dataclass
class RunConfig:
    """Merged model/train/data configuration for one CLI command."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=_json_default)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _json_default(value):
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"unserializable config value {value!r}")


def _coerce(section: str, key: str, default, value):
    """Coerce a parsed value to the declared field type, naming the key on failure."""
    dotted = f"{section}.{key}" if section else key
    if default is None or value is None:
        return value
    want = type(default)
    if want is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigurationError(f"key '{dotted}' expects a boolean, got {value!r}")
    if want is int:
        if isinstance(value, bool) or (isinstance(value, float) and int(value) != value):
            raise ConfigurationError(f"key '{dotted}' expects an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"key '{dotted}' expects an integer, got {value!r}") from None
    if want is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"key '{dotted}' expects a number, got {value!r}") from None
    if want is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"key '{dotted}' expects a string, got {value!r}")
        return value
    if want is tuple:
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"key '{dotted}' expects a sequence, got {value!r}")
        out = []
        for v in value:
            try:
                out.append(int(v) if float(v) == int(float(v)) else float(v))
            except (TypeError, ValueError):
                raise ConfigurationError(f"key '{dotted}' expects numbers, got {value!r}") from None
        return tuple(out)
    if want is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"key '{dotted}' expects a list, got {value!r}")
        return list(value)
    return value


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _apply_section(section: str, cls, values: dict) -> dict:
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    out = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigurationError(f"unknown config key '{section}.{key}'")
        out[key] = _coerce(section, key, getattr(defaults, key), value)
    return out


def parse_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus ``key=value`` overrides.

    Override keys are dotted (``train.lr=1e-4``).  Unknown keys and type
    mismatches raise ConfigurationError naming the key.
    """
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config file {path} must contain a mapping")
        raw = loaded
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigurationError(f"unknown config section '{key}'")
        if not isinstance(raw[key], dict):
            raise ConfigurationError(f"config section '{key}' must be a mapping")

    sections = {name: dict(raw.get(name, {})) for name in _SECTIONS}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override '{item}' must look like section.key=value")
        dotted, _, value = item.partition("=")
        parts = dotted.strip().split(".")
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigurationError(f"override key '{dotted}' must look like section.key")
        parsed = yaml.safe_load(value) if value != "" else ""
        sections[parts[0]][parts[1]] = parsed

    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = cls(**_apply_section(name, cls, sections[name]))
    return RunConfig(**kwargs)


def tiny_model() -> ModelConfig:
    """Smallest configuration exercising every code path; used by fast tests."""
    return ModelConfig(
        stage_channels=(16, 24, 32, 48),
        stage_depths=(1, 1, 1, 1),
        head_dim=8,
        qco_levels=4,
        qco_channels=8,
        tam_reproject_channels=8,
        tam_branch_channels=8,
        decoder_channels=24,
        dam_embed_channels=12,
        pasppm_branch_channels=12,
    )


def paper_scale() -> ModelConfig:
    """Guess at the full-scale configuration; reported for context, never asserted.

    The published full-scale network is quoted at 52.67M parameters and
    72.25G FLOPs on 512x512 inputs; its exact stage widths/depths are
    unpublished, so this preset only brackets that regime.
    """
    return ModelConfig(
        num_classes=6,
        stage_channels=(64, 128, 320, 512),
        stage_depths=(3, 4, 6, 3),
        head_dim=32,
        ffn_ratio=4.0,
        qco_levels=16,
        qco_channels=64,
        tam_reproject_channels=32,
        tam_branch_channels=32,
        decoder_channels=128,
        dam_embed_channels=64,
        pasppm_branch_channels=96,
    )


PAPER_SCALE_REFERENCE = {"params_m": 52.67, "flops_g": 72.25}
