"""Configuration dataclasses and their strict JSON loaders."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

BASE_LAMBDAS = (85.0, 170.0, 380.0, 840.0)
HIERARCHICAL_WEIGHTS = (0.5, 1.2, 0.5, 0.9)
COMPENSATION_MODES = ("full", "concat", "off")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture widths and the context-modulation switches.

    ``orientation`` toggles the oriented-flow estimator; with it off, the
    second context is extracted from the motion-compensated prediction frame
    directly.  ``compensation_mode`` picks how the two contexts are merged:
    the global/local network (``full``), a plain concatenation refinement
    (``concat``), or not at all (``off``: the propagated context is used as is).
    """

    ctx_channels: int = 32
    feat_channels: int = 32
    latent_channels: int = 32
    motion_channels: int = 16
    hidden_channels: int = 32
    flow_hidden: int = 16
    flow_levels: int = 3
    coupling_layers: int = 2
    coupling_scale: float = 1.0
    orientation: bool = True
    compensation_mode: str = "full"

    def __post_init__(self):
        if self.compensation_mode not in COMPENSATION_MODES:
            raise ConfigError(f"compensation_mode must be one of {COMPENSATION_MODES}")
        if self.ctx_channels % 2:
            raise ConfigError("ctx_channels must be even (affine coupling splits channels)")
        if self.flow_levels < 1:
            raise ConfigError("flow_levels must be >= 1")
        if self.compensation_mode == "off" and self.orientation:
            raise ConfigError("orientation requires a compensation mode to consume the oriented context")

    @property
    def uses_second_context(self) -> bool:
        return self.compensation_mode != "off"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return _strict(cls, data)


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run needs; the JSON schema is exactly these fields."""

    base_lambda: float = 170.0
    alpha: float = 0.2
    hierarchical_weights: tuple[float, ...] = HIERARCHICAL_WEIGHTS
    frames_per_clip: int = 7
    learning_rate: float = 1e-4
    steps: int = 1000
    seed: int = 0
    orientation: bool = True
    compensation_mode: str = "full"
    decouple_loss: bool = True
    # desk-scale plumbing (not taken from the method description)
    batch_size: int = 4
    crop_size: int = 64
    flow_pretrain_steps: int = 0
    warmup_steps: int = 0
    warmup_learning_rate: float = 1e-3
    grad_clip: float = 1.0
    ctx_channels: int = 32
    feat_channels: int = 32
    latent_channels: int = 32
    motion_channels: int = 16
    hidden_channels: int = 32
    flow_hidden: int = 16
    flow_levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "hierarchical_weights", tuple(float(w) for w in self.hierarchical_weights))
        if self.base_lambda not in BASE_LAMBDAS:
            raise ConfigError(f"base_lambda must be one of {BASE_LAMBDAS}")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if len(self.hierarchical_weights) != 4 or any(w <= 0 for w in self.hierarchical_weights):
            raise ConfigError("hierarchical_weights must be 4 positive numbers")
        if self.frames_per_clip < 2:
            raise ConfigError("frames_per_clip must be >= 2")
        if self.compensation_mode not in COMPENSATION_MODES:
            raise ConfigError(f"compensation_mode must be one of {COMPENSATION_MODES}")
        if self.crop_size % 16:
            raise ConfigError("crop_size must be a multiple of 16")

    @property
    def lambda_index(self) -> int:
        return BASE_LAMBDAS.index(self.base_lambda)

    def lambda_for_frame(self, t: int) -> float:
        """Per-frame lambda; the weight cycle follows the absolute frame index."""
        return self.base_lambda * self.hierarchical_weights[t % len(self.hierarchical_weights)]

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            ctx_channels=self.ctx_channels,
            feat_channels=self.feat_channels,
            latent_channels=self.latent_channels,
            motion_channels=self.motion_channels,
            hidden_channels=self.hidden_channels,
            flow_hidden=self.flow_hidden,
            flow_levels=self.flow_levels,
            orientation=self.orientation,
            compensation_mode=self.compensation_mode,
        )

    def replace(self, **changes) -> "TrainConfig":
        data = asdict(self)
        data.update(changes)
        return TrainConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["hierarchical_weights"] = list(self.hierarchical_weights)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return _strict(cls, data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# Ablation variants: (orientation, compensation_mode, decouple_loss, long_sequence)
VARIANTS = {
    "ma": (False, "off", False, False),
    "mb": (True, "concat", False, False),
    "mc": (False, "full", False, False),
    "md": (True, "full", False, False),
    "me": (True, "full", True, False),
    "mf": (False, "off", False, True),
    "mg": (True, "full", True, True),
}

LONG_SEQUENCE_FRAMES = 32


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    try:
        orientation, mode, decouple, long_seq = VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
    changes = dict(orientation=orientation, compensation_mode=mode, decouple_loss=decouple)
    if long_seq:
        changes["frames_per_clip"] = LONG_SEQUENCE_FRAMES
    return base.replace(**changes)


def _strict(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
