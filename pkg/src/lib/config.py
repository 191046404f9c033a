from pathlib import Path
from typing import Literal, Optional, TypeVar

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.ndtensor.errors import ConfigurationError

STRIDE = 8


class ModelConfig(BaseModel):
    """Hyperparameters of the tracking network."""

    d: int = 64
    n_heads: int = 4
    d_ffn: int = 256
    n_layers: int = Field(default=2, ge=1)
    backbone_channels: tuple[int, int, int, int] = (16, 32, 48, 64)
    template_size: int = 64
    search_size: int = 128
    use_norm: bool = True  # False = literal equations, no post-residual norms
    fusion: Literal["transformer", "xcorr"] = "transformer"
    seg_heads: int = 8
    seg_channels: int = 8
    seg_attention: bool = True  # False feeds only fused features to the mask head

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.d % 4 != 0:
            raise ValueError(f"d={self.d} must be divisible by 4 for sine encodings")
        if self.d % self.n_heads != 0 or self.d % self.seg_heads != 0:
            raise ValueError(f"d={self.d} must be divisible by the head counts")
        for name in ("template_size", "search_size"):
            if getattr(self, name) % STRIDE != 0:
                raise ValueError(f"{name} must be divisible by {STRIDE}")
        if self.template_size > self.search_size:
            raise ValueError("template_size must not exceed search_size")
        if list(self.backbone_channels) != sorted(self.backbone_channels):
            raise ValueError("backbone channels must be nondecreasing")
        return self

    @property
    def channels(self) -> int:
        return self.backbone_channels[-1]

    @property
    def template_grid(self) -> tuple[int, int]:
        return (self.template_size // STRIDE, self.template_size // STRIDE)

    @property
    def search_grid(self) -> tuple[int, int]:
        return (self.search_size // STRIDE, self.search_size // STRIDE)


class Profile(BaseModel):
    name: str
    model: ModelConfig
    templates: int = Field(default=2, ge=1)


PROFILES: dict[str, Profile] = {
    "toy": Profile(name="toy", model=ModelConfig(), templates=2),
    "paper": Profile(
        name="paper",
        model=ModelConfig(
            d=256,
            n_heads=8,
            d_ffn=2048,
            n_layers=4,
            backbone_channels=(64, 256, 512, 1024),
            template_size=128,
            search_size=256,
        ),
        templates=2,
    ),
}


def get_profile(name: str) -> Profile:
    if name not in PROFILES:
        raise ConfigurationError(f"Unknown profile {name!r}, expected one of {sorted(PROFILES)}")
    return PROFILES[name]


class TrainConfig(BaseModel):
    """Training budget, optimiser settings and synthetic data parameters."""

    profile: str = "toy"
    seed: int = Field(default=0, ge=0)
    steps: int = Field(default=2000, ge=1)
    batch_size: int = Field(default=8, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    backbone_lr_ratio: float = Field(default=0.1, ge=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    lr_drop_fraction: float = Field(default=0.8, gt=0, le=1)
    stage2_steps: int = Field(default=500, ge=1)
    iou_lr: float = Field(default=1e-3, gt=0)
    seg_lr: float = Field(default=1e-2, gt=0)
    precision: int = 32
    workers: int = Field(default=1, ge=1)
    templates: int = Field(default=2, ge=1)
    n_train_sequences: int = Field(default=32, ge=1)
    n_frames: int = Field(default=60, ge=2)
    n_distractors: int = Field(default=2, ge=0)
    motion_sigma: float = Field(default=2.0, ge=0)
    jitter: float = Field(default=0.1, ge=0)
    frame_size: int = Field(default=160, ge=32)
    log_every: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.precision not in (32, 64):
            raise ValueError(f"precision must be 32 or 64, got {self.precision}")
        return self


class TrackerConfig(BaseModel):
    templates: int = Field(default=2, ge=1)
    mode: Literal["concat", "avg"] = "concat"
    w_penalty: float = Field(default=0.49, ge=0, le=1)
    threshold: float = 0.75
    score_gate: float = 0.5
    long_term: bool = False
    with_mask: bool = False


ConfigT = TypeVar("ConfigT", bound=BaseModel)


def read_key_values(path: str | Path) -> dict[str, str]:
    """Parse a key=value file; `#` starts a comment, blank lines are ignored."""
    values: dict[str, str] = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def build_config(
    model_cls: type[ConfigT],
    path: Optional[str | Path] = None,
    **overrides: object,
) -> ConfigT:
    """Validate a config from an optional key=value file plus explicit overrides."""
    values: dict[str, object] = dict(read_key_values(path)) if path is not None else {}
    unknown = sorted(set(values) - set(model_cls.model_fields))
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return model_cls.model_validate(values)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
