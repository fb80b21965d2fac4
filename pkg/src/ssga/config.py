"""Model and training configuration, plus the flat ``key = value`` config file format."""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

# Any threshold above this value can never be crossed by a cosine similarity,
# so it acts as the "never stop" setting.
NEVER_STOP = 2.0

SAMPLING_ORDERS = ("descending", "ascending", "random")


@dataclass
class SSGAConfig:
    """Hyperparameters of the stepwise detector.

    ``num_stages`` is both the refinement depth and the memory-bank capacity.
    ``delta`` is the cosine-similarity stop threshold; values above 1 disable
    early stopping. ``force_stages`` caps the number of refinement stages at
    inference time without touching any weights.
    """

    num_stages: int = 4
    alpha: float = 1.0
    beta_schedule: Optional[list[float]] = None
    delta: float = 0.9
    num_queries: int = 32
    num_classes: int = 4
    embed_dim: int = 64
    pool_size: int = 4
    sampling_order: str = "descending"
    force_stages: Optional[int] = None
    # Architecture plumbing needed to rebuild a model from a checkpoint.
    feat_dim: int = 64
    stride: int = 8
    num_heads: int = 4
    decoder_layers: int = 2
    hidden_mult: int = 2
    sampling_seed: int = 0

    def __post_init__(self):
        if self.beta_schedule is None:
            self.beta_schedule = [1.5] * self.num_stages
        elif isinstance(self.beta_schedule, (int, float)):
            self.beta_schedule = [float(self.beta_schedule)] * self.num_stages
        self.validate()

    def validate(self):
        if self.num_stages < 1:
            raise ValueError(f"num_stages must be >= 1, got {self.num_stages}")
        if len(self.beta_schedule) != self.num_stages:
            raise ValueError(
                f"beta_schedule has {len(self.beta_schedule)} entries for "
                f"{self.num_stages} stages"
            )
        if any(b <= 0 for b in self.beta_schedule):
            raise ValueError(f"beta_schedule entries must be positive: {self.beta_schedule}")
        if not math.isfinite(self.delta) or self.delta < -1.0:
            raise ValueError(f"delta must be finite and >= -1, got {self.delta}")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")
        if self.num_queries < 1 or self.num_classes < 1:
            raise ValueError("num_queries and num_classes must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.sampling_order not in SAMPLING_ORDERS:
            raise ValueError(f"sampling_order must be one of {SAMPLING_ORDERS}")
        if self.force_stages is not None and self.force_stages < 0:
            raise ValueError(f"force_stages must be >= 0, got {self.force_stages}")

    @property
    def never_stop(self) -> bool:
        return self.delta > 1.0

    def replace(self, **kwargs) -> "SSGAConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SSGAConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class TrainConfig:
    """Optimization hyperparameters for the desk-scale benchmark."""

    epochs: int = 12
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    frames_per_clip: int = 4
    class_weight: float = 2.0
    l1_weight: float = 5.0
    giou_weight: float = 2.0
    no_object_weight: float = 0.1
    grad_clip: float = 1.0
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    if raw.lower() in ("none", "null"):
        return None
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",") if part.strip()]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file into a dict.

    Blank lines and lines starting with ``#`` are skipped. Comma-separated
    values become lists, numbers are converted, everything else stays a string.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            values[key.strip()] = _parse_value(raw)
    return values


def write_config_file(path, values: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")
