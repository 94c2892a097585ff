from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List

from utils.errors import ConfigError

VARIANTS = ("full", "no_decoder", "ts_only")


@dataclass
class ModelConfig:
    """Shape hyperparameters of the network.

    Attention widths are independent of d_model: Q/K/V project d_model to
    n_heads * d_head and the output projection maps back.
    """

    t_in: int = 4
    height: int = 100
    width: int = 100
    channels: int = 1
    n_features: int = 20
    patch: int = 10
    d_model: int = 128
    n_heads_enc: int = 4
    d_head_enc: int = 64
    n_heads_dec: int = 6
    d_head_dec: int = 128
    mlp_dim: int = 512
    layers_enc: int = 2
    layers_mm: int = 2
    layers_ts: int = 2
    layers_dec: int = 2
    horizon: int = 4
    per_token_pe: bool = False
    variant: str = "full"

    def validate(self) -> "ModelConfig":
        sizes = ("t_in", "height", "width", "channels", "n_features", "patch", "d_model",
                 "n_heads_enc", "d_head_enc", "n_heads_dec", "d_head_dec", "mlp_dim", "horizon")
        for name in sizes:
            if getattr(self, name) < 1:
                raise ConfigError(f"Model dimension {name} must be >= 1, got {getattr(self, name)}")
        for name in ("layers_enc", "layers_mm", "layers_ts", "layers_dec"):
            if getattr(self, name) < 0:
                raise ConfigError(f"Layer count {name} must be >= 0")
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(f"Patch size {self.patch} must divide {self.height}x{self.width}")
        if self.horizon != self.t_in:
            raise ConfigError(f"Each input position predicts one step: horizon ({self.horizon}) must equal t_in ({self.t_in})")
        if self.variant not in VARIANTS:
            raise ConfigError(f"Unknown model variant {self.variant!r}; expected one of {VARIANTS}")
        return self

    @property
    def n_patches(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def encode(self) -> List[int]:
        """Field values as unsigned ints in declaration order (checkpoint layout)."""
        out = []
        for name in self.field_names():
            value = getattr(self, name)
            if name == "variant":
                value = VARIANTS.index(value)
            out.append(int(value))
        return out

    @classmethod
    def decode(cls, values: List[int]) -> "ModelConfig":
        kwargs: Dict[str, Any] = dict(zip(cls.field_names(), values))
        kwargs["per_token_pe"] = bool(kwargs["per_token_pe"])
        kwargs["variant"] = VARIANTS[kwargs["variant"]]
        return cls(**kwargs).validate()


@dataclass
class TrainHyper:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    warmup_epochs: int = 20
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: str = "float32"

    def validate(self) -> "TrainHyper":
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        return self
