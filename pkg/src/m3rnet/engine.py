import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from aligner.dataset import EventSequence
from aligner.quantize import dequantize
from m3rnet.config import ModelConfig
from m3rnet.model import M3RNet
from utils.errors import EmptyInput, NoCache, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass
class Standardizer:
    """Per-variable z-score fitted on the training inputs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, sequences: List[EventSequence], t_in: int) -> "Standardizer":
        if not sequences:
            raise EmptyInput("Cannot fit standardization statistics on zero sequences")
        rows = np.concatenate([np.asarray(s.pws_rows[:t_in], dtype=np.float64) for s in sequences])
        mean = np.nanmean(rows, axis=0)
        std = np.nanstd(rows, axis=0)
        mean = np.nan_to_num(mean, nan=0.0)
        std = np.where(np.isfinite(std) & (std > 1e-12), std, 1.0)
        return cls(mean=mean.astype(np.float32), std=std.astype(np.float32))

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        return cls(mean=np.zeros(n_features, dtype=np.float32), std=np.ones(n_features, dtype=np.float32))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        z = (np.asarray(rows, dtype=np.float64) - self.mean) / self.std
        # still-missing cells sit at the training mean
        return np.nan_to_num(z, nan=0.0)

    def inverse(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=np.float64) * self.std + self.mean


@dataclass
class Batch:
    radar: torch.Tensor   # [B, T_in, H, W, C]
    met: torch.Tensor     # [B, T_in, D]
    target: torch.Tensor  # [B, horizon]

    def __len__(self) -> int:
        return self.met.shape[0]

    def select(self, index: torch.Tensor) -> "Batch":
        return Batch(radar=self.radar[index], met=self.met[index], target=self.target[index])


@dataclass
class ActivationCache:
    """Handle to a recorded forward pass; consumed by exactly one backward call."""

    predictions: torch.Tensor
    target: torch.Tensor
    loss: Optional[torch.Tensor] = None
    consumed: bool = False


def batch_from_sequences(sequences: List[EventSequence], config: ModelConfig,
                         standardizer: Optional[Standardizer] = None,
                         dtype: torch.dtype = torch.float32) -> Batch:
    """Inputs are frames/rows [0, t_in); targets are the precipitation rates at [t_in, t_in + horizon)."""
    if not sequences:
        raise EmptyInput("No sequences to batch")

    t_in, horizon = config.t_in, config.horizon
    window = len(sequences[0].target)
    if t_in + horizon > window:
        raise ShapeMismatch(f"t_in + horizon = {t_in + horizon} exceeds sequence length {window}")

    codes = np.stack([s.frames[:t_in] for s in sequences])
    if codes.shape[2:] != (config.height, config.width):
        raise ShapeMismatch(f"Frames are {codes.shape[2:]}, model expects {(config.height, config.width)}")
    radar, _ = dequantize(codes)

    rows = np.stack([s.pws_rows[:t_in] for s in sequences])
    if rows.shape[-1] != config.n_features:
        raise ShapeMismatch(f"Station rows carry {rows.shape[-1]} variables, model expects {config.n_features}")
    met = (standardizer or Standardizer.identity(config.n_features)).transform(rows)

    target = np.stack([s.target[t_in:t_in + horizon] for s in sequences]).astype(np.float64)
    if np.isnan(target).any():
        logger.warning(f"{int(np.isnan(target).sum())} missing target value(s) set to 0")
        target = np.nan_to_num(target, nan=0.0)

    return Batch(
        radar=torch.as_tensor(radar[..., None], dtype=dtype),
        met=torch.as_tensor(met, dtype=dtype),
        target=torch.as_tensor(target, dtype=dtype),
    )


def loss_mse(predictions: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if predictions.shape != target.shape:
        raise ShapeMismatch(f"Prediction shape {tuple(predictions.shape)} != target shape {tuple(target.shape)}")
    return torch.mean((predictions - target) ** 2)


def forward(model: M3RNet, batch: Batch, record: bool = False) -> Tuple[torch.Tensor, Optional[ActivationCache]]:
    """Predict [B, horizon]; with `record` the graph is kept for a single `backward`."""
    if batch.target.shape[-1] != model.config.horizon:
        raise ShapeMismatch(f"Batch targets cover {batch.target.shape[-1]} steps, model predicts {model.config.horizon}")

    if not record:
        with torch.no_grad():
            return model(batch.radar, batch.met), None

    predictions = model(batch.radar, batch.met)
    return predictions, ActivationCache(predictions=predictions, target=batch.target)


def backward(cache: Optional[ActivationCache], model: M3RNet) -> Dict[str, torch.Tensor]:
    """Gradient of the MSE loss for every parameter, keyed by parameter name.

    Replaces any previously accumulated gradients.
    """
    if cache is None:
        raise NoCache("backward needs the activation cache of a recorded forward pass")
    if cache.consumed:
        raise NoCache("Activation cache was already consumed by a previous backward call")

    loss = loss_mse(cache.predictions, cache.target)
    model.zero_grad(set_to_none=True)
    loss.backward()
    cache.loss = loss.detach()
    cache.consumed = True

    return {
        name: p.grad if p.grad is not None else torch.zeros_like(p)
        for name, p in model.named_parameters()
    }


def predict(model: M3RNet, batch: Batch) -> np.ndarray:
    predictions, _ = forward(model, batch, record=False)
    return predictions.detach().cpu().numpy().astype(np.float64)
