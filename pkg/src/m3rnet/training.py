import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import torch
from tqdm import tqdm

from aligner.dataset import DatasetSplit
from m3rnet.config import ModelConfig, TrainHyper
from m3rnet.engine import Standardizer, backward, batch_from_sequences, forward
from m3rnet.model import M3RNet
from utils.errors import EmptyDataset

logger = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def lr_at_epoch(epoch: int, epochs: int, warmup_epochs: int, base_lr: float) -> float:
    """Linear warmup over epochs 1..warmup, then cosine decay to 0 at the last epoch."""
    if warmup_epochs > 0 and epoch <= warmup_epochs:
        return base_lr * epoch / warmup_epochs
    span = max(1, epochs - warmup_epochs)
    progress = min(1.0, max(0.0, (epoch - warmup_epochs) / span))
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class TrainResult:
    model: M3RNet
    standardizer: Standardizer
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]['loss'] if self.history else float("nan")


def train(split: DatasetSplit, config: ModelConfig, hyper: TrainHyper, progress: bool = True) -> TrainResult:
    """Fit a model on the split's training sequences with AdamW and a warmup/cosine schedule.

    Identical inputs, config, hyperparameters and seed give identical weights.
    """
    hyper.validate()
    if not split.train:
        raise EmptyDataset("Training split is empty")

    dtype = DTYPES[hyper.dtype]
    torch.manual_seed(hyper.seed)
    generator = torch.Generator().manual_seed(hyper.seed)

    standardizer = Standardizer.fit(split.train, config.t_in)
    data = batch_from_sequences(split.train, config, standardizer, dtype=dtype)
    model = M3RNet(config).to(dtype)

    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=hyper.lr,
        betas=(hyper.beta1, hyper.beta2),
        eps=hyper.eps,
        weight_decay=hyper.weight_decay,
    )

    n = len(data)
    logger.info(f"Training {config.variant} model on {n} sequence(s) for {hyper.epochs} epoch(s)")
    history = []

    epochs = tqdm(range(1, hyper.epochs + 1), desc=f"Training {config.variant}", unit="epoch",
                  disable=not progress)
    for epoch in epochs:
        lr = lr_at_epoch(epoch, hyper.epochs, hyper.warmup_epochs, hyper.lr)
        for group in optimizer.param_groups:
            group['lr'] = lr

        order = torch.randperm(n, generator=generator)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            index = order[start:start + hyper.batch_size]
            _, cache = forward(model, data.select(index), record=True)
            backward(cache, model)
            optimizer.step()
            total += float(cache.loss) * len(index)

        loss = total / n
        history.append({'epoch': epoch, 'lr': lr, 'loss': loss})
        epochs.set_postfix(loss=f"{loss:.4f}")
        logger.debug(f"epoch {epoch}: lr={lr:.3e} loss={loss:.6f}")

    logger.info(f"Training finished: loss {history[0]['loss']:.4f} -> {history[-1]['loss']:.4f}")
    return TrainResult(model=model, standardizer=standardizer, history=history)
