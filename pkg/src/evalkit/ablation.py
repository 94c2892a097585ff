import csv
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from aligner.dataset import DatasetSplit, EventSequence
from evalkit.metrics import CSI_THRESHOLDS, MetricReport, compute_metrics, mean_report, threshold_label
from m3rnet.config import ModelConfig, TrainHyper
from m3rnet.engine import Standardizer, batch_from_sequences, predict
from m3rnet.model import M3RNet
from m3rnet.training import train
from utils.errors import EmptyDataset

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = ("ts_only", "no_decoder", "full")


def metrics_header(thresholds: Sequence[float] = CSI_THRESHOLDS) -> List[str]:
    return ["variant", "rmse", "mae", "r2", "cc"] + [f"csi_{threshold_label(t)}" for t in thresholds] + ["flags"]


def evaluate_model(model: M3RNet, standardizer: Standardizer,
                   sequences: List[EventSequence]) -> Tuple[MetricReport, np.ndarray, np.ndarray]:
    """Score a model on `sequences`; returns the report plus predictions and targets [N, horizon]."""
    if not sequences:
        raise EmptyDataset("No test sequences to evaluate")
    dtype = next(model.parameters()).dtype
    batch = batch_from_sequences(sequences, model.config, standardizer, dtype=dtype)
    predictions = predict(model, batch)
    actual = batch.target.detach().cpu().numpy().astype(np.float64)
    return compute_metrics(predictions, actual), predictions, actual


def run_ablation(split: DatasetSplit, config: ModelConfig, hyper: TrainHyper,
                 variants: Sequence[str] = ABLATION_VARIANTS, repeats: int = 1,
                 progress: bool = True) -> Dict[str, MetricReport]:
    """Train and test each variant with identical data and seeds.

    With `repeats` > 1 every variant is trained with seeds seed..seed+repeats-1
    and the reports are averaged.
    """
    if not split.train or not split.test:
        raise EmptyDataset(f"Ablation needs train and test sequences (got {len(split.train)}/{len(split.test)})")

    results = {}
    for variant in variants:
        reports = []
        for k in range(max(1, repeats)):
            run_hyper = replace(hyper, seed=hyper.seed + k)
            trained = train(split, replace(config, variant=variant), run_hyper, progress=progress)
            report, _, _ = evaluate_model(trained.model, trained.standardizer, split.test)
            reports.append(report)
        results[variant] = mean_report(reports)
        logger.info(f"{variant}: rmse={results[variant].rmse:.4f} mae={results[variant].mae:.4f}")
    return results


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_metrics_csv(reports: Dict[str, MetricReport], path: Union[str, Path],
                      thresholds: Sequence[float] = CSI_THRESHOLDS) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = metrics_header(thresholds)
        writer.writerow(header)
        for name, report in reports.items():
            row = report.as_row()
            writer.writerow([name] + [_fmt(row.get(column, 0.0)) for column in header[1:-1]] + [row["flags"]])
    return str(p)


def write_predictions_csv(predictions: np.ndarray, actual: np.ndarray, path: Union[str, Path]) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sequence", "step", "actual", "predicted"])
        for n in range(predictions.shape[0]):
            for step in range(predictions.shape[1]):
                writer.writerow([n, step + 1, _fmt(actual[n, step]), _fmt(predictions[n, step])])
    return str(p)


def write_loss_csv(history: List[Dict[str, float]], path: Union[str, Path]) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "lr", "loss"])
        for row in history:
            writer.writerow([row['epoch'], f"{row['lr']:.8e}", f"{row['loss']:.8f}"])
    return str(p)
