import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np

from utils.errors import EmptyInput, LengthMismatch

logger = logging.getLogger(__name__)

CSI_THRESHOLDS = (0.1, 5.0, 10.0)

FLAG_CONSTANT_TARGET = "constant_target"
FLAG_CC_UNDEFINED = "cc_undefined"


def threshold_label(threshold: float) -> str:
    return f"{threshold:g}"


@dataclass
class ContingencyTable:
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_negatives: int = 0

    @classmethod
    def from_arrays(cls, pred: np.ndarray, target: np.ndarray, threshold: float) -> "ContingencyTable":
        forecast = pred >= threshold
        observed = target >= threshold
        return cls(
            hits=int(np.sum(forecast & observed)),
            misses=int(np.sum(~forecast & observed)),
            false_alarms=int(np.sum(forecast & ~observed)),
            correct_negatives=int(np.sum(~forecast & ~observed)),
        )

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_negatives

    @property
    def csi_defined(self) -> bool:
        return self.hits + self.misses + self.false_alarms > 0

    def csi(self) -> float:
        if not self.csi_defined:
            return 0.0
        return self.hits / (self.hits + self.misses + self.false_alarms)


@dataclass
class MetricReport:
    rmse: float
    mae: float
    r2: float
    cc: float
    csi: Dict[float, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def as_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {'rmse': self.rmse, 'mae': self.mae, 'r2': self.r2, 'cc': self.cc}
        for threshold, score in self.csi.items():
            row[f"csi_{threshold_label(threshold)}"] = score
        row['flags'] = ";".join(self.flags)
        return row


def _as_pair(pred, target):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.size != t.size:
        raise LengthMismatch(f"Predictions ({p.size}) and targets ({t.size}) differ in length")
    if p.size == 0:
        raise EmptyInput("Cannot score an empty prediction set")
    return p, t


def compute_metrics(pred, target, thresholds: Iterable[float] = CSI_THRESHOLDS) -> MetricReport:
    """RMSE, MAE, R^2, Pearson CC and CSI per threshold (event: value >= threshold).

    Undefined quantities are reported as 0 and named in `flags`.
    """
    p, t = _as_pair(pred, target)
    err = p - t
    flags = []

    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))

    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        r2 = 0.0
        flags.append(FLAG_CONSTANT_TARGET)
    else:
        r2 = 1.0 - float(np.sum(err ** 2)) / sst

    dp, dt = p - p.mean(), t - t.mean()
    denom = float(np.sqrt(np.sum(dp ** 2) * np.sum(dt ** 2)))
    if denom == 0.0:
        cc = 0.0
        flags.append(FLAG_CC_UNDEFINED)
    else:
        cc = float(np.clip(np.sum(dp * dt) / denom, -1.0, 1.0))

    csi = {}
    for threshold in thresholds:
        table = ContingencyTable.from_arrays(p, t, threshold)
        if not table.csi_defined:
            flags.append(f"csi_undefined_{threshold_label(threshold)}")
        csi[float(threshold)] = table.csi()

    return MetricReport(rmse=rmse, mae=mae, r2=r2, cc=cc, csi=csi, flags=flags)


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Average of several reports; flags are the sorted union."""
    if not reports:
        raise EmptyInput("No metric reports to average")
    thresholds = list(reports[0].csi)
    return MetricReport(
        rmse=float(np.mean([r.rmse for r in reports])),
        mae=float(np.mean([r.mae for r in reports])),
        r2=float(np.mean([r.r2 for r in reports])),
        cc=float(np.mean([r.cc for r in reports])),
        csi={k: float(np.mean([r.csi[k] for r in reports])) for k in thresholds},
        flags=sorted(set(f for r in reports for f in r.flags)),
    )
