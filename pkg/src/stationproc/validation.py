import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from stationproc.series import StationSeries, format_timestamp

logger = logging.getLogger(__name__)

ORDERED_TRIPLES = {
    "temp_order": ("temp_max", "temp_avg", "temp_min"),
    "humidity_order": ("humidity_max", "humidity_avg", "humidity_min"),
}

GUST_PAIRS = {
    "gust_max": ("wind_gust_max", "wind_speed_max"),
    "gust_min": ("wind_gust_min", "wind_speed_min"),
    "gust_avg": ("wind_gust_avg", "wind_speed_avg"),
}

HUMIDITY_COLUMNS = ("humidity_max", "humidity_min", "humidity_avg")


@dataclass
class Violation:
    row: int
    timestamp: int
    rule: str
    values: Tuple[float, ...]

    def describe(self) -> str:
        values = ", ".join(f"{v:g}" for v in self.values)
        return f"row {self.row} {format_timestamp(self.timestamp)} {self.rule}: ({values})"


@dataclass
class ViolationReport:
    violations: List[Violation] = field(default_factory=list)
    repaired: bool = False

    def __len__(self) -> int:
        return len(self.violations)

    def counts(self) -> Dict[str, int]:
        return dict(sorted(Counter(v.rule for v in self.violations).items()))

    def to_text(self) -> str:
        lines = [f"violations: {len(self.violations)}", f"repaired: {str(self.repaired).lower()}"]
        for rule, count in self.counts().items():
            lines.append(f"  {rule}: {count}")
        lines.extend(v.describe() for v in self.violations)
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> str:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_text(), encoding="utf-8")
        return str(p)


def _find_violations(series: StationSeries) -> List[Violation]:
    c = series.columns
    found = []

    def collect(rule: str, mask: np.ndarray, names: Tuple[str, ...]):
        for row in np.flatnonzero(mask):
            found.append(Violation(int(row), int(series.timestamps[row]), rule, tuple(float(c[n][row]) for n in names)))

    for rule, (hi, mid, lo) in ORDERED_TRIPLES.items():
        collect(rule, (c[hi] < c[mid]) | (c[mid] < c[lo]), (hi, mid, lo))
    for rule, (gust, speed) in GUST_PAIRS.items():
        collect(rule, c[gust] < c[speed], (gust, speed))
    for name in HUMIDITY_COLUMNS:
        collect("humidity_range", (c[name] < 0) | (c[name] > 100), (name,))
    collect("wind_dir_range", (c["wind_dir_avg"] < 0) | (c["wind_dir_avg"] >= 360), ("wind_dir_avg",))
    collect("precip_nonneg", c["precip_rate"] < 0, ("precip_rate",))

    found.sort(key=lambda v: (v.row, v.rule))
    return found


def _repair(series: StationSeries) -> StationSeries:
    out = series.copy()
    c = out.columns

    for name in HUMIDITY_COLUMNS:
        c[name] = np.clip(c[name], 0.0, 100.0)
    direction = np.mod(c["wind_dir_avg"], 360.0)
    c["wind_dir_avg"] = np.where(direction >= 360.0, 0.0, direction)
    c["precip_rate"] = np.clip(c["precip_rate"], 0.0, None)

    for hi, mid, lo in ORDERED_TRIPLES.values():
        triple = np.stack([c[hi], c[mid], c[lo]], axis=1)
        complete = ~np.isnan(triple).any(axis=1)
        ordered = -np.sort(-triple[complete], axis=1)
        for k, name in enumerate((hi, mid, lo)):
            c[name][complete] = ordered[:, k]

    for gust, speed in GUST_PAIRS.values():
        c[gust] = np.where(c[gust] < c[speed], c[speed], c[gust])

    return out


def validate_physical(series: StationSeries, repair: bool = False) -> Tuple[StationSeries, ViolationReport]:
    """Report rows breaking the physical constraints, optionally repairing them.

    Repair sorts each (max, avg, min) triple descending, raises gusts to the
    matching speed, and clips humidity, direction and precipitation into range.
    """
    report = ViolationReport(violations=_find_violations(series), repaired=repair)
    if report.violations:
        logger.warning(f"Physical constraint violations: {report.counts()}")
    if not repair:
        return series.copy(), report
    return _repair(series), report
