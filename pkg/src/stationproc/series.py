import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
from dateutil import parser as dateparser

from utils.errors import FormatError

logger = logging.getLogger(__name__)

TIMESTAMP_COLUMN = "ts_utc"

# Fixed column order; also the feature order of every packed PWS row.
VARIABLES: List[str] = [
    "temp_max", "temp_min", "temp_avg",
    "humidity_max", "humidity_min", "humidity_avg",
    "dewpoint_max", "dewpoint_min", "dewpoint_avg",
    "pressure_max", "pressure_min", "pressure_trend",
    "wind_dir_avg",
    "wind_speed_max", "wind_speed_min", "wind_speed_avg",
    "wind_gust_max", "wind_gust_min", "wind_gust_avg",
    "precip_rate",
]

PRECIP_COLUMN = "precip_rate"
PRECIP_INDEX = VARIABLES.index(PRECIP_COLUMN)


@dataclass
class StationSeries:
    timestamps: np.ndarray
    columns: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        for name in VARIABLES:
            if name not in self.columns:
                self.columns[name] = np.full(len(self.timestamps), np.nan)
            self.columns[name] = np.asarray(self.columns[name], dtype=np.float64)
            if len(self.columns[name]) != len(self.timestamps):
                raise FormatError(
                    f"Column {name} has {len(self.columns[name])} values for {len(self.timestamps)} timestamps"
                )
        unknown = set(self.columns) - set(VARIABLES)
        if unknown:
            raise FormatError(f"Unknown station variables: {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.timestamps)

    def copy(self) -> "StationSeries":
        return StationSeries(self.timestamps.copy(), {k: v.copy() for k, v in self.columns.items()})

    def as_matrix(self) -> np.ndarray:
        """[n_rows x 20] in VARIABLES order."""
        return np.stack([self.columns[name] for name in VARIABLES], axis=1)

    def row(self, index: int) -> np.ndarray:
        return np.array([self.columns[name][index] for name in VARIABLES])

    def missing_counts(self) -> Dict[str, int]:
        return {name: int(np.isnan(self.columns[name]).sum()) for name in VARIABLES}


def parse_timestamp(text: str) -> int:
    dt = dateparser.isoparse(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def read_pws_csv(path: Union[str, Path]) -> StationSeries:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise FormatError(f"Unreadable PWS CSV: {e}", path=path)

    expected = [TIMESTAMP_COLUMN] + VARIABLES
    missing = [c for c in expected if c not in df.columns]
    extra = [c for c in df.columns if c not in expected]
    if missing or extra:
        raise FormatError(f"PWS header mismatch: missing {missing}, unexpected {extra}", path=path, line=1)

    timestamps = np.empty(len(df), dtype=np.int64)
    for k, text in enumerate(df[TIMESTAMP_COLUMN]):
        try:
            timestamps[k] = parse_timestamp(text.strip())
        except (ValueError, OverflowError):
            raise FormatError(f"Bad ISO-8601 timestamp {text!r}", path=path, line=k + 2)
        if k and timestamps[k] <= timestamps[k - 1]:
            raise FormatError("Timestamps must be strictly increasing", path=path, line=k + 2)

    columns = {}
    for name in VARIABLES:
        raw = df[name].str.strip()
        values = pd.to_numeric(raw.replace("", np.nan), errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(np.isnan(values) & (raw != "").to_numpy())
        if len(bad):
            raise FormatError(f"Non-numeric {name} value {raw.iloc[bad[0]]!r}", path=path, line=int(bad[0]) + 2)
        columns[name] = values

    series = StationSeries(timestamps, columns)
    logger.info(f"Read {len(series)} PWS rows from {path}")
    return series


def write_pws_csv(series: StationSeries, path: Union[str, Path]) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({TIMESTAMP_COLUMN: [format_timestamp(t) for t in series.timestamps]})
    for name in VARIABLES:
        df[name] = series.columns[name]
    df.to_csv(p, index=False, na_rep="", lineterminator="\n", encoding="utf-8")
    return str(p)
