import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from aligner.events import WINDOW_LENGTH, EventCandidate, select_events
from aligner.quantize import quantize
from gridproc.volume import FrameSeries
from stationproc.series import PRECIP_INDEX, StationSeries
from utils.errors import EmptyDataset, EmptyInput, NoMatchWithinWindow

logger = logging.getLogger(__name__)

MATCH_TOLERANCE_SECONDS = 450
TRAIN_FRACTION = 0.85


@dataclass
class EventSequence:
    frames: np.ndarray            # [8, ny, nx] uint8 codes
    pws_rows: np.ndarray          # [8, 20] float32
    pws_timestamps: np.ndarray    # [8] int64
    radar_timestamps: np.ndarray  # [8] int64
    target: np.ndarray            # [8] float32, mm/hr
    cumulative_significance: Optional[float] = None

    @property
    def center_timestamp(self) -> int:
        return int(self.radar_timestamps[WINDOW_LENGTH // 2])


@dataclass
class AlignmentReport:
    candidates: int = 0
    dropped: int = 0
    dropped_centers: List[int] = field(default_factory=list)

    def to_dict(self):
        return {
            'candidates': self.candidates,
            'aligned': self.candidates - self.dropped,
            'dropped': self.dropped,
            'dropped_centers': list(self.dropped_centers),
        }


@dataclass
class DatasetSplit:
    train: List[EventSequence] = field(default_factory=list)
    test: List[EventSequence] = field(default_factory=list)
    report: AlignmentReport = field(default_factory=AlignmentReport)

    @property
    def sequences(self) -> List[EventSequence]:
        return self.train + self.test

    @property
    def split_point(self) -> int:
        return len(self.train)


def match_pws(radar_ts: int, pws: StationSeries, tolerance: int = MATCH_TOLERANCE_SECONDS) -> int:
    """Index of the PWS row nearest to `radar_ts`, ties going to the earlier row."""
    ts = pws.timestamps
    if len(ts) == 0:
        raise EmptyInput("PWS series is empty")

    k = int(np.searchsorted(ts, radar_ts, side="left"))
    candidates = [c for c in (k - 1, k) if 0 <= c < len(ts)]
    best = min(candidates, key=lambda c: (abs(int(ts[c]) - radar_ts), c))

    distance = abs(int(ts[best]) - radar_ts)
    if distance > tolerance:
        raise NoMatchWithinWindow(f"Nearest PWS row to {radar_ts} is {distance}s away (tolerance {tolerance}s)")
    return best


def partition(sequences: List[EventSequence], train_frac: float = TRAIN_FRACTION) -> DatasetSplit:
    if not sequences:
        raise EmptyDataset("No sequences to partition")

    ordered = sorted(sequences, key=lambda s: s.center_timestamp)
    n_train = int(Fraction(str(train_frac)) * len(ordered))
    return DatasetSplit(train=ordered[:n_train], test=ordered[n_train:])


def align_candidate(candidate: EventCandidate, frames: FrameSeries, pws: StationSeries,
                    tolerance: int = MATCH_TOLERANCE_SECONDS) -> EventSequence:
    rows = [match_pws(ts, pws, tolerance) for ts in candidate.timestamps]
    matrix = pws.as_matrix()
    return EventSequence(
        frames=np.stack([quantize(frames.frames[k].z) for k in candidate.indices]),
        pws_rows=matrix[rows].astype(np.float32),
        pws_timestamps=pws.timestamps[rows].astype(np.int64),
        radar_timestamps=np.array(candidate.timestamps, dtype=np.int64),
        target=matrix[rows, PRECIP_INDEX].astype(np.float32),
        cumulative_significance=candidate.cumulative_significance,
    )


def build_dataset(frames: FrameSeries, pws: StationSeries, threshold: float = 3.0,
                  train_frac: float = TRAIN_FRACTION,
                  tolerance: int = MATCH_TOLERANCE_SECONDS) -> DatasetSplit:
    """Select events, pair every frame with its nearest PWS row and split chronologically.

    Candidates with any frame lacking a PWS row within `tolerance` are dropped
    whole and counted in the split's report.
    """
    candidates = select_events(frames, threshold)
    if not candidates:
        raise EmptyDataset(f"No frame exceeds the {threshold} dBZ significance threshold")

    report = AlignmentReport(candidates=len(candidates))
    sequences = []
    for candidate in candidates:
        try:
            sequences.append(align_candidate(candidate, frames, pws, tolerance))
        except NoMatchWithinWindow as e:
            report.dropped += 1
            report.dropped_centers.append(candidate.timestamps[WINDOW_LENGTH // 2])
            logger.warning(f"Dropping event centred at {candidate.timestamps[WINDOW_LENGTH // 2]}: {e}")

    if not sequences:
        raise EmptyDataset(f"All {len(candidates)} candidate(s) lacked PWS coverage")

    split = partition(sequences, train_frac)
    split.report = report
    logger.info(f"Built {len(sequences)} sequence(s): {len(split.train)} train / {len(split.test)} test, "
                f"{report.dropped} dropped")
    return split
