import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from gridproc.volume import CompositeFrame, FrameSeries
from utils.errors import SeriesTooShort

logger = logging.getLogger(__name__)

WINDOW_OFFSETS = tuple(range(-4, 4))
WINDOW_LENGTH = len(WINDOW_OFFSETS)
STRIDE = 4


@dataclass
class EventCandidate:
    center_index: int
    indices: List[int]
    timestamps: List[int]
    spatial_means: List[float]
    cumulative_significance: float


def spatial_mean(frame: CompositeFrame) -> float:
    """Mean reflectivity over every cell, missing cells counted as 0 dBZ."""
    z = np.nan_to_num(np.asarray(frame.z, dtype=np.float64), nan=0.0)
    return float(z.sum() / z.size)


def select_events(series: FrameSeries, threshold: float = 3.0) -> List[EventCandidate]:
    """Stride-4 scan emitting an 8-frame window around every significant centre frame.

    The centre index starts at 4 and always advances by 4, hit or miss, so
    consecutive hits share four frames.
    """
    T = len(series)
    if T <= WINDOW_LENGTH:
        raise SeriesTooShort(f"Event selection needs more than {WINDOW_LENGTH} frames, got {T}")
    if not series.is_regular():
        logger.warning(f"Frame series is not regular at {series.step_seconds}s; windows may span gaps")

    means = np.array([spatial_mean(f) for f in series.frames])
    timestamps = series.timestamps

    events = []
    i = 4
    while i + 4 < T:
        if means[i] > threshold:
            idx = [i + j for j in WINDOW_OFFSETS]
            events.append(EventCandidate(
                center_index=i,
                indices=idx,
                timestamps=[int(timestamps[k]) for k in idx],
                spatial_means=[float(means[k]) for k in idx],
                cumulative_significance=float(means[idx].sum()),
            ))
        i += STRIDE

    logger.info(f"Selected {len(events)} event window(s) from {T} frames at threshold {threshold} dBZ")
    return events
