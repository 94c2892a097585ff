import logging
from typing import Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from stationproc.series import PRECIP_COLUMN, StationSeries
from utils.errors import NegativeSpeed, TooFewKnots

logger = logging.getLogger(__name__)

SPEED_COLUMN = "wind_speed_avg"
DIRECTION_COLUMN = "wind_dir_avg"


def spline_fill(ts: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Fill NaN gaps with a natural cubic spline through the present samples.

    Present samples are returned untouched. Gaps before the first or after the
    last present sample take that sample's value.
    """
    ts = np.asarray(ts, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    known = ~np.isnan(v)
    if known.sum() < 2:
        raise TooFewKnots(f"Spline fill needs at least 2 present samples, got {int(known.sum())}")

    out = v.copy()
    missing = ~known
    if not missing.any():
        return out

    # shift the time origin so knot spacing is well conditioned
    origin = ts[known][0]
    knot_t = ts[known] - origin
    knot_v = v[known]
    query = ts[missing] - origin

    if len(knot_t) == 2:
        filled = np.interp(query, knot_t, knot_v)
    else:
        filled = CubicSpline(knot_t, knot_v, bc_type="natural")(query)

    filled = np.where(query < knot_t[0], knot_v[0], filled)
    filled = np.where(query > knot_t[-1], knot_v[-1], filled)
    out[missing] = filled
    return out


def wind_decompose(speed, direction) -> Tuple[np.ndarray, np.ndarray]:
    speed = np.asarray(speed, dtype=np.float64)
    if np.any(speed < 0):
        raise NegativeSpeed("Wind speed must be non-negative")

    theta = np.deg2rad(np.asarray(direction, dtype=np.float64))
    return -speed * np.sin(theta), -speed * np.cos(theta)


def wind_reconstitute(u, v) -> Tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    speed = np.hypot(u, v)
    direction = np.mod(np.rad2deg(np.arctan2(-u, -v)), 360.0)
    # mod can round a tiny negative angle up to exactly 360
    direction = np.where(direction >= 360.0, 0.0, direction)
    direction = np.where(speed == 0.0, 0.0, direction)
    return speed, direction


def wind_fill(series: StationSeries) -> StationSeries:
    """Fill wind speed/direction gaps in vector space so headings never wrap through 180."""
    out = series.copy()
    speed = out.columns[SPEED_COLUMN]
    direction = out.columns[DIRECTION_COLUMN]

    speed_missing = np.isnan(speed)
    direction_missing = np.isnan(direction)
    gaps = speed_missing | direction_missing
    if not gaps.any():
        return out

    pairs = ~gaps
    if pairs.sum() < 2:
        raise TooFewKnots(f"Wind fill needs at least 2 complete speed/direction pairs, got {int(pairs.sum())}")

    u = np.full(len(out), np.nan)
    v = np.full(len(out), np.nan)
    u[pairs], v[pairs] = wind_decompose(speed[pairs], direction[pairs])

    filled_speed, filled_direction = wind_reconstitute(
        spline_fill(out.timestamps, u), spline_fill(out.timestamps, v)
    )
    speed[speed_missing] = filled_speed[speed_missing]
    direction[direction_missing] = filled_direction[direction_missing]
    logger.debug(f"Wind fill replaced {int(speed_missing.sum())} speed and {int(direction_missing.sum())} direction gaps")
    return out


def precip_contextual_fill(series: StationSeries, window_hours: float = 2.5) -> StationSeries:
    """Fill precipitation gaps according to the surrounding rain activity.

    A gap is active when any present sample within +/- window/2 reports rain;
    active gaps are interpolated linearly between the nearest present samples,
    inactive gaps become exactly 0.
    """
    out = series.copy()
    rate = out.columns[PRECIP_COLUMN]
    missing = np.isnan(rate)
    if not missing.any():
        return out

    ts = out.timestamps
    known_t = ts[~missing]
    known_r = rate[~missing]
    if len(known_t) == 0:
        logger.warning("No precipitation samples present; filling every gap with 0")
        rate[missing] = 0.0
        return out

    half = window_hours * 3600.0 / 2.0
    wet = np.concatenate([[0], np.cumsum(known_r > 0)])

    gap_t = ts[missing]
    lo = np.searchsorted(known_t, gap_t - half, side="left")
    hi = np.searchsorted(known_t, gap_t + half, side="right")
    active = (wet[hi] - wet[lo]) > 0

    filled = np.where(active, np.interp(gap_t, known_t, known_r), 0.0)
    rate[missing] = filled
    logger.debug(f"Precip fill: {int(active.sum())} active and {int((~active).sum())} dry gaps")
    return out
