import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from gridproc.volume import (
    REFL_MAX_DBZ,
    REFL_MIN_DBZ,
    CompositeFrame,
    FrameSeries,
    GriddedVolume,
    read_gvol,
)
from utils.errors import InsufficientFrames, M3RError, RoiOutOfBounds, TargetOutsideGrid

logger = logging.getLogger(__name__)

COMPOSITE_LEVELS = 4


def nearest_grid_point(vol: GriddedVolume, target_lat: float, target_lon: float) -> Tuple[int, int]:
    """Grid cell closest to the target in raw degree space.

    Ties resolve to the smallest row, then the smallest column (row-major argmin).
    """
    if not (vol.lat.min() <= target_lat <= vol.lat.max() and vol.lon.min() <= target_lon <= vol.lon.max()):
        raise TargetOutsideGrid(
            f"Target ({target_lat}, {target_lon}) outside grid bounds "
            f"lat [{vol.lat.min()}, {vol.lat.max()}] lon [{vol.lon.min()}, {vol.lon.max()}]"
        )

    dist = np.sqrt((vol.lon - target_lon) ** 2 + (vol.lat - target_lat) ** 2)
    i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
    return int(i), int(j)


def extract_roi(vol: GriddedVolume, center: Tuple[int, int], size: int = 100) -> GriddedVolume:
    i, j = center
    top, left = i - size // 2, j - size // 2
    if top < 0 or left < 0 or top + size > vol.ny or left + size > vol.nx:
        raise RoiOutOfBounds(f"ROI of {size} cells around {center} exceeds grid {vol.ny}x{vol.nx}")

    rows = slice(top, top + size)
    cols = slice(left, left + size)
    return GriddedVolume(
        timestamp=vol.timestamp,
        lat=vol.lat[rows, cols].copy(),
        lon=vol.lon[rows, cols].copy(),
        refl=vol.refl[:, rows, cols].copy(),
    )


def composite_reflectivity(vol: GriddedVolume) -> CompositeFrame:
    """Column maximum over the four lowest elevations, skipping NaN cells."""
    if vol.n_elev < COMPOSITE_LEVELS:
        logger.warning(f"Volume at {vol.timestamp} has {vol.n_elev} elevation(s); compositing all available")

    levels = vol.refl[:COMPOSITE_LEVELS]
    z = np.fmax.reduce(levels, axis=0)
    z = np.clip(z, REFL_MIN_DBZ, REFL_MAX_DBZ).astype(np.float32)
    return CompositeFrame(timestamp=vol.timestamp, z=z)


def temporal_regularize(series: FrameSeries, step_seconds: int = 900) -> FrameSeries:
    """Piecewise-linear resampling onto epoch-anchored multiples of `step_seconds`."""
    if len(series) < 2:
        raise InsufficientFrames(f"Need at least 2 frames to regularize, got {len(series)}")

    ts = series.timestamps
    if np.any(np.diff(ts) <= 0):
        raise InsufficientFrames("Frame timestamps must be strictly increasing")

    start = int(math.ceil(ts[0] / step_seconds)) * step_seconds
    grid = np.arange(start, ts[-1] + 1, step_seconds, dtype=np.int64)
    stack = np.stack([f.z for f in series.frames]).astype(np.float64)

    frames = []
    for tj in grid:
        k = int(np.searchsorted(ts, tj, side="right")) - 1
        if ts[k] == tj:
            z = series.frames[k].z.copy()
        else:
            t0, t1 = ts[k], ts[k + 1]
            w = (tj - t0) / (t1 - t0)
            z = (stack[k] + (stack[k + 1] - stack[k]) * w).astype(np.float32)
        frames.append(CompositeFrame(timestamp=int(tj), z=z))

    if not frames:
        logger.warning(f"No {step_seconds}s boundary between {ts[0]} and {ts[-1]}; regularized series is empty")
    return FrameSeries(frames=frames, step_seconds=step_seconds)


def process_volume(vol: GriddedVolume, target: Optional[Tuple[float, float]], roi_size: int = 100) -> CompositeFrame:
    if target is None:
        center = (vol.ny // 2, vol.nx // 2)
    else:
        center = nearest_grid_point(vol, target[0], target[1])
    return composite_reflectivity(extract_roi(vol, center, roi_size))


class RadarProcessor:
    def __init__(self, target_lat: Optional[float] = None, target_lon: Optional[float] = None,
                 roi_size: int = 100, step_seconds: int = 900, jobs: int = 1):
        self.logger = logging.getLogger(__name__)
        self.target = None if target_lat is None or target_lon is None else (target_lat, target_lon)
        self.roi_size = roi_size
        self.step_seconds = step_seconds
        self.jobs = max(1, jobs)

    def find_volume_files(self, directory: Path) -> List[Path]:
        files = []
        for file_path in sorted(Path(directory).glob("*.gvol")):
            # maintenance-message files carry no usable sweep
            if "MDM" in file_path.name:
                self.logger.warning(f"Skipping maintenance file {file_path.name}")
                continue
            files.append(file_path)
        return files

    def _process_file(self, path: Path) -> Dict[str, Any]:
        try:
            frame = process_volume(read_gvol(path), self.target, self.roi_size)
            return {'success': True, 'path': str(path), 'frame': frame}
        except M3RError as e:
            e.with_context(path)
            self.logger.error(f"Failed to process {path}: {e}")
            return {'success': False, 'path': str(path), 'error': e.message, 'exception': e}

    def process_files(self, files: List[Path]) -> List[Dict[str, Any]]:
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(tqdm(pool.map(self._process_file, files), total=len(files), desc="Compositing volumes"))

    def build_series(self, frames: List[CompositeFrame]) -> FrameSeries:
        frames = sorted(frames, key=lambda f: f.timestamp)
        unique: List[CompositeFrame] = []
        for frame in frames:
            if unique and unique[-1].timestamp == frame.timestamp:
                self.logger.warning(f"Duplicate radar timestamp {frame.timestamp}; keeping the first volume")
                continue
            unique.append(frame)

        regular = temporal_regularize(FrameSeries(frames=unique, step_seconds=self.step_seconds), self.step_seconds)
        self.logger.info(f"Regularized {len(unique)} composites into {len(regular)} frames at {self.step_seconds}s")
        return regular

    def process_directory(self, directory: Path) -> Tuple[FrameSeries, List[Dict[str, Any]]]:
        files = self.find_volume_files(directory)
        self.logger.info(f"Found {len(files)} volume files in {directory}")

        results = self.process_files(files)
        for r in results:
            if not r['success']:
                raise r['exception']

        series = self.build_series([r.pop('frame') for r in results])
        return series, results
