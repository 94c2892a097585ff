import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import numpy as np

from utils.errors import FormatError

GVOL_MAGIC = b"GVOL"
GVOL_VERSION = 1
# magic, version, timestamp, n_elev, ny, nx
_GVOL_HEADER = struct.Struct("<4sIqIII")

FRAMES_MAGIC = b"M3RF"
FRAMES_VERSION = 1
# magic, version, step_seconds, n_frames, ny, nx
_FRAMES_HEADER = struct.Struct("<4sIIIII")

REFL_MIN_DBZ = -32.0
REFL_MAX_DBZ = 95.0


@dataclass
class GriddedVolume:
    """Multi-elevation Cartesian reflectivity snapshot.

    `refl` is [n_elev, ny, nx] in dBZ with NaN for missing; `lat`/`lon` are
    [ny, nx] degree arrays.
    """

    timestamp: int
    lat: np.ndarray
    lon: np.ndarray
    refl: np.ndarray

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.refl = np.asarray(self.refl, dtype=np.float32)

        if self.timestamp <= 0:
            raise FormatError(f"Volume timestamp must be positive, got {self.timestamp}")
        if self.refl.ndim != 3 or self.refl.shape[0] < 1:
            raise FormatError(f"Reflectivity must be [n_elev x ny x nx], got shape {self.refl.shape}")
        if self.lat.shape != self.refl.shape[1:] or self.lon.shape != self.refl.shape[1:]:
            raise FormatError(
                f"Coordinate shapes {self.lat.shape}/{self.lon.shape} do not match grid {self.refl.shape[1:]}"
            )
        if np.any(np.abs(self.lat) > 90.0) or np.any(np.abs(self.lon) > 180.0):
            raise FormatError("Coordinates outside lat [-90, 90] / lon [-180, 180]")

    @property
    def n_elev(self) -> int:
        return self.refl.shape[0]

    @property
    def ny(self) -> int:
        return self.refl.shape[1]

    @property
    def nx(self) -> int:
        return self.refl.shape[2]


@dataclass
class CompositeFrame:
    timestamp: int
    z: np.ndarray

    @property
    def ny(self) -> int:
        return self.z.shape[0]

    @property
    def nx(self) -> int:
        return self.z.shape[1]


@dataclass
class FrameSeries:
    frames: List[CompositeFrame] = field(default_factory=list)
    step_seconds: int = 900

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames], dtype=np.int64)

    def is_regular(self) -> bool:
        ts = self.timestamps
        return len(ts) < 2 or bool(np.all(np.diff(ts) == self.step_seconds))


def read_gvol(path: Union[str, Path]) -> GriddedVolume:
    data = Path(path).read_bytes()
    if len(data) < _GVOL_HEADER.size:
        raise FormatError("Truncated GVOL header", path=path)

    magic, version, timestamp, n_elev, ny, nx = _GVOL_HEADER.unpack_from(data, 0)
    if magic != GVOL_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {GVOL_MAGIC!r}", path=path)
    if version != GVOL_VERSION:
        raise FormatError(f"Unsupported GVOL version {version}", path=path)

    n_cells = ny * nx
    expected = _GVOL_HEADER.size + 8 * n_cells * 2 + 4 * n_elev * n_cells
    if len(data) != expected:
        raise FormatError(f"GVOL payload is {len(data)} bytes, expected {expected}", path=path)

    offset = _GVOL_HEADER.size
    lat = np.frombuffer(data, dtype="<f8", count=n_cells, offset=offset).reshape(ny, nx)
    offset += 8 * n_cells
    lon = np.frombuffer(data, dtype="<f8", count=n_cells, offset=offset).reshape(ny, nx)
    offset += 8 * n_cells
    refl = np.frombuffer(data, dtype="<f4", count=n_elev * n_cells, offset=offset).reshape(n_elev, ny, nx)

    try:
        return GriddedVolume(timestamp=timestamp, lat=lat.copy(), lon=lon.copy(), refl=refl.copy())
    except FormatError as e:
        raise e.with_context(path)


def write_gvol(volume: GriddedVolume, path: Union[str, Path]) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as f:
        f.write(_GVOL_HEADER.pack(GVOL_MAGIC, GVOL_VERSION, int(volume.timestamp), volume.n_elev, volume.ny, volume.nx))
        f.write(volume.lat.astype("<f8").tobytes())
        f.write(volume.lon.astype("<f8").tobytes())
        f.write(volume.refl.astype("<f4").tobytes())
    return str(p)


def write_frame_series(series: FrameSeries, path: Union[str, Path]) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    ny, nx = (series.frames[0].ny, series.frames[0].nx) if series.frames else (0, 0)
    with open(p, "wb") as f:
        f.write(_FRAMES_HEADER.pack(FRAMES_MAGIC, FRAMES_VERSION, series.step_seconds, len(series), ny, nx))
        f.write(series.timestamps.astype("<i8").tobytes())
        for frame in series.frames:
            f.write(frame.z.astype("<f4").tobytes())
    return str(p)


def read_frame_series(path: Union[str, Path]) -> FrameSeries:
    data = Path(path).read_bytes()
    if len(data) < _FRAMES_HEADER.size:
        raise FormatError("Truncated frame store header", path=path)

    magic, version, step, n, ny, nx = _FRAMES_HEADER.unpack_from(data, 0)
    if magic != FRAMES_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {FRAMES_MAGIC!r}", path=path)
    if version != FRAMES_VERSION:
        raise FormatError(f"Unsupported frame store version {version}", path=path)

    expected = _FRAMES_HEADER.size + 8 * n + 4 * n * ny * nx
    if len(data) != expected:
        raise FormatError(f"Frame store is {len(data)} bytes, expected {expected}", path=path)

    ts = np.frombuffer(data, dtype="<i8", count=n, offset=_FRAMES_HEADER.size)
    z = np.frombuffer(data, dtype="<f4", count=n * ny * nx, offset=_FRAMES_HEADER.size + 8 * n)
    z = z.reshape(n, ny, nx)
    frames = [CompositeFrame(timestamp=int(ts[k]), z=z[k].astype(np.float32)) for k in range(n)]
    return FrameSeries(frames=frames, step_seconds=step)
