import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.signal import lfilter
from tqdm import tqdm

from config.settings import read_key_value_file
from evalkit.zr import ZR_A, ZR_B, zr_rainfall
from gridproc.volume import GriddedVolume, write_gvol
from stationproc.series import StationSeries, VARIABLES, write_pws_csv
from utils.errors import CellOutOfBounds, ConfigError, EmptyInput

logger = logging.getLogger(__name__)

ELEVATION_FACTORS = (1.0, 0.9, 0.8, 0.7)
MAX_DBZ = 70.0
DAY_SECONDS = 86400.0


@dataclass
class SynthSpec:
    seed: int = 0
    n_steps: int = 288
    ny: int = 16
    nx: int = 16
    storm_count: int = 3
    advection_u: float = 0.5        # cells/step along x
    advection_v: float = 0.25       # cells/step along y
    noise_std: float = 1.0          # dBZ
    pws_cadence_seconds: int = 300
    gap_fraction: float = 0.0
    start_ts: int = 1_600_000_200
    radar_step_seconds: int = 600
    radar_jitter_seconds: int = 30
    storm_amplitude: float = 50.0   # dBZ
    storm_sigma: float = 0.0        # cells; 0 picks 12% of the shorter grid side
    storm_period_steps: int = 48
    station_i: int = -1             # -1 picks the grid centre
    station_j: int = -1
    lat0: float = 35.0
    lon0: float = -97.0
    cell_degrees: float = 0.009
    precip_noise_std: float = 0.1   # mm/hr

    def validate(self) -> "SynthSpec":
        if not 0.0 <= self.gap_fraction < 1.0:
            raise ConfigError(f"gap_fraction must lie in [0, 1), got {self.gap_fraction}")
        if self.ny < 8 or self.nx < 8:
            raise ConfigError(f"Grid must be at least 8x8, got {self.ny}x{self.nx}")
        if self.n_steps < 1 or self.storm_count < 0:
            raise ConfigError("n_steps must be >= 1 and storm_count >= 0")
        if self.noise_std < 0 or self.precip_noise_std < 0:
            raise ConfigError("Noise levels must be >= 0")
        if self.radar_step_seconds <= 2 * self.radar_jitter_seconds:
            raise ConfigError("radar_step_seconds must exceed twice the jitter")
        if self.pws_cadence_seconds < 1 or self.storm_period_steps < 1:
            raise ConfigError("pws_cadence_seconds and storm_period_steps must be >= 1")
        return self

    @property
    def grid(self) -> Tuple[int, int]:
        return self.ny, self.nx

    @property
    def sigma(self) -> float:
        return self.storm_sigma if self.storm_sigma > 0 else 0.12 * min(self.ny, self.nx)

    @property
    def station_cell(self) -> Tuple[int, int]:
        i = self.ny // 2 if self.station_i < 0 else self.station_i
        j = self.nx // 2 if self.station_j < 0 else self.station_j
        return i, j

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def synth_defaults() -> Dict[str, Any]:
    return {f.name: f.default for f in fields(SynthSpec)}


@dataclass
class Storm:
    y0: float
    x0: float
    amplitude: float
    period: float
    phase: float

    def envelope(self, step: float) -> float:
        """Growth/decay cycle: half-sine bursts separated by dry spells of equal length."""
        return max(0.0, math.sin(2.0 * math.pi * (step + self.phase) / self.period))


def make_storms(spec: SynthSpec, rng: np.random.Generator) -> List[Storm]:
    storms = []
    for _ in range(spec.storm_count):
        storms.append(Storm(
            y0=float(rng.uniform(0, spec.ny)),
            x0=float(rng.uniform(0, spec.nx)),
            amplitude=float(spec.storm_amplitude * rng.uniform(0.6, 1.0)),
            period=float(spec.storm_period_steps * rng.uniform(1.0, 2.0)),
            phase=float(rng.uniform(0, spec.storm_period_steps)),
        ))
    return storms


def _wrapped_offset(coord: np.ndarray, center: float, size: int) -> np.ndarray:
    return (coord - center + size / 2.0) % size - size / 2.0


def storm_field(spec: SynthSpec, storms: List[Storm], step: int) -> np.ndarray:
    """Noise-free lowest-level reflectivity (dBZ) at `step`: max over advected Gaussian blobs."""
    yy, xx = np.meshgrid(np.arange(spec.ny, dtype=np.float64), np.arange(spec.nx, dtype=np.float64), indexing="ij")
    field = np.zeros(spec.grid, dtype=np.float64)
    two_sigma2 = 2.0 * spec.sigma ** 2

    for storm in storms:
        cy = (storm.y0 + spec.advection_v * step) % spec.ny
        cx = (storm.x0 + spec.advection_u * step) % spec.nx
        dy = _wrapped_offset(yy, cy, spec.ny)
        dx = _wrapped_offset(xx, cx, spec.nx)
        blob = storm.amplitude * storm.envelope(step) * np.exp(-(dy ** 2 + dx ** 2) / two_sigma2)
        field = np.maximum(field, blob)
    return field


def radar_timestamps(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    jitter = rng.integers(-spec.radar_jitter_seconds, spec.radar_jitter_seconds + 1, size=spec.n_steps)
    return spec.start_ts + np.arange(spec.n_steps, dtype=np.int64) * spec.radar_step_seconds + jitter


def grid_coordinates(spec: SynthSpec) -> Tuple[np.ndarray, np.ndarray]:
    i = np.arange(spec.ny, dtype=np.float64)[:, None]
    j = np.arange(spec.nx, dtype=np.float64)[None, :]
    lat = np.broadcast_to(spec.lat0 + i * spec.cell_degrees, spec.grid).copy()
    lon = np.broadcast_to(spec.lon0 + j * spec.cell_degrees, spec.grid).copy()
    return lat, lon


def gen_radar(spec: SynthSpec) -> List[GriddedVolume]:
    """Four-level volumes: scaled copies of the storm field plus noise, clipped to [0, 70] dBZ."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    storms = make_storms(spec, rng)
    timestamps = radar_timestamps(spec, rng)
    lat, lon = grid_coordinates(spec)

    volumes = []
    for step in range(spec.n_steps):
        base = storm_field(spec, storms, step)
        echo = base > 0
        levels = []
        for factor in ELEVATION_FACTORS:
            noise = rng.normal(0.0, spec.noise_std, size=spec.grid) if spec.noise_std > 0 else 0.0
            levels.append(np.clip(base * factor + noise * echo, 0.0, MAX_DBZ))
        volumes.append(GriddedVolume(timestamp=int(timestamps[step]), lat=lat, lon=lon, refl=np.stack(levels)))
    return volumes


def _smooth_noise(rng: np.random.Generator, n: int, scale: float, alpha: float = 0.98) -> np.ndarray:
    """Stationary AR(1) noise with standard deviation `scale`."""
    white = rng.normal(0.0, scale * math.sqrt(1.0 - alpha ** 2), size=n)
    return lfilter([1.0], [1.0, -alpha], white)


def gen_pws(spec: SynthSpec, radar: List[GriddedVolume],
            station_cell: Optional[Tuple[int, int]] = None,
            a: float = ZR_A, b: float = ZR_B) -> StationSeries:
    """Station rows at `pws_cadence_seconds` whose precipitation follows the radar at `station_cell`.

    The other variables are smooth processes built so that max >= avg >= min
    and gust >= speed hold on every ungapped row.
    """
    spec.validate()
    i, j = station_cell if station_cell is not None else spec.station_cell
    if not (0 <= i < spec.ny and 0 <= j < spec.nx):
        raise CellOutOfBounds(f"Station cell {(i, j)} outside {spec.ny}x{spec.nx} grid")
    if not radar:
        raise EmptyInput("No radar volumes to sample")

    rng = np.random.default_rng(spec.seed + 1)
    radar_ts = np.array([v.timestamp for v in radar], dtype=np.int64)
    composite = np.array([float(np.nanmax(v.refl[:len(ELEVATION_FACTORS), i, j])) for v in radar])

    ts = np.arange(spec.start_ts, radar_ts[-1] + 1, spec.pws_cadence_seconds, dtype=np.int64)
    n = len(ts)
    dbz = np.interp(ts.astype(np.float64), radar_ts.astype(np.float64), composite)

    rain = np.where(dbz > 0, zr_rainfall(dbz, a, b), 0.0)
    if spec.precip_noise_std > 0:
        rain = rain + rng.normal(0.0, spec.precip_noise_std, size=n)
    precip = np.clip(rain, 0.0, None)
    wet = precip / (precip + 1.0)

    hours = (ts - ts[0]).astype(np.float64) / 3600.0
    diurnal = np.sin(2.0 * math.pi * (ts % DAY_SECONDS) / DAY_SECONDS)

    temp = 18.0 + 6.0 * diurnal - 3.0 * wet + _smooth_noise(rng, n, 1.0)
    spread = 0.5 + np.abs(_smooth_noise(rng, n, 0.4))
    humidity = np.clip(60.0 - 2.0 * (temp - 18.0) + 25.0 * wet + _smooth_noise(rng, n, 3.0), 5.0, 95.0)
    h_spread = 1.0 + np.abs(_smooth_noise(rng, n, 1.0))
    dewpoint = temp - (100.0 - humidity) / 5.0
    pressure = 1013.0 + 4.0 * np.sin(2.0 * math.pi * hours / 72.0) + _smooth_noise(rng, n, 1.5)
    speed = np.clip(3.0 + 1.5 * diurnal + 4.0 * wet + _smooth_noise(rng, n, 1.0), 0.0, None)
    direction = np.mod(225.0 + 40.0 * np.sin(2.0 * math.pi * hours / 12.0) + _smooth_noise(rng, n, 15.0), 360.0)

    trend = np.zeros(n)
    if n > 1:
        trend = np.gradient(pressure, hours)

    columns = {
        "temp_max": temp + spread, "temp_min": temp - spread, "temp_avg": temp,
        "humidity_max": np.minimum(100.0, humidity + h_spread),
        "humidity_min": np.maximum(0.0, humidity - h_spread),
        "humidity_avg": humidity,
        "dewpoint_max": dewpoint + spread, "dewpoint_min": dewpoint - spread, "dewpoint_avg": dewpoint,
        "pressure_max": pressure + 0.3, "pressure_min": pressure - 0.3, "pressure_trend": trend,
        "wind_dir_avg": direction,
        "wind_speed_max": speed * 1.5 + 0.5, "wind_speed_min": speed * 0.5, "wind_speed_avg": speed,
        "wind_gust_max": speed * 2.0 + 1.5, "wind_gust_min": speed * 0.8 + 0.5, "wind_gust_avg": speed * 1.3 + 1.0,
        "precip_rate": precip,
    }
    columns = {name: np.round(columns[name], 4) for name in VARIABLES}
    columns["wind_dir_avg"] = np.mod(columns["wind_dir_avg"], 360.0)

    n_gaps = int(round(spec.gap_fraction * n))
    if n_gaps:
        rows = rng.choice(n, size=n_gaps, replace=False)
        for name in VARIABLES:
            columns[name][rows] = np.nan
        logger.debug(f"Blanked {n_gaps} of {n} station rows")

    return StationSeries(timestamps=ts, columns=columns)


def write_synth(spec: SynthSpec, out_dir: Union[str, Path], progress: bool = True) -> Dict[str, Any]:
    """Write `radar/vol_<ts>.gvol` files and `pws.csv` under `out_dir`."""
    out = Path(out_dir)
    radar_dir = out / "radar"
    radar_dir.mkdir(parents=True, exist_ok=True)

    volumes = gen_radar(spec)
    for volume in tqdm(volumes, desc="Writing volumes", unit="vol", disable=not progress):
        write_gvol(volume, radar_dir / f"vol_{volume.timestamp}.gvol")

    pws = gen_pws(spec, volumes)
    pws_path = write_pws_csv(pws, out / "pws.csv")

    lat, lon = grid_coordinates(spec)
    i, j = spec.station_cell
    logger.info(f"Synthesized {len(volumes)} volume(s) and {len(pws)} station row(s) in {out}")
    return {
        'radar_dir': str(radar_dir),
        'pws_csv': pws_path,
        'volumes': len(volumes),
        'pws_rows': len(pws),
        'station_cell': [i, j],
        'station_lat': float(lat[i, j]),
        'station_lon': float(lon[i, j]),
    }


def load_synth_spec(path: Optional[Union[str, Path]] = None, **overrides: Any) -> SynthSpec:
    """SynthSpec from a `key=value` file; keyword overrides win over the file."""
    values = read_key_value_file(path, synth_defaults()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SynthSpec(**values).validate()
