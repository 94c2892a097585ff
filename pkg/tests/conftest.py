import numpy as np
import pytest

from aligner.dataset import DatasetSplit, EventSequence
from aligner.quantize import quantize
from gridproc.volume import CompositeFrame, FrameSeries, GriddedVolume
from m3rnet.config import ModelConfig
from stationproc.series import VARIABLES, StationSeries

BASE_TS = 1_600_000_200  # multiple of 900


def make_volume(ts=BASE_TS, ny=6, nx=8, n_elev=4, fill=None, lat0=35.0, lon0=-97.0, step=0.01):
    lat = lat0 + np.arange(ny)[:, None] * step + np.zeros((1, nx))
    lon = lon0 + np.zeros((ny, 1)) + np.arange(nx)[None, :] * step
    if fill is None:
        rng = np.random.default_rng(ts % 1000)
        refl = rng.uniform(0, 60, size=(n_elev, ny, nx))
    else:
        refl = np.full((n_elev, ny, nx), fill, dtype=np.float64)
    return GriddedVolume(timestamp=ts, lat=lat, lon=lon, refl=refl)


def make_frames(means, ny=4, nx=4, start=BASE_TS, step=900):
    """Constant frames whose spatial means are exactly `means`."""
    return FrameSeries(
        frames=[CompositeFrame(timestamp=start + k * step, z=np.full((ny, nx), m, dtype=np.float32))
                for k, m in enumerate(means)],
        step_seconds=step,
    )


def make_station(timestamps, rng=None, precip=None):
    rng = rng or np.random.default_rng(0)
    n = len(timestamps)
    temp = 15 + rng.normal(0, 1, n)
    humidity = np.clip(60 + rng.normal(0, 5, n), 10, 90)
    speed = np.abs(3 + rng.normal(0, 1, n))
    columns = {
        "temp_max": temp + 1, "temp_min": temp - 1, "temp_avg": temp,
        "humidity_max": humidity + 2, "humidity_min": humidity - 2, "humidity_avg": humidity,
        "dewpoint_max": temp - 3, "dewpoint_min": temp - 5, "dewpoint_avg": temp - 4,
        "pressure_max": np.full(n, 1014.0), "pressure_min": np.full(n, 1012.0), "pressure_trend": np.zeros(n),
        "wind_dir_avg": rng.uniform(0, 359, n),
        "wind_speed_max": speed + 1, "wind_speed_min": speed * 0.5, "wind_speed_avg": speed,
        "wind_gust_max": speed + 3, "wind_gust_min": speed + 0.5, "wind_gust_avg": speed + 1.5,
        "precip_rate": np.abs(rng.normal(0, 1, n)) if precip is None else np.asarray(precip, dtype=np.float64),
    }
    return StationSeries(np.asarray(timestamps, dtype=np.int64), {k: columns[k] for k in VARIABLES})


def make_sequence(center_ts, rng, ny=4, nx=4, step=900):
    radar_ts = center_ts + (np.arange(8) - 4) * step
    z = rng.uniform(0, 60, size=(8, ny, nx))
    target = rng.uniform(0, 10, size=8).astype(np.float32)
    rows = rng.normal(0, 1, size=(8, len(VARIABLES))).astype(np.float32)
    rows[:, -1] = target
    return EventSequence(
        frames=quantize(z),
        pws_rows=rows,
        pws_timestamps=radar_ts.astype(np.int64),
        radar_timestamps=radar_ts.astype(np.int64),
        target=target,
        cumulative_significance=float(z.mean() * 8),
    )


def make_split(n=10, n_train=8, ny=4, nx=4, seed=0):
    rng = np.random.default_rng(seed)
    seqs = [make_sequence(BASE_TS + 3600 * 4 * k, rng, ny, nx) for k in range(n)]
    return DatasetSplit(train=seqs[:n_train], test=seqs[n_train:])


@pytest.fixture
def tiny_config():
    return ModelConfig(
        t_in=2, height=4, width=4, channels=1, n_features=len(VARIABLES), patch=2,
        d_model=8, n_heads_enc=2, d_head_enc=4, n_heads_dec=2, d_head_dec=4, mlp_dim=16,
        layers_enc=1, layers_mm=1, layers_ts=1, layers_dec=1, horizon=2,
    )


@pytest.fixture
def tiny_split():
    return make_split()
