from pathlib import Path

import numpy as np
import pytest

from conftest import BASE_TS, make_volume
from gridproc.processing import (
    RadarProcessor,
    composite_reflectivity,
    extract_roi,
    nearest_grid_point,
    process_volume,
    temporal_regularize,
)
from gridproc.volume import (
    CompositeFrame,
    FrameSeries,
    GriddedVolume,
    read_frame_series,
    read_gvol,
    write_frame_series,
    write_gvol,
)
from utils.errors import FormatError, InsufficientFrames, RoiOutOfBounds, TargetOutsideGrid


def test_nearest_grid_point_exact_cell():
    vol = make_volume()
    assert nearest_grid_point(vol, vol.lat[3, 5], vol.lon[3, 5]) == (3, 5)


def test_nearest_grid_point_rounds_to_closest():
    vol = make_volume(step=0.01)
    assert nearest_grid_point(vol, 35.0 + 0.0209, -97.0 + 0.0491) == (2, 5)


def test_nearest_grid_point_outside_bounds():
    vol = make_volume()
    with pytest.raises(TargetOutsideGrid):
        nearest_grid_point(vol, 40.0, -97.0)


def test_extract_roi_shape_and_offset():
    vol = make_volume(ny=10, nx=10)
    roi = extract_roi(vol, (5, 5), size=4)
    assert roi.refl.shape == (4, 4, 4)
    np.testing.assert_array_equal(roi.refl, vol.refl[:, 3:7, 3:7])
    np.testing.assert_array_equal(roi.lat, vol.lat[3:7, 3:7])


def test_extract_roi_full_grid():
    vol = make_volume(ny=8, nx=8)
    roi = extract_roi(vol, (4, 4), size=8)
    np.testing.assert_array_equal(roi.refl, vol.refl)


def test_extract_roi_out_of_bounds():
    vol = make_volume(ny=10, nx=10)
    with pytest.raises(RoiOutOfBounds):
        extract_roi(vol, (1, 5), size=4)
    with pytest.raises(RoiOutOfBounds):
        extract_roi(vol, (5, 9), size=4)


def test_composite_is_max_of_lowest_four_levels():
    vol = make_volume(n_elev=6)
    vol.refl[5] = 90.0
    frame = composite_reflectivity(vol)
    np.testing.assert_allclose(frame.z, vol.refl[:4].max(axis=0))


def test_composite_skips_missing_cells():
    vol = make_volume(fill=10.0)
    vol.refl[0, 0, 0] = np.nan
    vol.refl[1, 0, 0] = 25.0
    vol.refl[:, 1, 1] = np.nan
    frame = composite_reflectivity(vol)
    assert frame.z[0, 0] == pytest.approx(25.0)
    assert np.isnan(frame.z[1, 1])


def test_composite_with_fewer_levels_warns(caplog):
    vol = make_volume(n_elev=2, fill=12.0)
    frame = composite_reflectivity(vol)
    assert np.all(frame.z == 12.0)
    assert "elevation" in caplog.text


def test_composite_clips_to_valid_range():
    vol = make_volume(fill=120.0)
    assert composite_reflectivity(vol).z.max() == pytest.approx(95.0)


def test_process_volume_uses_grid_centre_without_target():
    vol = make_volume(ny=8, nx=8)
    frame = process_volume(vol, None, roi_size=4)
    np.testing.assert_allclose(frame.z, vol.refl[:4, 2:6, 2:6].max(axis=0))


def _series(timestamps, values):
    return FrameSeries(frames=[CompositeFrame(t, np.full((2, 2), v, dtype=np.float32))
                               for t, v in zip(timestamps, values)])


def test_regularize_linear_interpolation():
    series = _series([BASE_TS - 300, BASE_TS + 600], [0.0, 30.0])
    regular = temporal_regularize(series, 900)
    assert list(regular.timestamps) == [BASE_TS]
    assert regular.frames[0].z[0, 0] == pytest.approx(10.0)


def test_regularize_exact_knots_pass_through():
    z = np.arange(4, dtype=np.float32).reshape(2, 2) + 0.123
    series = FrameSeries(frames=[CompositeFrame(BASE_TS, z), CompositeFrame(BASE_TS + 1800, z * 2)])
    regular = temporal_regularize(series, 900)
    assert list(regular.timestamps) == [BASE_TS, BASE_TS + 900, BASE_TS + 1800]
    np.testing.assert_array_equal(regular.frames[0].z, z)
    np.testing.assert_array_equal(regular.frames[2].z, z * 2)
    assert regular.is_regular()


def test_regularize_missing_propagates():
    z0 = np.array([[np.nan, 1.0], [2.0, 3.0]], dtype=np.float32)
    series = FrameSeries(frames=[CompositeFrame(BASE_TS - 450, z0), CompositeFrame(BASE_TS + 450, z0)])
    regular = temporal_regularize(series, 900)
    assert np.isnan(regular.frames[0].z[0, 0])


def test_regularize_needs_two_frames():
    with pytest.raises(InsufficientFrames):
        temporal_regularize(_series([BASE_TS], [1.0]), 900)


def test_gvol_roundtrip(tmp_path):
    vol = make_volume()
    path = write_gvol(vol, tmp_path / "v.gvol")
    back = read_gvol(path)
    assert back.timestamp == vol.timestamp
    np.testing.assert_array_equal(back.refl, vol.refl)
    np.testing.assert_array_equal(back.lon, vol.lon)


def test_gvol_truncated(tmp_path):
    ok = write_gvol(make_volume(), tmp_path / "ok.gvol")
    path = tmp_path / "bad.gvol"
    path.write_bytes(Path(ok).read_bytes()[:-4])
    with pytest.raises(FormatError) as exc:
        read_gvol(path)
    assert "bad.gvol" in str(exc.value)


def test_volume_rejects_mismatched_coordinates():
    with pytest.raises(FormatError):
        GriddedVolume(timestamp=BASE_TS, lat=np.zeros((2, 2)), lon=np.zeros((2, 3)), refl=np.zeros((4, 2, 2)))


def test_frame_store_roundtrip(tmp_path):
    series = _series([BASE_TS, BASE_TS + 900], [1.5, np.nan])
    path = write_frame_series(series, tmp_path / "f.m3rf")
    back = read_frame_series(path)
    assert list(back.timestamps) == list(series.timestamps)
    assert back.step_seconds == 900
    assert back.frames[0].z[0, 0] == pytest.approx(1.5)
    assert np.isnan(back.frames[1].z).all()


def test_radar_processor_directory(tmp_path):
    for k, ts in enumerate([BASE_TS - 100, BASE_TS + 500, BASE_TS + 1100, BASE_TS + 1700]):
        write_gvol(make_volume(ts=ts, ny=8, nx=8, fill=float(k * 10)), tmp_path / f"vol_{ts}.gvol")
    write_gvol(make_volume(ts=BASE_TS, ny=8, nx=8), tmp_path / "vol_MDM.gvol")

    processor = RadarProcessor(roi_size=4, step_seconds=900, jobs=2)
    series, results = processor.process_directory(tmp_path)

    assert len(results) == 4
    assert all(r['success'] for r in results)
    assert list(series.timestamps) == [BASE_TS, BASE_TS + 900]
    assert series.frames[0].z[0, 0] == pytest.approx(100 / 600 * 10)


def test_radar_processor_keeps_first_duplicate(tmp_path, caplog):
    processor = RadarProcessor(step_seconds=900)
    frames = [
        CompositeFrame(BASE_TS, np.full((2, 2), 1.0, dtype=np.float32)),
        CompositeFrame(BASE_TS, np.full((2, 2), 2.0, dtype=np.float32)),
        CompositeFrame(BASE_TS + 900, np.full((2, 2), 3.0, dtype=np.float32)),
    ]
    series = processor.build_series(frames)
    assert series.frames[0].z[0, 0] == 1.0
    assert "Duplicate" in caplog.text


def test_extract_roi_odd_size():
    vol = make_volume(ny=10, nx=10)
    roi = extract_roi(vol, (5, 5), size=5)
    assert roi.refl.shape == (4, 5, 5)
    np.testing.assert_array_equal(roi.refl, vol.refl[:, 3:8, 3:8])

    with pytest.raises(RoiOutOfBounds):
        extract_roi(vol, (8, 5), size=5)
    with pytest.raises(RoiOutOfBounds):
        extract_roi(vol, (5, 8), size=5)


def test_nearest_grid_point_matches_exhaustive_scan():
    rng = np.random.default_rng(11)
    for _ in range(20):
        lat = 35.0 + rng.uniform(0, 1, size=(20, 20))
        lon = -97.0 + rng.uniform(0, 1, size=(20, 20))
        vol = GriddedVolume(timestamp=BASE_TS, lat=lat, lon=lon, refl=np.zeros((4, 20, 20)))
        target_lat = rng.uniform(lat.min(), lat.max())
        target_lon = rng.uniform(lon.min(), lon.max())

        best, best_dist = None, np.inf
        for i in range(20):
            for j in range(20):
                dist = np.sqrt((lon[i, j] - target_lon) ** 2 + (lat[i, j] - target_lat) ** 2)
                if dist < best_dist:
                    best, best_dist = (i, j), dist
        assert nearest_grid_point(vol, target_lat, target_lon) == best


def test_nearest_grid_point_ties_prefer_smallest_row_then_column():
    vol = make_volume(lat0=0.0, lon0=0.0, step=0.25)
    assert nearest_grid_point(vol, 0.125, 0.5) == (0, 2)
    assert nearest_grid_point(vol, 0.25, 0.375) == (1, 1)
    assert nearest_grid_point(vol, 0.125, 0.375) == (0, 1)


def test_roi_centres_on_target_cell():
    vol = make_volume(ny=200, nx=200, step=0.01)
    target = (vol.lat[120, 80], vol.lon[120, 80])
    roi = extract_roi(vol, nearest_grid_point(vol, *target), size=100)
    assert roi.refl.shape == (4, 100, 100)
    assert (roi.lat[50, 50], roi.lon[50, 50]) == target
    np.testing.assert_array_equal(roi.refl[:, 50, 50], vol.refl[:, 120, 80])
    np.testing.assert_array_equal(roi.refl[:, 0, 0], vol.refl[:, 70, 30])


def test_composite_dominates_every_level():
    rng = np.random.default_rng(5)
    for seed in range(10):
        vol = make_volume(ts=BASE_TS + seed, ny=10, nx=10, n_elev=4)
        vol.refl[rng.uniform(size=vol.refl.shape) < 0.2] = np.nan
        frame = composite_reflectivity(vol)

        expected = np.full((10, 10), np.nan)
        for i in range(10):
            for j in range(10):
                values = [v for v in vol.refl[:, i, j] if not np.isnan(v)]
                if values:
                    expected[i, j] = max(values)
        np.testing.assert_allclose(frame.z, expected, rtol=1e-6)

        for level in vol.refl:
            present = ~np.isnan(level)
            assert np.all(frame.z[present] >= level[present].astype(np.float32))


def test_regularize_frame_count_and_bracketing():
    rng = np.random.default_rng(3)
    step = 900
    ts = BASE_TS + 137 + np.cumsum(rng.integers(200, 1500, size=30))
    values = rng.uniform(-10, 60, size=30)
    series = _series(ts, values)

    regular = temporal_regularize(series, step)

    first_aligned = -(-int(ts[0]) // step) * step
    assert len(regular) == (int(ts[-1]) - first_aligned) // step + 1
    assert regular.timestamps[0] == first_aligned
    assert np.all(np.diff(regular.timestamps) == step)

    for frame in regular.frames:
        k = int(np.searchsorted(ts, frame.timestamp, side="right")) - 1
        nxt = min(k + 1, len(ts) - 1)
        lo, hi = sorted((values[k], values[nxt]))
        assert lo - 1e-4 <= frame.z[0, 0] <= hi + 1e-4
