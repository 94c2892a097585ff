import csv
import math

import numpy as np
import pytest
import torch

from evalkit.ablation import (
    evaluate_model,
    metrics_header,
    run_ablation,
    write_loss_csv,
    write_metrics_csv,
    write_predictions_csv,
)
from evalkit.baselines import persistence_baseline, zr_baseline
from evalkit.metrics import (
    FLAG_CC_UNDEFINED,
    FLAG_CONSTANT_TARGET,
    ContingencyTable,
    MetricReport,
    compute_metrics,
    mean_report,
)
from evalkit.zr import zr_rainfall
from m3rnet.config import TrainHyper
from m3rnet.engine import Batch, Standardizer, batch_from_sequences
from m3rnet.model import M3RNet
from utils.errors import CellOutOfBounds, EmptyDataset, EmptyInput, LengthMismatch


def test_perfect_forecast():
    t = np.array([0.0, 0.5, 3.0, 7.0, 12.0])
    report = compute_metrics(t, t)
    assert report.rmse == 0.0 and report.mae == 0.0
    assert report.r2 == pytest.approx(1.0)
    assert report.cc == pytest.approx(1.0)
    assert report.csi == {0.1: 1.0, 5.0: 1.0, 10.0: 1.0}
    assert report.flags == []


def test_constant_offset():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    report = compute_metrics(t + 2.0, t)
    assert report.rmse == pytest.approx(2.0)
    assert report.mae == pytest.approx(2.0)
    assert report.cc == pytest.approx(1.0)
    assert report.r2 == pytest.approx(1.0 - 16.0 / 5.0)


def test_metrics_match_reference_formulas():
    rng = np.random.default_rng(42)
    t = rng.gamma(1.5, 3.0, 1000)
    p = t + rng.normal(0, 2.0, 1000)
    report = compute_metrics(p, t)

    n = len(t)
    rmse = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, t)) / n)
    mae = sum(abs(a - b) for a, b in zip(p, t)) / n
    t_mean = sum(t) / n
    p_mean = sum(p) / n
    sst = sum((b - t_mean) ** 2 for b in t)
    r2 = 1 - sum((a - b) ** 2 for a, b in zip(p, t)) / sst
    cov = sum((a - p_mean) * (b - t_mean) for a, b in zip(p, t))
    cc = cov / math.sqrt(sum((a - p_mean) ** 2 for a in p) * sst)

    assert report.rmse == pytest.approx(rmse, abs=1e-9)
    assert report.mae == pytest.approx(mae, abs=1e-9)
    assert report.r2 == pytest.approx(r2, abs=1e-9)
    assert report.cc == pytest.approx(cc, abs=1e-9)

    for threshold in (0.1, 5.0, 10.0):
        hits = sum(1 for a, b in zip(p, t) if a >= threshold and b >= threshold)
        misses = sum(1 for a, b in zip(p, t) if a < threshold <= b)
        false_alarms = sum(1 for a, b in zip(p, t) if b < threshold <= a)
        assert report.csi[threshold] == pytest.approx(hits / (hits + misses + false_alarms), abs=1e-9)


def test_r2_equals_squared_cc_for_least_squares_fit():
    rng = np.random.default_rng(3)
    t = rng.uniform(0, 20, 500)
    x = t + rng.normal(0, 3, 500)
    slope, intercept = np.polyfit(x, t, 1)
    report = compute_metrics(slope * x + intercept, t)
    assert report.r2 == pytest.approx(report.cc ** 2, abs=1e-9)


def test_contingency_table_sums_to_total():
    rng = np.random.default_rng(1)
    p, t = rng.uniform(0, 10, 300), rng.uniform(0, 10, 300)
    table = ContingencyTable.from_arrays(p, t, 5.0)
    assert table.total == 300


def test_threshold_counts_equal_values_as_events():
    table = ContingencyTable.from_arrays(np.array([5.0, 4.9]), np.array([5.0, 5.0]), 5.0)
    assert (table.hits, table.misses, table.false_alarms) == (1, 1, 0)


def test_flags_for_degenerate_inputs():
    report = compute_metrics(np.zeros(4), np.zeros(4))
    assert FLAG_CONSTANT_TARGET in report.flags
    assert FLAG_CC_UNDEFINED in report.flags
    assert "csi_undefined_0.1" in report.flags
    assert report.r2 == 0.0 and report.cc == 0.0
    assert report.csi[5.0] == 0.0


def test_metrics_input_errors():
    with pytest.raises(LengthMismatch):
        compute_metrics([1.0, 2.0], [1.0])
    with pytest.raises(EmptyInput):
        compute_metrics([], [])


def test_mean_report_averages_and_unions_flags():
    a = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    b = compute_metrics([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    mean = mean_report([a, b])
    assert mean.cc == pytest.approx(0.5)
    assert mean.flags == sorted(set(b.flags))


def test_zr_unit_rain_rate():
    assert zr_rainfall(10 * math.log10(200.0)) == pytest.approx(1.0)
    assert zr_rainfall(23.01) == pytest.approx(1.0, rel=1e-3)


def test_zr_is_monotonic():
    rates = zr_rainfall(np.linspace(0, 70, 141))
    assert np.all(np.diff(rates) > 0)


def _batch(precip_last, dbz_last):
    n = len(precip_last)
    met = torch.zeros(n, 2, 20, dtype=torch.float64)
    met[:, -1, 19] = torch.tensor(precip_last, dtype=torch.float64)
    radar = torch.zeros(n, 2, 4, 4, 1, dtype=torch.float64)
    radar[:, -1, 2, 2, 0] = torch.tensor(dbz_last, dtype=torch.float64) / 70.0
    return Batch(radar=radar, met=met, target=torch.zeros(n, 2, dtype=torch.float64))


def test_persistence_repeats_last_rate():
    out = persistence_baseline(_batch([1.5, 0.0], [0.0, 0.0]))
    np.testing.assert_allclose(out, [[1.5, 1.5], [0.0, 0.0]])


def test_persistence_undoes_standardization():
    std = Standardizer(mean=np.full(20, 2.0, dtype=np.float32), std=np.full(20, 4.0, dtype=np.float32))
    out = persistence_baseline(_batch([0.5], [0.0]), std)
    np.testing.assert_allclose(out, [[4.0, 4.0]])


def test_zr_baseline_reads_station_cell():
    out = zr_baseline(_batch([0.0, 0.0], [40.0, 0.0]))
    np.testing.assert_allclose(out[0], [zr_rainfall(40.0)] * 2)
    np.testing.assert_array_equal(out[1], [0.0, 0.0])


def test_zr_baseline_cell_outside_frame():
    with pytest.raises(CellOutOfBounds):
        zr_baseline(_batch([0.0], [0.0]), station_cell=(4, 0))


def test_evaluate_model_shapes(tiny_config, tiny_split):
    model = M3RNet(tiny_config)
    report, predictions, actual = evaluate_model(model, Standardizer.fit(tiny_split.train, 2), tiny_split.test)
    assert predictions.shape == actual.shape == (2, 2)
    assert report.rmse >= 0.0


def test_evaluate_model_needs_sequences(tiny_config):
    with pytest.raises(EmptyDataset):
        evaluate_model(M3RNet(tiny_config), Standardizer.identity(20), [])


def test_ablation_writes_three_rows_deterministically(tmp_path, tiny_config, tiny_split):
    hyper = TrainHyper(epochs=2, batch_size=4, warmup_epochs=1)
    first = run_ablation(tiny_split, tiny_config, hyper, progress=False)
    second = run_ablation(tiny_split, tiny_config, hyper, progress=False)

    a = write_metrics_csv(first, tmp_path / "a.csv")
    b = write_metrics_csv(second, tmp_path / "b.csv")
    with open(a, newline="") as f:
        rows = list(csv.reader(f))

    assert rows[0] == metrics_header()
    assert [r[0] for r in rows[1:]] == ["ts_only", "no_decoder", "full"]
    assert open(a).read() == open(b).read()


def test_ablation_needs_test_split(tiny_config, tiny_split):
    tiny_split.test = []
    with pytest.raises(EmptyDataset):
        run_ablation(tiny_split, tiny_config, TrainHyper(epochs=1))


def test_prediction_and_loss_csvs(tmp_path, tiny_config, tiny_split):
    batch = batch_from_sequences(tiny_split.test, tiny_config)
    actual = batch.target.numpy().astype(np.float64)
    path = write_predictions_csv(actual + 1.0, actual, tmp_path / "p.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["sequence", "step", "actual", "predicted"]
    assert len(rows) == 1 + actual.size
    assert rows[2][:2] == ["0", "2"]
    assert float(rows[1][3]) - float(rows[1][2]) == pytest.approx(1.0, abs=2e-6)

    loss = write_loss_csv([{'epoch': 1, 'lr': 1e-3, 'loss': 2.5}], tmp_path / "l.csv")
    assert open(loss).read().splitlines() == ["epoch,lr,loss", "1,1.00000000e-03,2.50000000"]


def test_metrics_csv_row_layout(tmp_path):
    report = MetricReport(rmse=1.5, mae=0.5, r2=0.25, cc=0.5, csi={0.1: 0.75, 5.0: 0.125},
                          flags=["csi_undefined_10"])
    path = write_metrics_csv({"full": report}, tmp_path / "m.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))

    assert rows[0] == ["variant", "rmse", "mae", "r2", "cc", "csi_0.1", "csi_5", "csi_10", "flags"]
    assert rows[1] == ["full", "1.500000", "0.500000", "0.250000", "0.500000",
                       "0.750000", "0.125000", "0.000000", "csi_undefined_10"]
    assert report.as_row()["csi_5"] == 0.125
