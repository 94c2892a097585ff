import csv
import json
import logging
from pathlib import Path

import pytest

from aligner.container import read_container
from cli import M3RCLI
from utils.errors import ConfigError, DataError

TINY_MODEL = """\
patch = 4
d_model = 8
n_heads_enc = 2
d_head_enc = 4
n_heads_dec = 2
d_head_dec = 4
mlp_dim = 16
layers_enc = 1
layers_mm = 1
layers_ts = 1
layers_dec = 1
t_in = 2
horizon = 2
epochs = 2
batch_size = 8
warmup_epochs = 1
"""


@pytest.fixture(autouse=True)
def _restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


def run(*args) -> int:
    return M3RCLI().run([str(a) for a in args])


def build_dataset(workdir: Path, seed: int = 0) -> Path:
    assert run("synth", "-o", workdir / "synth", "--seed", seed, "--n-steps", 96, "--gap-fraction", 0.05) == 0
    assert run("ingest", workdir / "synth" / "radar", "-o", workdir / "frames.m3rf", "--roi-size", 16) == 0
    assert run("fill", workdir / "synth" / "pws.csv", "-o", workdir / "filled.csv") == 0
    assert run("align", workdir / "frames.m3rf", workdir / "filled.csv", "-o", workdir / "data.m3rd",
               "--threshold", 1.0) == 0
    return workdir / "data.m3rd"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    path = build_dataset(tmp_path_factory.mktemp("corpus"))
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)
    return path


@pytest.fixture
def tiny_conf(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_MODEL)
    return path


def test_pipeline_writes_reports(dataset):
    workdir = dataset.parent
    assert (workdir / "synth" / "report.json").exists()
    assert (workdir / "frames.report.json").exists()
    assert (workdir / "filled.violations.txt").exists()

    report = json.loads((workdir / "data.report.json").read_text())
    split = read_container(dataset)
    assert report['sequences'] == len(split.sequences) > 1
    assert report['train'] == len(split.train)
    assert split.sequences[0].frames.shape == (8, 16, 16)


def test_pipeline_is_byte_reproducible(tmp_path):
    first = build_dataset(tmp_path / "a", seed=4)
    second = build_dataset(tmp_path / "b", seed=4)
    assert first.read_bytes() == second.read_bytes()
    for name in ("data.report.json", "synth/report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "a" / "data.report.json").read_text())["output"] == "data.m3rd"
    assert json.loads((tmp_path / "a" / "synth" / "report.json").read_text())["pws_csv"] == "pws.csv"


def test_missing_input_names_the_path(tmp_path, capsys):
    missing = tmp_path / "absent.m3rf"
    code = run("align", missing, tmp_path / "pws.csv", "-o", tmp_path / "out.m3rd")
    assert code == ConfigError.exit_code
    assert "absent.m3rf" in capsys.readouterr().err


def test_unreachable_threshold_exits_with_data_error(dataset, tmp_path, capsys):
    workdir = dataset.parent
    code = run("align", workdir / "frames.m3rf", workdir / "filled.csv", "-o", tmp_path / "none.m3rd",
               "--threshold", 1000)
    assert code == DataError.exit_code
    assert "threshold" in capsys.readouterr().err
    assert not (tmp_path / "none.m3rd").exists()


def test_train_eval_plot(dataset, tmp_path, tiny_conf):
    checkpoint = tmp_path / "model.m3rc"
    assert run("train", dataset, "-o", checkpoint, "--config", tiny_conf) == 0
    assert checkpoint.exists()
    with open(tmp_path / "model.loss.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "lr", "loss"] and len(rows) == 3

    metrics = tmp_path / "metrics.csv"
    assert run("eval", dataset, checkpoint, "-o", metrics, "--config", tiny_conf) == 0
    with open(metrics, newline="") as f:
        names = [row[0] for row in csv.reader(f)][1:]
    assert names == ["full", "persistence", "zr"]
    assert (tmp_path / "metrics.predictions.csv").exists()

    chart = tmp_path / "metrics.svg"
    assert run("plot", metrics, "-o", chart) == 0
    assert "<svg" in chart.read_text()


def test_train_variant_flag(dataset, tmp_path, tiny_conf):
    checkpoint = tmp_path / "ts.m3rc"
    assert run("train", dataset, "-o", checkpoint, "--config", tiny_conf, "--variant", "ts_only", "--epochs", 1) == 0
    report = json.loads((tmp_path / "ts.report.json").read_text())
    assert report['model']['variant'] == "ts_only"
    assert report['model']['height'] == 16


def test_ablate(dataset, tmp_path, tiny_conf):
    output = tmp_path / "ablation.csv"
    assert run("ablate", dataset, "-o", output, "--config", tiny_conf, "--epochs", 1) == 0
    with open(output, newline="") as f:
        names = [row[0] for row in csv.reader(f)][1:]
    assert names == ["ts_only", "no_decoder", "full"]


def test_audit_clean_dataset(dataset, tmp_path, capsys):
    output = tmp_path / "audit.json"
    assert run("audit", dataset, "-o", output) == 0
    assert "✓" in capsys.readouterr().out
    audit = json.loads(output.read_text())
    assert audit['datasets'][0]['ok']


def test_config_show_lists_sources(tmp_path, tiny_conf, capsys):
    assert run("config", "--config", tiny_conf, "--seed", 9, "show") == 0
    out = capsys.readouterr().out
    assert "patch=4  # " + str(tiny_conf) in out
    assert "seed=9  # command line" in out
    assert "epochs=2" in out


def test_config_validate(tmp_path, capsys):
    assert run("config", "validate") == 0
    bad = tmp_path / "bad.conf"
    bad.write_text("train_frac = 1.5\n")
    assert run("config", "--config", bad, "validate") == ConfigError.exit_code
    assert "train_frac" in capsys.readouterr().out


def test_no_command_prints_help(capsys):
    assert run() == 0
    assert "usage" in capsys.readouterr().out.lower()


@pytest.mark.slow
def test_model_learns_on_synthetic_corpus(tmp_path):
    dataset = build_dataset(tmp_path, seed=1)
    conf = tmp_path / "learn.conf"
    conf.write_text(TINY_MODEL.replace("epochs = 2", "epochs = 60").replace("batch_size = 8", "batch_size = 4")
                    + "lr = 0.005\nweight_decay = 0.0\n")
    checkpoint = tmp_path / "model.m3rc"
    assert run("train", dataset, "-o", checkpoint, "--config", conf) == 0
    report = json.loads((tmp_path / "model.report.json").read_text())
    assert report['final_loss'] < report['first_loss']


ACCEPTANCE_MODEL = """\
patch = 4
d_model = 32
n_heads_enc = 4
d_head_enc = 8
n_heads_dec = 4
d_head_dec = 8
mlp_dim = 64
epochs = 50
batch_size = 32
warmup_epochs = 5
"""


def read_rmse(path: Path) -> dict:
    with open(path, newline="") as f:
        return {row["variant"]: float(row["rmse"]) for row in csv.DictReader(f)}


@pytest.mark.slow
def test_full_model_beats_persistence_and_ablations(tmp_path):
    assert run("synth", "-o", tmp_path / "synth", "--seed", 0, "--n-steps", 4800, "--storm-count", 6) == 0
    assert run("ingest", tmp_path / "synth" / "radar", "-o", tmp_path / "frames.m3rf", "--roi-size", 16) == 0
    assert run("fill", tmp_path / "synth" / "pws.csv", "-o", tmp_path / "filled.csv") == 0
    dataset = tmp_path / "data.m3rd"
    assert run("align", tmp_path / "frames.m3rf", tmp_path / "filled.csv", "-o", dataset, "--threshold", 1.0) == 0
    assert len(read_container(dataset).sequences) >= 512

    conf = tmp_path / "acceptance.conf"
    conf.write_text(ACCEPTANCE_MODEL)
    checkpoint = tmp_path / "full.m3rc"
    assert run("train", dataset, "-o", checkpoint, "--config", conf) == 0
    assert run("eval", dataset, checkpoint, "-o", tmp_path / "metrics.csv", "--config", conf) == 0
    scores = read_rmse(tmp_path / "metrics.csv")
    assert scores["full"] < scores["persistence"]

    # one ordered seed settles it; otherwise two of three must be ordered
    ordered = []
    for seed in (0, 1, 2):
        output = tmp_path / f"ablation_{seed}.csv"
        assert run("ablate", dataset, "-o", output, "--config", conf, "--seed", seed) == 0
        rmse = read_rmse(output)
        ordered.append(rmse["full"] < rmse["no_decoder"] < rmse["ts_only"])
        if ordered[0] or sum(ordered) >= 2:
            break
    assert ordered[0] or sum(ordered) >= 2, ordered
