import json
import os

import pandas as pd
import pytest

from main import main
from modules.dataset_manager import read_manifest

TINY = {
    "seed": 1,
    "threads": 2,
    "kinematics": {"recordings": 2, "duration_ms": 2000.0, "fix_range_ms": [50, 100],
                   "sac_range_ms": [40, 80], "max_angle_deg": 8.0},
    "render": {"width": 16, "height": 12, "fps": 250.0, "iris_radius_px": 4.0,
               "pupil_radius_px": 2.0, "gain_px_per_deg": 0.5},
    "sim": {"upsample_factor": 2},
    "codec": {"window_ms": 33.0},
    "model": {"hidden": [8], "surrogate_width": 0.5, "init_gain": 3.0},
    "train": {"epochs": 1, "checkpoint_every": 0, "record_seconds": False},
}


@pytest.fixture(autouse=True)
def quiet_logs(tmp_path, monkeypatch):
    monkeypatch.setenv("SYNSACC_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("SYNSACC_LOG", "WARNING")


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path)


@pytest.fixture
def dataset(tmp_path, tiny_config):
    out = str(tmp_path / "data")
    assert main(["gen", "--config", tiny_config, "--out", out]) == 0
    return out


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_gen_writes_dataset(dataset):
    names = sorted(os.listdir(dataset))
    assert "manifest.json" in names and "config.json" in names
    assert "rec_00_left.evb1" in names and "rec_01.labels.json" in names
    with open(os.path.join(dataset, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["width"] == 16 and manifest["height"] == 12
    assert manifest["splits"]["test"]
    assert not set(manifest["splits"]["train"]) & set(manifest["splits"]["test"])


def test_binocular_twins_stay_in_one_split(tmp_path):
    config = dict(TINY, kinematics=dict(TINY["kinematics"], binocular=True))
    path = tmp_path / "binocular.json"
    path.write_text(json.dumps(config))
    out = str(tmp_path / "data")
    assert main(["gen", "--config", str(path), "--out", out]) == 0

    manifest = read_manifest(os.path.join(out, "manifest.json"))
    label_files = {r.event_file: r.label_file for r in manifest.recordings}
    assert sorted(r.eye for r in manifest.recordings) == ["left", "left", "right", "right"]

    def keys(split):
        return {(label_files[e.event_file], e.t_start_us) for e in manifest.split_entries(split)}
    assert keys("test") and not keys("test") & keys("train")


def test_gen_is_deterministic(tmp_path, dataset, tiny_config):
    again = str(tmp_path / "again")
    assert main(["gen", "--config", tiny_config, "--out", again]) == 0
    for name in ("rec_00_left.evb1", "rec_01_left.evb1", "rec_00.labels.json"):
        assert read_bytes(os.path.join(dataset, name)) == read_bytes(os.path.join(again, name))


def test_train_then_eval(tmp_path, dataset, tiny_config):
    run = str(tmp_path / "run")
    assert main(["train", "--config", tiny_config, "--dataset", dataset, "--out", run]) == 0
    for name in ("final.snn", "best.snn", "history.csv", "report.json", "report.md", "config.json"):
        assert os.path.exists(os.path.join(run, name))
    assert len(pd.read_csv(os.path.join(run, "history.csv"))) == 1

    again = str(tmp_path / "again")
    assert main(["train", "--config", tiny_config, "--dataset", dataset, "--out", again]) == 0
    assert read_bytes(os.path.join(run, "final.snn")) == read_bytes(os.path.join(again, "final.snn"))
    assert read_bytes(os.path.join(run, "history.csv")) == read_bytes(os.path.join(again, "history.csv"))

    evaluated = str(tmp_path / "eval")
    checkpoint = os.path.join(run, "final.snn")
    assert main(["eval", "--config", tiny_config, "--dataset", dataset, "--out", evaluated,
                 "--checkpoint", checkpoint]) == 0
    with open(os.path.join(run, "report.json"), encoding="utf-8") as f:
        trained = json.load(f)
    with open(os.path.join(evaluated, "report.json"), encoding="utf-8") as f:
        report = json.load(f)
    assert report["checkpoint"] == os.path.abspath(checkpoint)
    assert report["confusion"] == trained["confusion"]
    assert report["metrics"]["accuracy"] == trained["metrics"]["accuracy"]


def test_ops_from_explicit_events(tmp_path):
    out = str(tmp_path / "ops")
    assert main(["ops", "--out", out, "--arch", "dense", "--height", "260", "--width", "360",
                 "--events", "19.36", "17.91", "0.33"]) == 0
    with open(os.path.join(out, "report.json"), encoding="utf-8") as f:
        report = json.load(f)
    assert report["totals"]["ann_macs"] == 96_109_568


def test_simulate_frames(tmp_path, tiny_config):
    frames = str(tmp_path / "frames")
    config = dict(TINY, render=dict(TINY["render"], dump_frames=True))
    config["kinematics"] = dict(TINY["kinematics"], recordings=1, duration_ms=200.0)
    path = tmp_path / "dump.json"
    path.write_text(json.dumps(config))
    assert main(["gen", "--config", str(path), "--out", frames]) == 0
    assert len(os.listdir(os.path.join(frames, "events_00_left"))) == 7
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", str(path), "--frames", os.path.join(frames, "frames_00"),
                 "--out", out]) == 0
    assert os.path.getsize(os.path.join(out, "events.evb1")) > 0


def test_exit_codes(tmp_path, tiny_config):
    assert main(["gen", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["train", "--config", tiny_config, "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--config", tiny_config, "--dataset", str(tmp_path), "--out", str(tmp_path / "y"),
                 "--checkpoint", str(tmp_path / "none.snn")]) == 3


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_finetune_sweep_and_benchmark(tmp_path, dataset, tiny_config):
    run = str(tmp_path / "run")
    assert main(["train", "--config", tiny_config, "--dataset", dataset, "--out", run]) == 0
    checkpoint = os.path.join(run, "final.snn")

    tuned = str(tmp_path / "finetune")
    assert main(["finetune", "--config", tiny_config, "--dataset", dataset, "--out", tuned,
                 "--checkpoint", checkpoint, "--fraction", "0.5", "--fraction", "1.0"]) == 0
    frame = pd.read_csv(os.path.join(tuned, "finetune.csv"))
    assert frame["fraction"].tolist() == [0.0, 0.5, 1.0]
    assert frame["samples"].iloc[1] < frame["samples"].iloc[2]
    with open(os.path.join(tuned, "finetune_manifest.json"), encoding="utf-8") as f:
        assert set(json.load(f)["fractions"]) == {"0.5", "1"}

    sweep = str(tmp_path / "sweep")
    assert main(["sweep", "--config", tiny_config, "--dataset", dataset, "--out", sweep,
                 "--ts", "20", "33"]) == 0
    assert pd.read_csv(os.path.join(sweep, "sweep.csv"))["ts_ms"].tolist() == [20.0, 33.0]
    assert os.path.exists(os.path.join(sweep, "ts_20", "manifest.json"))

    bench = str(tmp_path / "bench")
    assert main(["benchmark", "--config", tiny_config, "--dataset", dataset, "--out", bench,
                 "--arch", "dense"]) == 0
    assert pd.read_csv(os.path.join(bench, "benchmark.csv"))["model"].tolist() == ["dense"]

    ops = str(tmp_path / "ops")
    assert main(["ops", "--config", tiny_config, "--dataset", dataset, "--out", ops,
                 "--checkpoint", checkpoint]) == 0
    with open(os.path.join(ops, "report.json"), encoding="utf-8") as f:
        assert json.load(f)["totals"]["synaptic_ops"] >= 0.0
