import json

import numpy as np
import pytest

from modules.evaluation_manager import (
    Confusion, EvaluationResult, OpsReport, count_ops, evaluate, metrics, recorded_events_in, write_report,
)
from modules.exceptions import DataError
from modules.snn_core import CubaParams, build_conv_snn, build_dense_snn

from tests.conftest import make_separable_set


def test_metric_formulas():
    m = metrics(Confusion(tp=3, tn=2, fp=1, fn=1))
    assert m["accuracy"] == 5 / 7
    assert m["precision"] == 0.75
    assert m["recall"] == 0.75
    assert m["f1"] == 0.75
    assert m["undefined"] == []


def test_perfect_classifier():
    m = metrics(Confusion(tp=4, tn=6))
    assert (m["accuracy"], m["precision"], m["recall"], m["f1"]) == (1.0, 1.0, 1.0, 1.0)
    assert m["macro_f1"] == 1.0


def test_no_positive_predictions_are_flagged():
    m = metrics(Confusion(tp=0, tn=5, fp=0, fn=3))
    assert m["precision"] == 0.0
    assert m["f1"] == 0.0
    assert "precision" in m["undefined"]
    assert m["accuracy"] == 5 / 8


def test_empty_confusion():
    with pytest.raises(DataError):
        metrics(Confusion())


def test_confusion_from_predictions():
    conf = Confusion.from_predictions([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert conf == Confusion(tp=2, tn=1, fp=1, fn=1)
    with pytest.raises(DataError):
        Confusion.from_predictions([1, 0], [1])


def test_ann_macs_of_dense_model():
    report = count_ops(build_dense_snn(260, 360), [0.0, 0.0, 0.0])
    assert [row.ann_macs for row in report.rows] == [95_846_400, 262_144, 1_024]
    assert [row.ann_activations for row in report.rows] == [512, 512, 2]
    assert report.totals["ann_macs"] == 96_109_568
    assert report.totals["synaptic_ops"] == 0.0


def test_synaptic_ops_from_event_means():
    report = count_ops(build_dense_snn(260, 360), [19.36, 17.91, 0.33])
    for row, expected in zip(report.rows, [9911.36, 9167.36, 0.66]):
        assert row.synaptic_ops == pytest.approx(expected, rel=0.005)
    assert report.rows[0].synaptic_ops == pytest.approx(19.36 * 512)


def test_count_ops_needs_events_or_stats():
    model = build_dense_snn(4, 4, hidden=(3,), seed=0)
    with pytest.raises(DataError):
        count_ops(model)
    with pytest.raises(DataError):
        count_ops(model, [1.0])


def test_conv_rows_are_marked():
    model = build_conv_snn(64, 64)
    report = count_ops(model, [1.0] * 9)
    kinds = [row.kind for row in report.rows]
    assert kinds == ["sumpool", "conv2d", "sumpool", "conv2d", "sumpool", "conv2d", "dense", "recurrent", "dense"]
    assert all(row.beyond_dense for row in report.rows[:6])
    assert not any(row.beyond_dense for row in report.rows[6:])
    assert report.rows[1].synaptic_ops == 8 * 25
    assert report.rows[7].ann_macs == (512 + 256) * 256
    assert "conv/pool accounting" in report.to_markdown()


def test_markdown_table():
    text = count_ops(build_dense_snn(260, 360), [19.36, 17.91, 0.33]).to_markdown()
    lines = text.splitlines()
    assert lines[0] == "| Layer | Events | Synapses | Activations | MACs |"
    assert "95,846,400" in lines[2]
    assert lines[-1].startswith("| Total |")


def _model():
    return build_dense_snn(4, 4, hidden=(16,), params=CubaParams(theta=0.3), seed=2, init_gain=5.0)


def test_evaluate_records_statistics():
    data = make_separable_set(10)
    model = _model()
    result = evaluate(model, data, batch_size=3)
    assert result.confusion.total == 10
    assert len(result.predictions) == 10
    stats = model.mean_events()
    expected_input = sum(t.nonzero_count() for t in data) / (10 * data[0].timesteps)
    assert stats["input"] == pytest.approx(expected_input)
    assert recorded_events_in(model)[0] == pytest.approx(expected_input)
    assert result.ops.rows[0].synaptic_ops == pytest.approx(expected_input * 16)


def test_evaluate_is_thread_and_batch_independent():
    data = make_separable_set(14)
    serial = evaluate(_model(), data, threads=1, batch_size=32)
    threaded = evaluate(_model(), data, threads=3, batch_size=4)
    assert serial.predictions == threaded.predictions
    assert serial.confusion == threaded.confusion
    assert serial.loss == pytest.approx(threaded.loss)
    assert serial.ops.totals == pytest.approx(threaded.ops.totals)


def test_evaluate_empty_set():
    with pytest.raises(DataError):
        evaluate(_model(), [])


def test_write_report(tmp_path):
    result = evaluate(_model(), make_separable_set(6))
    write_report(result, str(tmp_path), {"checkpoint": "x.snn"})
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["checkpoint"] == "x.snn"
    assert data["confusion"]["tp"] + data["confusion"]["fn"] == 3
    assert "totals" in data["ops"]
    assert "# Operations per timestep" in (tmp_path / "report.md").read_text()


def test_write_ops_only_report(tmp_path):
    report = count_ops(build_dense_snn(8, 8, hidden=(4,)), [2.0, 1.0])
    assert isinstance(report, OpsReport) and not isinstance(report, EvaluationResult)
    write_report(report, str(tmp_path))
    assert json.loads((tmp_path / "report.json").read_text())["totals"]["ann_macs"] == 128 * 4 + 4 * 2
