"""Classification metrics and SNN-vs-ANN operation accounting.

Saccade is the positive class. Synaptic operations per timestep are the mean
events entering a layer times its fan-out; ANN activations and MACs of a
dense layer are fan_out and fan_in * fan_out. Conv and pool rows extend the
dense-only accounting and are flagged as such.
"""

import json
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from modules.exceptions import DataError
from modules.kinematics import CLASS_INDEX
from modules.training_manager import EVAL_BATCH, batch_loss, batch_predictions, stack_inputs
from modules.utils import thread_map

logger = logging.getLogger(__name__)

POSITIVE = CLASS_INDEX["saccade"]
ACCOUNTED_KINDS = ("dense", "recurrent", "conv2d", "sumpool")


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, labels, predictions):
        labels = np.asarray(labels)
        predictions = np.asarray(predictions)
        if labels.shape != predictions.shape:
            raise DataError("labels and predictions differ in length",
                            labels=labels.shape, predictions=predictions.shape)
        pos_true = labels == POSITIVE
        pos_pred = predictions == POSITIVE
        return cls(tp=int(np.sum(pos_true & pos_pred)), tn=int(np.sum(~pos_true & ~pos_pred)),
                   fp=int(np.sum(~pos_true & pos_pred)), fn=int(np.sum(pos_true & ~pos_pred)))

    def to_dict(self):
        return asdict(self)


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def _f1(precision, recall):
    return 0.0 if precision * recall == 0 else 2 * precision * recall / (precision + recall)


def metrics(conf):
    """Accuracy, precision, recall and F1 with saccade positive, plus macro averages.

    A zero denominator yields 0 and adds a name to the "undefined" list.
    """
    if conf.total == 0:
        raise DataError("cannot compute metrics of an empty confusion matrix")
    flags = []
    precision = _ratio(conf.tp, conf.tp + conf.fp, "precision", flags)
    recall = _ratio(conf.tp, conf.tp + conf.fn, "recall", flags)
    # Fixation-positive view for the macro averages
    neg_flags = []
    neg_precision = _ratio(conf.tn, conf.tn + conf.fn, "precision", neg_flags)
    neg_recall = _ratio(conf.tn, conf.tn + conf.fp, "recall", neg_flags)
    f1 = _f1(precision, recall)
    return {
        "accuracy": (conf.tp + conf.tn) / conf.total,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_precision": (precision + neg_precision) / 2,
        "macro_recall": (recall + neg_recall) / 2,
        "macro_f1": (f1 + _f1(neg_precision, neg_recall)) / 2,
        "undefined": flags + [f"macro_{flag}" for flag in neg_flags],
    }


@dataclass
class OpsRow:
    layer: int
    kind: str
    fan_in: int
    fan_out: int
    mean_events: float
    synaptic_ops: float
    ann_activations: int
    ann_macs: int
    beyond_dense: bool = False


@dataclass
class OpsReport:
    rows: list = field(default_factory=list)

    @property
    def totals(self):
        return {
            "mean_events": float(sum(r.mean_events for r in self.rows)),
            "synaptic_ops": float(sum(r.synaptic_ops for r in self.rows)),
            "ann_activations": int(sum(r.ann_activations for r in self.rows)),
            "ann_macs": int(sum(r.ann_macs for r in self.rows)),
        }

    def to_dict(self):
        return {"rows": [asdict(row) for row in self.rows], "totals": self.totals}

    def to_markdown(self):
        lines = ["| Layer | Events | Synapses | Activations | MACs |",
                 "|---|---:|---:|---:|---:|"]
        for row in self.rows:
            mark = " *" if row.beyond_dense else ""
            lines.append(f"| layer-{row.layer} ({row.kind}){mark} | {row.mean_events:.2f} | "
                         f"{row.synaptic_ops:,.2f} | {row.ann_activations:,} | {row.ann_macs:,} |")
        totals = self.totals
        lines.append(f"| Total | {totals['mean_events']:.2f} | {totals['synaptic_ops']:,.2f} | "
                     f"{totals['ann_activations']:,} | {totals['ann_macs']:,} |")
        if any(row.beyond_dense for row in self.rows):
            lines.append("")
            lines.append("\\* conv/pool accounting, beyond the dense-layer comparison")
        return "\n".join(lines) + "\n"


def accounted_layers(model):
    return [(index, layer) for index, layer in enumerate(model.layers) if layer.kind in ACCOUNTED_KINDS]


def recorded_events_in(model):
    """Mean events per timestep entering every accounted layer, from recorded statistics"""
    stats = model.mean_events()
    events = []
    for index, layer in accounted_layers(model):
        incoming = stats["input"] if index == 0 else stats["layers"][index - 1]
        if layer.kind == "recurrent":
            incoming += stats["layers"][index]
        events.append(incoming)
    return events


def count_ops(model, mean_events=None):
    """OpsReport from recorded statistics, or from explicit per-layer input events"""
    layers = accounted_layers(model)
    if mean_events is None:
        if not model.has_stats():
            raise DataError("model has no recorded spike statistics; evaluate it first")
        mean_events = recorded_events_in(model)
    mean_events = [float(e) for e in mean_events]
    if len(mean_events) != len(layers):
        raise DataError("one mean event count is needed per accounted layer",
                        expected=len(layers), got=len(mean_events))

    report = OpsReport()
    for (index, layer), events in zip(layers, mean_events):
        if layer.kind in ("dense", "recurrent"):
            fan_in, fan_out = layer.fan_in, layer.out_shape[0]
            row = OpsRow(index, layer.kind, fan_in, fan_out, events, events * fan_out,
                         fan_out, fan_in * fan_out)
        else:
            per_input = layer.synapses_per_input
            outputs = layer.fan_out
            if layer.kind == "conv2d":
                macs = layer.in_shape[0] * layer.out_shape[0] * layer.kernel ** 2 * \
                    layer.out_shape[1] * layer.out_shape[2]
            else:
                macs = outputs * layer.stride ** 2
            row = OpsRow(index, layer.kind, layer.fan_in, per_input, events, events * per_input,
                         outputs, int(macs), beyond_dense=True)
        report.rows.append(row)
    return report


@dataclass
class EvaluationResult:
    confusion: Confusion
    metrics: dict
    ops: OpsReport
    loss: float
    predictions: list

    def to_dict(self):
        return {"confusion": self.confusion.to_dict(), "metrics": self.metrics,
                "loss": self.loss, "ops": self.ops.to_dict()}


def evaluate(model, test_set, r_true=0.5, r_false=0.02, threads=1, batch_size=EVAL_BATCH):
    """Predict every sample, accumulating the confusion matrix and spike statistics.

    Chunks may run on worker threads; their results are merged in index order.
    """
    if not test_set:
        raise DataError("test set is empty")
    model.reset_stats()
    chunks = [test_set[start:start + batch_size] for start in range(0, len(test_set), batch_size)]

    def run_chunk(chunk):
        inputs = stack_inputs(chunk, model)
        outputs, caches = model.run(inputs, record=False)
        losses, _ = batch_loss(outputs, [t.label for t in chunk], r_true, r_false)
        return (losses, batch_predictions(outputs), inputs.shape[0] * inputs.shape[1],
                float(inputs.sum()), [cache["out_count"] for cache in caches])

    losses = []
    predictions = []
    for chunk_losses, chunk_predictions, steps, input_total, counts in thread_map(run_chunk, chunks, threads):
        losses.extend(chunk_losses.tolist())
        predictions.extend(int(p) for p in chunk_predictions)
        model.record(steps, input_total, counts)

    labels = [t.label for t in test_set]
    confusion = Confusion.from_predictions(labels, predictions)
    result = EvaluationResult(confusion, metrics(confusion), count_ops(model),
                              float(np.mean(losses)), predictions)
    logger.info(f"Evaluated {len(test_set)} samples: accuracy {result.metrics['accuracy']:.4f}, "
                f"f1 {result.metrics['f1']:.4f}, loss {result.loss:.5f}")
    return result


def write_report(result, run_dir, extra=None):
    """report.json plus report.md with the ops table"""
    data = result.to_dict()
    if extra:
        data.update(extra)
    with open(os.path.join(run_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)

    lines = []
    if isinstance(result, EvaluationResult):
        m = result.metrics
        c = result.confusion
        lines += ["# Evaluation", "",
                  f"- accuracy: {m['accuracy']:.4f}",
                  f"- precision / recall / f1 (saccade): {m['precision']:.4f} / {m['recall']:.4f} / {m['f1']:.4f}",
                  f"- macro precision / recall / f1: {m['macro_precision']:.4f} / "
                  f"{m['macro_recall']:.4f} / {m['macro_f1']:.4f}",
                  f"- loss: {result.loss:.5f}",
                  f"- confusion: tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}", ""]
        ops = result.ops
    else:
        ops = result
    lines += ["# Operations per timestep", "", ops.to_markdown()]
    with open(os.path.join(run_dir, "report.md"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines))
    logger.info(f"Wrote report to {run_dir}")
