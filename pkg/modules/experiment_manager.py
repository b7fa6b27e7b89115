"""Experiment orchestration behind the command-line subcommands.

Every command writes into one output directory and re-emits the resolved
config there, so a run can be repeated from that directory alone.
"""

import json
import logging
import os

import pandas as pd

from modules.checkpoint_handler import load_checkpoint
from modules.dataset_manager import MANIFEST_NAME, DatasetManager, Recording, read_manifest, write_manifest
from modules.evaluation_manager import count_ops, evaluate, write_report
from modules.event_io import write_evb1
from modules.event_sim import EventSimulator, write_event_frames
from modules.exceptions import ConfigError, DataError
from modules.kinematics import generate_labeled_schedule
from modules.render import read_pgm_frames, render_sequence, write_pgm_frames
from modules.snn_core import build_conv_snn, build_dense_snn
from modules.training_manager import bptt_train, finetune
from modules.utils import ensure_dir, make_rng

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["ts_ms", "accuracy", "loss", "precision", "recall", "f1"]
BENCHMARK_COLUMNS = ["model", "accuracy", "loss", "precision", "recall", "f1"]
FINETUNE_COLUMNS = ["fraction", "samples", "accuracy", "loss", "precision", "recall", "f1"]
EYES = ("left", "right")


def derive_seed(seed, *keys):
    """Independent 31-bit seed for a named sub-stream of the run seed"""
    return int(make_rng(seed, *keys).integers(0, 2 ** 31 - 1))


def _row(result, **leading):
    m = result.metrics
    return {**leading, "accuracy": m["accuracy"], "loss": result.loss,
            "precision": m["precision"], "recall": m["recall"], "f1": m["f1"]}


class ExperimentManager:
    """Runs gen / simulate / train / eval / finetune / sweep / ops / benchmark"""

    def __init__(self, config):
        self.config = config

    @property
    def out(self):
        return self.config.get("out")

    def _dataset_dir(self):
        dataset = self.config.get("dataset")
        if not dataset:
            raise ConfigError("a dataset directory is required (--dataset)")
        return dataset

    def _dataset_manager(self):
        return DatasetManager(self.config.get("codec", "bin_ms"), self.config.get("codec", "downscale"),
                              self.config.threads)

    def _manifest(self):
        return read_manifest(os.path.join(self._dataset_dir(), MANIFEST_NAME))

    def _slice(self, manifest, window_ms, out_dir):
        """Re-slice a dataset's recordings at another window length"""
        codec = self.config.config["codec"]
        resliced = self._dataset_manager().build_manifest(
            manifest.recordings, window_ms, manifest.seed, codec["test_fraction"], codec["balance"],
            codec["tolerance"], manifest.width, manifest.height)
        write_manifest(resliced, os.path.join(ensure_dir(out_dir), MANIFEST_NAME))
        return resliced

    def _load_splits(self, manifest):
        dm = self._dataset_manager()
        train = dm.load_tensors(manifest, "train")
        test = dm.load_tensors(manifest, "test")
        if not train or not test:
            raise DataError("dataset needs non-empty train and test splits",
                            train=len(train), test=len(test))
        return train, test

    def build_model(self, height, width, arch=None):
        model_cfg = self.config.config["model"]
        arch = arch or model_cfg["arch"]
        params = self.config.cuba_params()
        if arch == "dense":
            return build_dense_snn(height, width, tuple(model_cfg["hidden"]), params=params,
                                   seed=self.config.seed, init_gain=model_cfg["init_gain"],
                                   dropout=model_cfg["dropout"], max_delay=model_cfg["max_delay"])
        if arch == "conv":
            return build_conv_snn(height, width, tuple(model_cfg["conv_channels"]), model_cfg["kernel"],
                                  model_cfg["conv_dense"], model_cfg["conv_recurrent"], params=params,
                                  seed=self.config.seed, init_gain=model_cfg["init_gain"],
                                  dropout=model_cfg["conv_dropout"], max_delay=model_cfg["max_delay"])
        raise ConfigError(f"Unknown architecture {arch!r}", arch=arch)

    def _evaluate(self, model, test, run_dir, extra=None):
        train_cfg = self.config.train_config()
        result = evaluate(model, test, train_cfg.r_true, train_cfg.r_false, self.config.threads,
                          self.config.get("eval", "batch_size"))
        if run_dir:
            write_report(result, run_dir, extra)
        return result

    # commands

    def gen(self):
        """kinematics -> render -> event simulation -> EVB1 + labels + manifest"""
        out = ensure_dir(self.out)
        kin = self.config.config["kinematics"]
        render = self.config.config["render"]
        codec = self.config.config["codec"]
        appearance = self.config.appearance()
        seed = self.config.seed
        eyes = EYES if kin["binocular"] else EYES[:1]

        recordings = []
        for index in range(int(kin["recordings"])):
            samples, labels = generate_labeled_schedule(
                kin["duration_ms"], kin["max_angle_deg"], derive_seed(seed, 6, index),
                tuple(kin["fix_range_ms"]), tuple(kin["sac_range_ms"]), kin["sample_rate_hz"],
                kin["min_amplitude_deg"])
            sequence = render_sequence(samples, appearance, render["width"], render["height"],
                                       render["fps"], self.config.threads)
            if render["dump_frames"]:
                write_pgm_frames(sequence, os.path.join(out, f"frames_{index:02d}"))
            label_file = os.path.join(out, f"rec_{index:02d}.labels.json")
            labels.save(label_file)
            # Both eyes share gaze and labels; only the sensor noise differs
            for eye_index, eye in enumerate(eyes):
                simulator = EventSimulator(self.config.sim_config(derive_seed(seed, 7, index, eye_index)))
                event_file = os.path.join(out, f"rec_{index:02d}_{eye}.evb1")
                stream = simulator.simulate(sequence, labels.duration_us())
                write_evb1(event_file, stream)
                if render["dump_frames"]:
                    write_event_frames(stream, os.path.join(out, f"events_{index:02d}_{eye}"),
                                       codec["window_ms"] * 1000)
                recordings.append(Recording(event_file, label_file, eye))

        manifest = self._dataset_manager().build_manifest(
            recordings, codec["window_ms"], seed, codec["test_fraction"], codec["balance"],
            codec["tolerance"], render["width"], render["height"])
        write_manifest(manifest, os.path.join(out, MANIFEST_NAME))
        self.config.save(out)
        return manifest

    def simulate(self, frames_dir, output=None):
        """Standalone PGM frames -> EVB1 conversion"""
        out = ensure_dir(self.out)
        sequence = read_pgm_frames(frames_dir, self.config.get("render", "fps"))
        stream = EventSimulator(self.config.sim_config()).simulate(sequence)
        path = output or os.path.join(out, "events.evb1")
        write_evb1(path, stream)
        self.config.save(out)
        return path, stream

    def train(self):
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        train, test = self._load_splits(self._manifest())
        height, width = train[0].geometry
        model = self.build_model(height, width)
        model, history = bptt_train(model, train, test, self.config.train_config(), run_dir)
        result = self._evaluate(model, test, run_dir)
        return model, history, result

    def evaluate(self, checkpoint):
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        model, _ = load_checkpoint(checkpoint)
        _, test = self._load_splits(self._manifest())
        return self._evaluate(model, test, run_dir, {"checkpoint": os.path.abspath(checkpoint)})

    def finetune(self, checkpoint=None, fractions=None):
        """Zero-shot evaluation, then finetuning from the checkpoint on each fraction"""
        checkpoint = checkpoint or self.config.get("finetune", "checkpoint")
        if not checkpoint:
            raise ConfigError("finetune needs a pretrained checkpoint (--checkpoint)")
        fractions = fractions or self.config.get("finetune", "fractions")
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        train, test = self._load_splits(self._manifest())
        train_cfg = self.config.train_config()

        rows = []
        if self.config.get("finetune", "zero_shot"):
            model, _ = load_checkpoint(checkpoint)
            result = self._evaluate(model, test, ensure_dir(os.path.join(run_dir, "zero_shot")))
            rows.append(_row(result, fraction=0.0, samples=0))

        chosen_log = {}
        for fraction in fractions:
            sub_dir = ensure_dir(os.path.join(run_dir, f"fraction_{fraction:g}"))
            model, _ = load_checkpoint(checkpoint)
            model, _, chosen = finetune(model, float(fraction), train, test, train_cfg, sub_dir)
            chosen_log[f"{fraction:g}"] = {"samples": len(chosen), "indices": chosen}
            result = self._evaluate(model, test, sub_dir)
            rows.append(_row(result, fraction=float(fraction), samples=len(chosen)))

        with open(os.path.join(run_dir, "finetune_manifest.json"), "w", encoding="utf-8") as f:
            json.dump({"checkpoint": os.path.abspath(checkpoint), "train_size": len(train),
                       "fractions": chosen_log}, f, indent=2)
        frame = pd.DataFrame(rows, columns=FINETUNE_COLUMNS)
        frame.to_csv(os.path.join(run_dir, "finetune.csv"), index=False)
        return frame

    def sweep(self, ts_list=None):
        """Re-slice, train and evaluate at every window length"""
        ts_list = ts_list or self.config.get("sweep", "ts_list")
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        manifest = self._manifest()
        rows = []
        for ts in ts_list:
            sub_dir = os.path.join(run_dir, f"ts_{ts:g}")
            logger.info(f"Sweep: window {ts:g} ms")
            train, test = self._load_splits(self._slice(manifest, float(ts), sub_dir))
            height, width = train[0].geometry
            model = self.build_model(height, width)
            model, _ = bptt_train(model, train, test, self.config.train_config(), sub_dir)
            rows.append(_row(self._evaluate(model, test, sub_dir), ts_ms=float(ts)))
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        frame.to_csv(os.path.join(run_dir, "sweep.csv"), index=False)
        return frame

    def benchmark(self, archs=None):
        """Train every architecture on the same split and compare"""
        archs = archs or self.config.get("benchmark", "archs")
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        train, test = self._load_splits(self._manifest())
        height, width = train[0].geometry
        rows = []
        for arch in archs:
            sub_dir = os.path.join(run_dir, arch)
            model = self.build_model(height, width, arch)
            logger.info(f"Benchmark: {arch} model with {model.parameter_count()} parameters")
            model, _ = bptt_train(model, train, test, self.config.train_config(), sub_dir)
            rows.append(_row(self._evaluate(model, test, sub_dir), model=arch))
        frame = pd.DataFrame(rows, columns=BENCHMARK_COLUMNS)
        frame.to_csv(os.path.join(run_dir, "benchmark.csv"), index=False)
        return frame

    def ops(self, checkpoint=None, arch=None, height=None, width=None, events=None):
        """Operation table from a checkpoint's evaluation statistics or explicit event counts"""
        run_dir = ensure_dir(self.out)
        self.config.save(run_dir)
        if checkpoint:
            model, _ = load_checkpoint(checkpoint)
        else:
            if height is None or width is None:
                raise ConfigError("ops without a checkpoint needs --height and --width")
            model = self.build_model(int(height), int(width), arch)

        if events is not None:
            report = count_ops(model, events)
        elif checkpoint and self.config.get("dataset"):
            _, test = self._load_splits(self._manifest())
            self._evaluate(model, test, None)
            report = count_ops(model)
        else:
            raise ConfigError("ops needs --dataset with --checkpoint, or explicit --events")
        write_report(report, run_dir)
        return report
