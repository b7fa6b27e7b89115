"""Surrogate-gradient BPTT training with the spike-rate loss."""

import logging
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd
from tqdm import tqdm

from modules.checkpoint_handler import save_checkpoint
from modules.dataset_manager import stratified_subset
from modules.exceptions import ConfigError, DataError, DivergenceError
from modules.optimizer import AdamW
from modules.utils import make_rng, progress_enabled, ensure_dir, format_seconds

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "loss", "train_acc", "eval_acc", "seconds"]
EVAL_BATCH = 32


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 0.01
    weight_decay: float = 1e-4
    r_true: float = 0.5
    r_false: float = 0.02
    seed: int = 0
    weight_norm: bool = True
    detach_reset: bool = False
    checkpoint_every: int = 10
    record_seconds: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1",
                              epochs=self.epochs, batch_size=self.batch_size)
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be non-negative")
        if not 0.0 <= self.r_false < self.r_true <= 1.0:
            raise ConfigError("target rates need 0 <= r_false < r_true <= 1",
                              r_true=self.r_true, r_false=self.r_false)


@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    eval_acc: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def append(self, epoch, loss, train_acc, eval_acc, seconds):
        self.epoch.append(int(epoch))
        self.loss.append(float(loss))
        self.train_acc.append(float(train_acc))
        self.eval_acc.append(float(eval_acc))
        self.seconds.append(float(seconds))

    def to_frame(self):
        return pd.DataFrame(asdict(self), columns=HISTORY_COLUMNS)

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def rate_targets(num_classes, labels, r_true, r_false):
    """(B, C) target rates: r_true on each label's class, r_false elsewhere"""
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    targets = np.full((len(labels), num_classes), float(r_false))
    targets[np.arange(len(labels)), labels] = r_true
    return targets


def spike_rate_loss(output_trains, label, r_true, r_false):
    """0.5 * sum_c (observed rate - target rate)^2 for one C x T spike train"""
    trains = np.asarray(output_trains, dtype=np.float64)
    if trains.ndim != 2 or trains.shape[0] < 2 or trains.shape[1] < 1:
        raise DataError("spike_rate_loss needs a C x T train with C >= 2 and T >= 1",
                        shape=trains.shape)
    rates = trains.mean(axis=1)
    targets = rate_targets(trains.shape[0], [label], r_true, r_false)[0]
    return float(0.5 * np.sum((rates - targets) ** 2))


def batch_loss(outputs, labels, r_true, r_false):
    """Per-sample losses of (B, T, C) outputs and dL/doutputs of their mean"""
    batch, steps, classes = outputs.shape
    diff = outputs.mean(axis=1) - rate_targets(classes, labels, r_true, r_false)
    losses = 0.5 * np.sum(diff ** 2, axis=1)
    grad = np.broadcast_to((diff / (steps * batch))[:, None, :], outputs.shape).copy()
    return losses, grad


def stack_inputs(tensors, model):
    """Stack spike tensors into a (B, T, 2, H, W) batch, checking geometry"""
    for tensor in tensors:
        if tensor.data.shape[:3] != model.input_shape:
            raise DataError("spike tensor geometry does not match the model",
                            expected=model.input_shape, got=tensor.data.shape[:3])
    steps = {tensor.timesteps for tensor in tensors}
    if len(steps) != 1:
        raise DataError("a batch mixes tensors with different timestep counts", timesteps=sorted(steps))
    return np.stack([tensor.as_input() for tensor in tensors])


def batch_predictions(outputs):
    """Class with most output spikes per sample; ties go to the lower index"""
    return np.argmax(outputs.sum(axis=1), axis=1)


def score(model, dataset, r_true, r_false, batch_size=EVAL_BATCH, record=False):
    """Mean loss, accuracy and predictions over a dataset, in index order"""
    if not dataset:
        raise DataError("cannot score an empty dataset")
    losses = []
    predictions = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        outputs, _ = model.run(stack_inputs(chunk, model), record=record)
        chunk_losses, _ = batch_loss(outputs, [t.label for t in chunk], r_true, r_false)
        losses.extend(chunk_losses.tolist())
        predictions.extend(batch_predictions(outputs).tolist())
    labels = np.array([t.label for t in dataset])
    accuracy = float(np.mean(np.array(predictions) == labels))
    return float(np.mean(losses)), accuracy, predictions


def _write_checkpoint(model, run_dir, name, epoch):
    if run_dir:
        save_checkpoint(model, os.path.join(run_dir, name), extra={"epoch": epoch})


def bptt_train(model, train_set, eval_set, config, run_dir=None):
    """Train with BPTT and AdamW; returns (model, TrainHistory).

    Shuffling and dropout draw from a per-epoch generator, and gradients are
    reduced over the batch axis in sample order, so a seed fixes the run.
    """
    if not train_set:
        raise DataError("training set is empty")
    stack_inputs(train_set[:1], model)
    if run_dir:
        ensure_dir(run_dir)

    optimizer = AdamW(model, config.learning_rate, config.weight_decay)
    history = TrainHistory()
    if config.weight_norm:
        # Fix the reference norms at the starting weights
        model.normalize_weights()
    best_acc = -1.0

    epochs = range(1, config.epochs + 1)
    bar = tqdm(epochs, desc="train", unit="epoch", disable=not progress_enabled() or not config.epochs)
    for epoch in bar:
        started = time.perf_counter()
        rng = make_rng(config.seed, 5, epoch)
        order = rng.permutation(len(train_set))
        total_loss = 0.0
        correct = 0

        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            labels = [t.label for t in batch]
            outputs, caches = model.run(stack_inputs(batch, model), train=True, rng=rng, record=False)
            losses, grad = batch_loss(outputs, labels, config.r_true, config.r_false)
            if not np.all(np.isfinite(losses)):
                raise DivergenceError("training loss became non-finite", epoch=epoch, batch_start=start)
            grads = model.backward(grad, caches, config.detach_reset)
            optimizer.step(grads)
            if config.weight_norm:
                model.normalize_weights()
            total_loss += float(losses.sum())
            correct += int(np.sum(batch_predictions(outputs) == np.array(labels)))

        train_loss = total_loss / len(train_set)
        train_acc = correct / len(train_set)
        if eval_set:
            _, eval_acc, _ = score(model, eval_set, config.r_true, config.r_false)
        else:
            eval_acc = train_acc
        seconds = time.perf_counter() - started if config.record_seconds else 0.0
        history.append(epoch, train_loss, train_acc, eval_acc, seconds)
        bar.set_postfix(loss=f"{train_loss:.4f}", eval_acc=f"{eval_acc:.3f}")
        logger.info(f"Epoch {epoch}/{config.epochs}: loss {train_loss:.5f}, "
                    f"train acc {train_acc:.3f}, eval acc {eval_acc:.3f} ({format_seconds(seconds)})")

        if config.checkpoint_every and epoch % config.checkpoint_every == 0:
            _write_checkpoint(model, run_dir, f"epoch_{epoch:04d}.snn", epoch)
        if eval_acc > best_acc:
            best_acc = eval_acc
            _write_checkpoint(model, run_dir, "best.snn", epoch)

    if run_dir:
        if not len(history):
            _write_checkpoint(model, run_dir, "best.snn", 0)
        _write_checkpoint(model, run_dir, "final.snn", len(history))
        history.write_csv(os.path.join(run_dir, "history.csv"))
    return model, history


def finetune(model, fraction, real_train, eval_set, config, run_dir=None):
    """Continue training on a stratified, seeded fraction of the real train split.

    Returns (model, history, chosen indices into real_train).
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("finetune fraction must lie in (0, 1]", fraction=fraction)
    labels = [t.label for t in real_train]
    chosen = stratified_subset(np.arange(len(real_train)), labels, fraction, config.seed)
    if not chosen:
        raise DataError("finetune fraction selects zero samples",
                        fraction=fraction, available=len(real_train))
    logger.info(f"Finetuning on {len(chosen)} of {len(real_train)} real samples (fraction {fraction:g})")
    subset = [real_train[i] for i in chosen]
    model, history = bptt_train(model, subset, eval_set, config, run_dir)
    return model, history, chosen
