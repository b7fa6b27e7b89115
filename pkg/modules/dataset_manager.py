import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from modules.event_io import read_events
from modules.exceptions import DataError
from modules.kinematics import CLASS_INDEX, LabelTrack
from modules.spike_codec import bin_events, class_counts, window_starts, balance_indices
from modules.utils import make_rng, thread_map

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
SPLITS = ("train", "test")


@dataclass
class Recording:
    event_file: str
    label_file: str
    eye: str = "left"


@dataclass
class ManifestEntry:
    event_file: str
    label: int
    t_start_us: int
    t_end_us: int


@dataclass
class DatasetManifest:
    """Labeled windows over EVB1 recordings, with a train/test split"""
    entries: list = field(default_factory=list)
    recordings: list = field(default_factory=list)
    splits: dict = field(default_factory=lambda: {"train": [], "test": []})
    window_ms: float = 33.0
    seed: int = 0
    width: int = 0
    height: int = 0

    @property
    def class_counts(self):
        return class_counts(entry.label for entry in self.entries)

    def split_entries(self, split):
        if split == "all":
            return list(self.entries)
        return [self.entries[i] for i in self.splits[split]]

    def validate(self):
        window_us = self.window_ms * 1000
        for entry in self.entries:
            if abs((entry.t_end_us - entry.t_start_us) - window_us) > 1:
                raise DataError("manifest entries have inconsistent window lengths",
                                entry=entry.event_file, window_ms=self.window_ms)
            if entry.label not in CLASS_INDEX.values():
                raise DataError("unknown class label in manifest", label=entry.label)
        seen = {}
        for split in SPLITS:
            for index in self.splits.get(split, []):
                if not 0 <= index < len(self.entries):
                    raise DataError("split index out of range", split=split, index=index)
                if index in seen:
                    raise DataError("train and test splits overlap",
                                    index=index, splits=(seen[index], split))
                seen[index] = split
        return self

    def to_dict(self, root):
        def rel(path):
            return os.path.relpath(path, root).replace(os.sep, "/")
        return {
            "version": MANIFEST_VERSION,
            "window_ms": self.window_ms,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "class_counts": self.class_counts,
            "recordings": [
                {"event_file": rel(r.event_file), "label_file": rel(r.label_file), "eye": r.eye}
                for r in self.recordings
            ],
            "entries": [
                {"event_file": rel(e.event_file), "label": e.label,
                 "t_start_us": e.t_start_us, "t_end_us": e.t_end_us}
                for e in self.entries
            ],
            "splits": {split: [int(i) for i in self.splits.get(split, [])] for split in SPLITS},
        }


def write_manifest(manifest, path):
    """Write a manifest with paths relative to its own directory"""
    manifest.validate()
    root = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(root), f, indent=2)
    logger.info(f"Wrote manifest with {len(manifest.entries)} entries to {path}")


def read_manifest(path):
    """Load and validate a manifest; every referenced file must exist"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise DataError(f"Manifest not found: {path}", path=str(path))
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed manifest JSON in {path}: {e}", path=str(path))

    root = os.path.dirname(os.path.abspath(path))

    def resolve(relative):
        full = os.path.normpath(os.path.join(root, relative))
        if not os.path.exists(full):
            raise DataError(f"Manifest references a missing file: {full}", path=full)
        return full

    try:
        manifest = DatasetManifest(
            entries=[
                ManifestEntry(resolve(e["event_file"]), int(e["label"]),
                              int(e["t_start_us"]), int(e["t_end_us"]))
                for e in data["entries"]
            ],
            recordings=[
                Recording(resolve(r["event_file"]), resolve(r["label_file"]), r.get("eye", "left"))
                for r in data.get("recordings", [])
            ],
            splits={split: [int(i) for i in data["splits"].get(split, [])] for split in SPLITS},
            window_ms=float(data["window_ms"]),
            seed=int(data.get("seed", 0)),
            width=int(data.get("width", 0)),
            height=int(data.get("height", 0)),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise DataError(f"Malformed manifest {path}: {e}", path=str(path))
    return manifest.validate()


def stratified_split(labels, test_fraction, seed, groups=None):
    """Per-class shuffled split; returns sorted (train, test) index lists.

    Windows sharing a group id land in the same split.
    """
    labels = np.asarray(labels)
    groups = np.arange(len(labels)) if groups is None else np.asarray(groups)
    ids, first = np.unique(groups, return_index=True)
    group_labels = labels[first]
    rng = make_rng(seed, 2)
    test_groups = []
    for c in np.unique(group_labels):
        members = rng.permutation(ids[group_labels == c])
        n_test = int(round(len(members) * test_fraction))
        test_groups.extend(members[:n_test].tolist())
    in_test = np.isin(groups, test_groups)
    return np.flatnonzero(~in_test).tolist(), np.flatnonzero(in_test).tolist()


def stratified_subset(indices, labels, fraction, seed):
    """ceil(fraction * N) indices keeping the class ratio"""
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    total = int(math.ceil(fraction * len(indices) - 1e-9))
    if total == 0:
        return []
    rng = make_rng(seed, 3)
    classes = np.unique(labels)
    quotas = {c: np.sum(labels == c) * total / len(indices) for c in classes}
    counts = {c: int(math.floor(q)) for c, q in quotas.items()}
    # Hand out the remainder to the largest fractional parts
    for c in sorted(classes, key=lambda c: (-(quotas[c] - counts[c]), c))[:total - sum(counts.values())]:
        counts[c] += 1
    chosen = []
    for c in classes:
        members = indices[labels == c]
        chosen.extend(rng.choice(members, size=counts[c], replace=False).tolist())
    return sorted(int(i) for i in chosen)


class DatasetManager:
    """Builds manifests from recordings and materializes spike tensors"""

    def __init__(self, bin_ms=1.0, downscale=1, threads=1):
        self.bin_ms = bin_ms
        self.downscale = downscale
        self.threads = threads
        self._streams = {}

    def stream(self, event_file, duration_us=None):
        if event_file not in self._streams:
            self._streams[event_file] = read_events(event_file, duration_us=duration_us)
        return self._streams[event_file]

    def build_manifest(self, recordings, window_ms, seed, test_fraction=0.2, balance=True,
                       tolerance=0.1, width=0, height=0):
        """Slice every recording's label track into windows and split them.

        Recordings sharing a label file (both eyes of one session) see the same
        scene, so same-time windows across them are balanced and split as a unit.
        """
        entries, groups, keys = [], [], {}
        for recording in recordings:
            labels = LabelTrack.load(recording.label_file)
            label_key = os.path.abspath(recording.label_file)
            for start, label in window_starts(labels, window_ms, labels.duration_us()):
                entries.append(ManifestEntry(recording.event_file, label, start,
                                             int(round(start + window_ms * 1000))))
                groups.append(keys.setdefault((label_key, start), len(keys)))
        if not entries:
            raise DataError("no labeled window fits in the recordings", window_ms=window_ms)

        if balance:
            keep = balance_indices([e.label for e in entries], seed, tolerance, groups)
            entries = [entries[i] for i in keep]
            groups = [groups[i] for i in keep]
        train, test = stratified_split([e.label for e in entries], test_fraction, seed, groups)

        manifest = DatasetManifest(entries, list(recordings), {"train": train, "test": test},
                                   float(window_ms), int(seed), int(width), int(height))
        counts = manifest.class_counts
        logger.info(f"Dataset at {window_ms:g} ms: {counts['fixation']} fixation / "
                    f"{counts['saccade']} saccade windows ({len(train)} train, {len(test)} test)")
        return manifest.validate()

    def _durations(self, manifest):
        durations = {}
        for recording in manifest.recordings:
            durations[recording.event_file] = LabelTrack.load(recording.label_file).duration_us()
        return durations

    def load_tensors(self, manifest, split="train"):
        """Recompute spike tensors for a split from the event files"""
        entries = manifest.split_entries(split)
        durations = self._durations(manifest)
        for event_file in sorted({e.event_file for e in entries}):
            self.stream(event_file, durations.get(event_file))

        def load(entry):
            stream = self._streams[entry.event_file]
            return bin_events(stream, entry.t_start_us, manifest.window_ms, self.bin_ms,
                              self.downscale, entry.label, os.path.basename(entry.event_file))

        tensors = thread_map(load, entries, self.threads)
        logger.info(f"Loaded {len(tensors)} {split} tensors")
        return tensors
