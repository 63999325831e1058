"""Dataset schema, on-disk layout, and the train/test split rules.

Disk layout: ``<root>/<subject_id>/<class_name>/<idx>.skel.json`` holds one
gesture sample as JSON (``fps``, ``frames`` with per-frame ``t``,
``joints3d`` 25x3 and optional ``joints2d`` 25x2).  A sibling
``<idx>.hpv`` file, when present, carries the pair of hand-patch volumes:
magic ``HPV1``, five little-endian u32 (hands=2, F, H, W, C), then
hands*F*H*W*C float32 values in [0, 1], left hand first.

Sample identity is (subject_id, class_label, file stem); splits are audited
against it, so duplicates are refused at load time.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .joints import NUM_JOINTS

HPV_MAGIC = b"HPV1"


@dataclass
class SkeletonFrame:
    """One tracked frame: timestamp plus camera-space (and optional image-plane) joints."""

    t: float
    joints3d: np.ndarray  # (25, 3) meters
    joints2d: Optional[np.ndarray] = None  # (25, 2) pixels

    def __eq__(self, other):
        if not isinstance(other, SkeletonFrame):
            return NotImplemented
        if self.t != other.t or not np.array_equal(self.joints3d, other.joints3d):
            return False
        if (self.joints2d is None) != (other.joints2d is None):
            return False
        return self.joints2d is None or np.array_equal(self.joints2d, other.joints2d)


@dataclass
class SignSample:
    """One gesture instance from one subject."""

    subject_id: str
    class_label: int
    frames: list
    fps: float = 30.0
    hand_volumes: Optional[Tuple[np.ndarray, np.ndarray]] = None  # (left, right)
    source: str = ""  # file stem; part of the sample identity

    @property
    def identity(self) -> tuple:
        return (self.subject_id, self.class_label, self.source)

    def __eq__(self, other):
        if not isinstance(other, SignSample):
            return NotImplemented
        if (
            self.subject_id != other.subject_id
            or self.class_label != other.class_label
            or self.fps != other.fps
            or self.source != other.source
            or len(self.frames) != len(other.frames)
        ):
            return False
        if any(a != b for a, b in zip(self.frames, other.frames)):
            return False
        if (self.hand_volumes is None) != (other.hand_volumes is None):
            return False
        if self.hand_volumes is not None:
            return all(
                np.array_equal(a, b) for a, b in zip(self.hand_volumes, other.hand_volumes)
            )
        return True


@dataclass
class Dataset:
    """A vocabulary, a subject roster, and the samples that go with them."""

    vocabulary: list
    subjects: list
    samples: list
    load_warnings: list = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.vocabulary)

    def validate(self) -> None:
        subjects = set(self.subjects)
        for s in self.samples:
            if s.subject_id not in subjects:
                raise ValueError(f"sample subject {s.subject_id!r} not in subject roster")
            if not 0 <= s.class_label < self.num_classes:
                raise ValueError(f"label {s.class_label} outside vocabulary of size {self.num_classes}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.subjects == other.subjects
            and self.samples == other.samples
        )


def _check_sample(sample: SignSample, num_classes: int) -> Optional[str]:
    """Return a reason string if the sample violates schema invariants."""
    if len(sample.frames) < 2:
        return "fewer than 2 frames"
    if not 0 <= sample.class_label < num_classes:
        return f"label {sample.class_label} out of range"
    last_t = -math.inf
    for f in sample.frames:
        if f.joints3d.shape != (NUM_JOINTS, 3):
            return f"joints3d shape {f.joints3d.shape} != (25, 3)"
        if not np.all(np.isfinite(f.joints3d)):
            return "non-finite joint coordinate"
        if f.joints2d is not None:
            if f.joints2d.shape != (NUM_JOINTS, 2):
                return f"joints2d shape {f.joints2d.shape} != (25, 2)"
            if not np.all(np.isfinite(f.joints2d)):
                return "non-finite 2D joint coordinate"
        if not (f.t > last_t):
            return "timestamps not strictly increasing"
        last_t = f.t
    return None


# --------------------------------------------------------------------------
# JSON / HPV serialization
# --------------------------------------------------------------------------

def _frame_to_json(f: SkeletonFrame) -> dict:
    d = {"t": float(f.t), "joints3d": f.joints3d.tolist()}
    if f.joints2d is not None:
        d["joints2d"] = f.joints2d.tolist()
    return d


def _frame_from_json(d: dict) -> SkeletonFrame:
    joints2d = d.get("joints2d")
    return SkeletonFrame(
        t=float(d["t"]),
        joints3d=np.asarray(d["joints3d"], dtype=np.float64),
        joints2d=None if joints2d is None else np.asarray(joints2d, dtype=np.float64),
    )


def write_sample_json(path, sample: SignSample) -> None:
    doc = {"fps": float(sample.fps), "frames": [_frame_to_json(f) for f in sample.frames]}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def read_sample_json(path) -> Tuple[float, list]:
    doc = json.loads(Path(path).read_text())
    return float(doc["fps"]), [_frame_from_json(f) for f in doc["frames"]]


def read_frames_json(path) -> list:
    """Frames from a stream file: a bare JSON frame list or a sample object."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = doc.get("frames")
    if not isinstance(doc, list):
        raise ValueError(f"{path}: expected a JSON list of skeleton frames")
    return [_frame_from_json(f) for f in doc]


def write_hpv(path, left: np.ndarray, right: np.ndarray) -> None:
    left = np.ascontiguousarray(left, dtype=np.float32)
    right = np.ascontiguousarray(right, dtype=np.float32)
    if left.shape != right.shape or left.ndim != 4:
        raise ValueError("hand volumes must be two equal-shape (F, H, W, C) arrays")
    f, h, w, c = left.shape
    with open(path, "wb") as fh:
        fh.write(HPV_MAGIC)
        fh.write(struct.pack("<5I", 2, f, h, w, c))
        fh.write(left.astype("<f4").tobytes())
        fh.write(right.astype("<f4").tobytes())


def read_hpv(path) -> Tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != HPV_MAGIC:
        raise ValueError(f"{path}: bad hand-volume magic")
    hands, f, h, w, c = struct.unpack("<5I", raw[4:24])
    if hands != 2:
        raise ValueError(f"{path}: expected 2 hands, header says {hands}")
    n = f * h * w * c
    body = np.frombuffer(raw[24:], dtype="<f4")
    if body.size != 2 * n:
        raise ValueError(f"{path}: payload size {body.size} != 2*{n}")
    vols = body.reshape(2, f, h, w, c)
    return np.array(vols[0]), np.array(vols[1])


# --------------------------------------------------------------------------
# Directory-tree load / save
# --------------------------------------------------------------------------

def save_dataset(dataset: Dataset, root) -> None:
    """Persist samples into the directory layout, one JSON (+ optional HPV) each."""
    root = Path(root)
    counters: dict = {}
    for s in dataset.samples:
        cls_name = dataset.vocabulary[s.class_label]
        key = (s.subject_id, s.class_label)
        idx = counters.get(key, 0)
        counters[key] = idx + 1
        d = root / s.subject_id / cls_name
        d.mkdir(parents=True, exist_ok=True)
        stem = s.source or f"{idx:03d}"
        write_sample_json(d / f"{stem}.skel.json", s)
        if s.hand_volumes is not None:
            write_hpv(d / f"{stem}.hpv", *s.hand_volumes)


def load_dataset(root) -> Dataset:
    """Load every parseable sample under ``root``.

    Vocabulary and subject roster are inferred from directory names
    (lexicographic order).  Malformed files are skipped with a warning kept
    on the returned Dataset; an unreadable root or an empty result is fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    subject_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    subjects = [d.name for d in subject_dirs]
    vocabulary = sorted(
        {c.name for sd in subject_dirs for c in sd.iterdir() if c.is_dir()}
    )
    label_of = {name: i for i, name in enumerate(vocabulary)}

    samples: list = []
    notes: list = []
    seen_ids: set = set()
    for sd in subject_dirs:
        for cd in sorted(c for c in sd.iterdir() if c.is_dir()):
            for f in sorted(cd.glob("*.skel.json")):
                stem = f.name[: -len(".skel.json")]
                try:
                    fps, frames = read_sample_json(f)
                except (ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
                    notes.append(f"{f}: unparseable ({e})")
                    continue
                sample = SignSample(
                    subject_id=sd.name,
                    class_label=label_of[cd.name],
                    frames=frames,
                    fps=fps,
                    source=stem,
                )
                reason = _check_sample(sample, len(vocabulary))
                if reason is not None:
                    notes.append(f"{f}: {reason}")
                    continue
                if sample.identity in seen_ids:
                    notes.append(f"{f}: duplicate sample identity {sample.identity}")
                    continue
                hpv = f.with_name(stem + ".hpv")
                if hpv.exists():
                    try:
                        sample.hand_volumes = read_hpv(hpv)
                    except ValueError as e:
                        notes.append(f"{hpv}: {e}")
                seen_ids.add(sample.identity)
                samples.append(sample)
    if not samples:
        raise ValueError(f"empty dataset under {root}")
    for note in notes:
        warnings.warn(note)
    return Dataset(vocabulary=vocabulary, subjects=subjects, samples=samples, load_warnings=notes)


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------

def split_cross_subject(dataset: Dataset, test_subject: str) -> Tuple[Dataset, Dataset]:
    """Hold out every sample of one subject; everything else trains."""
    if test_subject not in dataset.subjects:
        raise ValueError(f"unknown subject {test_subject!r}")
    test = [s for s in dataset.samples if s.subject_id == test_subject]
    train = [s for s in dataset.samples if s.subject_id != test_subject]
    if not test:
        warnings.warn(f"subject {test_subject!r} has no samples; empty test split")
    mk = lambda ss: Dataset(list(dataset.vocabulary), list(dataset.subjects), ss)
    return mk(train), mk(test)


def split_adaptation(
    dataset: Dataset, test_subject: str, fraction: float, seed: int
) -> Tuple[Dataset, Dataset]:
    """Cross-subject split plus a per-class slice of the test subject's data.

    The subject's samples are shuffled per class (seeded) and cut into a
    fixed held-out half (test) and a pool half.  ``floor(fraction / 0.5 *
    pool)`` pool samples per class join the training set.  The held-out
    half depends only on the seed, so accuracy curves over fractions are
    comparable, and the added pools are nested across fractions.
    """
    if not 0.0 <= fraction <= 0.5:
        raise ValueError(f"adaptation fraction must be in [0, 0.5], got {fraction}")
    if test_subject not in dataset.subjects:
        raise ValueError(f"unknown subject {test_subject!r}")
    rng = np.random.default_rng(
        np.random.SeedSequence((seed, _stable_key(test_subject), 0x5AD0))
    )
    train = [s for s in dataset.samples if s.subject_id != test_subject]
    test: list = []
    for label in range(dataset.num_classes):
        group = [
            s
            for s in dataset.samples
            if s.subject_id == test_subject and s.class_label == label
        ]
        order = rng.permutation(len(group))
        pool_n = len(group) // 2
        pool = [group[i] for i in order[:pool_n]]
        test.extend(group[i] for i in order[pool_n:])
        take = int(math.floor(fraction / 0.5 * pool_n))
        train.extend(pool[:take])
    test.sort(key=lambda s: s.identity)
    mk = lambda ss: Dataset(list(dataset.vocabulary), list(dataset.subjects), ss)
    return mk(train), mk(test)


def audit_disjoint(train: Dataset, test: Dataset) -> None:
    """Fail loudly if any sample identity appears on both sides of a split."""
    overlap = {s.identity for s in train.samples} & {s.identity for s in test.samples}
    if overlap:
        raise AssertionError(f"train/test overlap on {len(overlap)} sample(s): {sorted(overlap)[:3]}")


def _stable_key(name: str) -> int:
    # Python's hash() is salted per process; derive a stable int instead.
    acc = 0
    for ch in name.encode("utf-8"):
        acc = (acc * 131 + ch) % (2**31 - 1)
    return acc


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """A generator that depends only on (seed, stream name); cross-run stable."""
    return np.random.default_rng(np.random.SeedSequence((seed, _stable_key(stream))))


def subset_by_labels(dataset: Dataset, labels) -> Dataset:
    labels = set(labels)
    return replace(
        dataset,
        samples=[s for s in dataset.samples if s.class_label in labels],
        load_warnings=[],
    )
