"""Parametric multi-subject gesture synthesizer.

Each class owns a motion prototype: for every upper-body joint axis a sum
of 2-4 sinusoids with class-specific frequencies, phases and amplitudes,
riding on a class-specific rest pose.  Subjects add an affine layer (global
offset, scale, speed) and every sample gets i.i.d. coordinate noise.

Two kinds of deliberately confusable class pairs can be configured:

* twin pairs share one motion prototype *and* one per-sample noise stream,
  so matched samples have bit-identical skeletons and differ only in their
  procedural hand textures;
* relation pairs share wrist trajectories and differ only by a constant
  offset of the elbow/shoulder joints, i.e. the class signal lives in
  wrist-relative geometry and is dwarfed by the per-subject global offset
  in absolute coordinates.

Everything is a pure function of the config: the same seed yields a
bit-identical dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .data import Dataset, SignSample, SkeletonFrame, _stable_key
from .joints import NUM_JOINTS, UPPER_BODY_JOINTS

# Rest pose, camera space (x right, y up, z away), subject ~2.8 m out.
_FULL_BASE = np.zeros((NUM_JOINTS, 3))
_FULL_BASE[:, 2] = 2.8
_POSE = {
    0: (0.0, -0.3, 2.8),  # spine base
    1: (0.0, 0.1, 2.8),  # spine mid
    2: (0.0, 0.5, 2.8),  # neck
    3: (0.0, 0.65, 2.8),  # head
    4: (-0.18, 0.42, 2.8),  # shoulder L
    5: (-0.26, 0.15, 2.78),  # elbow L
    6: (-0.24, -0.02, 2.62),  # wrist L
    7: (-0.24, -0.06, 2.58),  # hand L
    8: (0.18, 0.42, 2.8),  # shoulder R
    9: (0.26, 0.15, 2.78),  # elbow R
    10: (0.24, -0.02, 2.62),  # wrist R
    11: (0.24, -0.06, 2.58),  # hand R
    12: (-0.09, -0.35, 2.8),
    13: (-0.1, -0.75, 2.8),
    14: (-0.1, -1.1, 2.8),
    15: (-0.1, -1.2, 2.75),
    16: (0.09, -0.35, 2.8),
    17: (0.1, -0.75, 2.8),
    18: (0.1, -1.1, 2.8),
    19: (0.1, -1.2, 2.75),
    20: (0.0, 0.38, 2.8),
    21: (-0.24, -0.1, 2.55),
    22: (-0.2, -0.05, 2.57),
    23: (0.24, -0.1, 2.55),
    24: (0.2, -0.05, 2.57),
}
for _j, _p in _POSE.items():
    _FULL_BASE[_j] = _p

_DESIGNATED = np.array([int(j) for j in UPPER_BODY_JOINTS])
# Per-joint motion amplitude scale: wrists move, elbows follow, shoulders sway.
_AMP_SCALE = np.array([0.14, 0.14, 0.07, 0.07, 0.02, 0.02])
_MAX_COMPONENTS = 4

# Synthetic pinhole camera for the optional image-plane joints.
_CAM_F, _CAM_CX, _CAM_CY = 1000.0, 960.0, 540.0


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 20
    num_subjects: int = 12
    samples_per_class_per_subject: int = 4
    frame_length_range: Tuple[int, int] = (28, 48)
    noise_sigma: float = 0.01
    scale_range: Tuple[float, float] = (0.92, 1.08)
    offset_range: float = 0.25
    speed_range: Tuple[float, float] = (0.8, 1.25)
    twin_class_pairs: Tuple[Tuple[int, int], ...] = ()
    relation_class_pairs: Tuple[Tuple[int, int], ...] = ()
    relation_offset: float = 0.07
    with_hand_volumes: bool = True
    hand_frames: int = 15
    hand_size: int = 16
    fps: float = 30.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.num_classes <= 0 or self.num_subjects <= 0:
            raise ValueError("need at least one class and one subject")
        if self.samples_per_class_per_subject <= 0:
            raise ValueError("samples_per_class_per_subject must be positive")
        lo, hi = self.frame_length_range
        if not (2 <= lo <= hi):
            raise ValueError(f"bad frame_length_range {self.frame_length_range}")
        for lo, hi in (self.scale_range, self.speed_range):
            if not (0 < lo <= hi):
                raise ValueError("ranges must be nonempty and positive")
        paired: set = set()
        for a, b in tuple(self.twin_class_pairs) + tuple(self.relation_class_pairs):
            if not (0 <= a < self.num_classes and 0 <= b < self.num_classes) or a == b:
                raise ValueError(f"bad class pair ({a}, {b})")
            if a in paired or b in paired:
                raise ValueError(f"class pair ({a}, {b}) overlaps another pair")
            paired.update((a, b))


def _rng(cfg: SynthConfig, *key) -> np.random.Generator:
    ints = tuple(k if isinstance(k, int) else _stable_key(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence((cfg.rng_seed,) + ints))


@dataclass
class _MotionProto:
    base: np.ndarray  # (6, 3)
    amp: np.ndarray  # (6, 3, K)
    freq: np.ndarray  # (6, 3, K) cycles per gesture
    phase: np.ndarray  # (6, 3, K)


def _build_protos(cfg: SynthConfig) -> list:
    protos = []
    for c in range(cfg.num_classes):
        rng = _rng(cfg, "proto", c)
        base = _FULL_BASE[_DESIGNATED] + rng.uniform(-0.05, 0.05, (6, 3))
        count = rng.integers(2, _MAX_COMPONENTS + 1, (6, 3))
        amp = rng.uniform(0.3, 1.0, (6, 3, _MAX_COMPONENTS))
        amp *= _AMP_SCALE[:, None, None] / count[:, :, None]
        mask = np.arange(_MAX_COMPONENTS)[None, None, :] < count[:, :, None]
        amp *= mask
        freq = rng.uniform(0.5, 2.5, (6, 3, _MAX_COMPONENTS))
        phase = rng.uniform(0.0, 2 * np.pi, (6, 3, _MAX_COMPONENTS))
        protos.append(_MotionProto(base, amp, freq, phase))
    for a, b in cfg.relation_class_pairs:
        src = protos[a]
        rng = _rng(cfg, "relation", a, b)
        base = src.base.copy()
        delta = rng.uniform(0.04, cfg.relation_offset, (4, 3)) * rng.choice((-1.0, 1.0), (4, 3))
        base[2:] += delta  # elbows and shoulders only; wrists stay shared
        protos[b] = _MotionProto(base, src.amp.copy(), src.freq.copy(), src.phase.copy())
    return protos


def _subject_affine(cfg: SynthConfig, s_idx: int):
    rng = _rng(cfg, "subject", s_idx)
    scale = rng.uniform(*cfg.scale_range)
    offset = rng.uniform(-cfg.offset_range, cfg.offset_range, 3)
    speed = rng.uniform(*cfg.speed_range)
    return scale, offset, speed


def _project2d(joints3d: np.ndarray) -> np.ndarray:
    z = np.maximum(joints3d[..., 2], 0.1)
    u = _CAM_CX + _CAM_F * joints3d[..., 0] / z
    v = _CAM_CY - _CAM_F * joints3d[..., 1] / z
    return np.stack([u, v], axis=-1)


@dataclass
class _Texture:
    theta1: float
    freq1: float
    phase1: float
    theta2: float
    freq2: float
    phase2: float
    gains: np.ndarray  # (3,) per-channel
    brightness: float


def _class_textures(cfg: SynthConfig, c: int) -> Tuple[_Texture, _Texture]:
    rng = _rng(cfg, "texture", c)
    out = []
    for _hand in range(2):
        out.append(
            _Texture(
                theta1=rng.uniform(0, np.pi),
                freq1=rng.uniform(2.0, 6.0),
                phase1=rng.uniform(0, 2 * np.pi),
                theta2=rng.uniform(0, np.pi),
                freq2=rng.uniform(4.0, 9.0),
                phase2=rng.uniform(0, 2 * np.pi),
                gains=rng.uniform(0.55, 1.0, 3),
                brightness=rng.uniform(0.4, 0.6),
            )
        )
    return out[0], out[1]


def _render_hand(
    tex: _Texture, cfg: SynthConfig, rng: np.random.Generator
) -> np.ndarray:
    n, size = cfg.hand_frames, cfg.hand_size
    grid = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    u1 = xx * np.cos(tex.theta1) + yy * np.sin(tex.theta1)
    u2 = xx * np.cos(tex.theta2) + yy * np.sin(tex.theta2)
    contrast = rng.uniform(0.7, 1.0)
    drift = rng.uniform(0.1, 0.5)
    frames = np.empty((n, size, size, 3), dtype=np.float64)
    for f in range(n):
        wave = 0.28 * np.sin(2 * np.pi * tex.freq1 * u1 + tex.phase1 + f * drift)
        wave += 0.18 * np.sin(2 * np.pi * tex.freq2 * u2 + tex.phase2 - f * drift)
        mono = tex.brightness + contrast * wave
        frames[f] = mono[:, :, None] * tex.gains[None, None, :]
    frames += rng.normal(0.0, 0.04, frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Generate a full multi-subject dataset from the config (pure function)."""
    cfg.validate()
    protos = _build_protos(cfg)
    # Twins reuse the source class's prototype *and* per-sample noise stream,
    # so matched samples come out with identical skeletons.
    motion_source = {b: a for a, b in cfg.twin_class_pairs}

    vocabulary = [f"class_{c:03d}" for c in range(cfg.num_classes)]
    subjects = [f"subj{s:02d}" for s in range(cfg.num_subjects)]
    lo, hi = cfg.frame_length_range
    samples = []
    for s_idx, subject in enumerate(subjects):
        scale, offset, speed = _subject_affine(cfg, s_idx)
        for c in range(cfg.num_classes):
            mc = motion_source.get(c, c)
            proto = protos[mc]
            textures = _class_textures(cfg, c)
            for i in range(cfg.samples_per_class_per_subject):
                rng = _rng(cfg, "sample", s_idx, mc, i)
                t_raw = int(rng.integers(lo, hi + 1))
                t_len = max(2, int(round(t_raw / speed)))
                u = np.linspace(0.0, 1.0, t_len)
                arg = 2 * np.pi * proto.freq[None] * u[:, None, None, None] + proto.phase[None]
                motion = (proto.amp[None] * np.sin(arg)).sum(axis=-1)
                jitter = 1.0 + 0.05 * rng.standard_normal()
                traj = proto.base[None] + jitter * motion  # (T, 6, 3)

                body = np.tile(_FULL_BASE, (t_len, 1, 1))
                body[:, _DESIGNATED, :] = traj
                body = offset[None, None, :] + scale * body
                body += rng.normal(0.0, cfg.noise_sigma, body.shape)
                joints2d = _project2d(body)

                frames = [
                    SkeletonFrame(t=t / cfg.fps, joints3d=body[t], joints2d=joints2d[t])
                    for t in range(t_len)
                ]
                hand_volumes = None
                if cfg.with_hand_volumes:
                    hrng = _rng(cfg, "hands", s_idx, c, i)
                    hand_volumes = (
                        _render_hand(textures[0], cfg, hrng),
                        _render_hand(textures[1], cfg, hrng),
                    )
                samples.append(
                    SignSample(
                        subject_id=subject,
                        class_label=c,
                        frames=frames,
                        fps=cfg.fps,
                        hand_volumes=hand_volumes,
                        source=f"{i:03d}",
                    )
                )
    return Dataset(vocabulary=vocabulary, subjects=subjects, samples=samples)
