"""Raw samples to fixed-shape model inputs.

Stream segmentation by wrist motion, joint selection, uniform temporal
resampling, wrist-origin spatial augmentation (6 -> 16 joints), per-axis
splitting, and hand-patch volume construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import SignSample, SkeletonFrame
from .joints import JointId, UPPER_BODY_JOINTS


class MissingHandDataError(ValueError):
    """Sample carries neither pre-rendered hand volumes nor image frames."""


@dataclass(frozen=True)
class SegmentParams:
    velocity_threshold: float = 0.01  # meters per frame
    smoothing_window: int = 5  # frames, odd
    min_segment_len: int = 10  # frames
    merge_gap: int = 8  # frames

    def validate(self) -> None:
        if self.velocity_threshold <= 0:
            raise ValueError("velocity_threshold must be positive")
        if self.smoothing_window <= 0 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be a positive odd integer")
        if self.min_segment_len <= 0 or self.merge_gap <= 0:
            raise ValueError("min_segment_len and merge_gap must be positive")


def _frames_array(frames: Sequence[SkeletonFrame]) -> np.ndarray:
    return np.stack([f.joints3d for f in frames])


def wrist_speed(frames: Sequence[SkeletonFrame]) -> np.ndarray:
    """Per-frame wrist speed in meters/frame.

    Central-difference velocity (one-sided at the ends) of each wrist joint;
    the per-frame score is the larger of the two wrists' speed norms.
    """
    if len(frames) < 2:
        raise ValueError("need at least 2 frames to estimate motion")
    pos = _frames_array(frames)[:, [int(JointId.WRIST_LEFT), int(JointId.WRIST_RIGHT)], :]
    vel = np.empty_like(pos)
    vel[1:-1] = (pos[2:] - pos[:-2]) / 2.0
    vel[0] = pos[1] - pos[0]
    vel[-1] = pos[-1] - pos[-2]
    return np.linalg.norm(vel, axis=2).max(axis=1)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window truncates at the edges."""
    if window <= 0 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(x, dtype=np.float64)])
    n = len(x)
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def segment_stream(
    frames: Sequence[SkeletonFrame], p: SegmentParams = SegmentParams()
) -> List[Tuple[int, int]]:
    """Split a skeleton stream into motion segments (half-open index ranges).

    A segment is a maximal run of frames whose smoothed wrist speed meets
    the velocity threshold.  Runs separated by fewer than merge_gap inactive
    frames are merged first; merged runs shorter than min_segment_len are
    then dropped.  The result is sorted and pairwise disjoint.
    """
    p.validate()
    speed = moving_average(wrist_speed(frames), p.smoothing_window)
    active = speed >= p.velocity_threshold
    runs: List[Tuple[int, int]] = []
    start: Optional[int] = None
    for t, on in enumerate(active):
        if on and start is None:
            start = t
        elif not on and start is not None:
            runs.append((start, t))
            start = None
    if start is not None:
        runs.append((start, len(active)))

    merged: List[Tuple[int, int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] < p.merge_gap:
            merged[-1] = (merged[-1][0], run[1])
        else:
            merged.append(run)
    return [(a, b) for a, b in merged if b - a >= p.min_segment_len]


def select_joints(
    s: SignSample, joints: Sequence[JointId] = UPPER_BODY_JOINTS
) -> np.ndarray:
    """T x len(joints) x 3 tensor of the requested joints, in the given order."""
    if not s.frames:
        raise ValueError("sample has no frames")
    return _frames_array(s.frames)[:, [int(j) for j in joints], :]


def uniform_indices(n: int, target: int) -> np.ndarray:
    """Indices of a uniform resample of an n-long sequence to target length.

    n >= target: round(linspace(0, n-1, target)) with a forward tie-shift so
    indices come out strictly increasing.  n < target: frame j of the output
    repeats source frame j*n // target, spreading repeats evenly.
    """
    if n < 1 or target < 1:
        raise ValueError("lengths must be positive")
    if n < target:
        return np.arange(target) * n // target
    idx = np.round(np.linspace(0.0, n - 1, target)).astype(np.int64)
    for i in range(1, target):
        if idx[i] <= idx[i - 1]:
            idx[i] = idx[i - 1] + 1
    if idx[-1] >= n:  # cannot happen for n >= target; guard stays cheap
        raise AssertionError("resample index overflow")
    return idx


def resample_uniform(x: np.ndarray, target_len: int = 20) -> np.ndarray:
    """Resample a T x J x 3 tensor to exactly target_len frames."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] < 1:
        raise ValueError(f"expected a nonempty T x J x 3 tensor, got shape {x.shape}")
    return x[uniform_indices(x.shape[0], target_len)]


# Canonical 6-joint order is (WristL, WristR, ElbowL, ElbowR, ShoulderL,
# ShoulderR); the two relative blocks keep that order minus the origin wrist.
_NON_LEFT = (1, 2, 3, 4, 5)
_NON_RIGHT = (0, 2, 3, 4, 5)


def spatial_augment(x: np.ndarray, frames: int = 20) -> np.ndarray:
    """Origin-transfer augmentation: T x 6 x 3 -> T x 16 x 3.

    Output joints 0-5 are the input; 6-10 are the five non-left-wrist joints
    with the left wrist subtracted per frame; 11-15 likewise for the right
    wrist.  Global translations therefore shift only joints 0-5.
    """
    x = np.asarray(x)
    if x.shape != (frames, 6, 3):
        raise ValueError(f"expected shape ({frames}, 6, 3), got {x.shape}")
    rel_left = x[:, _NON_LEFT, :] - x[:, 0:1, :]
    rel_right = x[:, _NON_RIGHT, :] - x[:, 1:2, :]
    return np.concatenate([x, rel_left, rel_right], axis=1)


def axis_split(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """T x J x 3 -> three T x J matrices (x, y, z)."""
    x = np.asarray(x)
    return x[:, :, 0], x[:, :, 1], x[:, :, 2]


def axis_recombine(ax: np.ndarray, ay: np.ndarray, az: np.ndarray) -> np.ndarray:
    return np.stack([ax, ay, az], axis=2)


def select_low_motion_frames(s: SignSample, n: int = 15, smoothing_window: int = 5) -> List[int]:
    """Pick n frame indices biased toward low wrist motion.

    The timeline is cut into n equal bins and each bin contributes its
    minimum-motion frame (lowest index on ties).  Streams shorter than n
    fall back to the uniform repetition rule.
    """
    t = len(s.frames)
    if t < 1:
        raise ValueError("sample has no frames")
    if t < n:
        return [int(i) for i in uniform_indices(t, n)]
    score = moving_average(wrist_speed(s.frames), smoothing_window)
    picks = []
    for i in range(n):
        lo, hi = i * t // n, (i + 1) * t // n
        picks.append(lo + int(np.argmin(score[lo:hi])))
    return picks


def _resize_bilinear(img: np.ndarray, out_hw: int) -> np.ndarray:
    """Bilinear resize of an H x W x C image using pixel-center sampling.

    When out_hw equals the input size the source coordinates land exactly on
    pixel centers and values pass through unchanged.
    """
    h, w, _ = img.shape

    def grid(n_src, n_dst):
        src = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        src = np.clip(src, 0.0, n_src - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_src - 1)
        return i0, i1, src - i0

    y0, y1, wy = grid(h, out_hw)
    x0, x1, wx = grid(w, out_hw)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def _crop_centered(img: np.ndarray, cy: float, cx: float, patch: int) -> np.ndarray:
    """patch x patch crop centered at (cy, cx), zero-padded past the borders."""
    h, w, c = img.shape
    top = int(round(cy)) - patch // 2
    left = int(round(cx)) - patch // 2
    out = np.zeros((patch, patch, c), dtype=np.float64)
    y0, y1 = max(top, 0), min(top + patch, h)
    x0, x1 = max(left, 0), min(left + patch, w)
    if y0 < y1 and x0 < x1:
        out[y0 - top : y1 - top, x0 - left : x1 - left] = img[y0:y1, x0:x1]
    return out


_HAND_JOINTS = (JointId.HAND_LEFT, JointId.HAND_RIGHT)


def build_hand_volumes(
    s: SignSample,
    patch: int = 100,
    out_hw: int = 32,
    n: int = 15,
    images: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(left, right) hand volumes of shape n x out_hw x out_hw x 3 in [0, 1].

    With ``images`` (one H x W x C frame per skeleton frame, uint8 or float),
    frames chosen by select_low_motion_frames are cropped around each 2D hand
    joint and bilinearly resized.  Without images, the sample's pre-rendered
    hand volumes are resampled to n frames and resized.  Neither available
    is a missing-modality error.
    """
    if images is not None:
        if len(images) != len(s.frames):
            raise ValueError("one image per skeleton frame required")
        if any(f.joints2d is None for f in s.frames):
            raise MissingHandDataError("sample has no 2D joints to center crops on")
        picks = select_low_motion_frames(s, n)
        vols = []
        for joint in _HAND_JOINTS:
            stack = np.empty((n, out_hw, out_hw, 3), dtype=np.float64)
            for k, f_idx in enumerate(picks):
                raw = np.asarray(images[f_idx])
                img = raw.astype(np.float64)
                if raw.dtype == np.uint8:
                    img /= 255.0
                cx, cy = s.frames[f_idx].joints2d[int(joint)]
                crop = _crop_centered(img, cy, cx, patch)
                stack[k] = crop if out_hw == patch else _resize_bilinear(crop, out_hw)
            vols.append(np.clip(stack, 0.0, 1.0))
        return vols[0], vols[1]

    if s.hand_volumes is None:
        raise MissingHandDataError(
            "sample carries neither images nor pre-rendered hand volumes"
        )
    vols = []
    for vol in s.hand_volumes:
        vol = np.asarray(vol, dtype=np.float64)
        sel = vol[uniform_indices(vol.shape[0], n)]
        if vol.shape[1] != out_hw or vol.shape[2] != out_hw:
            sel = np.stack([_resize_bilinear(fr, out_hw) for fr in sel])
        vols.append(np.clip(sel, 0.0, 1.0))
    return vols[0], vols[1]
