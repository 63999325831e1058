"""Recognition architectures and their shared training loop.

Five model specs share one interface (params / forward_batch / state_dict):

* ``ai-lstm``          three independent 2-layer LSTMs, one per coordinate
                       axis, final hidden states concatenated into a shared
                       softmax head (input 20 x 6 x 3);
* ``spatial-ai-lstm``  the same network on the wrist-origin augmented
                       tensor (20 x 16 x 3);
* ``cnn3d``            two 3D-CNN streams (left / right hand volumes) with
                       concatenated FC embeddings and a shared head;
* ``max-fusion``       an ai-lstm and a cnn3d trained independently, fused
                       at inference by the element-wise maximum of their
                       probability vectors;
* ``baseline``         multinomial logistic regression on 126 handcrafted
                       per-sample statistics, standardized by train moments.

Training is mini-batch Adam with mean cross-entropy plus an L2 penalty on
the dense and LSTM weight matrices, deterministic given the seed.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import preprocess as pp
from .data import Dataset, SignSample, named_rng
from .nn import (
    AdamState,
    Tensor,
    adam_step,
    init_lstm_params,
    load_checkpoint,
    lstm_forward,
    save_checkpoint,
)
from .nn import autograd as ag
from .nn.lstm import GATE_NAMES

ARCHITECTURES = ("ai-lstm", "spatial-ai-lstm", "cnn3d", "max-fusion", "baseline")

NUM_FEATURES = 126
STAT_NAMES = ("mean", "area", "skew", "kurtosis", "motion_energy", "range", "variance")


def default_learning_rate(arch: str) -> float:
    """5e-5 for the LSTM models, 1e-5 for the CNN and the fused model."""
    return 1e-5 if arch in ("cnn3d", "max-fusion") else 5e-5


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 5e-5
    epochs: int = 250
    batch_size: int = 64
    state_size: int = 50
    num_layers: int = 2
    dropout_keep: float = 0.5
    l2_beta: float = 0.008
    grad_clip: float = 0.0  # 0 disables clipping
    frames: int = 20
    seed: int = 0
    early_stop_accuracy: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "state_size": self.state_size,
            "num_layers": self.num_layers,
            "dropout_keep": self.dropout_keep,
            "l2_beta": self.l2_beta,
            "grad_clip": self.grad_clip,
            "frames": self.frames,
            "seed": self.seed,
            "early_stop_accuracy": self.early_stop_accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass(frozen=True)
class CnnConfig:
    """Shape contract of one 3D-CNN stream (both streams share it)."""

    channels: Tuple[int, int, int, int] = (8, 16, 16, 32)
    kernel: Tuple[int, int, int] = (3, 3, 3)
    pool1: Tuple[int, int, int] = (2, 2, 2)
    pool2: Tuple[int, int, int] = (1, 2, 2)
    fc1: int = 128
    fc2: int = 64
    in_frames: int = 15
    in_size: int = 16
    in_channels: int = 3

    def layer_shapes(self) -> List[Tuple[int, int, int, int]]:
        """(F, H, W, C) after each stage: conv1..conv4 with pools in place."""
        f, h, w = self.in_frames, self.in_size, self.in_size
        kt, kh, kw = self.kernel
        shapes = []

        def conv(dims, c_out):
            f, h, w = dims[0] - kt + 1, dims[1] - kh + 1, dims[2] - kw + 1
            shapes.append((f, h, w, c_out))
            return f, h, w

        def pool(dims, c_out, window):
            f, h, w = dims[0] // window[0], dims[1] // window[1], dims[2] // window[2]
            shapes.append((f, h, w, c_out))
            return f, h, w

        dims = conv((f, h, w), self.channels[0])
        dims = conv(dims, self.channels[1])
        dims = pool(dims, self.channels[1], self.pool1)
        dims = conv(dims, self.channels[2])
        dims = conv(dims, self.channels[3])
        dims = pool(dims, self.channels[3], self.pool2)
        return shapes

    def flat_dim(self) -> int:
        f, h, w, c = self.layer_shapes()[-1]
        return f * h * w * c

    def validate(self) -> None:
        if min(self.in_frames, self.in_size, self.in_channels) < 1:
            raise ValueError("input volume dimensions must be positive")
        for shape in self.layer_shapes():
            if min(shape) < 1:
                raise ValueError(
                    f"CNN stage produces empty output {shape} for input "
                    f"{(self.in_frames, self.in_size, self.in_size)}; "
                    "shrink kernels/pools or grow the volume"
                )

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "kernel": list(self.kernel),
            "pool1": list(self.pool1),
            "pool2": list(self.pool2),
            "fc1": self.fc1,
            "fc2": self.fc2,
            "in_frames": self.in_frames,
            "in_size": self.in_size,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnnConfig":
        d = dict(d)
        for key in ("channels", "kernel", "pool1", "pool2"):
            d[key] = tuple(d[key])
        return cls(**d)


def _glorot(rng, out_dim: int, in_dim: int, name: str) -> Tensor:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return ag.parameter(rng.uniform(-limit, limit, (out_dim, in_dim)), name)


def _zeros(shape, name: str) -> Tensor:
    return ag.parameter(np.zeros(shape), name)


class AiLstmNet:
    """Axis-independent LSTM: per-axis stacks with one shared softmax head."""

    def __init__(
        self,
        num_classes: int,
        joints: int = 6,
        state_size: int = 50,
        num_layers: int = 2,
        dropout_keep: float = 0.5,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.arch = "ai-lstm" if joints == 6 else "spatial-ai-lstm"
        self.num_classes = num_classes
        self.joints = joints
        self.state_size = state_size
        self.dropout_keep = dropout_keep
        self.axis_layers = []
        for axis in "xyz":
            layers = []
            for l in range(num_layers):
                d = joints if l == 0 else state_size
                layers.append(init_lstm_params(state_size, d, rng, prefix=f"{axis}.l{l}."))
            self.axis_layers.append(layers)
        self.embedding_dim = 3 * state_size
        self.head_w = _glorot(rng, num_classes, self.embedding_dim, "head.w")
        self.head_b = _zeros(num_classes, "head.b")

    def params(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for layers in self.axis_layers:
            for layer in layers:
                for gate in GATE_NAMES:
                    t = getattr(layer, gate)
                    out[t.name] = t
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def weight_tensors(self) -> List[Tensor]:
        out = []
        for layers in self.axis_layers:
            for layer in layers:
                out.extend([layer.w_f, layer.w_i, layer.w_g, layer.w_o])
        out.append(self.head_w)
        return out

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[2] != self.joints or x.shape[3] != 3:
            raise ValueError(f"expected (B, T, {self.joints}, 3) input, got shape {x.shape}")
        return x

    def _embedding(self, x: np.ndarray, training: bool, rng) -> Tensor:
        parts = [
            lstm_forward(x[:, :, :, a], self.axis_layers[a], self.dropout_keep, training, rng)
            for a in range(3)
        ]
        return ag.concat(parts, axis=1)

    def forward_batch(self, x, training: bool = False, rng=None) -> Tensor:
        x = self._check(x)
        emb = self._embedding(x, training, rng)
        emb = ag.dropout(emb, self.dropout_keep, training, rng)
        return ag.dense(emb, self.head_w, self.head_b)

    def embed_batch(self, x) -> np.ndarray:
        """Head-input embedding (concatenated final hidden states), 3S wide."""
        return self._embedding(self._check(x), False, None).data

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params().items()}

    def load_state(self, tensors: Dict[str, np.ndarray]) -> None:
        _assign_state(self.params(), tensors)


class HandCnnNet:
    """Two-stream 3D CNN over left/right hand volumes with a shared head."""

    arch = "cnn3d"

    def __init__(
        self,
        num_classes: int,
        cfg: CnnConfig,
        dropout_keep: float = 0.5,
        rng: Optional[np.random.Generator] = None,
    ):
        cfg.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.num_classes = num_classes
        self.dropout_keep = dropout_keep
        kt, kh, kw = cfg.kernel
        flat = cfg.flat_dim()
        p: Dict[str, Tensor] = {}
        for side in ("left", "right"):
            cin = cfg.in_channels
            for i, cout in enumerate(cfg.channels, start=1):
                fan_in = kt * kh * kw * cin
                kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, kt, kh, kw, cin))
                p[f"{side}.conv{i}.k"] = ag.parameter(kernel, f"{side}.conv{i}.k")
                p[f"{side}.conv{i}.b"] = _zeros(cout, f"{side}.conv{i}.b")
                cin = cout
            p[f"{side}.fc1.w"] = _glorot(rng, cfg.fc1, flat, f"{side}.fc1.w")
            p[f"{side}.fc1.b"] = _zeros(cfg.fc1, f"{side}.fc1.b")
            p[f"{side}.fc2.w"] = _glorot(rng, cfg.fc2, cfg.fc1, f"{side}.fc2.w")
            p[f"{side}.fc2.b"] = _zeros(cfg.fc2, f"{side}.fc2.b")
        p["head.w"] = _glorot(rng, num_classes, 2 * cfg.fc2, "head.w")
        p["head.b"] = _zeros(num_classes, "head.b")
        self._params = p
        self.embedding_dim = 2 * cfg.fc2

    def params(self) -> Dict[str, Tensor]:
        return dict(self._params)

    def weight_tensors(self) -> List[Tensor]:
        # L2 covers dense weight matrices only (conv kernels and biases exempt).
        names = [f"{s}.fc{i}.w" for s in ("left", "right") for i in (1, 2)] + ["head.w"]
        return [self._params[n] for n in names]

    def _stream(self, side: str, vol: np.ndarray, training: bool, rng) -> Tensor:
        p = self._params
        t = Tensor(vol)
        t = ag.relu(ag.conv3d(t, p[f"{side}.conv1.k"], p[f"{side}.conv1.b"]))
        t = ag.relu(ag.conv3d(t, p[f"{side}.conv2.k"], p[f"{side}.conv2.b"]))
        t = ag.maxpool3d(t, self.cfg.pool1)
        t = ag.relu(ag.conv3d(t, p[f"{side}.conv3.k"], p[f"{side}.conv3.b"]))
        t = ag.relu(ag.conv3d(t, p[f"{side}.conv4.k"], p[f"{side}.conv4.b"]))
        t = ag.maxpool3d(t, self.cfg.pool2)
        t = ag.reshape(t, (vol.shape[0], self.cfg.flat_dim()))
        t = ag.relu(ag.dense(t, p[f"{side}.fc1.w"], p[f"{side}.fc1.b"]))
        t = ag.dropout(t, self.dropout_keep, training, rng)
        t = ag.relu(ag.dense(t, p[f"{side}.fc2.w"], p[f"{side}.fc2.b"]))
        return t

    def _check(self, vols) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        want = (cfg.in_frames, cfg.in_size, cfg.in_size, cfg.in_channels)
        left, right = vols
        left = np.asarray(left, dtype=np.float64)
        right = np.asarray(right, dtype=np.float64)
        for side, v in (("left", left), ("right", right)):
            if v.ndim != 5 or v.shape[1:] != want:
                raise ValueError(f"{side} volume shape {v.shape} != (B,) + {want}")
        if left.shape[0] != right.shape[0]:
            raise ValueError("left/right batch sizes differ")
        return left, right

    def forward_batch(self, vols, training: bool = False, rng=None) -> Tensor:
        left, right = self._check(vols)
        emb = ag.concat(
            [self._stream("left", left, training, rng), self._stream("right", right, training, rng)],
            axis=1,
        )
        emb = ag.dropout(emb, self.dropout_keep, training, rng)
        return ag.dense(emb, self._params["head.w"], self._params["head.b"])

    def embed_batch(self, vols) -> np.ndarray:
        left, right = self._check(vols)
        return np.concatenate(
            [self._stream("left", left, False, None).data, self._stream("right", right, False, None).data],
            axis=1,
        )

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, tensors: Dict[str, np.ndarray]) -> None:
        _assign_state(self._params, tensors)


class BaselineNet:
    """Multinomial logistic regression on standardized handcrafted features."""

    arch = "baseline"

    def __init__(
        self,
        num_classes: int,
        dim: int = NUM_FEATURES,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.num_classes = num_classes
        self.dim = dim
        self.w = _glorot(rng, num_classes, dim, "w")
        self.b = _zeros(num_classes, "b")
        self.mu = np.zeros(dim)
        self.sigma = np.ones(dim)
        self.dropout_keep = 1.0

    def set_standardization(self, feats: np.ndarray) -> None:
        feats = np.asarray(feats, dtype=np.float64)
        self.mu = feats.mean(axis=0)
        sd = feats.std(axis=0)
        self.sigma = np.where(sd < 1e-12, 1.0, sd)

    def standardize(self, feats: np.ndarray) -> np.ndarray:
        return (np.asarray(feats, dtype=np.float64) - self.mu) / self.sigma

    def params(self) -> Dict[str, Tensor]:
        return {"w": self.w, "b": self.b}

    def weight_tensors(self) -> List[Tensor]:
        return [self.w]

    def forward_batch(self, feats, training: bool = False, rng=None) -> Tensor:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise ValueError(f"expected (B, {self.dim}) features, got shape {feats.shape}")
        return ag.dense(Tensor(self.standardize(feats)), self.w, self.b)

    def state_dict(self) -> Dict[str, np.ndarray]:
        out = {name: t.data.copy() for name, t in self.params().items()}
        out["mu"] = self.mu.copy()
        out["sigma"] = self.sigma.copy()
        return out

    def load_state(self, tensors: Dict[str, np.ndarray]) -> None:
        tensors = dict(tensors)
        for buf in ("mu", "sigma"):
            if buf not in tensors:
                raise ValueError(f"checkpoint missing '{buf}'")
            setattr(self, buf, np.asarray(tensors.pop(buf), dtype=np.float64))
        _assign_state(self.params(), tensors)


class FusionNet:
    """An ai-lstm and a cnn3d, independently trained, max-fused at inference."""

    arch = "max-fusion"

    def __init__(self, skeleton: AiLstmNet, hands: HandCnnNet):
        if skeleton.num_classes != hands.num_classes:
            raise ValueError("fusion branches disagree on the class vocabulary size")
        self.skeleton = skeleton
        self.hands = hands
        self.num_classes = skeleton.num_classes

    def params(self) -> Dict[str, Tensor]:
        out = {f"skel.{k}": v for k, v in self.skeleton.params().items()}
        out.update({f"hands.{k}": v for k, v in self.hands.params().items()})
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        out = {f"skel.{k}": v for k, v in self.skeleton.state_dict().items()}
        out.update({f"hands.{k}": v for k, v in self.hands.state_dict().items()})
        return out

    def load_state(self, tensors: Dict[str, np.ndarray]) -> None:
        skel = {k[len("skel.") :]: v for k, v in tensors.items() if k.startswith("skel.")}
        hands = {k[len("hands.") :]: v for k, v in tensors.items() if k.startswith("hands.")}
        if len(skel) + len(hands) != len(tensors):
            raise ValueError("checkpoint parameter mismatch: unprefixed fusion tensors")
        self.skeleton.load_state(skel)
        self.hands.load_state(hands)


def _assign_state(params: Dict[str, Tensor], tensors: Dict[str, np.ndarray]) -> None:
    if set(params) != set(tensors):
        missing = sorted(set(params) - set(tensors))
        extra = sorted(set(tensors) - set(params))
        raise ValueError(f"checkpoint parameter mismatch: missing {missing}, extra {extra}")
    for name, t in params.items():
        arr = np.asarray(tensors[name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise ValueError(f"parameter '{name}' shape {arr.shape} != {t.data.shape}")
        t.data = arr.copy()
        t.grad = None


def fuse_max(p1, p2) -> Tuple[np.ndarray, int]:
    """Element-wise max of two score vectors; argmax prediction, low index wins ties.

    The fused scores are deliberately not renormalized: classification uses
    the argmax only.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape or p1.ndim != 1:
        raise ValueError(f"score vectors must share one shape, got {p1.shape} and {p2.shape}")
    scores = np.maximum(p1, p2)
    return scores, int(np.argmax(scores))


def extract_features126(x: np.ndarray) -> np.ndarray:
    """Seven statistics per joint-axis series of a T x 6 x 3 tensor.

    Order per series: mean, area (sum of |s|), population skew, excess
    kurtosis (both 0 when sigma < 1e-12), motion energy (sum of squared
    frame deltas), range, population variance.  Feature k*0..6 of joint j,
    axis a lands at index j*21 + a*7 + k.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (6, 3):
        raise ValueError(f"expected a T x 6 x 3 tensor, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 frames for motion energy")
    mu = x.mean(axis=0)
    var = x.var(axis=0)
    sd = np.sqrt(var)
    cen = x - mu
    safe = np.where(sd < 1e-12, 1.0, sd)
    skew = np.where(sd < 1e-12, 0.0, (cen**3).mean(axis=0) / safe**3)
    kurt = np.where(sd < 1e-12, 0.0, (cen**4).mean(axis=0) / safe**4 - 3.0)
    area = np.abs(x).sum(axis=0)
    energy = (np.diff(x, axis=0) ** 2).sum(axis=0)
    vrange = x.max(axis=0) - x.min(axis=0)
    feats = np.stack([mu, area, skew, kurt, energy, vrange, var], axis=-1)  # (6, 3, 7)
    return feats.reshape(NUM_FEATURES)


def feature_csv_header() -> List[str]:
    return ["subject", "label"] + [f"f{i:03d}" for i in range(NUM_FEATURES)]


def write_features_csv(dataset: Dataset, path) -> int:
    """Write one 126-feature row per sample; returns the row count.

    Samples with fewer than 2 frames are skipped with a warning.  Values
    print at full round-trip precision so reimport is exact.
    """
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(feature_csv_header())
        for s in dataset.samples:
            if len(s.frames) < 2:
                warnings.warn(f"skipping {s.identity}: fewer than 2 frames")
                continue
            feats = extract_features126(pp.select_joints(s))
            w.writerow([s.subject_id, s.class_label] + [repr(float(v)) for v in feats])
            rows += 1
    return rows


def read_features_csv(path) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Inverse of write_features_csv: (subjects, labels, N x 126 features)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != feature_csv_header():
            raise ValueError(f"{path}: unexpected feature CSV header")
        subjects, labels, feats = [], [], []
        for row in reader:
            subjects.append(row[0])
            labels.append(int(row[1]))
            feats.append([float(v) for v in row[2:]])
    return subjects, np.array(labels, dtype=np.int64), np.array(feats, dtype=np.float64)


def prepare_skeletons(samples: Sequence[SignSample], frames: int, augment: bool) -> np.ndarray:
    out = []
    for s in samples:
        x = pp.resample_uniform(pp.select_joints(s), frames)
        out.append(pp.spatial_augment(x, frames) if augment else x)
    return np.stack(out)


def prepare_hand_volumes(samples: Sequence[SignSample], cfg: CnnConfig):
    pairs = [pp.build_hand_volumes(s, out_hw=cfg.in_size, n=cfg.in_frames) for s in samples]
    left = np.stack([p[0] for p in pairs]).astype(np.float64)
    right = np.stack([p[1] for p in pairs]).astype(np.float64)
    return left, right


def prepare_inputs(arch: str, samples: Sequence[SignSample], frames: int = 20,
                   cnn_config: Optional[CnnConfig] = None):
    """Model-ready input arrays for a sample list, per architecture."""
    if not samples:
        raise ValueError("no samples to prepare")
    if arch == "ai-lstm":
        return prepare_skeletons(samples, frames, augment=False)
    if arch == "spatial-ai-lstm":
        return prepare_skeletons(samples, frames, augment=True)
    if arch == "cnn3d":
        return prepare_hand_volumes(samples, cnn_config or CnnConfig())
    if arch == "max-fusion":
        skel = prepare_skeletons(samples, frames, augment=False)
        left, right = prepare_hand_volumes(samples, cnn_config or CnnConfig())
        return skel, left, right
    if arch == "baseline":
        return np.stack([extract_features126(pp.select_joints(s)) for s in samples])
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")


def build_net(arch: str, num_classes: int, hp: Hyperparams,
              cnn_config: Optional[CnnConfig] = None):
    """Fresh network with seed-determined initialization."""
    if arch in ("ai-lstm", "spatial-ai-lstm"):
        rng = named_rng(hp.seed, f"init.{arch}")
        return AiLstmNet(
            num_classes,
            joints=6 if arch == "ai-lstm" else 16,
            state_size=hp.state_size,
            num_layers=hp.num_layers,
            dropout_keep=hp.dropout_keep,
            rng=rng,
        )
    if arch == "cnn3d":
        rng = named_rng(hp.seed, "init.cnn3d")
        return HandCnnNet(num_classes, cnn_config or CnnConfig(), hp.dropout_keep, rng)
    if arch == "baseline":
        return BaselineNet(num_classes, rng=named_rng(hp.seed, "init.baseline"))
    if arch == "max-fusion":
        return FusionNet(
            build_net("ai-lstm", num_classes, hp),
            build_net("cnn3d", num_classes, hp, cnn_config),
        )
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")


def _take(inputs, idx):
    if isinstance(inputs, tuple):
        return tuple(_take(part, idx) for part in inputs)
    return inputs[idx]


def _num_samples(inputs) -> int:
    while isinstance(inputs, tuple):
        inputs = inputs[0]
    return inputs.shape[0]


def _with_l2(loss: Tensor, net, beta: float, batch_n: int) -> Tensor:
    if beta == 0.0:
        return loss
    total = None
    for w in net.weight_tensors():
        sq = ag.sum_all(ag.mul(w, w))
        total = sq if total is None else ag.add(total, sq)
    if total is None:
        return loss
    return ag.add(loss, ag.scale(total, beta / batch_n))


def _clip_gradients(params: Dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor


def predict_probs_net(net, inputs, batch_size: int = 64) -> np.ndarray:
    """Chunked inference pass; rows are softmax distributions."""
    n = _num_samples(inputs)
    out = []
    for i in range(0, n, batch_size):
        logits = net.forward_batch(_take(inputs, slice(i, i + batch_size)), training=False)
        out.append(ag.softmax(logits.data))
    return np.concatenate(out, axis=0)


def fit_net(net, inputs, labels: np.ndarray, hp: Hyperparams,
            log: Optional[Callable[[str], None]] = None) -> List[dict]:
    """Adam training loop shared by every architecture.

    Per batch: forward with dropout, mean cross-entropy plus the L2 term,
    full backward, one Adam step.  History records the sample-weighted mean
    batch loss and a clean (dropout-free) training accuracy per epoch.
    Stops early once early_stop_accuracy is reached, when set.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = _num_samples(inputs)
    if n == 0 or n != len(labels):
        raise ValueError("inputs and labels must be nonempty and aligned")
    params = net.params()
    opt = AdamState()
    shuffle_rng = named_rng(hp.seed, f"train.{net.arch}.shuffle")
    dropout_rng = named_rng(hp.seed, f"train.{net.arch}.dropout")
    history: List[dict] = []
    for epoch in range(1, hp.epochs + 1):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for bi, start in enumerate(range(0, n, hp.batch_size)):
            idx = perm[start : start + hp.batch_size]
            logits = net.forward_batch(_take(inputs, idx), training=True, rng=dropout_rng)
            data_loss, _ = ag.softmax_cross_entropy(logits, labels[idx])
            loss = _with_l2(data_loss, net, hp.l2_beta, len(idx))
            value = float(loss.data)
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss {value} at epoch {epoch}, batch {bi}"
                )
            loss.backward()
            if hp.grad_clip > 0.0:
                _clip_gradients(params, hp.grad_clip)
            adam_step(params, opt, hp.learning_rate)
            loss_sum += value * len(idx)
        preds = predict_probs_net(net, inputs, hp.batch_size).argmax(axis=1)
        acc = float((preds == labels).mean())
        history.append(
            {"epoch": epoch, "loss": loss_sum / n, "train_accuracy": acc}
        )
        if log:
            log(f"epoch {epoch:4d}  loss {loss_sum / n:.6f}  train_acc {acc:.4f}")
        if hp.early_stop_accuracy is not None and acc >= hp.early_stop_accuracy:
            break
    return history


@dataclass
class TrainedModel:
    """An immutable trained network plus everything needed to reuse it."""

    arch: str
    net: object
    vocabulary: List[str]
    hyperparams: Hyperparams
    cnn_config: Optional[CnnConfig]
    history: List[dict] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.vocabulary)

    def prepare(self, samples: Sequence[SignSample]):
        return prepare_inputs(self.arch, samples, self.hyperparams.frames, self.cnn_config)

    def predict_probs(self, inputs) -> np.ndarray:
        """Per-sample class scores.

        Single models return softmax rows; max-fusion returns the
        element-wise maximum of its branches' softmax rows (not
        renormalized).
        """
        bs = self.hyperparams.batch_size
        if self.arch == "max-fusion":
            skel, left, right = inputs
            p1 = predict_probs_net(self.net.skeleton, skel, bs)
            p2 = predict_probs_net(self.net.hands, (left, right), bs)
            return np.maximum(p1, p2)
        return predict_probs_net(self.net, inputs, bs)

    def predict(self, inputs) -> np.ndarray:
        return self.predict_probs(inputs).argmax(axis=1)

    def embed(self, inputs) -> np.ndarray:
        if not hasattr(self.net, "embed_batch"):
            raise ValueError(f"{self.arch} has no embedding output")
        bs = self.hyperparams.batch_size
        n = _num_samples(inputs)
        return np.concatenate(
            [self.net.embed_batch(_take(inputs, slice(i, i + bs))) for i in range(0, n, bs)]
        )

    def save(self, path) -> None:
        meta = {
            "vocabulary": list(self.vocabulary),
            "hyperparams": self.hyperparams.to_dict(),
            "cnn_config": self.cnn_config.to_dict() if self.cnn_config else None,
        }
        save_checkpoint(path, self.arch, meta, self.net.state_dict())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        arch, meta, tensors = load_checkpoint(path)
        hp = Hyperparams.from_dict(meta["hyperparams"])
        cfg = CnnConfig.from_dict(meta["cnn_config"]) if meta.get("cnn_config") else None
        net = build_net(arch, len(meta["vocabulary"]), hp, cfg)
        net.load_state(tensors)
        return cls(
            arch=arch,
            net=net,
            vocabulary=list(meta["vocabulary"]),
            hyperparams=hp,
            cnn_config=cfg,
        )


def train(
    arch: str,
    train_set: Dataset,
    hp: Optional[Hyperparams] = None,
    cnn_config: Optional[CnnConfig] = None,
    log: Optional[Callable[[str], None]] = None,
) -> TrainedModel:
    """Train a fresh model of the given architecture on a dataset."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    if not train_set.samples:
        raise ValueError("empty training set")
    if hp is None:
        hp = Hyperparams(learning_rate=default_learning_rate(arch))
    if arch in ("cnn3d", "max-fusion") and cnn_config is None:
        cnn_config = CnnConfig()
    labels = np.array([s.class_label for s in train_set.samples], dtype=np.int64)
    num_classes = train_set.num_classes
    if arch == "max-fusion":
        net = build_net(arch, num_classes, hp, cnn_config)
        skel = prepare_inputs("ai-lstm", train_set.samples, hp.frames)
        hands = prepare_inputs("cnn3d", train_set.samples, cnn_config=cnn_config)
        history = [
            dict(h, branch="skeleton") for h in fit_net(net.skeleton, skel, labels, hp, log)
        ]
        history += [
            dict(h, branch="hands") for h in fit_net(net.hands, hands, labels, hp, log)
        ]
    else:
        net = build_net(arch, num_classes, hp, cnn_config)
        inputs = prepare_inputs(arch, train_set.samples, hp.frames, cnn_config)
        if arch == "baseline":
            net.set_standardization(inputs)
        history = fit_net(net, inputs, labels, hp, log)
    return TrainedModel(
        arch=arch,
        net=net,
        vocabulary=list(train_set.vocabulary),
        hyperparams=hp,
        cnn_config=cnn_config if arch in ("cnn3d", "max-fusion") else None,
        history=history,
    )


def fit_baseline(features: np.ndarray, labels, num_classes: int,
                 hp: Optional[Hyperparams] = None) -> Tuple[BaselineNet, List[dict]]:
    """Convenience wrapper: logistic-regression baseline on raw feature rows."""
    features = np.asarray(features, dtype=np.float64)
    if hp is None:
        hp = Hyperparams()
    net = BaselineNet(num_classes, dim=features.shape[1], rng=named_rng(hp.seed, "init.baseline"))
    net.set_standardization(features)
    history = fit_net(net, features, np.asarray(labels, dtype=np.int64), hp)
    return net, history
