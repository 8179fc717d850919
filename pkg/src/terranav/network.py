"""The terrain feature extractor network: build, train, extract, checkpoint.

Architecture (fixed): 3x119x119 input -> conv 64@8x8/4 -> relu -> pool 2x2/2
-> conv 96@5x5/1 -> relu -> pool 2x2/2 -> flatten 2400 -> fc 1536 -> relu
-> fc output_classes. The 1536-unit hidden activation (post-relu) is the
feature vector used downstream; the final classification layer is discarded
once training is done.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor_ops as T
from .tensor_ops import ShapeError

CHECKPOINT_MAGIC = b"TNCK"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
               "fc1_w", "fc1_b", "fc2_w", "fc2_b")


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be loaded."""


@dataclass(frozen=True)
class NetworkSpec:
    input_channels: int = 3
    input_size: int = 119
    conv1_filters: int = 64
    conv1_kernel: int = 8
    conv1_stride: int = 4
    conv2_filters: int = 96
    conv2_kernel: int = 5
    conv2_stride: int = 1
    hidden_units: int = 1536
    output_classes: int = 1000

    def shape_chain(self) -> list[tuple]:
        """Expected per-example shapes after each stage of the forward pass."""
        s = self
        h1 = (s.input_size - s.conv1_kernel) // s.conv1_stride + 1
        p1 = h1 // 2
        h2 = (p1 - s.conv2_kernel) // s.conv2_stride + 1
        p2 = h2 // 2
        flat = s.conv2_filters * p2 * p2
        return [
            (s.input_channels, s.input_size, s.input_size),
            (s.conv1_filters, h1, h1),
            (s.conv1_filters, p1, p1),
            (s.conv2_filters, h2, h2),
            (s.conv2_filters, p2, p2),
            (flat,),
            (s.hidden_units,),
            (s.output_classes,),
        ]

    @property
    def flat_size(self) -> int:
        return self.shape_chain()[5][0]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TrainingConfig:
    batch_size: int = 64
    momentum: float = 0.08
    lr_base: float = 0.05
    lr_ref_batch: float = 128.0
    lr_decay: float = 0.96
    num_epochs: int = 5


def learning_rate(config: TrainingConfig, iteration: int) -> float:
    """lr_base * sqrt(batch)/sqrt(ref_batch), decayed per completed pass."""
    base = config.lr_base * math.sqrt(config.batch_size) / math.sqrt(config.lr_ref_batch)
    return base * config.lr_decay ** iteration


def build_network(spec: NetworkSpec, seed: int, dtype=np.float32) -> dict:
    """Allocate parameters, uniform in +-1/sqrt(fan_in), seeded."""
    rng = np.random.default_rng(seed)
    s = spec

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    fan1 = s.input_channels * s.conv1_kernel ** 2
    fan2 = s.conv1_filters * s.conv2_kernel ** 2
    return {
        "conv1_w": uniform((s.conv1_filters, s.input_channels,
                            s.conv1_kernel, s.conv1_kernel), fan1),
        "conv1_b": uniform((s.conv1_filters,), fan1),
        "conv2_w": uniform((s.conv2_filters, s.conv1_filters,
                            s.conv2_kernel, s.conv2_kernel), fan2),
        "conv2_b": uniform((s.conv2_filters,), fan2),
        "fc1_w": uniform((s.hidden_units, s.flat_size), s.flat_size),
        "fc1_b": uniform((s.hidden_units,), s.flat_size),
        "fc2_w": uniform((s.output_classes, s.hidden_units), s.hidden_units),
        "fc2_b": uniform((s.output_classes,), s.hidden_units),
    }


def _check_chain(actual: tuple, expected: tuple, stage: str) -> None:
    if tuple(actual) != tuple(expected):
        raise ShapeError(f"shape chain violated at {stage}: "
                         f"got {tuple(actual)}, expected {tuple(expected)}")


def forward(params: dict, x: np.ndarray, spec: NetworkSpec,
            want_intermediates: bool = False):
    """Forward pass with shape-chain assertions. x is (3,119,119) or batched.

    Returns logits, or (logits, intermediates dict) when asked; the
    ``hidden`` entry is the post-relu 1536-d feature activation.
    """
    chain = spec.shape_chain()
    batched = x.ndim == 4
    per = x.shape[1:] if batched else x.shape
    _check_chain(per, chain[0], "input")

    c1 = T.conv2d_forward(x, params["conv1_w"], params["conv1_b"], spec.conv1_stride)
    _check_chain(c1.shape[-3:], chain[1], "conv1")
    r1 = T.relu(c1)
    p1, a1 = T.maxpool2d_forward(r1)
    _check_chain(p1.shape[-3:], chain[2], "pool1")
    c2 = T.conv2d_forward(p1, params["conv2_w"], params["conv2_b"], spec.conv2_stride)
    _check_chain(c2.shape[-3:], chain[3], "conv2")
    r2 = T.relu(c2)
    p2, a2 = T.maxpool2d_forward(r2)
    _check_chain(p2.shape[-3:], chain[4], "pool2")
    flat = p2.reshape(p2.shape[0], -1) if batched else p2.reshape(-1)
    _check_chain(flat.shape[-1:], chain[5], "flatten")
    z1 = T.linear_forward(flat, params["fc1_w"], params["fc1_b"])
    hidden = T.relu(z1)
    _check_chain(hidden.shape[-1:], chain[6], "hidden")
    logits = T.linear_forward(hidden, params["fc2_w"], params["fc2_b"])
    _check_chain(logits.shape[-1:], chain[7], "output")

    if not want_intermediates:
        return logits
    inter = {"c1": c1, "r1": r1, "p1": p1, "a1": a1, "c2": c2, "r2": r2,
             "p2": p2, "a2": a2, "flat": flat, "z1": z1, "hidden": hidden}
    return logits, inter


def forward_backward(params: dict, x: np.ndarray, targets: np.ndarray,
                     spec: NetworkSpec) -> tuple[float, dict]:
    """Mean NLL loss over the batch and gradients for every parameter."""
    logits, it = forward(params, x, spec, want_intermediates=True)
    batched = x.ndim == 4
    n = x.shape[0] if batched else 1
    losses, dlogits = T.softmax_nll(logits, targets)
    loss = float(np.mean(losses))
    dlogits = dlogits / n

    g_fc2 = T.linear_backward(it["hidden"], params["fc2_w"], dlogits)
    dz1 = T.relu_backward(it["z1"], g_fc2.input_grad)
    g_fc1 = T.linear_backward(it["flat"], params["fc1_w"], dz1)
    dflat = g_fc1.input_grad
    dp2 = dflat.reshape(it["p2"].shape)
    dr2 = T.maxpool2d_backward(it["a2"], it["r2"].shape, dp2)
    dc2 = T.relu_backward(it["c2"], dr2)
    g_c2 = T.conv2d_backward(it["p1"], params["conv2_w"], spec.conv2_stride, dc2)
    dp1 = g_c2.input_grad
    dr1 = T.maxpool2d_backward(it["a1"], it["r1"].shape, dp1)
    dc1 = T.relu_backward(it["c1"], dr1)
    g_c1 = T.conv2d_backward(x, params["conv1_w"], spec.conv1_stride, dc1)

    grads = {
        "conv1_w": g_c1.weight_grad, "conv1_b": g_c1.bias_grad,
        "conv2_w": g_c2.weight_grad, "conv2_b": g_c2.bias_grad,
        "fc1_w": g_fc1.weight_grad, "fc1_b": g_fc1.bias_grad,
        "fc2_w": g_fc2.weight_grad, "fc2_b": g_fc2.bias_grad,
    }
    return loss, grads


def compute_mean_rgb(images, seed: int = 0, sample_cap: int = 10000) -> np.ndarray:
    """Per-channel mean over min(cap, len) images after a seeded shuffle.

    ``images`` is a sequence of (3, H, W) arrays (or an (N,3,H,W) array).
    """
    n = len(images)
    if n == 0:
        raise ValueError("empty corpus")
    order = np.random.default_rng(seed).permutation(n)[:min(sample_cap, n)]
    total = np.zeros(3, dtype=np.float64)
    for i in order:
        img = np.asarray(images[i], dtype=np.float64)
        total += img.mean(axis=(1, 2))
    return total / len(order)


def preprocess(image: np.ndarray, mean_rgb: np.ndarray,
               spec: NetworkSpec = NetworkSpec()) -> np.ndarray:
    """Subtract the per-channel mean; the only preprocessing applied."""
    expected = (spec.input_channels, spec.input_size, spec.input_size)
    if image.ndim == 3 and image.shape != expected:
        raise ShapeError(f"image shape {image.shape} != {expected}")
    if image.ndim == 4 and image.shape[1:] != expected:
        raise ShapeError(f"image shape {image.shape[1:]} != {expected}")
    mean = np.asarray(mean_rgb, dtype=image.dtype).reshape(3, 1, 1)
    return image - mean


def train(params: dict, images: np.ndarray, labels: np.ndarray,
          config: TrainingConfig, spec: NetworkSpec, seed: int,
          log_every: int = 0) -> list[float]:
    """Minibatch SGD with momentum over shuffled batches. Mutates ``params``.

    ``images`` are already preprocessed (N,3,119,119). Returns the per-epoch
    mean loss history. The decayed learning rate is advanced once per epoch
    (one pass over the full, 4-subset dataset).
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= spec.output_classes):
        raise ValueError(
            f"label out of range: max {labels.max()} for "
            f"{spec.output_classes} classes")
    rng = np.random.default_rng(seed)
    state = T.SgdState(momentum_coefficient=config.momentum)
    history = []
    n = len(images)
    for epoch in range(config.num_epochs):
        lr = learning_rate(config, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = forward_backward(params, images[idx], labels[idx], spec)
            T.sgd_momentum_step(params, grads, state, lr)
            losses.append(loss)
            if log_every and len(losses) % log_every == 0:
                print(f"epoch {epoch} step {len(losses)} loss {loss:.4f}",
                      flush=True)
        history.append(float(np.mean(losses)))
    return history


@dataclass
class Checkpoint:
    """Frozen feature-extractor weights plus preprocessing constants."""
    spec: NetworkSpec
    params: dict
    mean_rgb: np.ndarray
    format_version: int = CHECKPOINT_VERSION

    def extract_features(self, patches: np.ndarray) -> np.ndarray:
        """Post-relu hidden activation(s) for preprocessed 3x119x119 input."""
        _, it = forward(self.params, patches, self.spec, want_intermediates=True)
        return it["hidden"]


def extract_features(checkpoint: Checkpoint, patch: np.ndarray) -> np.ndarray:
    return checkpoint.extract_features(patch)


def save_checkpoint(params: dict, mean_rgb, path: str,
                    spec: NetworkSpec = NetworkSpec()) -> None:
    """Binary layout: magic, u32 version, u32 header length, JSON header,
    then raw little-endian float32 tensor payloads in header order."""
    header = {
        "spec": spec.to_dict(),
        "mean_rgb": [float(v) for v in np.asarray(mean_rgb)],
        "tensors": [{"name": k, "shape": list(params[k].shape)}
                    for k in PARAM_NAMES],
    }
    raw = json.dumps(header).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(raw)))
    buf.write(raw)
    for k in PARAM_NAMES:
        buf.write(np.ascontiguousarray(params[k], dtype="<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes; not a network checkpoint")
    if len(blob) < 12:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12:12 + hlen])
    except ValueError as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e
    spec = NetworkSpec(**header["spec"])
    params = {}
    off = 12 + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if off + nbytes > len(blob):
            raise CheckpointError(
                f"truncated payload for tensor {entry['name']}")
        params[entry["name"]] = np.frombuffer(
            blob[off:off + nbytes], dtype="<f4").reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise CheckpointError("trailing bytes after declared tensors")
    expected = {k: v.shape for k, v in
                build_network(spec, seed=0).items()}
    for name, shape in expected.items():
        if name not in params:
            raise CheckpointError(f"missing tensor {name}")
        if params[name].shape != shape:
            raise CheckpointError(
                f"tensor {name} shape {params[name].shape} does not match "
                f"spec shape {shape}")
    mean = np.asarray(header["mean_rgb"], dtype=np.float64)
    return Checkpoint(spec=spec, params=params, mean_rgb=mean, format_version=version)


def load_corpus_manifest(manifest_path: str):
    """Corpus format: a directory of images plus a manifest text file with
    one line per image: ``relative/path <space> integer_class``."""
    from PIL import Image

    root = os.path.dirname(os.path.abspath(manifest_path))
    images, labels = [], []
    with open(manifest_path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rel, cls = line.rsplit(None, 1)
                cls = int(cls)
            except ValueError as e:
                raise ValueError(f"{manifest_path}:{lineno}: bad line: {e}") from e
            with Image.open(os.path.join(root, rel)) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
            images.append(arr.transpose(2, 0, 1))
            labels.append(cls)
    return images, np.asarray(labels, dtype=np.intp)
