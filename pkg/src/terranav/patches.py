"""Patch scanning, frozen-feature extraction, and the fast two-class head.

Terrain classes are encoded as integers throughout: DRIVABLE = 0,
OBSTACLE = 1, UNKNOWN = -1 (label maps only). Patches are 59x59 regions
labeled by the class of their center pixel; they are upscaled to the
extractor's 119x119 input before feature extraction.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor_ops as T
from .augment import resize_bilinear
from .network import Checkpoint, preprocess

PATCH_SIZE = 59
PATCH_MARGIN = PATCH_SIZE // 2  # 29

DRIVABLE = 0
OBSTACLE = 1
UNKNOWN = -1

CLASS_NAMES = {DRIVABLE: "drivable", OBSTACLE: "obstacle"}
CLASS_IDS = {v: k for k, v in CLASS_NAMES.items()}

FEATURE_DIM = 1536


class TrainingSetError(ValueError):
    """Raised when the head training set is empty or single-class."""


@dataclass
class LabelStroke:
    label: int  # DRIVABLE or OBSTACLE
    pixels: list  # of (row, col)


@dataclass
class LabeledPatch:
    center: tuple  # (row, col)
    patch: np.ndarray  # (3, 59, 59)
    label: int


@dataclass
class LabelMap:
    """Per-pixel classes; the 29-pixel border where no patch fits is UNKNOWN."""
    values: np.ndarray  # (H, W) int8 in {DRIVABLE, OBSTACLE, UNKNOWN}

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_rle(self) -> dict:
        flat = self.values.reshape(-1)
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [len(flat)]))
        runs = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
        return {"width": self.width, "height": self.height, "rle": runs}

    @classmethod
    def from_rle(cls, payload: dict) -> "LabelMap":
        flat = np.concatenate([
            np.full(count, value, dtype=np.int8)
            for value, count in payload["rle"]
        ]) if payload["rle"] else np.empty(0, dtype=np.int8)
        return cls(flat.reshape(payload["height"], payload["width"]))


def scan_centers(height: int, width: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid of patch-center coordinates whose 59x59 patch fits entirely."""
    if height < PATCH_SIZE or width < PATCH_SIZE:
        raise ValueError(
            f"image {height}x{width} smaller than patch {PATCH_SIZE}x{PATCH_SIZE}")
    rows = np.arange(PATCH_MARGIN, height - PATCH_MARGIN, stride)
    cols = np.arange(PATCH_MARGIN, width - PATCH_MARGIN, stride)
    return rows, cols


def extract_patch(image: np.ndarray, center: tuple) -> np.ndarray:
    r, c = center
    return image[:, r - PATCH_MARGIN:r + PATCH_MARGIN + 1,
                 c - PATCH_MARGIN:c + PATCH_MARGIN + 1]


def scan_patches(image: np.ndarray, stride: int) -> list[tuple[tuple, np.ndarray]]:
    rows, cols = scan_centers(image.shape[1], image.shape[2], stride)
    return [((int(r), int(c)), extract_patch(image, (r, c)))
            for r in rows for c in cols]


def _patches_to_input(checkpoint: Checkpoint, patches: np.ndarray) -> np.ndarray:
    size = checkpoint.spec.input_size
    scaled = np.stack([resize_bilinear(p.astype(np.float32), size, size)
                       for p in patches])
    return preprocess(scaled, checkpoint.mean_rgb, checkpoint.spec)


def patch_features(checkpoint: Checkpoint, patch: np.ndarray) -> np.ndarray:
    """1536-d feature vector for one 3x59x59 patch (upscaled to 119x119)."""
    if patch.shape != (3, PATCH_SIZE, PATCH_SIZE):
        raise T.ShapeError(f"patch shape {patch.shape} != (3,{PATCH_SIZE},{PATCH_SIZE})")
    return checkpoint.extract_features(_patches_to_input(checkpoint, patch[None]))[0]


def patch_features_batch(checkpoint: Checkpoint, patches: np.ndarray,
                         chunk: int = 64) -> np.ndarray:
    out = np.empty((len(patches), checkpoint.spec.hidden_units), dtype=np.float32)
    for start in range(0, len(patches), chunk):
        block = _patches_to_input(checkpoint, patches[start:start + chunk])
        out[start:start + chunk] = checkpoint.extract_features(block)
    return out


@dataclass
class HeadConfig:
    hidden_units: int = 0  # 0 = plain linear head
    learning_rate: float = 0.01
    momentum: float = 0.08
    epochs: int = 50
    batch_size: int = 64
    early_stop_tol: float = 1e-6
    seed: int = 0


@dataclass
class HeadModel:
    """Two-class classifier over frozen 1536-d features."""
    params: dict
    hidden_units: int = 0
    classes: int = 2
    trained_at: float = 0.0
    training_set_size: int = 0

    def scores(self, features: np.ndarray) -> np.ndarray:
        x = features
        if self.hidden_units:
            x = T.relu(T.linear_forward(x, self.params["h_w"], self.params["h_b"]))
        return T.linear_forward(x, self.params["out_w"], self.params["out_b"])

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(features), axis=-1)

    def to_dict(self) -> dict:
        return {
            "hidden_units": self.hidden_units,
            "classes": self.classes,
            "trained_at": self.trained_at,
            "training_set_size": self.training_set_size,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadModel":
        return cls(
            params={k: np.asarray(v, dtype=np.float32)
                    for k, v in d["params"].items()},
            hidden_units=d.get("hidden_units", 0),
            classes=d.get("classes", 2),
            trained_at=d.get("trained_at", 0.0),
            training_set_size=d.get("training_set_size", 0),
        )


def train_head(features: np.ndarray, labels: np.ndarray,
               config: HeadConfig = HeadConfig()) -> HeadModel:
    """SGD-with-momentum training of the head; the extractor is never touched."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.intp)
    if len(features) == 0:
        raise TrainingSetError("empty training set")
    if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
        raise T.ShapeError(
            f"features must be (N, {FEATURE_DIM}), got {features.shape}")
    present = set(np.unique(labels).tolist())
    for cls_id, name in CLASS_NAMES.items():
        if cls_id not in present:
            raise TrainingSetError(f"training set has no '{name}' examples")

    rng = np.random.default_rng(config.seed)
    dim = features.shape[1]

    def init(shape, fan_in):
        b = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-b, b, size=shape).astype(np.float32)

    if config.hidden_units:
        params = {
            "h_w": init((config.hidden_units, dim), dim),
            "h_b": init((config.hidden_units,), dim),
            "out_w": init((2, config.hidden_units), config.hidden_units),
            "out_b": init((2,), config.hidden_units),
        }
    else:
        params = {"out_w": init((2, dim), dim), "out_b": init((2,), dim)}

    state = T.SgdState(momentum_coefficient=config.momentum)
    model = HeadModel(params=params, hidden_units=config.hidden_units)
    n = len(features)
    prev_loss = None
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x = features[idx]
            if config.hidden_units:
                z = T.linear_forward(x, params["h_w"], params["h_b"])
                h = T.relu(z)
            else:
                h = x
            logits = T.linear_forward(h, params["out_w"], params["out_b"])
            batch_losses, dlogits = T.softmax_nll(logits, labels[idx])
            dlogits = dlogits / len(idx)
            g_out = T.linear_backward(h, params["out_w"], dlogits)
            grads = {"out_w": g_out.weight_grad, "out_b": g_out.bias_grad}
            if config.hidden_units:
                dz = T.relu_backward(z, g_out.input_grad)
                g_h = T.linear_backward(x, params["h_w"], dz)
                grads["h_w"] = g_h.weight_grad
                grads["h_b"] = g_h.bias_grad
            T.sgd_momentum_step(params, grads, state, config.learning_rate)
            losses.append(float(np.mean(batch_losses)))
        epoch_loss = float(np.mean(losses))
        if prev_loss is not None and abs(prev_loss - epoch_loss) < config.early_stop_tol:
            break
        prev_loss = epoch_loss

    model.trained_at = time.time()
    model.training_set_size = n
    return model


def classify_image(image: np.ndarray, checkpoint: Checkpoint, head: HeadModel,
                   stride: int = 1) -> LabelMap:
    """Dense drivable/obstacle map: each scanned center gets the head's
    argmax; with stride > 1 interior pixels take the nearest classified
    center's label; the 29-pixel border stays UNKNOWN."""
    h, w = image.shape[1], image.shape[2]
    rows, cols = scan_centers(h, w, stride)
    patches = np.stack([extract_patch(image, (r, c))
                        for r in rows for c in cols])
    feats = patch_features_batch(checkpoint, patches)
    preds = head.predict(feats).reshape(len(rows), len(cols)).astype(np.int8)

    values = np.full((h, w), UNKNOWN, dtype=np.int8)
    ir = np.arange(PATCH_MARGIN, h - PATCH_MARGIN)
    ic = np.arange(PATCH_MARGIN, w - PATCH_MARGIN)
    # nearest center on a regular grid = clamped rounding of (p - first)/stride
    ri = np.clip(np.round((ir - rows[0]) / stride).astype(np.intp), 0, len(rows) - 1)
    ci = np.clip(np.round((ic - cols[0]) / stride).astype(np.intp), 0, len(cols) - 1)
    values[np.ix_(ir, ic)] = preds[np.ix_(ri, ci)]
    return LabelMap(values)


def strokes_to_patches(image: np.ndarray, strokes: list[LabelStroke]
                       ) -> tuple[list[LabeledPatch], list[dict]]:
    """Convert strokes to labeled patches; later strokes win on duplicate
    pixels. Pixels whose patch would cross the border (or that fall outside
    the image) are skipped and reported, not fatal."""
    h, w = image.shape[1], image.shape[2]
    chosen: dict[tuple, int] = {}
    skipped = []
    for stroke in strokes:
        for (r, c) in stroke.pixels:
            r, c = int(r), int(c)
            if not (0 <= r < h and 0 <= c < w):
                skipped.append({"pixel": [r, c], "reason": "outside-image"})
                continue
            if not (PATCH_MARGIN <= r < h - PATCH_MARGIN
                    and PATCH_MARGIN <= c < w - PATCH_MARGIN):
                skipped.append({"pixel": [r, c], "reason": "border-margin"})
                continue
            chosen[(r, c)] = stroke.label
    patches = [LabeledPatch(center=(r, c), patch=extract_patch(image, (r, c)),
                            label=label)
               for (r, c), label in chosen.items()]
    return patches, skipped


def strokes_to_json(strokes: list[LabelStroke]) -> str:
    return json.dumps({"strokes": [
        {"class": CLASS_NAMES[s.label], "pixels": [[int(r), int(c)]
                                                   for r, c in s.pixels]}
        for s in strokes]})


def strokes_from_json(text_or_dict) -> list[LabelStroke]:
    data = (json.loads(text_or_dict) if isinstance(text_or_dict, (str, bytes))
            else text_or_dict)
    strokes = []
    for s in data["strokes"]:
        if s["class"] not in CLASS_IDS:
            raise ValueError(f"unknown class {s['class']!r}")
        strokes.append(LabelStroke(
            label=CLASS_IDS[s["class"]],
            pixels=[(int(p[0]), int(p[1])) for p in s["pixels"]]))
    return strokes
