"""Dataset augmentation: 128x128 base scaling and the randomized
flip / scale / rotate / shift-and-crop chain producing 119x119 examples.

Conventions (these make the golden tests portable):
 - channels-first float images
 - bilinear resampling with half-pixel centers; a pixel's center sits at its
   integer index, so resizing maps x_in = (x_out + 0.5) * in/out - 0.5 with
   edge clamping
 - out-of-bounds samples after rotate/scale/shift are filled with the corpus
   mean RGB so preprocessing maps them to zero
 - when the sampled scale is exactly 1 and rotation exactly 0 the resampling
   step is skipped entirely, so the identity chain is a bit-exact center crop
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AugmentPolicy:
    flip_probs: tuple = (0.25, 0.25, 0.25, 0.25)  # horizontal, vertical, both, none
    scale_range: tuple = (0.83, 1.2)
    rotate_range_deg: tuple = (-30.0, 30.0)
    shift_range_px: tuple = (-5, 5)
    crop_size: int = 119
    base_size: int = 128
    num_subsets: int = 4

    def __post_init__(self):
        if abs(sum(self.flip_probs) - 1.0) > 1e-12:
            raise ValueError("flip probabilities must sum to 1")
        if self.crop_size > self.base_size:
            raise ValueError("crop_size must not exceed base_size")


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C,H,W) image, half-pixel centers, edge clamp."""
    c, h, w = image.shape
    if h == 0 or w == 0:
        raise ValueError("cannot resize a zero-dimension image")
    if (h, w) == (out_h, out_w):
        return image.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - np.floor(ys), 0.0, 1.0)
    wx = np.clip(xs - np.floor(xs), 0.0, 1.0)
    # negative coords clamp to the first pixel with full weight
    wy = np.where(ys < 0, 0.0, wy)
    wx = np.where(xs < 0, 0.0, wx)
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bot = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    out = top * (1 - wy[None, :, None]) + bot * wy[None, :, None]
    return out.astype(image.dtype, copy=False)


def scale_to_base(image: np.ndarray, base_size: int = 128) -> np.ndarray:
    return resize_bilinear(image, base_size, base_size)


def _sample_transform(rng: np.random.Generator, policy: AugmentPolicy):
    """Draw (flip_branch, scale, angle_deg, shift) in the documented order."""
    u = rng.random()
    cum, branch = 0.0, len(policy.flip_probs) - 1
    for i, p in enumerate(policy.flip_probs):
        cum += p
        if u < cum:
            branch = i
            break
    scale = rng.uniform(*policy.scale_range)
    angle = rng.uniform(*policy.rotate_range_deg)
    lo, hi = policy.shift_range_px
    shift = (int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
    return branch, scale, angle, shift


def _apply_flip(image: np.ndarray, branch: int) -> np.ndarray:
    if branch == 0:
        return image[:, :, ::-1]
    if branch == 1:
        return image[:, ::-1, :]
    if branch == 2:
        return image[:, ::-1, ::-1]
    return image


def _resample_about_center(image: np.ndarray, scale: float, angle_deg: float,
                           fill: np.ndarray) -> np.ndarray:
    """Rotate by angle and magnify by scale about the image center; bilinear
    sampling with out-of-range neighbors replaced by the fill color."""
    c, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = math.radians(angle_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    # inverse map: undo rotation, undo magnification
    src_y = (cos_t * yy + sin_t * xx) / scale + cy
    src_x = (-sin_t * yy + cos_t * xx) / scale + cx
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    wy = src_y - y0
    wx = src_x - x0
    fill = np.asarray(fill, dtype=image.dtype).reshape(c, 1, 1)

    def gather(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        vals = image[:, yc, xc]
        return np.where(valid[None], vals, fill)

    top = gather(y0, x0) * (1 - wx) + gather(y0, x0 + 1) * wx
    bot = gather(y0 + 1, x0) * (1 - wx) + gather(y0 + 1, x0 + 1) * wx
    out = top * (1 - wy) + bot * wy
    return out.astype(image.dtype, copy=False)


def _shift_crop(image: np.ndarray, shift: tuple, crop: int,
                fill: np.ndarray) -> np.ndarray:
    c, h, w = image.shape
    r0 = (h - crop) // 2 + shift[0]
    c0 = (w - crop) // 2 + shift[1]
    fill = np.asarray(fill, dtype=image.dtype).reshape(c, 1, 1)
    out = np.broadcast_to(fill, (c, crop, crop)).copy()
    rs, re = max(r0, 0), min(r0 + crop, h)
    cs, ce = max(c0, 0), min(c0 + crop, w)
    if rs < re and cs < ce:
        out[:, rs - r0:re - r0, cs - c0:ce - c0] = image[:, rs:re, cs:ce]
    return out


def augment_example(image128: np.ndarray, rng: np.random.Generator,
                    policy: AugmentPolicy = AugmentPolicy(),
                    fill_rgb=(0.0, 0.0, 0.0)) -> np.ndarray:
    """One randomized training example: flip, scale, rotate, shift + crop."""
    c, h, w = image128.shape
    if (h, w) != (policy.base_size, policy.base_size):
        raise ValueError(f"expected {policy.base_size}x{policy.base_size} input, "
                         f"got {h}x{w}")
    branch, scale, angle, shift = _sample_transform(rng, policy)
    img = _apply_flip(image128, branch)
    if scale != 1.0 or angle != 0.0:
        img = _resample_about_center(img, scale, angle, fill_rgb)
    else:
        img = np.ascontiguousarray(img)
    return _shift_crop(img, shift, policy.crop_size, fill_rgb)


def build_training_set(images, labels, policy: AugmentPolicy, seed: int,
                       fill_rgb=None) -> tuple[np.ndarray, np.ndarray]:
    """4 independently augmented replicas of the corpus.

    Per-example rng streams are derived as default_rng([seed, subset, index])
    so the result is deterministic and order-independent. Returns
    (examples (4N,3,crop,crop) float32, labels (4N,)).
    """
    n = len(images)
    if n == 0:
        raise ValueError("empty corpus")
    labels = np.asarray(labels, dtype=np.intp)
    if fill_rgb is None:
        from .network import compute_mean_rgb
        fill_rgb = compute_mean_rgb(images, seed=seed)
    out = np.empty((policy.num_subsets * n, 3, policy.crop_size, policy.crop_size),
                   dtype=np.float32)
    out_labels = np.empty(policy.num_subsets * n, dtype=np.intp)
    for s in range(policy.num_subsets):
        for i in range(n):
            rng = np.random.default_rng([seed, s, i])
            out[s * n + i] = augment_example(
                np.asarray(images[i], dtype=np.float32), rng, policy, fill_rgb)
            out_labels[s * n + i] = labels[i]
    return out, out_labels
