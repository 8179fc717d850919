"""Synthetic data: a 10-class shape corpus for desk-scale extractor training
and an overhead yard scene (grass / pavement / boxes) for end-to-end tests.

The yard scene is generated as a top-down orthographic view so each pixel
maps directly to a ground coordinate; the matching point cloud carries
(row, col) image coordinates for every sampled pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ground import PointCloud

SHAPE_CLASSES = 10

_CLASS_COLORS = np.array([
    (0.9, 0.2, 0.2), (0.2, 0.9, 0.2), (0.2, 0.3, 0.9), (0.9, 0.9, 0.2),
    (0.8, 0.3, 0.8), (0.2, 0.85, 0.85), (0.95, 0.6, 0.15), (0.55, 0.35, 0.15),
    (0.9, 0.55, 0.75), (0.45, 0.85, 0.45),
])


def _render_shape(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One image: class-colored shape (circle for even, square for odd class)
    on a noisy gray background."""
    img = rng.uniform(0.35, 0.65, size=(3, size, size)).astype(np.float32)
    color = _CLASS_COLORS[cls]
    cy = size / 2 + rng.uniform(-8, 8)
    cx = size / 2 + rng.uniform(-8, 8)
    radius = rng.uniform(0.22, 0.34) * size
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if cls % 2 == 0:
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    else:
        mask = (np.abs(yy - cy) <= radius) & (np.abs(xx - cx) <= radius)
    for ch in range(3):
        img[ch][mask] = color[ch] + rng.uniform(-0.05, 0.05)
    return np.clip(img, 0.0, 1.0)


def make_shape_corpus(n: int, size: int = 128, seed: int = 0):
    """Returns (images list of (3,size,size) float32, labels (n,))."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % SHAPE_CLASSES
    images = [_render_shape(int(labels[i]), size, rng) for i in range(n)]
    return images, labels


@dataclass
class YardScene:
    """Overhead scene: image, per-pixel region ids, geometry constants."""
    image: np.ndarray        # (3, S, S) float32
    region: np.ndarray       # (S, S) uint8: 0 pavement, 1 grass, 2 box
    pixel_spacing: float     # meters per pixel
    x0: float                # ground x of row 0
    y0: float                # ground y of col 0
    grass_height: float = 0.03
    box_height: float = 0.40

    PAVEMENT, GRASS, BOX = 0, 1, 2

    def point_cloud(self, step: int = 2) -> tuple[PointCloud, np.ndarray]:
        """Sample every ``step``-th pixel into a point cloud with image
        coordinates attached. Returns (cloud, per-point region id)."""
        s = self.region.shape[0]
        rows = np.arange(0, s, step)
        cols = np.arange(0, s, step)
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        rr, cc = rr.ravel(), cc.ravel()
        reg = self.region[rr, cc]
        z = np.where(reg == self.BOX, self.box_height,
                     np.where(reg == self.GRASS, self.grass_height, 0.0))
        x = self.x0 + rr * self.pixel_spacing
        y = self.y0 + cc * self.pixel_spacing
        pts = np.stack([x, y, z], axis=1).astype(np.float64)
        pixels = np.stack([rr, cc], axis=1).astype(np.intp)
        return PointCloud(points=pts, pixels=pixels), reg


def make_yard_scene(size: int = 320, seed: int = 0,
                    pixel_spacing: float = 0.025) -> YardScene:
    """Pavement everywhere, a grass rectangle kept clear of the 29-pixel
    classification margin, and two 0.4 m boxes (one on grass, one on
    pavement). Ground x spans [-0.5, -0.5 + size*spacing)."""
    rng = np.random.default_rng(seed)
    region = np.zeros((size, size), dtype=np.uint8)

    def px(frac):
        return int(round(frac * size / 320))

    region[px(80):px(260), px(190):px(290)] = YardScene.GRASS
    region[px(150):px(182), px(220):px(252)] = YardScene.BOX   # box on grass
    region[px(150):px(182), px(60):px(92)] = YardScene.BOX     # box on pavement

    img = np.empty((3, size, size), dtype=np.float32)
    pav_noise = rng.uniform(-0.04, 0.04, size=(size, size))
    grass_noise = rng.uniform(-0.15, 0.15, size=(3, size, size))
    base = {
        YardScene.PAVEMENT: (0.55, 0.55, 0.55),
        YardScene.GRASS: (0.20, 0.55, 0.15),
        YardScene.BOX: (0.60, 0.25, 0.10),
    }
    for ch in range(3):
        img[ch] = base[YardScene.PAVEMENT][ch] + pav_noise
        grass = region == YardScene.GRASS
        img[ch][grass] = base[YardScene.GRASS][ch] + grass_noise[ch][grass]
        box = region == YardScene.BOX
        img[ch][box] = base[YardScene.BOX][ch] + 0.02 * grass_noise[ch][box]
    img = np.clip(img, 0.0, 1.0)

    return YardScene(image=img, region=region, pixel_spacing=pixel_spacing,
                     x0=-0.5, y0=-size * pixel_spacing / 2)
