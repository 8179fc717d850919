"""Navigation cost map: projection, label fusion, dilation, distances.

Cell classes reuse the patch-module encoding (DRIVABLE=0, OBSTACLE=1,
UNKNOWN=-1). Grids are robot-centered by default: 15 m x 15 m at 0.10 m
per cell, row index along +x (forward), column index along +y (left).
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .patches import DRIVABLE, OBSTACLE, UNKNOWN, LabelMap

GRID_MAGIC = b"TCMP"
GRID_VERSION = 1


@dataclass
class FusionConfig:
    hard_height_threshold: float = 0.15  # operator-settable, meters
    point_height_threshold: float = 0.04  # per-point obstacle labeling, meters
    dilation_radius: float = 0.15
    map_size: float = 15.0
    resolution: float = 0.10

    def __post_init__(self):
        for name in ("hard_height_threshold", "point_height_threshold",
                     "dilation_radius", "map_size", "resolution"):
            if getattr(self, name) < 0 or (name != "dilation_radius"
                                           and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")

    @property
    def cells(self) -> int:
        return int(round(self.map_size / self.resolution))


@dataclass
class CostMap:
    origin: tuple           # robot-frame (x, y) of the center of cell (0, 0)
    resolution: float
    max_height: np.ndarray  # (R, C) float64, NaN = unknown
    stereo_label: np.ndarray  # int8
    net_label: np.ndarray     # int8
    fused: np.ndarray         # int8
    distance_to_obstacle: np.ndarray | None = None  # float64 meters, inf = none
    dropped_points: int = 0  # points outside the map extent at projection

    @property
    def shape(self) -> tuple:
        return self.max_height.shape

    def cell_center(self, cell: tuple) -> tuple:
        return (self.origin[0] + cell[0] * self.resolution,
                self.origin[1] + cell[1] * self.resolution)

    def cell_of(self, x: float, y: float) -> tuple:
        return (int(round((x - self.origin[0]) / self.resolution)),
                int(round((y - self.origin[1]) / self.resolution)))


def empty_map(config: FusionConfig, origin: tuple | None = None) -> CostMap:
    n = config.cells
    if origin is None:
        # robot-centered: map spans [-size/2, size/2] on both axes
        origin = (-config.map_size / 2 + config.resolution / 2,
                  -config.map_size / 2 + config.resolution / 2)
    return CostMap(
        origin=origin,
        resolution=config.resolution,
        max_height=np.full((n, n), np.nan),
        stereo_label=np.full((n, n), UNKNOWN, dtype=np.int8),
        net_label=np.full((n, n), UNKNOWN, dtype=np.int8),
        fused=np.full((n, n), UNKNOWN, dtype=np.int8),
    )


def project_to_grid(points: np.ndarray, heights: np.ndarray,
                    point_obstacle: np.ndarray, config: FusionConfig,
                    pixels: np.ndarray | None = None,
                    label_map: LabelMap | None = None,
                    origin: tuple | None = None) -> CostMap:
    """Aggregate labeled points into cells: max height, any-obstacle stereo
    label, and a majority vote of network labels (ties go to obstacle).
    Points outside the map extent are dropped (count kept on the map)."""
    cmap = empty_map(config, origin)
    n = config.cells
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ri = np.round((pts[:, 0] - cmap.origin[0]) / config.resolution).astype(np.intp)
    ci = np.round((pts[:, 1] - cmap.origin[1]) / config.resolution).astype(np.intp)
    inside = (ri >= 0) & (ri < n) & (ci >= 0) & (ci < n)
    cmap.dropped_points = int((~inside).sum())

    idx = ri[inside] * n + ci[inside]
    h = np.asarray(heights, dtype=np.float64)[inside]
    obs = np.asarray(point_obstacle, dtype=bool)[inside]

    flat_h = np.full(n * n, -np.inf)
    np.maximum.at(flat_h, idx, h)
    occupied = np.zeros(n * n, dtype=bool)
    occupied[idx] = True
    cmap.max_height = np.where(occupied, flat_h, np.nan).reshape(n, n)

    any_obs = np.zeros(n * n, dtype=bool)
    any_obs[idx[obs]] = True
    stereo = np.full(n * n, UNKNOWN, dtype=np.int8)
    stereo[occupied] = DRIVABLE
    stereo[any_obs] = OBSTACLE
    cmap.stereo_label = stereo.reshape(n, n)

    if label_map is not None and pixels is not None:
        px = np.asarray(pixels, dtype=np.intp)[inside]
        valid_px = ((px[:, 0] >= 0) & (px[:, 0] < label_map.height)
                    & (px[:, 1] >= 0) & (px[:, 1] < label_map.width))
        lm = label_map.values[px[valid_px, 0], px[valid_px, 1]]
        cell = idx[valid_px]
        known = lm != UNKNOWN
        votes_d = np.bincount(cell[known & (lm == DRIVABLE)], minlength=n * n)
        votes_o = np.bincount(cell[known & (lm == OBSTACLE)], minlength=n * n)
        net = np.full(n * n, UNKNOWN, dtype=np.int8)
        has = (votes_d + votes_o) > 0
        # ties are conservative: obstacle wins
        net[has & (votes_o >= votes_d)] = OBSTACLE
        net[has & (votes_d > votes_o)] = DRIVABLE
        cmap.net_label = net.reshape(n, n)
    return cmap


def fuse(cmap: CostMap, config: FusionConfig) -> CostMap:
    """Fusion rule per cell:
      height > hard threshold            -> obstacle, network ignored
      height known, <= threshold         -> network label, else stereo label
      height unknown                     -> network label
      everything unknown                 -> unknown
    """
    h = cmap.max_height
    net = cmap.net_label
    stereo = cmap.stereo_label
    height_known = ~np.isnan(h)
    over = height_known & (h > config.hard_height_threshold)

    fused = np.full(cmap.shape, UNKNOWN, dtype=np.int8)
    fused[~height_known] = net[~height_known]
    under = height_known & ~over
    fused[under] = np.where(net[under] != UNKNOWN, net[under], stereo[under])
    fused[over] = OBSTACLE
    return replace(cmap, fused=fused)


def dilate_obstacles(cmap: CostMap, radius: float) -> CostMap:
    """Every cell whose center is within ``radius`` of an obstacle-cell
    center becomes an obstacle; everything else keeps its label."""
    obstacle = cmap.fused == OBSTACLE
    if radius > 0 and obstacle.any():
        dist = ndimage.distance_transform_edt(
            ~obstacle, sampling=cmap.resolution)
        grown = dist <= radius + 1e-12
    else:
        grown = obstacle
    fused = cmap.fused.copy()
    fused[grown] = OBSTACLE
    return replace(cmap, fused=fused)


def distance_transform(cmap: CostMap) -> CostMap:
    """Exact Euclidean distance (meters) from each cell center to the
    nearest obstacle cell center; +inf when the map holds no obstacles."""
    obstacle = cmap.fused == OBSTACLE
    if not obstacle.any():
        dist = np.full(cmap.shape, np.inf)
    else:
        dist = ndimage.distance_transform_edt(~obstacle, sampling=cmap.resolution)
    return replace(cmap, distance_to_obstacle=dist)


def build_costmap(points, heights, point_obstacle, config: FusionConfig,
                  pixels=None, label_map=None, origin=None) -> CostMap:
    """Full pipeline: project, fuse, dilate, distance transform."""
    cmap = project_to_grid(points, heights, point_obstacle, config,
                           pixels=pixels, label_map=label_map, origin=origin)
    cmap = fuse(cmap, config)
    cmap = dilate_obstacles(cmap, config.dilation_radius)
    return distance_transform(cmap)


_LABEL_BYTE = {DRIVABLE: 0, OBSTACLE: 1, UNKNOWN: 255}
_BYTE_LABEL = {v: k for k, v in _LABEL_BYTE.items()}


def save_grid(cmap: CostMap, path: str) -> None:
    """Grid file: magic, u32 version, u32 header length, JSON header
    (origin/resolution/dims), fused labels one byte per cell (0 drivable,
    1 obstacle, 255 unknown), then a float32 height plane (NaN unknown)."""
    header = json.dumps({
        "origin": [float(cmap.origin[0]), float(cmap.origin[1])],
        "resolution": cmap.resolution,
        "rows": cmap.shape[0],
        "cols": cmap.shape[1],
    }).encode()
    lut = np.array([_LABEL_BYTE[UNKNOWN]] * 256, dtype=np.uint8)
    lut[DRIVABLE] = 0
    lut[OBSTACLE] = 1
    fused_bytes = lut[cmap.fused.astype(np.uint8)]
    buf = io.BytesIO()
    buf.write(GRID_MAGIC)
    buf.write(struct.pack("<II", GRID_VERSION, len(header)))
    buf.write(header)
    buf.write(fused_bytes.tobytes())
    buf.write(cmap.max_height.astype("<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_grid(path: str) -> CostMap:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != GRID_MAGIC:
        raise ValueError("not a cost-map grid file")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != GRID_VERSION:
        raise ValueError(f"unsupported grid version {version}")
    header = json.loads(blob[12:12 + hlen])
    rows, cols = header["rows"], header["cols"]
    off = 12 + hlen
    fused_bytes = np.frombuffer(blob[off:off + rows * cols], dtype=np.uint8)
    off += rows * cols
    heights = np.frombuffer(blob[off:off + rows * cols * 4],
                            dtype="<f4").astype(np.float64)
    fused = np.full(rows * cols, UNKNOWN, dtype=np.int8)
    fused[fused_bytes == 0] = DRIVABLE
    fused[fused_bytes == 1] = OBSTACLE
    cmap = CostMap(
        origin=tuple(header["origin"]),
        resolution=header["resolution"],
        max_height=heights.reshape(rows, cols),
        stereo_label=np.full((rows, cols), UNKNOWN, dtype=np.int8),
        net_label=np.full((rows, cols), UNKNOWN, dtype=np.int8),
        fused=fused.reshape(rows, cols),
    )
    return distance_transform(cmap)


def summary(cmap: CostMap) -> dict:
    fused = cmap.fused
    return {
        "origin": [float(cmap.origin[0]), float(cmap.origin[1])],
        "resolution": cmap.resolution,
        "rows": int(cmap.shape[0]),
        "cols": int(cmap.shape[1]),
        "drivable_cells": int((fused == DRIVABLE).sum()),
        "obstacle_cells": int((fused == OBSTACLE).sum()),
        "unknown_cells": int((fused == UNKNOWN).sum()),
    }


def render_ppm(cmap: CostMap) -> bytes:
    """Binary PPM render: red = obstacle, green = drivable, gray = unknown."""
    rows, cols = cmap.shape
    img = np.full((rows, cols, 3), 128, dtype=np.uint8)
    img[cmap.fused == OBSTACLE] = (200, 30, 30)
    img[cmap.fused == DRIVABLE] = (30, 180, 30)
    return b"P6\n%d %d\n255\n" % (cols, rows) + img.tobytes()
