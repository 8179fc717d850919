"""Point-cloud ingestion, Hough ground-plane fitting, and height labeling.

Frame convention: x forward, y left, z up, meters. A plane is
{p : n . p = d} with the unit normal canonicalized to point upward
(nz > 0; ties broken toward +y then +x).
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np


class PlaneFitError(ValueError):
    """Raised when no plane can be fitted (too few / degenerate points)."""


class PointCloudFormatError(ValueError):
    """Raised on malformed point-cloud files."""


@dataclass
class PointCloud:
    points: np.ndarray                 # (N, 3) float64
    pixels: np.ndarray | None = None   # (N, 2) int (row, col), optional

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class GroundPlane:
    normal: np.ndarray  # unit (nx, ny, nz), nz > 0
    d: float            # n . p = d for points p on the plane
    inlier_count: int = 0


@dataclass
class HoughConfig:
    angle_step_deg: float = 1.0    # tilt and azimuth resolution
    rho_step: float = 0.01         # offset resolution, meters
    rho_max: float = 0.5           # offset window: |rho| <= rho_max
    inlier_distance: float = 0.02  # meters
    refine_iterations: int = 2


def _canonicalize(normal: np.ndarray, d: float) -> tuple[np.ndarray, float]:
    n = normal / np.linalg.norm(normal)
    flip = n[2] < 0 or (n[2] == 0 and (n[1] < 0 or (n[1] == 0 and n[0] < 0)))
    if flip:
        n, d = -n, -d
    return n, d


def _least_squares_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    return _canonicalize(normal, float(normal @ centroid))


def hough_plane_fit(cloud: PointCloud,
                    config: HoughConfig = HoughConfig()) -> GroundPlane:
    """Exhaustive voting over a (tilt, azimuth, offset) grid, then
    least-squares refinement over the winning cell's inliers.

    Deterministic: on vote ties the lowest accumulator index wins.
    """
    pts = np.asarray(cloud.points, dtype=np.float64)
    if len(pts) < 3:
        raise PlaneFitError(f"need at least 3 points, got {len(pts)}")

    step = math.radians(config.angle_step_deg)
    n_theta = int(round(math.pi / 2 / step)) + 1          # tilt 0..90 deg
    n_phi = int(round(2 * math.pi / step))                # azimuth 0..360
    thetas = np.arange(n_theta) * step
    phis = np.arange(n_phi) * step
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    dirs = np.stack([np.sin(tt) * np.cos(pp),
                     np.sin(tt) * np.sin(pp),
                     np.cos(tt)], axis=-1).reshape(-1, 3)

    n_rho = 2 * int(round(config.rho_max / config.rho_step)) + 1
    rho_offset = (n_rho - 1) // 2
    best_votes, best_cell = -1, (0, 0)
    chunk = 4096
    p32 = pts.astype(np.float32)
    d32 = dirs.astype(np.float32)
    for start in range(0, len(dirs), chunk):
        block = d32[start:start + chunk]
        rho = p32 @ block.T                                # (N, B)
        bins = np.rint(rho / config.rho_step).astype(np.int64) + rho_offset
        valid = (bins >= 0) & (bins < n_rho)
        cols = np.broadcast_to(np.arange(block.shape[0]), bins.shape)
        flat = cols[valid] * n_rho + bins[valid]
        votes = np.bincount(flat, minlength=block.shape[0] * n_rho)
        idx = int(np.argmax(votes))
        if votes[idx] > best_votes:
            best_votes = int(votes[idx])
            best_cell = (start + idx // n_rho, idx % n_rho)

    normal = dirs[best_cell[0]]
    d = (best_cell[1] - rho_offset) * config.rho_step
    inliers = np.empty(0, dtype=bool)
    for _ in range(config.refine_iterations):
        dist = np.abs(pts @ normal - d)
        inliers = dist <= config.inlier_distance
        if inliers.sum() < 3:
            break
        sel = pts[inliers]
        if np.linalg.matrix_rank(sel - sel.mean(axis=0), tol=1e-12) < 2:
            raise PlaneFitError("inlier points are collinear")
        normal, d = _least_squares_plane(sel)
    normal, d = _canonicalize(normal, d)
    count = int((np.abs(pts @ normal - d) <= config.inlier_distance).sum())
    if count < 3:
        raise PlaneFitError("no plane supported by at least 3 points")
    return GroundPlane(normal=normal, d=float(d), inlier_count=count)


def point_heights(cloud: PointCloud, plane: GroundPlane) -> np.ndarray:
    """Signed height of each point above the plane (meters)."""
    return np.asarray(cloud.points, dtype=np.float64) @ plane.normal - plane.d


def label_points(cloud: PointCloud, plane: GroundPlane,
                 height_threshold: float = 0.04
                 ) -> tuple[np.ndarray, np.ndarray]:
    """(obstacle mask, signed heights). A point is an obstacle when its
    absolute height exceeds the threshold; holes below the plane count too."""
    heights = point_heights(cloud, plane)
    return np.abs(heights) > height_threshold, heights


def _parse_csv(text: str) -> PointCloud:
    points, pixels = [], []
    has_pixels = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) not in (3, 5):
            raise PointCloudFormatError(
                f"line {lineno}: expected 3 or 5 comma-separated values")
        try:
            vals = [float(v) for v in parts]
        except ValueError as e:
            raise PointCloudFormatError(f"line {lineno}: {e}") from e
        if not all(math.isfinite(v) for v in vals):
            raise PointCloudFormatError(f"line {lineno}: non-finite coordinate")
        row_has_pixels = len(parts) == 5
        if has_pixels is None:
            has_pixels = row_has_pixels
        elif has_pixels != row_has_pixels:
            raise PointCloudFormatError(
                f"line {lineno}: inconsistent column count")
        points.append(vals[:3])
        if row_has_pixels:
            pixels.append([int(vals[3]), int(vals[4])])
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return PointCloud(points=pts,
                      pixels=np.asarray(pixels, dtype=np.intp) if pixels else None)


def _parse_ply(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PointCloudFormatError("missing 'ply' magic line")
    n_vertices = None
    props = []
    body_start = None
    in_vertex = False
    for i, line in enumerate(lines[1:], 1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise PointCloudFormatError("only ascii PLY is supported")
        if tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertices = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[2])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None or n_vertices is None:
        raise PointCloudFormatError("incomplete PLY header")
    try:
        xi, yi, zi = props.index("x"), props.index("y"), props.index("z")
    except ValueError:
        raise PointCloudFormatError("PLY vertex element lacks x/y/z properties")
    points = []
    for lineno in range(body_start, body_start + n_vertices):
        if lineno >= len(lines):
            raise PointCloudFormatError("PLY body shorter than declared")
        vals = lines[lineno].split()
        try:
            p = [float(vals[xi]), float(vals[yi]), float(vals[zi])]
        except (ValueError, IndexError) as e:
            raise PointCloudFormatError(f"line {lineno + 1}: {e}") from e
        if not all(math.isfinite(v) for v in p):
            raise PointCloudFormatError(f"line {lineno + 1}: non-finite coordinate")
        points.append(p)
    return PointCloud(points=np.asarray(points, dtype=np.float64).reshape(-1, 3))


def load_point_cloud(source) -> PointCloud:
    """Load from a path or raw text. CSV rows are ``x,y,z[,row,col]``;
    ASCII PLY with x/y/z vertex properties is also accepted."""
    if isinstance(source, bytes):
        source = source.decode()
    if isinstance(source, str) and os.path.exists(source):
        with open(source) as f:
            source = f.read()
    text = source
    if text.lstrip().startswith("ply"):
        return _parse_ply(text)
    return _parse_csv(text)


def save_point_cloud(cloud: PointCloud, path: str) -> None:
    buf = io.StringIO()
    for i, p in enumerate(cloud.points):
        row = f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}"
        if cloud.pixels is not None:
            row += f",{int(cloud.pixels[i][0])},{int(cloud.pixels[i][1])}"
        buf.write(row + "\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())
