"""Distance-aware grid path planning over a fused cost map.

Edge cost into a target cell is
    step_length * (1 + weight * exp(-distance_to_obstacle / scale))
with an extra multiplicative penalty when the target cell is unknown.
A* with a straight-line heuristic is optimal here because every edge
multiplier is >= 1. Ties are broken by expanding the lowest cell index
first, so plans are reproducible.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .costmap import CostMap
from .patches import OBSTACLE, UNKNOWN


class PlanningError(ValueError):
    pass


class UnreachableGoalError(PlanningError):
    pass


@dataclass
class PlanRequest:
    start: tuple  # (row, col) cell
    goal: tuple   # (row, col) cell
    proximity_weight: float = 2.0   # lambda
    proximity_scale: float = 0.5    # meters
    unknown_penalty: float = 1.5    # multiplier on unknown-cell edges
    lookahead_cells: int = 5


@dataclass
class PlannedPath:
    cells: list          # ordered (row, col) from start to goal
    total_cost: float
    heading: float       # radians, direction of the first segment, robot frame
    at_goal: bool = False

    def to_dict(self) -> dict:
        return {
            "cells": [[int(r), int(c)] for r, c in self.cells],
            "total_cost": self.total_cost,
            "heading": self.heading,
            "at_goal": self.at_goal,
        }


_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
              (0, 1), (1, -1), (1, 0), (1, 1)]


def _cell_multiplier(cmap: CostMap, req: PlanRequest) -> np.ndarray:
    dist = cmap.distance_to_obstacle
    if dist is None:
        raise PlanningError("cost map lacks a distance transform")
    mult = 1.0 + req.proximity_weight * np.exp(-dist / req.proximity_scale)
    mult = np.where(cmap.fused == UNKNOWN, mult * req.unknown_penalty, mult)
    return mult


def plan(cmap: CostMap, req: PlanRequest) -> PlannedPath:
    rows, cols = cmap.shape
    start, goal = tuple(req.start), tuple(req.goal)
    for name, cell in (("start", start), ("goal", goal)):
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols):
            raise PlanningError(f"{name} cell {cell} outside the map")
    if cmap.fused[start] == OBSTACLE:
        raise PlanningError(f"start cell {start} is an obstacle")
    if cmap.fused[goal] == OBSTACLE:
        raise UnreachableGoalError(
            f"goal cell {goal} lies inside a (dilated) obstacle")

    res = cmap.resolution
    mult = _cell_multiplier(cmap, req)
    blocked = cmap.fused == OBSTACLE

    def heuristic(cell):
        return math.hypot(cell[0] - goal[0], cell[1] - goal[1]) * res

    g = np.full((rows, cols), np.inf)
    g[start] = 0.0
    parent = {}
    closed = np.zeros((rows, cols), dtype=bool)
    open_heap = [(heuristic(start), start[0] * cols + start[1], start)]
    while open_heap:
        f, _, cell = heapq.heappop(open_heap)
        if closed[cell]:
            continue
        closed[cell] = True
        if cell == goal:
            break
        r, c = cell
        for dr, dc in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols):
                continue
            if blocked[nr, nc] or closed[nr, nc]:
                continue
            step = res * (math.sqrt(2.0) if dr and dc else 1.0)
            cand = g[cell] + step * mult[nr, nc]
            if cand < g[nr, nc]:
                g[nr, nc] = cand
                parent[(nr, nc)] = cell
                heapq.heappush(open_heap,
                               (cand + heuristic((nr, nc)), nr * cols + nc,
                                (nr, nc)))
    if not closed[goal]:
        raise UnreachableGoalError(f"no path from {start} to {goal}")

    cells = [goal]
    while cells[-1] != start:
        cells.append(parent[cells[-1]])
    cells.reverse()
    heading, at_goal = drive_direction(cells, start, cmap, req.lookahead_cells)
    return PlannedPath(cells=cells, total_cost=float(g[goal]),
                       heading=heading, at_goal=at_goal)


def drive_direction(cells: list, pose: tuple, cmap: CostMap,
                    lookahead_cells: int = 5) -> tuple[float, bool]:
    """Bearing (radians, wrapped to (-pi, pi]) from ``pose`` to the cell
    ``lookahead_cells`` ahead on the path, or the final cell if the path is
    shorter. A single-cell path means we are already at the goal."""
    if not cells:
        raise PlanningError("empty path")
    if len(cells) == 1:
        return 0.0, True
    target = cells[min(lookahead_cells, len(cells) - 1)]
    px, py = cmap.cell_center(pose)
    tx, ty = cmap.cell_center(target)
    heading = math.atan2(ty - py, tx - px)
    if heading <= -math.pi:
        heading += 2 * math.pi
    return heading, False
