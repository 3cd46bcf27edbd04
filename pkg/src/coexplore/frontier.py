"""Frontier detection and distance-based frontier filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world_model import FREE, UNKNOWN, OccupancyGrid, grid_to_world

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class FrontierPoint:
    """Candidate exploration target at the free/unknown boundary.

    source is "local" (detected on a robot's own map, robot_id set) or "iou"
    (detected on an overlap map). info_gain is filled by the server.
    """

    x: float
    y: float
    source: str = "local"
    robot_id: int | None = None
    info_gain: float = 0.0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


def point_distance(a, b) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def detect_frontiers(
    grid: OccupancyGrid,
    min_cluster: int = 1,
    source: str = "local",
    robot_id: int | None = None,
) -> list[FrontierPoint]:
    """Extract one frontier point per boundary cluster.

    A frontier cell is a free cell 8-adjacent to an unknown cell. Cells are
    grouped into 8-connected components; components smaller than min_cluster
    are dropped, and each survivor is represented by the member cell closest
    to the component centroid.
    """
    if min_cluster < 1:
        raise ValueError("min_cluster must be >= 1")
    free = grid.cells == FREE
    unknown = grid.cells == UNKNOWN
    if not free.any() or not unknown.any():
        return []
    near_unknown = ndimage.binary_dilation(unknown, structure=_EIGHT_CONNECTED > 0)
    mask = free & near_unknown
    if not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)

    points = []
    for lbl in range(1, count + 1):
        ys, xs = np.nonzero(labels == lbl)
        if len(xs) < min_cluster:
            continue
        cx, cy = xs.mean(), ys.mean()
        # snap to the nearest member cell; nonzero order breaks ties row-major
        best = np.argmin((xs - cx) ** 2 + (ys - cy) ** 2)
        wx, wy = grid_to_world(grid, int(xs[best]), int(ys[best]))
        points.append(FrontierPoint(wx, wy, source=source, robot_id=robot_id))
    return points


def filter_frontiers(
    m1_pts: list[FrontierPoint],
    iou_pts: list[FrontierPoint],
    dist_thresh: float,
    order: str = "iou-first",
    keep_iou: bool = False,
) -> list[FrontierPoint]:
    """Greedy distance thinning of local frontiers against overlap frontiers.

    Points are scanned in sequence; a point survives iff it lies at least
    dist_thresh from every earlier survivor (ties at exactly dist_thresh are
    kept). With the default "iou-first" order the overlap points are seeded
    first so they suppress nearby local points; "literal" scans local points
    first. Overlap points are dropped from the result unless keep_iou is set.
    """
    if dist_thresh < 0:
        raise ValueError("dist_thresh must be >= 0")
    if order == "iou-first":
        sequence = list(iou_pts) + list(m1_pts)
    elif order == "literal":
        sequence = list(m1_pts) + list(iou_pts)
    else:
        raise ValueError(f"unknown filter order {order!r}")

    kept: list[FrontierPoint] = []
    for p in sequence:
        too_close = any(point_distance(p, fp) < dist_thresh for fp in kept)
        if not too_close:
            kept.append(p)
    if keep_iou:
        return kept
    return [p for p in kept if p.source == "local"]


def frontier_csv_rows(points: list[FrontierPoint]) -> list[tuple]:
    """Rows (robot_id, x, y, source) for logging frontier lists."""
    return [(p.robot_id if p.robot_id is not None else "", p.x, p.y, p.source) for p in points]
