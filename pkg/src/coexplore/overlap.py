"""Pairwise map overlap: co-known occupancy over the region two robots share."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world_model import FREE, OCCUPIED, UNKNOWN, OccupancyGrid


@dataclass
class IoUMap:
    """Occupancy over the rectangular region where both input maps are known.

    Cells are set only where both inputs are known: free when both are free,
    occupied when either reports an obstacle; everything else stays unknown.
    """

    grid: OccupancyGrid
    width: int
    height: int


def _empty_iou(resolution: float) -> IoUMap:
    return IoUMap(OccupancyGrid.filled(0, 0, resolution), 0, 0)


def known_extent_bbox(grid: OccupancyGrid):
    """World-coordinate bounding box of known cells, or None if all unknown."""
    known = grid.cells != UNKNOWN
    if not known.any():
        return None
    ys, xs = np.nonzero(known)
    ox, oy = grid.origin
    res = grid.resolution
    return (
        ox + xs.min() * res,
        oy + ys.min() * res,
        ox + (xs.max() + 1) * res,
        oy + (ys.max() + 1) * res,
    )


def compute_iou(m1: OccupancyGrid, m2: OccupancyGrid) -> IoUMap:
    """Overlap map of two grids sharing resolution and world frame.

    The region is the intersection of the two known-extent bounding boxes,
    snapped to m1's lattice. Within it, per cell: both free -> free, both
    occupied -> occupied, exactly one occupied -> occupied, otherwise unknown.
    """
    res = m1.resolution
    if not math.isclose(m2.resolution, res, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"mismatched resolutions: {m1.resolution} vs {m2.resolution}")

    bb1 = known_extent_bbox(m1)
    bb2 = known_extent_bbox(m2)
    if bb1 is None or bb2 is None:
        return _empty_iou(res)
    x_lo, y_lo = max(bb1[0], bb2[0]), max(bb1[1], bb2[1])
    x_hi, y_hi = min(bb1[2], bb2[2]), min(bb1[3], bb2[3])
    if x_hi - x_lo < res / 2 or y_hi - y_lo < res / 2:
        return _empty_iou(res)

    o1x, o1y = m1.origin
    i_lo = int(math.floor((x_lo - o1x) / res + 1e-9))
    j_lo = int(math.floor((y_lo - o1y) / res + 1e-9))
    w = int(round((x_hi - x_lo) / res))
    h = int(round((y_hi - y_lo) / res))
    origin = (o1x + i_lo * res, o1y + j_lo * res)

    v1 = m1.cells[j_lo : j_lo + h, i_lo : i_lo + w]

    # Look up m2 by the world coordinates of each region cell center.
    cx = origin[0] + (np.arange(w) + 0.5) * res
    cy = origin[1] + (np.arange(h) + 0.5) * res
    ix2 = np.floor((cx - m2.origin[0]) / res).astype(int)
    iy2 = np.floor((cy - m2.origin[1]) / res).astype(int)
    ok_x = (ix2 >= 0) & (ix2 < m2.width)
    ok_y = (iy2 >= 0) & (iy2 < m2.height)
    v2 = np.full((h, w), UNKNOWN, dtype=np.int8)
    if ok_x.any() and ok_y.any():
        sub = m2.cells[np.ix_(iy2[ok_y], ix2[ok_x])]
        v2[np.ix_(ok_y, ok_x)] = sub

    both_known = (v1 != UNKNOWN) & (v2 != UNKNOWN)
    cells = np.where(
        both_known,
        np.where((v1 == FREE) & (v2 == FREE), FREE, OCCUPIED),
        UNKNOWN,
    ).astype(np.int8)
    return IoUMap(OccupancyGrid(w, h, res, origin, cells), w, h)


def iou_area(m: IoUMap) -> float:
    """Known area of the overlap map in square meters."""
    return m.grid.known_area()
