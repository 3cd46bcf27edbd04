"""Occupancy grids, ground-truth worlds, coordinate transforms and map merging.

The occupancy alphabet is fixed to three values: -1 unknown, 0 free,
100 occupied. Grids are stored row-major with cell (0, 0) at the world
origin corner; cell centers define the grid-to-world convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNKNOWN = -1
FREE = 0
OCCUPIED = 100
OCCUPANCY_VALUES = (UNKNOWN, FREE, OCCUPIED)

# Obstacle height classes used by world files: tall structure blocks both
# aerial and ground sensing, low clutter is invisible from above.
TALL_OBSTACLE_HEIGHT = 2.0
LOW_OBSTACLE_HEIGHT = 0.4

_INTENSITY = {FREE: 255, OCCUPIED: 0, UNKNOWN: 127}


class WorldFileError(ValueError):
    """Raised when a world file cannot be parsed."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(a, math.tau)
    if w <= -math.pi:
        w += math.tau
    return w


@dataclass(frozen=True)
class Pose2D:
    """Planar robot pose; theta is normalized to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class OccupancyGrid:
    """2D occupancy lattice in a fixed world frame.

    Attributes:
        width, height: extent in cells.
        resolution: meters per cell, > 0.
        origin: world coordinates of the lower-left corner of cell (0, 0).
        cells: (height, width) int8 array with values in {-1, 0, 100}.

    Grids are treated as immutable once handed to another module; producers
    copy before mutating.
    """

    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.width < 0 or self.height < 0:
            raise ValueError("grid dimensions must be non-negative")
        if self.cells is None:
            self.cells = np.full((self.height, self.width), UNKNOWN, dtype=np.int8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.int8)
            if self.cells.shape != (self.height, self.width):
                raise ValueError(
                    f"cells shape {self.cells.shape} != ({self.height}, {self.width})"
                )
        bad = ~np.isin(self.cells, OCCUPANCY_VALUES)
        if bad.any():
            raise ValueError(f"invalid occupancy values: {np.unique(self.cells[bad])}")

    @classmethod
    def filled(cls, width, height, resolution, origin=(0.0, 0.0), value=UNKNOWN):
        cells = np.full((height, width), value, dtype=np.int8)
        return cls(width, height, resolution, origin, cells)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(
            self.width, self.height, self.resolution, self.origin, self.cells.copy()
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def known_count(self) -> int:
        return int((self.cells != UNKNOWN).sum())

    def known_area(self) -> float:
        """Area of known (free or occupied) cells in square meters."""
        return self.known_count() * self.resolution**2


def grid_to_world(grid: OccupancyGrid, ix: int, iy: int) -> tuple[float, float]:
    """World coordinates of the center of cell (ix, iy)."""
    if not grid.in_bounds(ix, iy):
        raise IndexError(f"cell ({ix}, {iy}) outside {grid.width}x{grid.height} grid")
    ox, oy = grid.origin
    return (ox + (ix + 0.5) * grid.resolution, oy + (iy + 0.5) * grid.resolution)


def world_to_grid(grid: OccupancyGrid, wx: float, wy: float):
    """Cell index containing world point (wx, wy), or None when outside."""
    ox, oy = grid.origin
    ix = math.floor((wx - ox) / grid.resolution)
    iy = math.floor((wy - oy) / grid.resolution)
    if not grid.in_bounds(ix, iy):
        return None
    return (ix, iy)


def merge_maps(maps: list[OccupancyGrid], frame: int = 0) -> OccupancyGrid:
    """Merge grids sharing one world frame into a single map.

    The output extent is the bounding box of all inputs, aligned to the
    lattice of the reference map ``maps[frame]``. Per cell the dominance
    order is occupied > free > unknown.
    """
    if not maps:
        raise ValueError("merge_maps needs at least one map")
    if not 0 <= frame < len(maps):
        raise ValueError(f"frame index {frame} out of range")
    res = maps[frame].resolution
    for m in maps:
        if not math.isclose(m.resolution, res, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"mismatched resolutions: {m.resolution} vs {res}")

    min_x = min(m.origin[0] for m in maps)
    min_y = min(m.origin[1] for m in maps)
    max_x = max(m.origin[0] + m.width * res for m in maps)
    max_y = max(m.origin[1] + m.height * res for m in maps)

    # Snap the output origin onto the reference lattice.
    fox, foy = maps[frame].origin
    ox = fox - math.ceil((fox - min_x) / res - 1e-9) * res
    oy = foy - math.ceil((foy - min_y) / res - 1e-9) * res
    width = math.ceil((max_x - ox) / res - 1e-9)
    height = math.ceil((max_y - oy) / res - 1e-9)

    out = np.full((height, width), UNKNOWN, dtype=np.int8)
    for m in maps:
        dx = round((m.origin[0] - ox) / res)
        dy = round((m.origin[1] - oy) / res)
        view = out[dy : dy + m.height, dx : dx + m.width]
        # With the alphabet {-1, 0, 100} elementwise max is exactly the
        # occupied > free > unknown dominance rule.
        np.maximum(view, m.cells, out=view)
    return OccupancyGrid(width, height, res, (ox, oy), out)


@dataclass
class WorldModel:
    """Ground-truth world: per-cell obstacle heights on a regular lattice.

    Height 0 marks free space; the world occupies [0, width*res] x
    [0, height*res] with origin fixed at (0, 0).
    """

    resolution: float
    heights: np.ndarray  # (height, width) float array, 0 = free

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if self.heights.ndim != 2 or self.heights.size == 0:
            raise ValueError("world must be a non-empty 2D height grid")
        if (self.heights < 0).any():
            raise ValueError("obstacle heights must be non-negative")
        if not (self.heights == 0).any():
            raise ValueError("world has no free cell")

    @property
    def width(self) -> int:
        return self.heights.shape[1]

    @property
    def height(self) -> int:
        return self.heights.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def free_mask(self) -> np.ndarray:
        return self.heights == 0

    def blank_grid(self) -> OccupancyGrid:
        """All-unknown occupancy grid on the world lattice."""
        return OccupancyGrid.filled(self.width, self.height, self.resolution)

    def truth_grid(self) -> OccupancyGrid:
        """Fully-known rendering: free cells 0, any obstacle 100."""
        cells = np.where(self.heights > 0, OCCUPIED, FREE).astype(np.int8)
        return OccupancyGrid(self.width, self.height, self.resolution, (0.0, 0.0), cells)


_CHAR_HEIGHTS = {".": 0.0, "#": TALL_OBSTACLE_HEIGHT, "x": LOW_OBSTACLE_HEIGHT}


def load_world(text: str) -> WorldModel:
    """Parse a world file.

    Line 1 must read ``resolution <float>``; the remaining lines are
    equal-length rows over {'.', '#', 'x'} listed top row first.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise WorldFileError("line 1: empty world file")

    header = lines[0].split()
    if len(header) != 2 or header[0] != "resolution":
        raise WorldFileError("line 1: expected 'resolution <float>'")
    try:
        resolution = float(header[1])
    except ValueError:
        raise WorldFileError(f"line 1: bad resolution {header[1]!r}") from None
    if resolution <= 0:
        raise WorldFileError("line 1: resolution must be > 0")

    rows = lines[1:]
    if not rows:
        raise WorldFileError("line 2: world has no rows")
    width = len(rows[0])
    heights = np.zeros((len(rows), width), dtype=np.float64)
    for r, row in enumerate(rows):
        lineno = r + 2
        if len(row) != width:
            raise WorldFileError(
                f"line {lineno}: row length {len(row)} != {width} (ragged rows)"
            )
        for c, ch in enumerate(row):
            if ch not in _CHAR_HEIGHTS:
                raise WorldFileError(
                    f"line {lineno}, column {c + 1}: unknown character {ch!r}"
                )
            # first file row is the top of the world
            heights[len(rows) - 1 - r, c] = _CHAR_HEIGHTS[ch]
    if not (heights == 0).any():
        raise WorldFileError("world has no free cell")
    return WorldModel(resolution=resolution, heights=heights)


def uav_prior_map(world: WorldModel, min_height: float, swath: float) -> OccupancyGrid:
    """Height-filtered prior map from an instantaneous aerial lawn-mower sweep.

    Sweep rows run west-east at spacing ``swath``, each observing a band of
    half-width swath/2. Cells inside a band become known: 100 where the
    ground-truth obstacle height is >= min_height, else 0 (low obstacles are
    invisible from above). Cells outside every band stay unknown; a trailing
    strip narrower than half a band is therefore left unswept.
    """
    if min_height <= 0:
        raise ValueError("min_height must be > 0")
    if swath <= 0:
        raise ValueError("swath must be > 0")
    _, height_m = world.extent
    rows = [swath / 2.0]
    while rows[-1] + swath < height_m:
        rows.append(rows[-1] + swath)
    row_ys = np.asarray(rows)

    cy = (np.arange(world.height) + 0.5) * world.resolution
    swept = (np.abs(cy[:, None] - row_ys[None, :]) <= swath / 2.0 + 1e-9).any(axis=1)

    cells = np.full((world.height, world.width), UNKNOWN, dtype=np.int8)
    visible = world.heights >= min_height
    cells[swept, :] = np.where(visible[swept, :], OCCUPIED, FREE)
    return OccupancyGrid(world.width, world.height, world.resolution, (0.0, 0.0), cells)


def occupancy_to_intensity(grid: OccupancyGrid) -> np.ndarray:
    """Render occupancy to a grayscale image: free 255, occupied 0, unknown 127."""
    img = np.full(grid.cells.shape, _INTENSITY[UNKNOWN], dtype=np.uint8)
    img[grid.cells == FREE] = _INTENSITY[FREE]
    img[grid.cells == OCCUPIED] = _INTENSITY[OCCUPIED]
    return img


def save_pgm(grid: OccupancyGrid, path) -> None:
    """Write a binary (P5) PGM plus a sidecar text header with the geometry.

    The top raster row of the image is the northernmost grid row. The sidecar
    is ``<stem>.txt`` next to the image.
    """
    import pathlib

    path = pathlib.Path(path)
    img = occupancy_to_intensity(grid)[::-1, :]  # flip so north is up
    with open(path, "wb") as f:
        f.write(f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii"))
        f.write(img.tobytes())
    sidecar = path.with_suffix(".txt")
    with open(sidecar, "w") as f:
        f.write(f"origin_x = {grid.origin[0]:.9g}\n")
        f.write(f"origin_y = {grid.origin[1]:.9g}\n")
        f.write(f"resolution = {grid.resolution:.9g}\n")
        f.write(f"width = {grid.width}\n")
        f.write(f"height = {grid.height}\n")


def load_pgm(path) -> OccupancyGrid:
    """Read a map written by save_pgm (requires the sidecar header)."""
    import pathlib

    path = pathlib.Path(path)
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM")
        dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError(f"{path}: unsupported maxval {maxval}")
        raw = np.frombuffer(f.read(width * height), dtype=np.uint8)
    img = raw.reshape((height, width))[::-1, :]
    cells = np.full(img.shape, UNKNOWN, dtype=np.int8)
    cells[img == 255] = FREE
    cells[img == 0] = OCCUPIED
    unexpected = ~np.isin(img, (255, 0, 127))
    if unexpected.any():
        raise ValueError(f"{path}: unexpected intensity values")

    meta = {}
    with open(path.with_suffix(".txt")) as f:
        for line in f:
            key, _, value = line.partition("=")
            meta[key.strip()] = float(value)
    return OccupancyGrid(
        width,
        height,
        meta["resolution"],
        (meta["origin_x"], meta["origin_y"]),
        cells,
    )
