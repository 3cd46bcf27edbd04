"""Simulated ground robot: raycast sensing, A* planning, path entropy,
entropy-guided re-localization and per-tick motion."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .pose_graph import ORB_OK, PoseGraph
from .world_model import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    Pose2D,
    WorldModel,
    grid_to_world,
    wrap_angle,
    world_to_grid,
)

logger = logging.getLogger(__name__)

# Height of the ground sensor plane: anything at least this tall blocks and
# is reported by ground robots, while the aerial prior sees only features
# above its own (higher) cutoff.
GROUND_SENSOR_PLANE = 0.2

DEFAULT_CLOSURE_RADIUS = 0.5

SQRT2 = math.sqrt(2.0)


@dataclass
class SensorParams:
    ray_count: int = 48
    max_range: float = 2.0
    fov: float = math.tau
    plane_height: float = GROUND_SENSOR_PLANE

    def __post_init__(self):
        if self.ray_count < 1:
            raise ValueError("ray_count must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")


@dataclass
class SavedGoal:
    """Entry of a robot's saved-goal list with closure bookkeeping."""

    x: float
    y: float
    tick_added: int
    was_inside: bool = False

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class AgentState:
    id: int
    pose: Pose2D
    local_map: OccupancyGrid
    graph: PoseGraph | None = None
    sg_list: list[SavedGoal] = field(default_factory=list)
    orb_status: str = ORB_OK
    d_opti: float = 10.0
    reloc: int = 0
    current_goal: tuple[float, float] | None = None
    goal_source: str = "none"  # "server" | "reloc" | "dcm"
    path: list[tuple[int, int]] = field(default_factory=list)
    last_closure_tick: int = -1
    reloc_active: bool = False

    def remember_goal(self, x: float, y: float, tick: int, closure_radius: float) -> None:
        """Append to the saved-goal list; seeds the proximity flag so a goal
        the robot is already standing on cannot immediately re-trigger."""
        inside = math.hypot(self.pose.x - x, self.pose.y - y) <= closure_radius
        self.sg_list.append(SavedGoal(x, y, tick, was_inside=inside))


def grid_line(grid: OccupancyGrid, x0: float, y0: float, x1: float, y1: float):
    """Cells visited by the segment (x0,y0)->(x1,y1), clipped to the grid.

    Amanatides-Woo traversal; includes the start cell and stops at the cell
    containing the endpoint or at the grid boundary.
    """
    res = grid.resolution
    ox, oy = grid.origin
    ix = math.floor((x0 - ox) / res)
    iy = math.floor((y0 - oy) / res)
    ix1 = math.floor((x1 - ox) / res)
    iy1 = math.floor((y1 - oy) / res)
    dx = x1 - x0
    dy = y1 - y0

    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    if dx != 0:
        t_delta_x = abs(res / dx)
        next_bx = ox + (ix + (step_x > 0)) * res
        t_max_x = (next_bx - x0) / dx
    else:
        t_delta_x = math.inf
        t_max_x = math.inf
    if dy != 0:
        t_delta_y = abs(res / dy)
        next_by = oy + (iy + (step_y > 0)) * res
        t_max_y = (next_by - y0) / dy
    else:
        t_delta_y = math.inf
        t_max_y = math.inf

    cells = []
    guard = grid.width + grid.height + 2
    for _ in range(guard):
        if grid.in_bounds(ix, iy):
            cells.append((ix, iy))
        elif cells:
            break  # left the grid, never coming back
        if ix == ix1 and iy == iy1:
            break
        if t_max_x < t_max_y:
            t_max_x += t_delta_x
            ix += step_x
        else:
            t_max_y += t_delta_y
            iy += step_y
    return cells


def _ray_angles(theta: float, params: SensorParams) -> np.ndarray:
    n = params.ray_count
    if params.fov >= math.tau - 1e-9:
        return theta + np.arange(n) * (math.tau / n)
    if n == 1:
        return np.array([theta])
    return theta + np.linspace(-params.fov / 2, params.fov / 2, n)


def sense(
    world: WorldModel,
    pose: Pose2D,
    params: SensorParams,
    grid: OccupancyGrid,
) -> OccupancyGrid:
    """Update a local map by casting rays into the ground-truth world.

    Cells along each ray up to the first blocking obstacle become free, the
    blocking cell becomes occupied, everything beyond stays untouched. An
    obstacle blocks when its height reaches the sensor plane.
    """
    start = world_to_grid(grid, pose.x, pose.y)
    if start is None:
        raise ValueError(f"sensor pose ({pose.x}, {pose.y}) outside the world")
    if world.heights[start[1], start[0]] >= params.plane_height:
        raise ValueError(f"sensor pose ({pose.x}, {pose.y}) is on an obstacle")

    out = grid.copy()
    cells = out.cells
    heights = world.heights
    plane = params.plane_height
    for ang in _ray_angles(pose.theta, params):
        x1 = pose.x + math.cos(ang) * params.max_range
        y1 = pose.y + math.sin(ang) * params.max_range
        for ix, iy in grid_line(grid, pose.x, pose.y, x1, y1):
            if heights[iy, ix] >= plane:
                cells[iy, ix] = OCCUPIED
                break
            cells[iy, ix] = FREE
    return out


def _octile(ax: int, ay: int, bx: int, by: int) -> float:
    dx, dy = abs(ax - bx), abs(ay - by)
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


_NEIGHBORS = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
)


def plan_path(
    grid: OccupancyGrid,
    start: tuple[float, float],
    goal: tuple[float, float],
    through_unknown: bool = False,
):
    """8-connected A* between world points; returns the cell path or None.

    Free cells are traversable; occupied cells block, unknown cells block
    unless through_unknown is set. Diagonal moves must not cut corners (both
    cardinal side cells have to be traversable). The start must sit on a
    free cell.
    """
    s = world_to_grid(grid, start[0], start[1])
    if s is None or grid.cells[s[1], s[0]] != FREE:
        raise ValueError(f"start {start} is not on a free cell")
    g = world_to_grid(grid, goal[0], goal[1])
    if g is None:
        return None

    cells = grid.cells
    width, height = grid.width, grid.height

    def traversable(ix, iy):
        v = cells[iy, ix]
        return v == FREE or (through_unknown and v == UNKNOWN)

    if not traversable(g[0], g[1]):
        return None
    if s == g:
        return [s]

    open_heap = [(_octile(*s, *g), 0, s)]
    g_cost = {s: 0.0}
    came_from = {s: None}
    counter = 1
    while open_heap:
        _, _, current = heapq.heappop(open_heap)
        if current == g:
            path = [current]
            while came_from[path[-1]] is not None:
                path.append(came_from[path[-1]])
            path.reverse()
            return path
        base = g_cost[current]
        cx, cy = current
        for dx, dy, cost in _NEIGHBORS:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < width and 0 <= ny < height):
                continue
            if not traversable(nx, ny):
                continue
            if dx and dy and not (traversable(cx + dx, cy) and traversable(cx, cy + dy)):
                continue  # no squeezing through touching obstacle corners
            nxt = (nx, ny)
            new_cost = base + cost
            if nxt not in g_cost or new_cost < g_cost[nxt] - 1e-12:
                g_cost[nxt] = new_cost
                came_from[nxt] = current
                heapq.heappush(open_heap, (new_cost + _octile(nx, ny, *g), counter, nxt))
                counter += 1
    return None


def path_length(path, resolution: float) -> float:
    """Metric length of a cell path (unit and diagonal steps)."""
    if not path or len(path) == 1:
        return 0.0
    total = 0.0
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        total += math.hypot(bx - ax, by - ay)
    return total * resolution


_CELL_ENTROPY = {FREE: 0.0, OCCUPIED: 0.0, UNKNOWN: 1.0}


def path_entropy(grid: OccupancyGrid, frm: tuple[float, float], to: tuple[float, float]) -> float:
    """Mean per-cell binary entropy along the straight line between two points.

    Free and occupied cells are certain (entropy 0); unknown cells carry the
    maximum-entropy occupancy belief 0.5 (entropy 1). Empty traversals score 0.
    """
    cells = grid_line(grid, frm[0], frm[1], to[0], to[1])
    if not cells:
        return 0.0
    total = sum(_CELL_ENTROPY[int(grid.cells[iy, ix])] for ix, iy in cells)
    return total / len(cells)


def maybe_relocalize(
    agent: AgentState,
    d_max: float,
    tick: int,
    selector: str = "max-entropy",
    trigger: str = "below",
    closure_radius: float = DEFAULT_CLOSURE_RADIUS,
):
    """Guided-revisit policy: pick a saved goal when SLAM is lost or the
    uncertainty metric breaches the threshold.

    Saved goals are scored by the straight-line path entropy from the current
    pose on the robot's own map. "max-entropy" prefers the highest-entropy
    goal; "literal" maximizes (1 - entropy) instead. Returns the winner's
    world coordinates (also appended to the saved-goal list) or None.
    """
    if trigger == "below":
        breached = agent.d_opti < d_max
    elif trigger == "above":
        breached = agent.d_opti > d_max
    else:
        raise ValueError(f"unknown reloc trigger {trigger!r}")
    if selector not in ("max-entropy", "literal"):
        raise ValueError(f"unknown reloc selector {selector!r}")
    if agent.orb_status != "lost" and not breached:
        return None
    if not agent.sg_list:
        logger.warning("robot %d: re-localization triggered with empty saved-goal list", agent.id)
        return None

    best_idx = None
    best_score = -math.inf
    for i, sg in enumerate(agent.sg_list):
        ent = path_entropy(agent.local_map, agent.pose.xy, sg.xy)
        score = ent if selector == "max-entropy" else 1.0 - ent
        if score > best_score:
            best_score = score
            best_idx = i
    win = agent.sg_list[best_idx]
    agent.reloc += 1
    agent.remember_goal(win.x, win.y, tick, closure_radius)
    return (win.x, win.y)


@dataclass
class MotionParams:
    speed: float = 0.25
    closure_radius: float = DEFAULT_CLOSURE_RADIUS
    retain: float = 0.2
    plan_through_unknown: bool = False

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("speed must be > 0")


def plan_two_stage(grid, start, goal, relax_unknown: bool):
    """Plan through known free space, falling back to optimistic planning
    (unknown traversable) when no fully-known route exists."""
    path = plan_path(grid, start, goal, through_unknown=relax_unknown)
    if path is None and not relax_unknown:
        path = plan_path(grid, start, goal, through_unknown=True)
    return path


def _path_blocked(path, grid: OccupancyGrid) -> bool:
    """True when the remaining path crosses a cell now known occupied or a
    diagonal step now squeezes between known-occupied corners."""
    cells = grid.cells
    for ix, iy in path:
        if cells[iy, ix] == OCCUPIED:
            return True
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        if ax != bx and ay != by:
            if cells[ay, bx] == OCCUPIED or cells[by, ax] == OCCUPIED:
                return True
    return False


def step(
    agent: AgentState,
    params: MotionParams,
    plan_map: OccupancyGrid,
    tick: int,
    events: list,
):
    """Advance one tick: replan around newly-seen obstacles, move along the
    current path, and handle goal arrival and loop-closure detection.

    Returns "reached" when a server goal was completed this tick (the caller
    reports it), else None. Events are appended as (tick, robot_id, event,
    x, y) tuples.
    """
    reached_server_goal = None
    if agent.current_goal is not None:
        here = world_to_grid(plan_map, agent.pose.x, agent.pose.y)
        check = [here] + agent.path if here is not None else agent.path
        if agent.path and _path_blocked(check, plan_map):
            new_path = plan_two_stage(
                plan_map, agent.pose.xy, agent.current_goal, params.plan_through_unknown
            )
            if new_path is None:
                logger.info(
                    "robot %d: goal %s became unreachable, dropping it",
                    agent.id,
                    agent.current_goal,
                )
                agent.current_goal = None
                agent.path = []
                agent.reloc_active = False
            else:
                agent.path = _strip_current_cell(new_path, agent, plan_map)
                events.append((tick, agent.id, "replanned", agent.pose.x, agent.pose.y))

    if agent.current_goal is not None and agent.path:
        _advance(agent, params.speed, plan_map)

    if agent.current_goal is not None:
        gx, gy = agent.current_goal
        tol = 0.5 * agent.local_map.resolution
        if math.hypot(agent.pose.x - gx, agent.pose.y - gy) <= tol:
            events.append((tick, agent.id, "goal_reached", gx, gy))
            agent.remember_goal(gx, gy, tick, params.closure_radius)
            if agent.goal_source == "reloc":
                _close_loop(agent, params.retain, tick, events)
                agent.reloc_active = False
            else:
                reached_server_goal = (gx, gy)
            agent.current_goal = None
            agent.goal_source = "none"
            agent.path = []

    _passive_closure_check(agent, params, tick, events)
    return reached_server_goal


def _strip_current_cell(path, agent, grid):
    cell = world_to_grid(grid, agent.pose.x, agent.pose.y)
    if path and cell is not None and path[0] == cell:
        return path[1:]
    return path


def _advance(agent: AgentState, speed: float, plan_map: OccupancyGrid):
    budget = speed
    x, y, theta = agent.pose.x, agent.pose.y, agent.pose.theta
    while budget > 1e-12 and agent.path:
        tx, ty = grid_to_world(plan_map, *agent.path[0])
        d = math.hypot(tx - x, ty - y)
        if d <= 1e-12:
            agent.path.pop(0)
            continue
        heading = math.atan2(ty - y, tx - x)
        if d <= budget:
            x, y = tx, ty
            budget -= d
            agent.path.pop(0)
        else:
            x += budget * math.cos(heading)
            y += budget * math.sin(heading)
            budget = 0.0
        theta = heading
    agent.pose = Pose2D(x, y, theta)


def _close_loop(agent: AgentState, retain: float, tick: int, events: list):
    if agent.graph is not None:
        agent.graph.close_loop(len(agent.graph.nodes) - 1, retain)
    agent.last_closure_tick = tick
    agent.orb_status = ORB_OK
    events.append((tick, agent.id, "closure", agent.pose.x, agent.pose.y))


def _passive_closure_check(agent: AgentState, params: MotionParams, tick: int, events: list):
    """Fire a loop closure when the robot newly enters the closure radius of
    a saved goal recorded at an earlier tick. Edge-triggered: lingering at a
    goal does not re-fire, and a goal appended this tick is ineligible."""
    fired = False
    for sg in agent.sg_list:
        inside = math.hypot(agent.pose.x - sg.x, agent.pose.y - sg.y) <= params.closure_radius
        if (
            inside
            and not sg.was_inside
            and sg.tick_added < tick
            and not fired
            and agent.last_closure_tick != tick
        ):
            _close_loop(agent, params.retain, tick, events)
            fired = True
        sg.was_inside = inside


def assign_goal(
    agent: AgentState,
    goal: tuple[float, float],
    source: str,
    plan_map: OccupancyGrid,
    params: MotionParams,
    tick: int,
    events: list,
) -> bool:
    """Plan toward a new goal; returns False (goal dropped) when unreachable."""
    path = plan_two_stage(plan_map, agent.pose.xy, goal, params.plan_through_unknown)
    if path is None:
        logger.info("robot %d: no route to goal %s", agent.id, goal)
        return False
    agent.current_goal = goal
    agent.goal_source = source
    agent.path = _strip_current_cell(path, agent, plan_map)
    event = "relocalized" if source == "reloc" else "goal_assigned"
    events.append((tick, agent.id, event, goal[0], goal[1]))
    return True


def motion_delta(prev: Pose2D, cur: Pose2D) -> np.ndarray:
    """6-DOF relative motion of cur in prev's frame (planar agents)."""
    c, s = math.cos(prev.theta), math.sin(prev.theta)
    dx, dy = cur.x - prev.x, cur.y - prev.y
    delta = np.zeros(6)
    delta[0] = c * dx + s * dy
    delta[1] = -s * dx + c * dy
    delta[5] = wrap_angle(cur.theta - prev.theta)
    return delta
