"""Central frontier and reward manager.

Collects each robot's filtered frontier candidates, scores them by merged-map
information gain, maintains a bounded deduplicated global list, and assigns
goals spaced away from the whole assignment history. The server is a
request/response state machine; a line-delimited text encoding of the three
request verbs (submit_points, request_goal, report_reached) and the two
responses (goal, none) is provided so it can be lifted out of process.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import AgentState, path_entropy, path_length, plan_path
from .frontier import FrontierPoint
from .world_model import UNKNOWN, OccupancyGrid, Pose2D

logger = logging.getLogger(__name__)


@dataclass
class ServerParams:
    """Runtime parameters of the frontier manager."""

    max_pts: int = 5
    min_pts: int = 0
    rad: float = 1.0
    prc_unk: float = 0.6
    dist_thres: float = 1.0  # goal spacing; distinct from the filter threshold

    def __post_init__(self):
        if not self.max_pts >= self.min_pts >= 0:
            raise ValueError("need max_pts >= min_pts >= 0")
        if self.rad <= 0:
            raise ValueError("rad must be > 0")
        if not 0 <= self.prc_unk <= 1:
            raise ValueError("prc_unk must be in [0, 1]")
        if self.dist_thres < 0:
            raise ValueError("dist_thres must be >= 0")


@dataclass
class RewardParams:
    lambda_d: float = 5.0
    w_entropy: float = 0.5


@dataclass
class Assignment:
    robot_id: int
    x: float
    y: float
    tick: int
    reward: float
    active: bool = True

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class ServerState:
    global_points: list[FrontierPoint] = field(default_factory=list)
    assigned: list[Assignment] = field(default_factory=list)  # append-only
    reward_matrix: dict[tuple[int, int], float] = field(default_factory=dict)


def info_gain(grid: OccupancyGrid, x: float, y: float, rad: float) -> float:
    """Fraction of unknown cells within radius rad of a world point.

    Counts lattice cells whose centers fall inside the disk; cells beyond the
    map bounds count as unknown.
    """
    if rad <= 0:
        raise ValueError("rad must be > 0")
    res = grid.resolution
    ox, oy = grid.origin
    i_lo = math.floor((x - rad - ox) / res)
    i_hi = math.floor((x + rad - ox) / res)
    j_lo = math.floor((y - rad - oy) / res)
    j_hi = math.floor((y + rad - oy) / res)
    ixs = np.arange(i_lo, i_hi + 1)
    jys = np.arange(j_lo, j_hi + 1)
    cx = ox + (ixs + 0.5) * res
    cy = oy + (jys + 0.5) * res
    dist2 = (cx[None, :] - x) ** 2 + (cy[:, None] - y) ** 2
    covered = dist2 <= rad * rad + 1e-12
    total = int(covered.sum())
    if total == 0:
        return 0.0

    inside_x = (ixs >= 0) & (ixs < grid.width)
    inside_y = (jys >= 0) & (jys < grid.height)
    values = np.full(covered.shape, UNKNOWN, dtype=np.int8)
    if inside_x.any() and inside_y.any():
        values[np.ix_(inside_y, inside_x)] = grid.cells[
            np.ix_(jys[inside_y], ixs[inside_x])
        ]
    unknown = int(((values == UNKNOWN) & covered).sum())
    return unknown / total


def merge_points(
    candidates: list[FrontierPoint],
    grid: OccupancyGrid,
    params: ServerParams,
) -> list[FrontierPoint]:
    """Build the bounded global frontier list from all robots' candidates.

    Each candidate gets its merged-map information gain; candidates below the
    admission threshold are discarded, the rest are greedily thinned by the
    goal-spacing distance in descending-gain order (ties by coordinates) and
    truncated to max_pts. When fewer than min_pts survive, below-threshold
    candidates are back-filled in gain order, still honoring the spacing.
    """
    scored = [
        replace(p, info_gain=info_gain(grid, p.x, p.y, params.rad)) for p in candidates
    ]
    scored.sort(key=lambda p: (-p.info_gain, p.x, p.y))
    admitted = [p for p in scored if p.info_gain >= params.prc_unk - 1e-12]
    demoted = [p for p in scored if p.info_gain < params.prc_unk - 1e-12]

    kept: list[FrontierPoint] = []
    for p in admitted:
        if all(_dist(p.xy, q.xy) >= params.dist_thres for q in kept):
            kept.append(p)
    for p in demoted:
        if len(kept) >= params.min_pts:
            break
        if all(_dist(p.xy, q.xy) >= params.dist_thres for q in kept):
            kept.append(p)
    return kept[: params.max_pts]


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def compute_reward(
    robot: AgentState,
    p: FrontierPoint,
    grid: OccupancyGrid,
    params: RewardParams = RewardParams(),
) -> float:
    """Composite utility of a frontier point for one robot.

    reward = gain * exp(-d/lambda_d) * (1 + w * path_entropy), where d is the
    A* path length on the given map (Euclidean fallback when unreachable) and
    the entropy term is evaluated on the robot's own map.
    """
    try:
        path = plan_path(grid, robot.pose.xy, p.xy, through_unknown=False)
    except ValueError:
        path = None
    if path is not None:
        d = path_length(path, grid.resolution)
    else:
        d = _dist(robot.pose.xy, p.xy)
        logger.debug(
            "robot %d: point (%.2f, %.2f) unreachable on merged map, Euclidean fallback",
            robot.id,
            p.x,
            p.y,
        )
    ent = path_entropy(robot.local_map, robot.pose.xy, p.xy)
    return p.info_gain * math.exp(-d / params.lambda_d) * (1.0 + params.w_entropy * ent)


def choose_goal(
    robot: AgentState,
    state: ServerState,
    grid: OccupancyGrid,
    params: ServerParams,
    reward_params: RewardParams = RewardParams(),
    tick: int = 0,
    history_window: int = 0,
):
    """Pick the highest-reward admissible global point for a robot.

    Rewards are computed (and recorded in the reward matrix) for every global
    point; a point is admissible when it keeps the spacing distance from every
    goal in the assignment history (optionally limited to assignments made in
    the last history_window ticks) and from every other robot's active
    assignment, and is not itself actively assigned to another robot. Ties
    break toward the lower list index. The winning assignment is recorded;
    returns None when nothing qualifies.
    """
    if history_window <= 0:
        history = state.assigned
    else:
        history = [a for a in state.assigned if tick - a.tick <= history_window]
    active_others = [a for a in state.assigned if a.active and a.robot_id != robot.id]
    rewards = []
    for idx, p in enumerate(state.global_points):
        r = compute_reward(robot, p, grid, reward_params)
        state.reward_matrix[(robot.id, idx)] = r
        rewards.append(r)

    best_idx = None
    best_reward = -math.inf
    for idx, p in enumerate(state.global_points):
        if any(_dist(p.xy, a.xy) < params.dist_thres for a in history):
            continue
        if any(_dist(p.xy, a.xy) < params.dist_thres for a in active_others):
            continue
        if any(_dist(p.xy, a.xy) < 1e-9 for a in active_others):
            continue
        if rewards[idx] > best_reward:
            best_reward = rewards[idx]
            best_idx = idx

    if best_idx is None:
        return None
    winner = state.global_points[best_idx]
    for a in state.assigned:
        if a.robot_id == robot.id and a.active:
            a.active = False  # replaced by the new assignment
    state.assigned.append(Assignment(robot.id, winner.x, winner.y, tick, best_reward))
    return winner


class CoordinationServer:
    """Serialized frontier manager: one request at a time, deterministic."""

    def __init__(self, params: ServerParams = None, reward_params: RewardParams = None):
        self.params = params or ServerParams()
        self.reward_params = reward_params or RewardParams()
        self.state = ServerState()
        self.merged_map: OccupancyGrid | None = None
        self.robot_points: dict[int, list[FrontierPoint]] = {}
        self.robot_maps: dict[int, OccupancyGrid] = {}
        self.tick = 0
        self.history_window = 0

    def begin_tick(self, tick: int) -> None:
        self.tick = tick

    def set_merged_map(self, grid: OccupancyGrid) -> None:
        self.merged_map = grid

    def submit_points(self, robot_id: int, points, local_map: OccupancyGrid = None) -> None:
        self.robot_points[robot_id] = list(points)
        if local_map is not None:
            self.robot_maps[robot_id] = local_map
        self._refresh_global()

    def _refresh_global(self) -> None:
        if self.merged_map is None:
            return
        candidates = []
        for rid in sorted(self.robot_points):
            candidates.extend(self.robot_points[rid])
        self.state.global_points = merge_points(candidates, self.merged_map, self.params)
        self.state.reward_matrix = {}

    def request_goal(self, robot_id: int, pose: Pose2D, local_map: OccupancyGrid = None):
        if self.merged_map is None:
            return None
        lmap = local_map if local_map is not None else self.robot_maps.get(robot_id)
        if lmap is None:
            lmap = self.merged_map
        robot = AgentState(id=robot_id, pose=pose, local_map=lmap)
        return choose_goal(
            robot,
            self.state,
            self.merged_map,
            self.params,
            self.reward_params,
            tick=self.tick,
            history_window=self.history_window,
        )

    def report_reached(self, robot_id: int, x: float, y: float) -> None:
        for a in self.state.assigned:
            if a.robot_id == robot_id and a.active and _dist(a.xy, (x, y)) < 1e-9:
                a.active = False

    def release(self, robot_id: int) -> None:
        """Drop a robot's active assignment (goal abandoned, not reached).

        Engine-side housekeeping: the next request_goal would replace the
        assignment anyway, this just frees the spot immediately.
        """
        for a in self.state.assigned:
            if a.robot_id == robot_id and a.active:
                a.active = False

    def handle_line(self, line: str) -> str:
        """Process one encoded request line and return the encoded response."""
        verb, payload = parse_request(line)
        if verb == "submit_points":
            self.submit_points(payload["robot_id"], payload["points"], payload.get("map"))
            return encode_response(None)
        if verb == "request_goal":
            goal = self.request_goal(payload["robot_id"], payload["pose"])
            return encode_response(goal)
        if verb == "report_reached":
            self.report_reached(payload["robot_id"], payload["x"], payload["y"])
            return encode_response(None)
        raise ValueError(f"unknown request verb {verb!r}")


# --- line-delimited text encoding ------------------------------------------
#
# submit_points <robot_id> <x:y|x:y|...  or ->  [map <w> <h> <res> <ox> <oy> <rle>]
# request_goal <robot_id> <x> <y> <theta>
# report_reached <robot_id> <x> <y>
#
# responses:  goal <x> <y>   |   none
#
# The optional map field carries the robot's local grid as run-length-encoded
# occupancy values ("-1*1595,0*3,100*2", row-major from the south row).


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def encode_grid_rle(grid: OccupancyGrid) -> str:
    flat = grid.cells.ravel()
    if flat.size == 0:
        return "."
    runs = []
    current = int(flat[0])
    count = 0
    for v in flat:
        v = int(v)
        if v == current:
            count += 1
        else:
            runs.append(f"{current}*{count}")
            current, count = v, 1
    runs.append(f"{current}*{count}")
    return ",".join(runs)


def decode_grid_rle(w: int, h: int, res: float, ox: float, oy: float, rle: str) -> OccupancyGrid:
    if rle == ".":
        values = np.zeros(0, dtype=np.int8)
    else:
        parts = []
        for run in rle.split(","):
            value, _, count = run.partition("*")
            parts.append(np.full(int(count), int(value), dtype=np.int8))
        values = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int8)
    if values.size != w * h:
        raise ValueError(f"RLE length {values.size} != {w}x{h}")
    return OccupancyGrid(w, h, res, (ox, oy), values.reshape((h, w)))


def encode_request(verb: str, robot_id: int, **kw) -> str:
    if verb == "submit_points":
        pts = kw.get("points", [])
        pts_field = "|".join(f"{_fmt(p.x)}:{_fmt(p.y)}" for p in pts) or "-"
        line = f"submit_points {robot_id} {pts_field}"
        grid = kw.get("local_map")
        if grid is not None:
            line += (
                f" map {grid.width} {grid.height} {_fmt(grid.resolution)}"
                f" {_fmt(grid.origin[0])} {_fmt(grid.origin[1])} {encode_grid_rle(grid)}"
            )
        return line
    if verb == "request_goal":
        pose = kw["pose"]
        return f"request_goal {robot_id} {_fmt(pose.x)} {_fmt(pose.y)} {_fmt(pose.theta)}"
    if verb == "report_reached":
        return f"report_reached {robot_id} {_fmt(kw['x'])} {_fmt(kw['y'])}"
    raise ValueError(f"unknown request verb {verb!r}")


def parse_request(line: str):
    tokens = line.split()
    if not tokens:
        raise ValueError("empty request line")
    verb = tokens[0]
    if verb == "submit_points":
        if len(tokens) < 3:
            raise ValueError("submit_points needs robot_id and points")
        robot_id = int(tokens[1])
        points = []
        if tokens[2] != "-":
            for pair in tokens[2].split("|"):
                xs, _, ys = pair.partition(":")
                points.append(FrontierPoint(float(xs), float(ys), "local", robot_id))
        payload = {"robot_id": robot_id, "points": points}
        if len(tokens) > 3:
            if tokens[3] != "map" or len(tokens) != 10:
                raise ValueError("malformed map field")
            payload["map"] = decode_grid_rle(
                int(tokens[4]),
                int(tokens[5]),
                float(tokens[6]),
                float(tokens[7]),
                float(tokens[8]),
                tokens[9],
            )
        return verb, payload
    if verb == "request_goal":
        if len(tokens) != 5:
            raise ValueError("request_goal needs robot_id, x, y, theta")
        return verb, {
            "robot_id": int(tokens[1]),
            "pose": Pose2D(float(tokens[2]), float(tokens[3]), float(tokens[4])),
        }
    if verb == "report_reached":
        if len(tokens) != 4:
            raise ValueError("report_reached needs robot_id, x, y")
        return verb, {"robot_id": int(tokens[1]), "x": float(tokens[2]), "y": float(tokens[3])}
    raise ValueError(f"unknown request verb {verb!r}")


def encode_response(goal) -> str:
    if goal is None:
        return "none"
    return f"goal {_fmt(goal.x)} {_fmt(goal.y)}"


def parse_response(line: str):
    tokens = line.split()
    if tokens == ["none"]:
        return None
    if len(tokens) == 3 and tokens[0] == "goal":
        return (float(tokens[1]), float(tokens[2]))
    raise ValueError(f"malformed response {line!r}")
