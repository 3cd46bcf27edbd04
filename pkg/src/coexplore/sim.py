"""Deterministic tick-loop orchestration of world, agents and server.

Stage order within a tick is fixed: sense, rebuild merged map, pairwise
overlap maps, frontier detection + filtering, goal requests, re-localization
checks, motion, uncertainty propagation, metrics sampling. Agents always
update in ascending id order, so a (config, seed) pair fully determines every
artifact.
"""

from __future__ import annotations

import itertools
import logging
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import agent as agent_mod
from .agent import AgentState, MotionParams, SensorParams, maybe_relocalize, motion_delta, sense
from .config import ScenarioConfig
from .frontier import FrontierPoint, detect_frontiers, filter_frontiers
from .metrics import (
    MetricsLog,
    coverage_percent,
    frontier_reduction,
    map_quality,
    post_transient_mean,
    reachable_region_mask,
)
from .overlap import compute_iou, iou_area
from .pose_graph import ORB_LOST, PoseGraph
from .server import CoordinationServer, _dist
from .svgplot import line_plot
from .world_model import (
    OccupancyGrid,
    Pose2D,
    WorldModel,
    grid_to_world,
    load_world,
    merge_maps,
    save_pgm,
    uav_prior_map,
)

logger = logging.getLogger(__name__)


@dataclass
class SimState:
    tick: int
    world: WorldModel
    agents: list[AgentState]
    server: CoordinationServer
    merged: OccupancyGrid | None = None
    iou_maps: dict = field(default_factory=dict)  # (i, j) -> IoUMap
    uav_prior: OccupancyGrid | None = None
    metrics: MetricsLog | None = None
    events: list = field(default_factory=list)
    region: np.ndarray | None = None
    raw_counts: dict = field(default_factory=dict)
    filtered_counts: dict = field(default_factory=dict)
    idle_ticks: int = 0
    rng: np.random.Generator | None = None


def _auto_spawns(world: WorldModel, n: int, rng: np.random.Generator):
    """Seeded spawn draw over free cells, keeping robots mutually separated
    by at least a quarter of the world diagonal (relaxed if infeasible)."""
    free = np.argwhere(world.free_mask())
    if len(free) < n:
        raise ValueError(f"world has {len(free)} free cells, need {n} spawns")
    truth = world.truth_grid()
    min_sep = 0.25 * math.hypot(*world.extent)
    while True:
        picks = rng.choice(len(free), size=n, replace=False)
        spawns = []
        for k in picks:
            iy, ix = free[k]
            wx, wy = grid_to_world(truth, int(ix), int(iy))
            theta = float(rng.uniform(-math.pi, math.pi))
            spawns.append((wx, wy, theta))
        ok = all(
            math.hypot(a[0] - b[0], a[1] - b[1]) >= min_sep
            for a, b in itertools.combinations(spawns, 2)
        )
        if ok or min_sep <= world.resolution:
            return spawns
        min_sep *= 0.95  # shrink slowly so dense worlds stay feasible


def _metric_columns(n_robots: int) -> list[str]:
    cols = ["tick"]
    cols += [f"coverage_{i}" for i in range(n_robots)]
    cols += ["coverage_merged"]
    for i, j in itertools.combinations(range(n_robots), 2):
        cols.append(f"iou_{i}_{j}")
    cols += ["iou_total"]
    for i in range(n_robots):
        cols += [f"raw_pts_{i}", f"filtered_pts_{i}"]
    cols += ["raw_total", "filtered_total"]
    cols += [f"d_opti_{i}" for i in range(n_robots)]
    cols += [f"reloc_{i}" for i in range(n_robots)]
    cols += ["reloc_total"]
    return cols


def init_state(cfg: ScenarioConfig) -> SimState:
    cfg.validate()
    with open(cfg.world_path()) as f:
        world = load_world(f.read())
    rng = np.random.default_rng(cfg.seed)
    spawns = cfg.spawns if cfg.spawns is not None else _auto_spawns(world, cfg.robots, rng)

    agents = []
    for i, (x, y, theta) in enumerate(spawns):
        pose = Pose2D(x, y, theta)
        cell = None
        if 0 <= x < world.extent[0] and 0 <= y < world.extent[1]:
            cell = (int(x / world.resolution), int(y / world.resolution))
        if cell is None or world.heights[cell[1], cell[0]] > 0:
            raise ValueError(f"spawn {i} at ({x}, {y}) is not on a free world cell")
        graph = PoseGraph(initial_pose=[x, y, 0.0, 0.0, 0.0, pose.theta])
        agents.append(
            AgentState(id=i, pose=pose, local_map=world.blank_grid(), graph=graph,
                       d_opti=cfg.d_cap)
        )

    server = CoordinationServer(cfg.server_params(), cfg.reward_params())
    server.history_window = cfg.history_window
    uav = None
    if cfg.uav_enabled:
        uav = uav_prior_map(world, cfg.uav_min_height, cfg.uav_swath)
    state = SimState(
        tick=0,
        world=world,
        agents=agents,
        server=server,
        uav_prior=uav,
        metrics=MetricsLog(_metric_columns(cfg.robots)),
        region=reachable_region_mask(world),
        rng=rng,
    )
    return state


def _dcm_choose(agent: AgentState, candidates, cfg: ScenarioConfig, world: WorldModel):
    """Decentralized baseline utility: own-map info gain minus normalized
    path distance, no deduplication and no uncertainty handling."""
    from .server import info_gain

    diag = math.hypot(*world.extent)
    tol = 0.5 * agent.local_map.resolution
    best, best_u = None, -math.inf
    for p in candidates:
        if _dist(agent.pose.xy, p.xy) <= tol:
            continue  # already standing there
        gain = info_gain(agent.local_map, p.x, p.y, cfg.server_rad)
        path = agent_mod.plan_two_stage(agent.local_map, agent.pose.xy, p.xy, False)
        if path is not None:
            d = agent_mod.path_length(path, agent.local_map.resolution)
        else:
            d = _dist(agent.pose.xy, p.xy)
        u = gain - d / diag
        if u > best_u:
            best_u = u
            best = p
    return best


def tick(state: SimState, cfg: ScenarioConfig) -> SimState:
    """Advance the simulation one tick (mutates and returns state)."""
    t = state.tick
    sensor = cfg.sensor_params()
    motion = cfg.motion_params()
    n = len(state.agents)

    # 1. sensing
    for a in state.agents:
        a.local_map = sense(state.world, a.pose, sensor, a.local_map)

    # 2. merged map, reference frame fixed to robot 0
    maps = [a.local_map for a in state.agents]
    if state.uav_prior is not None:
        maps = maps + [state.uav_prior]
    state.merged = merge_maps(maps, frame=0)

    # 3. pairwise overlap maps (always computed; only "ours" uses them to filter)
    state.iou_maps = {}
    for i, j in itertools.combinations(range(n), 2):
        state.iou_maps[(i, j)] = compute_iou(state.agents[i].local_map, state.agents[j].local_map)

    # 4. frontier detection and filtering
    raw_points: dict[int, list[FrontierPoint]] = {}
    filtered_points: dict[int, list[FrontierPoint]] = {}
    for a in state.agents:
        raw_points[a.id] = detect_frontiers(a.local_map, cfg.min_cluster, "local", a.id)
    if cfg.policy == "ours":
        iou_frontiers: dict[int, list[FrontierPoint]] = {i: [] for i in range(n)}
        for (i, j), iou in state.iou_maps.items():
            pts = detect_frontiers(iou.grid, cfg.min_cluster, source="iou")
            iou_frontiers[i].extend(pts)
            iou_frontiers[j].extend(pts)
        for a in state.agents:
            filtered_points[a.id] = filter_frontiers(
                raw_points[a.id],
                iou_frontiers[a.id],
                cfg.filter_dist_thresh,
                order=cfg.filter_order,
                keep_iou=cfg.filter_keep_iou,
            )
    else:  # mexp and dcm skip the overlap-based filter
        for a in state.agents:
            filtered_points[a.id] = list(raw_points[a.id])
    state.raw_counts = {i: len(raw_points[i]) for i in range(n)}
    state.filtered_counts = {i: len(filtered_points[i]) for i in range(n)}

    # 5. goal requests
    plan_map = state.merged
    if cfg.policy in ("ours", "mexp"):
        state.server.begin_tick(t)
        state.server.set_merged_map(state.merged)
        for a in state.agents:
            state.server.submit_points(a.id, filtered_points[a.id], a.local_map)
        for a in state.agents:
            if a.current_goal is None and not a.reloc_active:
                goal = state.server.request_goal(a.id, a.pose, a.local_map)
                if goal is not None:
                    agent_mod.assign_goal(
                        a, goal.xy, "server", plan_map, motion, t, state.events
                    )
    else:  # dcm: per-agent selection on its own map
        for a in state.agents:
            if a.current_goal is None:
                goal = _dcm_choose(a, filtered_points[a.id], cfg, state.world)
                if goal is not None:
                    agent_mod.assign_goal(
                        a, goal.xy, "dcm", a.local_map, motion, t, state.events
                    )

    # 6. re-localization checks
    if cfg.reloc_on():
        for a in state.agents:
            if a.reloc_active:
                continue
            win = maybe_relocalize(
                a,
                cfg.d_max,
                t,
                selector=cfg.reloc_selector,
                trigger=cfg.reloc_trigger,
                closure_radius=cfg.closure_radius,
            )
            if win is not None:
                if a.goal_source == "server" and cfg.policy in ("ours", "mexp"):
                    state.server.release(a.id)  # guided revisit overrides the goal
                if agent_mod.assign_goal(a, win, "reloc", plan_map, motion, t, state.events):
                    a.reloc_active = True

    # 7. motion
    moved = False
    for a in state.agents:
        a._pre_step_pose = a.pose  # noqa: SLF001 - per-tick scratch
        had_server_goal = a.goal_source == "server"
        pmap = plan_map if cfg.policy in ("ours", "mexp") else a.local_map
        reached = agent_mod.step(a, motion, pmap, t, state.events)
        if reached is not None:
            moved = True  # a goal completed this tick
            if cfg.policy in ("ours", "mexp"):
                state.server.report_reached(a.id, reached[0], reached[1])
        elif had_server_goal and a.current_goal is None and cfg.policy in ("ours", "mexp"):
            state.server.release(a.id)  # goal became unreachable and was dropped
        if a.pose != a._pre_step_pose:
            moved = True

    # 8. uncertainty propagation
    sigmas = np.full(6, cfg.sigma)
    for a in state.agents:
        delta = motion_delta(a._pre_step_pose, a.pose)
        if np.linalg.norm(delta[:3]) > 1e-12:
            a.graph.propagate(delta, sigmas)
        was = a.orb_status
        a.orb_status = a.graph.orb_status(cfg.l_lost)
        if a.orb_status == ORB_LOST and was != ORB_LOST:
            state.events.append((t, a.id, "lost", a.pose.x, a.pose.y))
        a.d_opti = a.graph.reported_d_opti(cfg.d_cap, cfg.dopt_form)

    # 9. metrics
    if t % cfg.sample_every == 0:
        _sample_metrics(state, cfg)

    # a tick with no movement and no goal pursuit is a deterministic fixpoint
    busy = moved or any(a.current_goal is not None or a.reloc_active for a in state.agents)
    state.idle_ticks = 0 if busy else state.idle_ticks + 1

    state.tick += 1
    return state


def _sample_metrics(state: SimState, cfg: ScenarioConfig):
    n = len(state.agents)
    row = [float(state.tick)]
    row += [coverage_percent(a.local_map, state.world, state.region) for a in state.agents]
    row += [coverage_percent(state.merged, state.world, state.region)]
    areas = [iou_area(state.iou_maps[k]) for k in sorted(state.iou_maps)]
    row += areas
    row += [float(sum(areas))]
    for i in range(n):
        row += [float(state.raw_counts.get(i, 0)), float(state.filtered_counts.get(i, 0))]
    row += [float(sum(state.raw_counts.values())), float(sum(state.filtered_counts.values()))]
    row += [a.d_opti for a in state.agents]
    row += [float(a.reloc) for a in state.agents]
    row += [float(sum(a.reloc for a in state.agents))]
    state.metrics.append(row)


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> MetricsLog:
    """Run a scenario to its tick budget (or frontier exhaustion) and return
    the metrics log; optionally write the full artifact set to out_dir."""
    state = init_state(cfg)
    while state.tick < cfg.ticks:
        tick(state, cfg)
        if state.idle_ticks >= cfg.idle_stop_ticks:
            logger.info("stopping at tick %d: exploration exhausted", state.tick)
            break
    _summarize(state, cfg)
    if out_dir is not None:
        write_artifacts(state, cfg, out_dir)
    return state.metrics


def _summarize(state: SimState, cfg: ScenarioConfig):
    log = state.metrics
    summary = log.summary
    summary["seed"] = cfg.seed
    summary["policy"] = cfg.policy
    summary["ticks_run"] = state.tick
    if log.rows:
        summary["final_coverage_merged"] = float(log.column("coverage_merged")[-1])
        for a in state.agents:
            summary[f"final_coverage_{a.id}"] = float(log.column(f"coverage_{a.id}")[-1])
            summary[f"reloc_{a.id}"] = a.reloc
        summary["reloc_total"] = sum(a.reloc for a in state.agents)
        summary["mean_iou_post_transient"] = post_transient_mean(log, "iou_total")
        red = frontier_reduction(log.column("raw_total"), log.column("filtered_total"))
        active = [r for r, raw in zip(red.per_tick, log.column("raw_total")) if raw > 0]
        summary["mean_frontier_reduction"] = float(np.mean(active)) if active else 0.0
    quality = map_quality(state.merged, state.world.truth_grid())
    for key, value in quality.items():
        summary[f"quality_{key}"] = value
    total_free = float(state.world.free_mask().sum()) * state.world.resolution**2
    summary["free_area"] = total_free


def write_artifacts(state: SimState, cfg: ScenarioConfig, out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state.metrics.save(out)

    with open(out / "events.csv", "w", newline="") as f:
        import csv

        writer = csv.writer(f)
        writer.writerow(["tick", "robot_id", "event", "x", "y"])
        for tick_, rid, event, x, y in state.events:
            writer.writerow([tick_, rid, event, f"{x:.6f}", f"{y:.6f}"])

    with open(out / "assignments.csv", "w", newline="") as f:
        import csv

        writer = csv.writer(f)
        writer.writerow(["tick", "robot_id", "goal_x", "goal_y", "reward"])
        for a in state.server.state.assigned:
            writer.writerow([a.tick, a.robot_id, f"{a.x:.6f}", f"{a.y:.6f}", f"{a.reward:.6f}"])

    maps_dir = out / "maps"
    maps_dir.mkdir(exist_ok=True)
    save_pgm(state.merged, maps_dir / "merged_final.pgm")
    save_pgm(state.world.truth_grid(), maps_dir / "truth.pgm")
    for a in state.agents:
        save_pgm(a.local_map, maps_dir / f"robot_{a.id}_final.pgm")
    for (i, j), iou in state.iou_maps.items():
        if iou.width and iou.height:
            save_pgm(iou.grid, maps_dir / f"iou_{i}_{j}_final.pgm")

    _write_plots(state, out / "plots")


def _write_plots(state: SimState, plots_dir):
    plots_dir = pathlib.Path(plots_dir)
    plots_dir.mkdir(exist_ok=True)
    log = state.metrics
    if not log.rows:
        return
    ticks = log.column("tick")
    n = len(state.agents)
    cov_series = [(f"robot {i}", ticks, log.column(f"coverage_{i}")) for i in range(n)]
    cov_series.append(("merged", ticks, log.column("coverage_merged")))
    line_plot(plots_dir / "coverage.svg", cov_series, "Explored area", "tick", "% of reachable area")
    line_plot(
        plots_dir / "iou_area.svg",
        [("total overlap", ticks, log.column("iou_total"))],
        "Pairwise overlap map area",
        "tick",
        "m^2",
    )
    line_plot(
        plots_dir / "d_opti.svg",
        [(f"robot {i}", ticks, log.column(f"d_opti_{i}")) for i in range(n)],
        "Edge uncertainty metric",
        "tick",
        "D-opt",
    )
    red = frontier_reduction(log.column("raw_total"), log.column("filtered_total"))
    line_plot(
        plots_dir / "frontier_reduction.svg",
        [
            ("raw (running mean)", ticks, red.raw_running_mean),
            ("filtered (running mean)", ticks, red.filtered_running_mean),
            ("reduction % (running mean)", ticks, red.running_mean),
        ],
        "Frontier filtering",
        "tick",
        "count / percent",
    )
