"""Scenario configuration: flat key-value config files and validation."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

from .agent import MotionParams, SensorParams
from .server import RewardParams, ServerParams

POLICIES = ("ours", "mexp", "dcm")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario configuration."""


@dataclass
class ScenarioConfig:
    """Full description of one simulation run.

    Loaded from a flat ``key = value`` text file; see KEY_DOC for the schema.
    """

    world_file: str = ""
    policy: str = "ours"
    seed: int = 0
    ticks: int = 400
    robots: int = 2
    spawns: list[tuple[float, float, float]] | None = None  # None = seeded auto-spawn

    sensor_rays: int = 48
    sensor_range: float = 2.0
    sensor_fov: float = math.tau
    sensor_plane: float = 0.2

    server_max_pts: int = 5
    server_min_pts: int = 0
    server_rad: float = 1.0
    server_prc_unk: float = 0.6
    server_dist_thres: float = 1.0

    filter_dist_thresh: float = 1.0
    filter_order: str = "iou-first"
    filter_keep_iou: bool = False
    min_cluster: int = 1

    dopt_form: str = "normalized"
    d_max: float = 1.5
    d_cap: float = 10.0
    sigma: float = 0.2
    retain: float = 0.2
    l_lost: float = 25.0

    reloc_enabled: bool | None = None  # None: on for "ours", off otherwise
    reloc_selector: str = "max-entropy"
    reloc_trigger: str = "below"

    speed: float = 0.25
    plan_through_unknown: bool = False
    closure_radius: float = 0.5

    reward_lambda_d: float = 5.0
    reward_w_entropy: float = 0.5

    uav_enabled: bool = False
    uav_min_height: float = 1.0
    uav_swath: float = 5.0

    history_window: int = 0  # 0 = whole-run assignment history
    sample_every: int = 1
    idle_stop_ticks: int = 25  # end early after this many fully idle ticks

    _base_dir: str = field(default=".", repr=False)

    # -- derived views --------------------------------------------------

    def world_path(self) -> str:
        if os.path.isabs(self.world_file):
            return self.world_file
        return os.path.normpath(os.path.join(self._base_dir, self.world_file))

    def sensor_params(self) -> SensorParams:
        return SensorParams(
            ray_count=self.sensor_rays,
            max_range=self.sensor_range,
            fov=self.sensor_fov,
            plane_height=self.sensor_plane,
        )

    def server_params(self) -> ServerParams:
        return ServerParams(
            max_pts=self.server_max_pts,
            min_pts=self.server_min_pts,
            rad=self.server_rad,
            prc_unk=self.server_prc_unk,
            dist_thres=self.server_dist_thres,
        )

    def reward_params(self) -> RewardParams:
        return RewardParams(lambda_d=self.reward_lambda_d, w_entropy=self.reward_w_entropy)

    def motion_params(self) -> MotionParams:
        return MotionParams(
            speed=self.speed,
            closure_radius=self.closure_radius,
            retain=self.retain,
            plan_through_unknown=self.plan_through_unknown,
        )

    def reloc_on(self) -> bool:
        if self.reloc_enabled is None:
            return self.policy == "ours"
        return self.reloc_enabled

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        problems = []
        if not self.world_file:
            problems.append("world is required")
        elif not os.path.isfile(self.world_path()):
            problems.append(f"world file not found: {self.world_path()}")
        if self.policy not in POLICIES:
            problems.append(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.ticks <= 0:
            problems.append("ticks must be > 0")
        if self.robots < 1:
            problems.append("need at least one robot")
        if self.spawns is not None and len(self.spawns) != self.robots:
            problems.append(f"{len(self.spawns)} spawns for {self.robots} robots")
        if self.sensor_rays < 1:
            problems.append("sensor.rays must be >= 1")
        if self.sensor_range <= 0:
            problems.append("sensor.range must be > 0")
        if not self.server_max_pts >= self.server_min_pts >= 0:
            problems.append("need server.max_pts >= server.min_pts >= 0")
        if self.server_rad <= 0:
            problems.append("server.rad must be > 0")
        if not 0 <= self.server_prc_unk <= 1:
            problems.append("server.prc_unk must be in [0, 1]")
        if self.server_dist_thres < 0:
            problems.append("server.dist_thres must be >= 0")
        if self.filter_dist_thresh < 0:
            problems.append("filter.dist_thresh must be >= 0")
        if self.filter_order not in ("iou-first", "literal"):
            problems.append("filter.order must be iou-first or literal")
        if self.min_cluster < 1:
            problems.append("cluster.min_size must be >= 1")
        if self.dopt_form not in ("normalized", "literal"):
            problems.append("dopt.form must be normalized or literal")
        if self.d_cap <= 0:
            problems.append("dopt.d_cap must be > 0")
        if self.sigma < 0:
            problems.append("dopt.sigma must be >= 0")
        if not 0 <= self.retain < 1:
            problems.append("dopt.retain must be in [0, 1)")
        if self.reloc_selector not in ("max-entropy", "literal"):
            problems.append("reloc.selector must be max-entropy or literal")
        if self.reloc_trigger not in ("below", "above"):
            problems.append("reloc.trigger must be below or above")
        if self.speed <= 0:
            problems.append("agent.speed must be > 0")
        if self.closure_radius <= 0:
            problems.append("agent.closure_radius must be > 0")
        if self.uav_enabled and self.uav_min_height <= 0:
            problems.append("uav.min_height must be > 0")
        if self.uav_enabled and self.uav_swath <= 0:
            problems.append("uav.swath must be > 0")
        if self.sample_every < 1:
            problems.append("sample.every must be >= 1")
        if self.history_window < 0:
            problems.append("history.window must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))


# config-file key -> dataclass field, value kind
_KEYS = {
    "world": ("world_file", "str"),
    "policy": ("policy", "str"),
    "seed": ("seed", "int"),
    "ticks": ("ticks", "int"),
    "robots": ("robots", "int"),
    "spawn": ("spawns", "spawns"),
    "sensor.rays": ("sensor_rays", "int"),
    "sensor.range": ("sensor_range", "float"),
    "sensor.fov": ("sensor_fov", "float"),
    "sensor.plane_height": ("sensor_plane", "float"),
    "server.max_pts": ("server_max_pts", "int"),
    "server.min_pts": ("server_min_pts", "int"),
    "server.rad": ("server_rad", "float"),
    "server.prc_unk": ("server_prc_unk", "float"),
    "server.dist_thres": ("server_dist_thres", "float"),
    "filter.dist_thresh": ("filter_dist_thresh", "float"),
    "filter.order": ("filter_order", "str"),
    "filter.keep_iou": ("filter_keep_iou", "bool"),
    "cluster.min_size": ("min_cluster", "int"),
    "dopt.form": ("dopt_form", "str"),
    "dopt.d_max": ("d_max", "float"),
    "dopt.d_cap": ("d_cap", "float"),
    "dopt.sigma": ("sigma", "float"),
    "dopt.retain": ("retain", "float"),
    "dopt.l_lost": ("l_lost", "float"),
    "reloc.enabled": ("reloc_enabled", "optbool"),
    "reloc.selector": ("reloc_selector", "str"),
    "reloc.trigger": ("reloc_trigger", "str"),
    "agent.speed": ("speed", "float"),
    "agent.plan_through_unknown": ("plan_through_unknown", "bool"),
    "agent.closure_radius": ("closure_radius", "float"),
    "reward.lambda_d": ("reward_lambda_d", "float"),
    "reward.w_entropy": ("reward_w_entropy", "float"),
    "uav.enabled": ("uav_enabled", "bool"),
    "uav.min_height": ("uav_min_height", "float"),
    "uav.swath": ("uav_swath", "float"),
    "history.window": ("history_window", "int"),
    "sample.every": ("sample_every", "int"),
    "idle.stop_ticks": ("idle_stop_ticks", "int"),
}

_FIELD_TO_KEY = {f: k for k, (f, _) in _KEYS.items()}


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_spawns(raw: str):
    if raw.strip().lower() == "auto":
        return None
    spawns = []
    for part in raw.split(";"):
        nums = [float(v) for v in part.replace(",", " ").split()]
        if len(nums) == 2:
            nums.append(0.0)
        if len(nums) != 3:
            raise ValueError(f"spawn entry {part!r} needs x, y [, theta]")
        spawns.append((nums[0], nums[1], nums[2]))
    return spawns


def parse_config(text: str, base_dir: str = ".") -> ScenarioConfig:
    """Parse flat key-value text into a ScenarioConfig (not yet validated)."""
    cfg = ScenarioConfig(_base_dir=base_dir)
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        raw = raw.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name, kind = _KEYS[key]
        try:
            if kind == "int":
                value = int(raw)
            elif kind == "float":
                value = float(raw)
            elif kind == "bool":
                value = _parse_bool(raw)
            elif kind == "optbool":
                value = None if raw.lower() == "auto" else _parse_bool(raw)
            elif kind == "spawns":
                value = _parse_spawns(raw)
            else:
                value = raw
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        setattr(cfg, field_name, value)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as f:
        text = f.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _format_value(field_name: str, value) -> str:
    if field_name == "spawns":
        if value is None:
            return "auto"
        return "; ".join(f"{x:.9g}, {y:.9g}, {t:.9g}" for x, y, t in value)
    if field_name == "reloc_enabled" and value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def resolved_lines(cfg: ScenarioConfig) -> list[str]:
    """Echo the fully-resolved configuration, one 'key = value' per key."""
    lines = []
    for f in fields(cfg):
        if f.name.startswith("_") or f.name not in _FIELD_TO_KEY:
            continue
        key = _FIELD_TO_KEY[f.name]
        lines.append(f"{key} = {_format_value(f.name, getattr(cfg, f.name))}")
    return sorted(lines)
