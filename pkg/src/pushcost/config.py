"""YAML config files -> task, simulator, PPO and run objects."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .envs import (
    BoundMode,
    Circle,
    ConfigError,
    CostSource,
    RewardConfig,
    SceneTemplate,
    TaskKind,
    TaskSpec,
    fixed_bounds,
)
from .ppo import PPOConfig
from .sim import BoxBody, FrictionField, Pose2D, Rect, RobotBody, SimConfig

VARIANTS = {
    "ours": (CostSource.PUSHING_ENERGY, BoundMode.RUNNING),
    "nocost": (CostSource.NONE, BoundMode.RUNNING),
    "fixedbounds": (CostSource.PUSHING_ENERGY, BoundMode.FIXED),
    "robotenergy": (CostSource.ROBOT_ENERGY, BoundMode.RUNNING),
}
VARIANT_ORDER = ("ours", "nocost", "fixedbounds", "robotenergy")


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    ppo: PPOConfig
    variant: str = "ours"
    seeds: tuple = (0,)
    out: str = "runs"
    log_every: int = 1
    episode_seeds: str = "varied"
    eval_episodes: int = 30
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"run.variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        if self.episode_seeds not in ("fixed", "varied"):
            raise ConfigError("run.episode_seeds must be 'fixed' or 'varied'")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def for_variant(self, variant: str) -> "RunConfig":
        return replace(self, variant=variant, task=apply_variant(self.task, variant))


def apply_variant(task: TaskSpec, variant: str) -> TaskSpec:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    source, mode = VARIANTS[variant]
    bounds = fixed_bounds(task) if mode is BoundMode.FIXED else None
    return task.with_reward(cost_source=source, bound_mode=mode, fixed_bounds=bounds)


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing config key {where}.{key}")
    return d[key]


def _rect(v, where):
    try:
        return Rect(*[float(x) for x in v])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected [xmin, ymin, xmax, ymax], got {v!r}") from exc


def _pose(v, where):
    if len(v) != 3:
        raise ConfigError(f"{where}: expected [x, y, yaw], got {v!r}")
    return Pose2D(*[float(x) for x in v])


def walls(bounds: Rect, thickness: float):
    t = thickness
    return (
        Rect(bounds.xmin - t, bounds.ymin - t, bounds.xmin, bounds.ymax + t),
        Rect(bounds.xmax, bounds.ymin - t, bounds.xmax + t, bounds.ymax + t),
        Rect(bounds.xmin, bounds.ymin - t, bounds.xmax, bounds.ymin),
        Rect(bounds.xmin, bounds.ymax, bounds.xmax, bounds.ymax + t),
    )


def sim_config_from_dict(d: dict) -> SimConfig:
    d = d or {}
    return SimConfig(
        dt=float(d.get("dt", 0.1)),
        v_max=float(d.get("v_max", 6.0)),
        substeps=int(d.get("substeps", 5)),
        contact_tolerance=float(d.get("contact_tolerance", 1e-4)),
        k_rot=float(d.get("k_rot", 1.0)),
    )


def task_from_dict(d: dict, sim: SimConfig) -> TaskSpec:
    kind = TaskKind(_need(d, "kind", "task"))
    sc = _need(d, "scene", "task")
    bounds = _rect(_need(sc, "bounds", "task.scene"), "task.scene.bounds")
    obstacles = tuple(_rect(r, "task.scene.obstacles") for r in sc.get("obstacles", []) or [])
    thickness = float(sc.get("wall_thickness", 0.0))
    if thickness > 0:
        obstacles = walls(bounds, thickness) + obstacles
    fr = sc.get("friction", {}) or {}
    friction = FrictionField(
        bands=tuple((_rect(b["rect"], "task.scene.friction.bands"), float(b["mu"]))
                    for b in fr.get("bands", []) or []),
        default_mu=float(fr.get("default_mu", 0.5)),
    )
    rb = _need(sc, "robot", "task.scene")
    robot = RobotBody(
        pose=_pose(_need(rb, "pose", "task.scene.robot"), "task.scene.robot.pose"),
        wheel_radius=float(rb.get("wheel_radius", 0.06)),
        axle_length=float(rb.get("axle_length", 0.37)),
        body_radius=float(rb.get("body_radius", 0.28)),
    )
    boxes = tuple(
        BoxBody(
            id=str(_need(b, "id", "task.scene.boxes[]")),
            pose=_pose(_need(b, "pose", "task.scene.boxes[]"), "task.scene.boxes[].pose"),
            half_width=float(_need(b, "half_width", "task.scene.boxes[]")),
            half_length=float(_need(b, "half_length", "task.scene.boxes[]")),
            mass=float(_need(b, "mass", "task.scene.boxes[]")),
            material_mu_override=None if b.get("mu") is None else float(b["mu"]),
        )
        for b in _need(sc, "boxes", "task.scene")
    )
    scene = SceneTemplate(
        bounds=bounds,
        robot=robot,
        boxes=boxes,
        obstacles=obstacles,
        friction=friction,
        spawn_jitter=tuple(float(x) for x in sc.get("spawn_jitter", (0.05, 0.05, 0.1))),
        mirror=str(sc.get("mirror", "flip_y")),
    )
    g = _need(d, "goal", "task")
    if "rect" in g:
        goal = _rect(g["rect"], "task.goal.rect")
    elif "circle" in g:
        cx, cy, r = (float(x) for x in g["circle"])
        goal = Circle(cx, cy, r)
    else:
        raise ConfigError("task.goal needs 'rect' or 'circle'")
    rw = _need(d, "reward", "task")
    fb = rw.get("fixed_bounds")
    reward = RewardConfig(
        success_R=float(_need(rw, "success_R", "task.reward")),
        collision_rn=float(_need(rw, "collision_rn", "task.reward")),
        time_re=float(_need(rw, "time_re", "task.reward")),
        push_coeff=float(rw.get("push_coeff", 0.0)),
        cost_source=CostSource(rw.get("cost_source", "pushing_energy")),
        bound_mode=BoundMode(rw.get("bound_mode", "running")),
        fixed_bounds=None if fb is None else (tuple(fb[0]), tuple(fb[1])),
        squared_push_cost=bool(rw.get("squared_push_cost", False)),
        k_robot=float(rw.get("k_robot", 1.0)),
    )
    if reward.bound_mode is BoundMode.FIXED and fb is None:
        raise ConfigError("task.reward.fixed_bounds is required when bound_mode is 'fixed'")
    return TaskSpec(kind, scene, goal, int(_need(d, "episode_horizon", "task")), reward, sim)


def ppo_from_dict(d: dict, seed: int = 0) -> PPOConfig:
    d = dict(d or {})
    known = set(PPOConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown ppo keys {sorted(unknown)}")
    d.setdefault("rng_seed", seed)
    if "hidden_sizes" in d:
        d["hidden_sizes"] = tuple(d["hidden_sizes"])
    return PPOConfig(**d)


def run_from_dict(d: dict) -> RunConfig:
    d = copy.deepcopy(d)
    sim = sim_config_from_dict(d.get("sim"))
    task = task_from_dict(_need(d, "task", "<root>"), sim)
    ppo = ppo_from_dict(d.get("ppo"))
    run = d.get("run", {}) or {}
    variant = str(run.get("variant", "ours")).lower()
    rc = RunConfig(
        task=task,
        ppo=ppo,
        variant=variant,
        seeds=tuple(run.get("seeds", (0,))),
        out=str(run.get("out", "runs")),
        log_every=int(run.get("log_every", 1)),
        episode_seeds=str(run.get("episode_seeds", "varied")),
        eval_episodes=int(run.get("eval_episodes", 30)),
        raw=d,
    )
    return rc.for_variant(variant)


def load_config(path) -> RunConfig:
    """Load a run config from a YAML path or the name of a bundled config
    (``friction`` / ``mass``)."""
    p = Path(path)
    if not p.exists() and str(path) in ("friction", "mass"):
        text = resources.files("pushcost").joinpath("configs", f"{path}.yaml").read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return run_from_dict(data)


def default_config(name: str, variant: Optional[str] = None) -> RunConfig:
    rc = load_config(name)
    return rc if variant is None else rc.for_variant(variant)
