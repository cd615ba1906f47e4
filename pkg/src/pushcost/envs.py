"""The variable-friction and variable-mass pushing tasks.

Each task is an episodic environment over ``sim``. The reward constants and
ablation switches (where the cost comes from, how it is normalized) live in
``RewardConfig``; the running-bounds accumulators are owned by the caller and
persist across episodes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cost import (
    ContactPatch,
    FixedBounds,
    MotionDelta,
    RunningBounds,
    accumulate_episode,
    rotation_shape_integral,
    step_work,
)
from .sim import (
    Action,
    BoxBody,
    FrictionField,
    Pose2D,
    Rect,
    RobotBody,
    SimConfig,
    Simulator,
    StepOutcome,
    WorldState,
    wheel_command,
)

__all__ = [
    "Action", "BoundMode", "Circle", "CostSource", "Environment", "EpisodeTrace", "Observation",
    "RewardConfig", "SceneTemplate", "TaskKind", "TaskSpec", "Transition", "encode_observation",
    "fixed_bounds", "reset", "reward_variable_friction", "reward_variable_mass",
    "robot_step_energy", "success_friction", "success_mass",
]


class ConfigError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class TaskKind(str, enum.Enum):
    VARIABLE_FRICTION = "variable_friction"
    VARIABLE_MASS = "variable_mass"


class CostSource(str, enum.Enum):
    PUSHING_ENERGY = "pushing_energy"
    ROBOT_ENERGY = "robot_energy"
    NONE = "none"


class BoundMode(str, enum.Enum):
    RUNNING = "running"
    FIXED = "fixed"


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("goal.radius must be positive")


@dataclass(frozen=True)
class RewardConfig:
    success_R: float
    collision_rn: float = -10.0
    time_re: float = -1.0
    push_coeff: float = -0.5
    cost_source: CostSource = CostSource.PUSHING_ENERGY
    bound_mode: BoundMode = BoundMode.RUNNING
    # ((step_min, step_max), (episode_min, episode_max)) in joules
    fixed_bounds: Optional[tuple] = None
    squared_push_cost: bool = False
    k_robot: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cost_source", CostSource(self.cost_source))
        object.__setattr__(self, "bound_mode", BoundMode(self.bound_mode))
        if (self.bound_mode is BoundMode.FIXED and self.cost_source is not CostSource.NONE
                and self.fixed_bounds is None):
            raise ConfigError("reward.fixed_bounds is required when reward.bound_mode is 'fixed'")


@dataclass(frozen=True)
class SceneTemplate:
    """Nominal layout (configuration bit 0). Bit 1 is its mirror image."""

    bounds: Rect
    robot: RobotBody
    boxes: tuple
    obstacles: tuple = ()
    friction: FrictionField = field(default_factory=FrictionField)
    spawn_jitter: tuple = (0.05, 0.05, 0.1)
    # "flip_y" reflects y -> -y, "flip_x" reflects x -> -x; the friction field is never mirrored
    mirror: str = "flip_y"


@dataclass(frozen=True)
class TaskSpec:
    task_kind: TaskKind
    scene: SceneTemplate
    goal: object
    episode_horizon: int
    reward: RewardConfig
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        validate_spec(self)

    @property
    def obs_dim(self) -> int:
        goal_len = 4 if self.task_kind is TaskKind.VARIABLE_FRICTION else 3
        return 4 + 4 * len(self.scene.boxes) + goal_len

    def with_reward(self, **changes) -> "TaskSpec":
        return replace(self, reward=replace(self.reward, **changes))


def validate_spec(spec: TaskSpec) -> None:
    if spec.episode_horizon <= 0:
        raise ConfigError("episode_horizon must be positive")
    boxes = spec.scene.boxes
    if spec.scene.mirror not in ("flip_x", "flip_y"):
        raise ConfigError(f"scene.mirror must be 'flip_x' or 'flip_y', got {spec.scene.mirror!r}")
    if spec.task_kind is TaskKind.VARIABLE_FRICTION:
        if len(boxes) != 1:
            raise ConfigError(f"scene.boxes: the friction task needs exactly one box, got {len(boxes)}")
        if not isinstance(spec.goal, Rect):
            raise ConfigError("goal: the friction task needs a rectangular goal")
        mus = {mu for _, mu in spec.scene.friction.bands}
        if len(spec.scene.friction.bands) != 2 or len(mus) != 2:
            raise ConfigError("scene.friction: the friction task needs two bands with distinct mu")
    else:
        if len(boxes) != 2:
            raise ConfigError(f"scene.boxes: the mass task needs exactly two boxes, got {len(boxes)}")
        if not isinstance(spec.goal, Circle):
            raise ConfigError("goal: the mass task needs a circular goal")
        a, b = boxes
        if (a.half_width, a.half_length) != (b.half_width, b.half_length):
            raise ConfigError("scene.boxes: mass-task boxes must have the same shape")
        rp = spec.scene.robot.pose
        da = math.hypot(a.pose.x - rp.x, a.pose.y - rp.y)
        db = math.hypot(b.pose.x - rp.x, b.pose.y - rp.y)
        if abs(da - db) > 1e-9:
            raise ConfigError("scene.boxes: mass-task boxes must be equidistant from the robot")
        g = spec.goal
        for bx in boxes:
            if math.hypot(bx.pose.x - g.cx, bx.pose.y - g.cy) > g.radius:
                raise ConfigError(f"scene.boxes: box {bx.id!r} starts outside the goal circle")


# ---------------------------------------------------------------------------
# reward pieces

@dataclass(frozen=True)
class Observation:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass
class Transition:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def reward_variable_friction(outcome, step_cost: float, cfg: RewardConfig, success: bool = False) -> float:
    """Case precedence: success, collision, pushing, idle."""
    if success:
        return cfg.success_R
    if outcome.collided:
        return cfg.collision_rn
    if outcome.pushed:
        if not 0.0 <= step_cost <= 1.0:
            raise ValueError(f"step cost must lie in [0, 1], got {step_cost}")
        c = 1.0 if cfg.cost_source is CostSource.NONE else step_cost
        if cfg.squared_push_cost:
            return cfg.push_coeff * c * c
        return cfg.push_coeff * c
    return cfg.time_re


def reward_variable_mass(outcome, episode_cost: Optional[float], cfg: RewardConfig,
                         success: bool = False) -> float:
    if success:
        if cfg.cost_source is CostSource.NONE:
            return cfg.success_R
        if episode_cost is None:
            raise RuntimeError("successful mass-task step without an episode cost")
        return cfg.success_R * (1.0 - episode_cost)
    if outcome.collided:
        return cfg.collision_rn
    return cfg.time_re


def success_friction(world: WorldState, goal: Rect) -> bool:
    p = world.boxes[0].pose
    return goal.contains(p.x, p.y)


def success_mass(world: WorldState, circle: Circle) -> bool:
    return any(math.hypot(b.pose.x - circle.cx, b.pose.y - circle.cy) > circle.radius
               for b in world.boxes)


def robot_step_energy(action: Action, cfg: SimConfig, k_robot: float = 1.0) -> float:
    wl, wr = wheel_command(action, cfg.v_max)
    return k_robot * (abs(wl) + abs(wr)) * cfg.dt


def fixed_bounds(spec: TaskSpec):
    """Prior-knowledge bounds ``((0, step_max), (0, step_max * horizon))``.

    The worst step slides the heaviest box on the roughest floor at full robot
    speed and turns it by the largest angle the push model allows in that
    distance (lever no longer than the half-diagonal).
    """
    robot = spec.scene.robot
    cfg = spec.sim
    mu_max = spec.scene.friction.max_mu
    for b in spec.scene.boxes:
        if b.material_mu_override is not None:
            mu_max = max(mu_max, b.material_mu_override)
    step_max = 0.0
    dx_max = cfg.v_max * robot.wheel_radius * cfg.dt
    for b in spec.scene.boxes:
        X, Y = 2 * b.half_width, 2 * b.half_length
        theta_max = cfg.k_rot * math.hypot(b.half_width, b.half_length) * dx_max
        g = 9.81
        e = mu_max * b.mass * g * dx_max + mu_max * (b.mass * g / (X * Y)) * theta_max * rotation_shape_integral(X, Y)
        step_max = max(step_max, e)
    return (0.0, step_max), (0.0, step_max * spec.episode_horizon)


# ---------------------------------------------------------------------------
# layout and observation

def _mirror_pose(p: Pose2D, mode: str) -> Pose2D:
    if mode == "flip_y":
        return Pose2D(p.x, -p.y, -p.yaw)
    return Pose2D(-p.x, p.y, math.pi - p.yaw)


def _mirror_rect(r: Rect, mode: str) -> Rect:
    if mode == "flip_y":
        return Rect(r.xmin, -r.ymax, r.xmax, -r.ymin)
    return Rect(-r.xmax, r.ymin, -r.xmin, r.ymax)


def _mirror_goal(goal, mode: str):
    if isinstance(goal, Rect):
        return _mirror_rect(goal, mode)
    if mode == "flip_y":
        return Circle(goal.cx, -goal.cy, goal.radius)
    return Circle(-goal.cx, goal.cy, goal.radius)


def configuration_bit(seed: int) -> int:
    return int(seed) & 1


def layout(spec: TaskSpec, seed: int, configuration: Optional[int] = None):
    """Initial world and goal for ``seed``.

    The low bit of ``seed`` (or ``configuration`` when given) selects the
    nominal layout or its mirror image; the remaining bits drive the robot
    spawn jitter, which is drawn before mirroring so that seeds ``2k`` and
    ``2k + 1`` are exact mirror images.
    """
    seed = int(seed)
    bit = configuration_bit(seed if configuration is None else configuration)
    rng = np.random.default_rng([seed >> 1, 0x5EED])
    jx, jy, jyaw = spec.scene.spawn_jitter
    ux, uy, uyaw = rng.uniform(-1.0, 1.0, size=3)
    p = spec.scene.robot.pose
    robot_pose = Pose2D(p.x + jx * ux, p.y + jy * uy, p.yaw + jyaw * uyaw)
    boxes = spec.scene.boxes
    obstacles = spec.scene.obstacles
    goal = spec.goal
    if bit:
        mode = spec.scene.mirror
        robot_pose = _mirror_pose(robot_pose, mode)
        boxes = tuple(replace(b, pose=_mirror_pose(b.pose, mode)) for b in boxes)
        obstacles = tuple(_mirror_rect(r, mode) for r in obstacles)
        goal = _mirror_goal(goal, mode)
    world = WorldState(
        robot=replace(spec.scene.robot, pose=robot_pose),
        boxes=boxes,
        obstacles=obstacles,
        friction=spec.scene.friction,
        time_step_index=0,
    )
    return world, goal


def _scaled(v, lo, hi):
    return min(1.0, max(-1.0, 2.0 * (v - lo) / (hi - lo) - 1.0))


def encode_observation(world: WorldState, spec: TaskSpec, goal=None) -> np.ndarray:
    """Scene-normalized pose vector followed by the goal descriptor."""
    b = spec.scene.bounds
    hx = 0.5 * (b.xmax - b.xmin)
    hy = 0.5 * (b.ymax - b.ymin)
    goal = spec.goal if goal is None else goal
    out = []
    poses = [world.robot.pose] + [bx.pose for bx in world.boxes]
    for p in poses:
        out.extend((_scaled(p.x, b.xmin, b.xmax), _scaled(p.y, b.ymin, b.ymax),
                    math.cos(p.yaw), math.sin(p.yaw)))
    if isinstance(goal, Rect):
        (cx, cy), (ex, ey) = goal.center, goal.half_extents
        out.extend((_scaled(cx, b.xmin, b.xmax), _scaled(cy, b.ymin, b.ymax),
                    min(1.0, ex / hx), min(1.0, ey / hy)))
    else:
        out.extend((_scaled(goal.cx, b.xmin, b.xmax), _scaled(goal.cy, b.ymin, b.ymax),
                    min(1.0, goal.radius / max(hx, hy))))
    return np.array(out, dtype=np.float64)


# ---------------------------------------------------------------------------
# episode bookkeeping

@dataclass
class EpisodeTrace:
    """Per-episode record used for the preference metrics."""

    seed: int
    configuration: int
    box_ids: tuple
    box_masses: tuple
    low_mu: float
    # friction task: (mu under the box centroid at step start, box path length) per pushing step
    pushed_segments: list = field(default_factory=list)
    # mass task: step index at which each box first left the circle
    exit_steps: dict = field(default_factory=dict)
    exit_margin: dict = field(default_factory=dict)
    step_works: list = field(default_factory=list)
    # work of the reward's cost source (equals step_works for pushing energy)
    cost_works: list = field(default_factory=list)
    length: int = 0
    success: bool = False
    collided: bool = False
    episode_work: float = 0.0
    total_reward: float = 0.0
    initial_observation: Optional[np.ndarray] = None


class Environment:
    """One task instance. ``step_bounds`` / ``episode_bounds`` are shared
    accumulators (``RunningBounds`` or ``FixedBounds``); ``training=False``
    freezes running bounds."""

    def __init__(self, spec: TaskSpec, step_bounds=None, episode_bounds=None, training: bool = True,
                 kernels=None):
        self.spec = spec
        self.rcfg = spec.reward
        self.training = training
        if self.rcfg.bound_mode is BoundMode.FIXED and self.rcfg.fixed_bounds is not None:
            (s0, s1), (e0, e1) = self.rcfg.fixed_bounds
            self.step_bounds = FixedBounds(s0, s1)
            self.episode_bounds = FixedBounds(e0, e1)
        else:
            self.step_bounds = step_bounds if step_bounds is not None else RunningBounds()
            self.episode_bounds = episode_bounds if episode_bounds is not None else RunningBounds()
        self._kernels = kernels
        self._sim = None
        self._patch_cache = {}
        self._robot_energy = {a: robot_step_energy(a, spec.sim, self.rcfg.k_robot) for a in Action}
        self.world = None
        self.goal = None
        self.trace = None
        self.done = True
        self._state = None
        self._t = 0

    # -- bounds helpers --------------------------------------------------
    def _fold(self, bounds, work):
        if self.training or isinstance(bounds, FixedBounds):
            return bounds.update_and_normalize(work).normalized_cost
        return bounds.normalize(work)

    def _patch(self, i: int, mu: float) -> ContactPatch:
        key = (i, mu)
        p = self._patch_cache.get(key)
        if p is None:
            b = self.world.boxes[i]
            p = ContactPatch(2 * b.half_width, 2 * b.half_length, b.mass, mu)
            self._patch_cache[key] = p
        return p

    # -- episode API -------------------------------------------------------
    def reset(self, seed: int, configuration: Optional[int] = None) -> np.ndarray:
        world, goal = layout(self.spec, seed, configuration)
        self.world = world
        self.goal = goal
        self._sim = Simulator(world, self.spec.sim, self._kernels)
        self._state = world.pose_vector()
        self._t = 0
        self._patch_cache = {}
        bands = self.spec.scene.friction
        low_mu = min([mu for _, mu in bands.bands] or [bands.default_mu])
        self.trace = EpisodeTrace(
            seed=int(seed),
            configuration=configuration_bit(seed if configuration is None else configuration),
            box_ids=tuple(b.id for b in world.boxes),
            box_masses=tuple(b.mass for b in world.boxes),
            low_mu=low_mu,
        )
        self.done = False
        obs = encode_observation(world, self.spec, goal)
        self.trace.initial_observation = obs
        return obs

    def _world_now(self) -> WorldState:
        return self.world.with_poses(self._state, self._t)

    def step(self, action) -> Transition:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset() first")
        action = Action(action)
        spec = self.spec
        rcfg = self.rcfg
        before = self._state
        field_ = spec.scene.friction
        nb = self._sim.n_boxes
        new_state, report = self._sim.step_arrays(before, action)
        outcome = self._sim.outcome(report)
        self._state = new_state
        self._t += 1
        world = self._world_now()
        trace = self.trace

        push_work = 0.0
        for i in range(nb):
            d = outcome.deltas[i]
            if d.is_zero:
                continue
            b = self.world.boxes[i]
            bx, by = float(before[3 + 3 * i]), float(before[4 + 3 * i])
            mu = b.material_mu_override
            if mu is None:
                k = field_.band_index(bx, by)
                mu = field_.default_mu if k < 0 else field_.bands[k][1]
            push_work += step_work(self._patch(i, mu), d)
            if spec.task_kind is TaskKind.VARIABLE_FRICTION:
                trace.pushed_segments.append((mu, d.translation_dx))
        trace.step_works.append(push_work)

        if rcfg.cost_source is CostSource.PUSHING_ENERGY:
            work = push_work
        elif rcfg.cost_source is CostSource.ROBOT_ENERGY:
            work = self._robot_energy[action]
        else:
            work = 0.0
        trace.cost_works.append(work)

        if spec.task_kind is TaskKind.VARIABLE_FRICTION:
            success = success_friction(world, self.goal)
        else:
            success = success_mass(world, self.goal)
            g = self.goal
            for i, b in enumerate(world.boxes):
                dist = math.hypot(b.pose.x - g.cx, b.pose.y - g.cy)
                if dist > g.radius and b.id not in trace.exit_steps:
                    trace.exit_steps[b.id] = self._t
                    trace.exit_margin[b.id] = dist - g.radius
        collided = outcome.collided and not success
        done = success or collided or self._t >= spec.episode_horizon

        step_cost = None
        episode_cost = None
        if rcfg.cost_source is CostSource.NONE:
            step_cost = 1.0
        else:
            step_cost = self._fold(self.step_bounds, work)

        if spec.task_kind is TaskKind.VARIABLE_FRICTION:
            reward = reward_variable_friction(outcome, step_cost, rcfg, success)
        else:
            if success:
                if rcfg.cost_source is CostSource.NONE:
                    episode_cost = 0.0
                else:
                    total = accumulate_episode(trace.cost_works)
                    episode_cost = self._fold(self.episode_bounds, total)
            reward = reward_variable_mass(outcome, episode_cost, rcfg, success)

        trace.length = self._t
        trace.total_reward += reward
        if done:
            trace.success = success
            trace.collided = collided
            trace.episode_work = accumulate_episode(trace.step_works)
            self.done = True
        info = {
            "raw_work": work,
            "push_work": push_work,
            "step_cost": step_cost,
            "pushed": outcome.pushed,
            "collided": collided,
            "success": success,
            "episode_cost": episode_cost,
            "outcome": outcome,
        }
        obs = encode_observation(world, spec, self.goal)
        return Transition(obs, reward, done, info)

    @property
    def current_world(self) -> WorldState:
        return self._world_now()

    def state_dict(self) -> dict:
        """Mid-episode state, enough to resume stepping bit-exactly."""
        t = self.trace
        return {
            "done": self.done,
            "t": self._t,
            "state": None if self._state is None else [float(v) for v in self._state],
            "seed": None if t is None else t.seed,
            "configuration": None if t is None else t.configuration,
            "trace": None if t is None else {
                "pushed_segments": [list(s) for s in t.pushed_segments],
                "exit_steps": dict(t.exit_steps),
                "exit_margin": dict(t.exit_margin),
                "step_works": list(t.step_works),
                "cost_works": list(t.cost_works),
                "total_reward": t.total_reward,
            },
        }

    def load_state_dict(self, state: dict) -> None:
        if state["seed"] is None:
            self.done = True
            return
        self.reset(state["seed"], state["configuration"])
        self._state = np.array(state["state"], dtype=np.float64)
        self._t = state["t"]
        self.done = state["done"]
        tr = state["trace"]
        t = self.trace
        t.pushed_segments = [tuple(s) for s in tr["pushed_segments"]]
        t.exit_steps = dict(tr["exit_steps"])
        t.exit_margin = dict(tr["exit_margin"])
        t.step_works = list(tr["step_works"])
        t.cost_works = list(tr["cost_works"])
        t.total_reward = tr["total_reward"]
        t.length = self._t

    def observation(self) -> np.ndarray:
        return encode_observation(self._world_now(), self.spec, self.goal)


def reset(spec: TaskSpec, seed: int, step_bounds=None, episode_bounds=None, training: bool = True,
          configuration: Optional[int] = None):
    """Build an environment for ``spec`` and start an episode; returns ``(env, obs)``."""
    env = Environment(spec, step_bounds, episode_bounds, training)
    obs = env.reset(seed, configuration)
    return env, obs
