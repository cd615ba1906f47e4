"""Deterministic planar world: differential-drive disc robot, quasi-static
boxes, axis-aligned obstacles and a banded friction floor.

Boxes move only while the robot disc penetrates them. Penetration is resolved
by rotating the box about its centroid by ``k_rot * lever * depth`` (the lever
being the signed tangential offset of the contact point) and then translating
it along the contact normal until the disc just touches. A substep that would
drive the robot or a pushed box into an obstacle is cut back by bisection, so
the robot never passes through and nothing rests in penetration.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _backend
from ._kernels_py import (
    N_PARAMS,
    box_box_overlap,
    disc_box_contact,
    disc_rect_overlap,
    wrap_angle,
)
from .cost import MotionDelta


class Action(enum.IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    STOP = 3


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate rectangle {self}")

    @classmethod
    def from_center(cls, cx, cy, half_x, half_y):
        return cls(cx - half_x, cy - half_y, cx + half_x, cy + half_y)

    @property
    def center(self):
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    @property
    def half_extents(self):
        return (0.5 * (self.xmax - self.xmin), 0.5 * (self.ymax - self.ymin))

    def contains(self, x, y) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def as_tuple(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class RobotBody:
    pose: Pose2D
    wheel_radius: float = 0.06
    axle_length: float = 0.37
    body_radius: float = 0.28

    def __post_init__(self):
        if not (self.wheel_radius > 0 and self.axle_length > 0 and self.body_radius > 0):
            raise ValueError(f"robot geometry must be positive: {self}")


@dataclass(frozen=True)
class BoxBody:
    id: str
    pose: Pose2D
    half_width: float
    half_length: float
    mass: float
    material_mu_override: Optional[float] = None

    def __post_init__(self):
        if not (self.half_width > 0 and self.half_length > 0 and self.mass > 0):
            raise ValueError(f"box {self.id!r}: dimensions and mass must be positive")
        if self.material_mu_override is not None and self.material_mu_override < 0:
            raise ValueError(f"box {self.id!r}: negative friction override")


@dataclass(frozen=True)
class FrictionField:
    """Ordered friction bands; the first band containing a point wins."""

    bands: tuple = ()
    default_mu: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple((r, float(mu)) for r, mu in self.bands))
        if self.default_mu < 0 or any(mu < 0 for _, mu in self.bands):
            raise ValueError("friction coefficients must be non-negative")

    def band_index(self, x: float, y: float) -> int:
        """Index of the containing band, or -1 for the default region."""
        for i, (rect, _) in enumerate(self.bands):
            if rect.contains(x, y):
                return i
        return -1

    @property
    def max_mu(self) -> float:
        return max([self.default_mu] + [mu for _, mu in self.bands])


def friction_at(field: FrictionField, point) -> float:
    x, y = point
    i = field.band_index(x, y)
    return field.default_mu if i < 0 else field.bands[i][1]


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    v_max: float = 6.0
    substeps: int = 5
    contact_tolerance: float = 1e-4
    k_rot: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and self.substeps >= 1 and self.v_max >= 0 and self.contact_tolerance >= 0):
            raise ValueError(f"invalid simulator config {self}")


@dataclass(frozen=True)
class WorldState:
    robot: RobotBody
    boxes: tuple
    obstacles: tuple = ()
    friction: FrictionField = field(default_factory=FrictionField)
    time_step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate box ids {ids}")

    def box(self, box_id: str) -> BoxBody:
        for b in self.boxes:
            if b.id == box_id:
                return b
        raise KeyError(box_id)

    def pose_vector(self) -> np.ndarray:
        """Robot pose followed by every box pose, as one float64 vector."""
        v = [self.robot.pose.x, self.robot.pose.y, self.robot.pose.yaw]
        for b in self.boxes:
            v.extend((b.pose.x, b.pose.y, b.pose.yaw))
        return np.array(v, dtype=np.float64)

    def with_poses(self, vec, time_step_index=None) -> "WorldState":
        vec = [float(v) for v in vec]
        robot = replace(self.robot, pose=Pose2D(vec[0], vec[1], vec[2]))
        boxes = tuple(
            replace(b, pose=Pose2D(vec[3 + 3 * i], vec[4 + 3 * i], vec[5 + 3 * i]))
            for i, b in enumerate(self.boxes)
        )
        return replace(self, robot=robot, boxes=boxes,
                       time_step_index=self.time_step_index if time_step_index is None else time_step_index)

    def digest(self) -> str:
        return hashlib.sha256(self.pose_vector().tobytes()).hexdigest()


@dataclass(frozen=True)
class StepOutcome:
    deltas: tuple
    pushed_box: Optional[str]
    robot_collided: bool
    box_collided: bool
    robot_path_length: float
    pushed_boxes: tuple = ()

    @property
    def pushed(self) -> bool:
        return self.pushed_box is not None

    @property
    def collided(self) -> bool:
        return self.robot_collided or self.box_collided


def wheel_command(action: Action, v_max: float):
    """Wheel angular velocities ``(left, right)`` for a discrete action.

    The table is kept verbatim: ``TURN_LEFT`` is ``(0.5 v, -0.5 v)``, which with
    the yaw rate ``r (right - left) / axle`` spins the robot clockwise.
    """
    action = Action(action)
    if action is Action.FORWARD:
        return (v_max, v_max)
    if action is Action.TURN_LEFT:
        return (0.5 * v_max, -0.5 * v_max)
    if action is Action.TURN_RIGHT:
        return (-0.5 * v_max, 0.5 * v_max)
    return (0.0, 0.0)


def integrate_robot(pose: Pose2D, omega_left: float, omega_right: float, cfg: SimConfig,
                    wheel_radius: float = 0.06, axle_length: float = 0.37) -> Pose2D:
    """Exact unicycle arc over ``cfg.dt``."""
    u = wheel_radius * (omega_left + omega_right) * 0.5
    w = wheel_radius * (omega_right - omega_left) / axle_length
    h = cfg.dt
    wh = w * h
    if abs(wh) < 1e-12:
        return Pose2D(pose.x + u * h * math.cos(pose.yaw), pose.y + u * h * math.sin(pose.yaw), pose.yaw)
    rad = u / w
    return Pose2D(
        pose.x + rad * (math.sin(pose.yaw + wh) - math.sin(pose.yaw)),
        pose.y - rad * (math.cos(pose.yaw + wh) - math.cos(pose.yaw)),
        pose.yaw + wh,
    )


def _push_once(robot_pose: Pose2D, radius: float, box: BoxBody, k_rot: float):
    p = box.pose
    depth, _, _, lever = disc_box_contact(robot_pose.x, robot_pose.y, radius, p.x, p.y, p.yaw,
                                          box.half_width, box.half_length)
    if depth <= 0.0:
        return box, MotionDelta(), False
    theta = k_rot * lever * depth
    yaw = wrap_angle(p.yaw + theta)
    depth2, nx, ny, _ = disc_box_contact(robot_pose.x, robot_pose.y, radius, p.x, p.y, yaw,
                                         box.half_width, box.half_length)
    x, y, trans = p.x, p.y, 0.0
    if depth2 > 0.0:
        x, y, trans = x + nx * depth2, y + ny * depth2, depth2
    moved = trans > 0.0 or theta != 0.0
    return replace(box, pose=Pose2D(x, y, yaw)), MotionDelta(trans, abs(theta)), moved


def resolve_push(robot_motion, box: BoxBody, cfg: SimConfig, body_radius: float = 0.28,
                 obstacles: Sequence[Rect] = ()):
    """Quasi-static response of ``box`` to the robot moving ``before -> after``.

    Returns ``(box_after, delta, pushed, robot_after)``. When the pushed box
    would enter an obstacle the robot motion is cut back (linear
    interpolation, bisection) to the last jam-free fraction.
    """
    before, after = robot_motion
    moved_box, delta, pushed = _push_once(after, body_radius, box, cfg.k_rot)
    if not pushed or not obstacles or _box_clear(moved_box, obstacles):
        return moved_box, delta, pushed, after

    def at(f):
        return Pose2D(before.x + f * (after.x - before.x), before.y + f * (after.y - before.y),
                      before.yaw + f * wrap_angle(after.yaw - before.yaw))

    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _box_clear(_push_once(at(mid), body_radius, box, cfg.k_rot)[0], obstacles):
            lo = mid
        else:
            hi = mid
    robot_after = at(lo)
    moved_box, delta, pushed = _push_once(robot_after, body_radius, box, cfg.k_rot)
    return moved_box, delta, pushed, robot_after


def _box_overlap_rect(box: BoxBody, rect: Rect) -> float:
    (cx, cy), (hx, hy) = rect.center, rect.half_extents
    p = box.pose
    return box_box_overlap(p.x, p.y, p.yaw, box.half_width, box.half_length, cx, cy, 0.0, hx, hy)


def _box_clear(box: BoxBody, obstacles) -> bool:
    return all(_box_overlap_rect(box, r) <= 0.0 for r in obstacles)


def detect_collisions(world: WorldState, tolerance: float = 1e-4):
    """``(robot_collided, box_collided)``: contact with an obstacle counts once
    the gap closes to within ``tolerance``. Robot-box contact is pushing, not a
    collision."""
    rp = world.robot.pose
    r = world.robot.body_radius
    robot_hit = any(
        disc_rect_overlap(rp.x, rp.y, r, *o.as_tuple()) > -tolerance for o in world.obstacles
    )
    box_hit = any(_box_overlap_rect(b, o) > -tolerance for b in world.boxes for o in world.obstacles)
    if not box_hit:
        bs = world.boxes
        for i in range(len(bs)):
            for j in range(i + 1, len(bs)):
                a, b = bs[i], bs[j]
                ov = box_box_overlap(a.pose.x, a.pose.y, a.pose.yaw, a.half_width, a.half_length,
                                     b.pose.x, b.pose.y, b.pose.yaw, b.half_width, b.half_length)
                if ov > -tolerance:
                    box_hit = True
    return robot_hit, box_hit


class Simulator:
    """Packed static geometry for fast repeated stepping of one scene."""

    def __init__(self, world: WorldState, cfg: SimConfig, kernels=None):
        self.kernels = kernels or _backend.kernels
        self.cfg = cfg
        self.n_boxes = len(world.boxes)
        self.box_ids = tuple(b.id for b in world.boxes)
        self.half = np.array([v for b in world.boxes for v in (b.half_width, b.half_length)],
                             dtype=np.float64)
        self.obstacles = np.array([v for o in world.obstacles for v in o.as_tuple()], dtype=np.float64)
        robot = world.robot
        self._prm = np.zeros(N_PARAMS, dtype=np.float64)
        self._prm[:] = (robot.wheel_radius, robot.axle_length, robot.body_radius, 0.0, 0.0,
                        cfg.dt, cfg.substeps, cfg.k_rot)
        self._commands = {a: wheel_command(a, cfg.v_max) for a in Action}

    def step_arrays(self, state: np.ndarray, action: Action):
        """Returns ``(new_state, report)``; see ``_kernels_py.step`` for the report layout."""
        wl, wr = self._commands[Action(action)]
        self._prm[3] = wl
        self._prm[4] = wr
        out = np.empty_like(state)
        report = np.empty(3 * self.n_boxes + 3, dtype=np.float64)
        self.kernels.step(state, self.half, self.obstacles, self._prm, out, report)
        return out, report

    def outcome(self, report: np.ndarray) -> StepOutcome:
        n = self.n_boxes
        deltas = tuple(MotionDelta(float(report[i]), float(report[n + i])) for i in range(n))
        pushed = tuple(self.box_ids[i] for i in range(n) if report[2 * n + i] != 0.0)
        return StepOutcome(
            deltas=deltas,
            pushed_box=pushed[0] if pushed else None,
            robot_collided=bool(report[3 * n]),
            box_collided=bool(report[3 * n + 1]),
            robot_path_length=float(report[3 * n + 2]),
            pushed_boxes=pushed,
        )


def step_world(world: WorldState, action: Action, cfg: SimConfig, kernels=None):
    """Advance ``world`` by one control step. Pure: returns ``(world', outcome)``."""
    sim = Simulator(world, cfg, kernels)
    new_state, report = sim.step_arrays(world.pose_vector(), action)
    return world.with_poses(new_state, world.time_step_index + 1), sim.outcome(report)
