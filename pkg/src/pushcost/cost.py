"""Friction work of a pushed box and its running-bounds normalization.

The work charged for one step has a translational part (Coulomb friction
times sliding distance) and a rotational part (friction torque under uniform
pressure integrated over the rectangular contact patch, times the yaw swept).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from . import _backend

STANDARD_GRAVITY = 9.81

# below this side ratio cos(phi) or sin(phi) underflows in the closed form
MIN_SIDE_RATIO = 1e-6
DEGENERATE_SPAN = 1e-12
ORACLE_FALLBACK_RESOLUTION = 4096


@dataclass(frozen=True)
class ContactPatch:
    """Rectangular box/floor interface: sides, mass and friction."""

    width_X: float
    length_Y: float
    mass_m: float
    friction_mu: float
    gravity_g: float = STANDARD_GRAVITY

    def __post_init__(self):
        for name in ("width_X", "length_Y", "mass_m", "gravity_g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.friction_mu >= 0:
            raise ValueError(f"friction_mu must be non-negative, got {self.friction_mu!r}")

    @property
    def phi(self) -> float:
        return math.atan2(self.length_Y, self.width_X)


@dataclass(frozen=True)
class MotionDelta:
    """Path length of the box centroid and magnitude of yaw swept in one step."""

    translation_dx: float = 0.0
    rotation_theta: float = 0.0

    def __post_init__(self):
        if not (self.translation_dx >= 0 and self.rotation_theta >= 0):
            raise ValueError(f"motion magnitudes must be non-negative: {self}")

    @property
    def is_zero(self) -> bool:
        return self.translation_dx == 0.0 and self.rotation_theta == 0.0


@dataclass(frozen=True)
class CostSample:
    raw_work: float
    normalized_cost: float


def _check_sides(width_X: float, length_Y: float) -> None:
    if not (width_X > 0 and length_Y > 0):
        raise ValueError(f"rectangle sides must be positive, got ({width_X!r}, {length_Y!r})")


def quadrature_oracle(width_X: float, length_Y: float, resolution: int = 4096) -> float:
    """Midpoint-rule estimate of the integral of sqrt(x^2 + y^2) over the
    centered ``width_X`` by ``length_Y`` rectangle, with ``resolution`` cells
    per side."""
    _check_sides(width_X, length_Y)
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution!r}")
    return _backend.kernels.radial_moment_midpoint(float(width_X), float(length_Y), int(resolution))


def rotation_shape_integral(width_X: float, length_Y: float) -> float:
    """Closed-form integral of radial distance over the centered rectangle.

    For extreme aspect ratios the closed form is numerically singular and the
    midpoint oracle is used instead.
    """
    _check_sides(width_X, length_Y)
    X, Y = float(width_X), float(length_Y)
    if min(X, Y) / max(X, Y) < MIN_SIDE_RATIO:
        return quadrature_oracle(X, Y, ORACLE_FALLBACK_RESOLUTION)
    phi = math.atan2(Y, X)
    s, c = math.sin(phi), math.cos(phi)
    along_x = X**3 / 12.0 * (s / (c * c) + math.log((1.0 + s) / c))
    along_y = Y**3 / 12.0 * (-c / (s * s) + math.log(abs(math.tan(phi / 2.0))))
    return along_x - along_y


def step_work(patch: ContactPatch, delta: MotionDelta) -> float:
    """Virtual friction work in joules for one step of box motion."""
    normal_force = patch.friction_mu * patch.mass_m * patch.gravity_g
    translational = normal_force * delta.translation_dx
    if delta.rotation_theta == 0.0:
        return translational
    area = patch.width_X * patch.length_Y
    rotational = (
        normal_force / area * delta.rotation_theta
        * rotation_shape_integral(patch.width_X, patch.length_Y)
    )
    return translational + rotational


def accumulate_episode(step_works: Iterable[float]) -> float:
    """Episode work: the sum of its step works."""
    return math.fsum(step_works)


class RunningBounds:
    """Streaming min/max of observed works.

    ``update_and_normalize`` folds a sample into the bounds before scaling it,
    so a new maximum always costs 1 and a new minimum always costs 0. A frozen
    instance still normalizes (clamped to [0, 1]) but never moves its bounds.
    """

    def __init__(self, min_seen: Optional[float] = None, max_seen: Optional[float] = None,
                 count: int = 0, frozen: bool = False):
        if count == 0:
            min_seen = max_seen = None
        elif min_seen is None or max_seen is None or min_seen > max_seen:
            raise ValueError(f"inconsistent bounds: min={min_seen!r} max={max_seen!r} count={count}")
        self.min_seen = min_seen
        self.max_seen = max_seen
        self.count = count
        self.frozen = frozen

    def __repr__(self):
        return (f"RunningBounds(min_seen={self.min_seen!r}, max_seen={self.max_seen!r}, "
                f"count={self.count}, frozen={self.frozen})")

    def __eq__(self, other):
        if not isinstance(other, RunningBounds):
            return NotImplemented
        return self.state_dict() == other.state_dict()

    @property
    def is_set(self) -> bool:
        return self.count > 0

    def update(self, raw_work: float) -> None:
        if not raw_work >= 0:
            raise ValueError(f"work must be non-negative, got {raw_work!r}")
        if self.frozen:
            return
        if self.count == 0:
            self.min_seen = self.max_seen = float(raw_work)
        else:
            if raw_work < self.min_seen:
                self.min_seen = float(raw_work)
            if raw_work > self.max_seen:
                self.max_seen = float(raw_work)
        self.count += 1

    def normalize(self, raw_work: float) -> float:
        if not self.is_set:
            return 0.0
        span = self.max_seen - self.min_seen
        if span <= DEGENERATE_SPAN:
            return 0.0
        c = (raw_work - self.min_seen) / span
        return min(1.0, max(0.0, c))

    def update_and_normalize(self, raw_work: float) -> CostSample:
        self.update(raw_work)
        return CostSample(float(raw_work), self.normalize(raw_work))

    def state_dict(self) -> dict:
        return {"min_seen": self.min_seen, "max_seen": self.max_seen, "count": self.count}

    @classmethod
    def from_state_dict(cls, state: dict, frozen: bool = False) -> "RunningBounds":
        return cls(state["min_seen"], state["max_seen"], state["count"], frozen=frozen)

    def copy(self, frozen: Optional[bool] = None) -> "RunningBounds":
        return RunningBounds(self.min_seen, self.max_seen, self.count,
                             self.frozen if frozen is None else frozen)


def update_and_normalize(bounds: RunningBounds, raw_work: float) -> CostSample:
    return bounds.update_and_normalize(raw_work)


class FixedBounds:
    """Prior-knowledge bounds: same normalize interface, never updated."""

    def __init__(self, e_min: float, e_max: float):
        if not (0 <= e_min <= e_max):
            raise ValueError(f"fixed bounds must satisfy 0 <= min <= max, got ({e_min}, {e_max})")
        self.min_seen = float(e_min)
        self.max_seen = float(e_max)

    def __repr__(self):
        return f"FixedBounds({self.min_seen!r}, {self.max_seen!r})"

    def update(self, raw_work: float) -> None:
        if not raw_work >= 0:
            raise ValueError(f"work must be non-negative, got {raw_work!r}")

    def normalize(self, raw_work: float) -> float:
        span = self.max_seen - self.min_seen
        if span <= DEGENERATE_SPAN:
            return 0.0
        return min(1.0, max(0.0, (raw_work - self.min_seen) / span))

    def update_and_normalize(self, raw_work: float) -> CostSample:
        self.update(raw_work)
        return CostSample(float(raw_work), self.normalize(raw_work))
