"""Pose types, uniform pose sampling, and the weighted rotation+translation
distance used as planner cost and nearest-neighbour metric.

Rotations are stored as unit quaternions in (w, x, y, z) order. Planar poses
rotate about z only and keep z, roll and pitch at zero. All types are
immutable value objects; operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Unit-norm slack accepted on quaternion inputs. Operations renormalize, so
# accumulated drift stays far below this.
_UNIT_TOL = 1e-6


def _as_vector(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
    return arr


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    w, x, y, z = q
    # v' = v + 2*cross(q_vec, cross(q_vec, v) + w*v)
    qv = np.array([x, y, z])
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(angle, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _as_vector(self.rotation, 4, "rotation")
        trans = _as_vector(self.translation, 3, "translation")
        norm = float(np.linalg.norm(rot))
        if not math.isfinite(norm) or abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"rotation quaternion norm {norm!r} is not 1")
        rot = rot / norm
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_planar(cls, x: float, y: float, yaw: float) -> "Pose":
        """Pose at (x, y) rotated by yaw about z."""
        half = 0.5 * yaw
        return cls(
            np.array([math.cos(half), 0.0, 0.0, math.sin(half)]),
            np.array([x, y, 0.0]),
        )

    @property
    def xy(self) -> np.ndarray:
        return self.translation[:2]

    @property
    def yaw(self) -> float:
        """Rotation about z for planar poses."""
        w, _, _, z = self.rotation
        return wrap_angle(2.0 * math.atan2(z, w))

    def planar(self) -> tuple[float, float, float]:
        """(x, y, yaw) triple; only meaningful for planar poses."""
        return (float(self.translation[0]), float(self.translation[1]), self.yaw)

    def compose(self, other: "Pose") -> "Pose":
        """This pose applied after `other` is expressed in its frame: self * other."""
        return Pose(
            _quat_mul(self.rotation, other.rotation),
            self.translation + _quat_rotate(self.rotation, other.translation),
        )

    def inverse(self) -> "Pose":
        conj = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose(conj, -_quat_rotate(conj, self.translation))

    def to_list(self) -> list[float]:
        """Serialized form [qw, qx, qy, qz, tx, ty, tz]."""
        return [float(v) for v in (*self.rotation, *self.translation)]

    @classmethod
    def from_list(cls, values) -> "Pose":
        arr = _as_vector(values, 7, "pose")
        return cls(arr[:4], arr[4:])


@dataclass(frozen=True)
class MetricWeights:
    """Rotation/translation mixing weights; alpha + beta must equal 1 exactly.

    Construct with alpha only to get beta = 1 - alpha, which satisfies the
    exact-sum requirement by construction. Translation is in meters and the
    rotation chord distance is dimensionless, so tune alpha to the workspace
    scale of each scenario.
    """

    alpha: float = 0.5
    beta: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 - self.alpha)
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.alpha + self.beta != 1.0:
            raise ValueError(
                f"alpha + beta must equal 1 exactly, got {self.alpha + self.beta!r}"
            )


@dataclass(frozen=True)
class PoseBounds:
    """Per-dimension (x, y, yaw) sampling limits; meters and radians."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _as_vector(self.lower, 3, "lower")
        upper = _as_vector(self.upper, 3, "upper")
        if np.any(lower > upper):
            raise ValueError(f"lower {lower} exceeds upper {upper}")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, pose: Pose, atol: float = 1e-9) -> bool:
        x, y, yaw = pose.planar()
        vals = np.array([x, y, wrap_angle(yaw)])
        return bool(np.all(vals >= self.lower - atol) and np.all(vals <= self.upper + atol))


def _validate_unit_quat(q, name: str) -> np.ndarray:
    arr = _as_vector(q, 4, name)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must be unit norm, got |{name}| = {norm!r}")
    return arr


def quat_distance(q1, q2) -> float:
    """Chord distance between unit quaternions, safe under the q = -q double cover.

    Returns min(||q1 - q2||, ||q1 + q2||); zero iff q1 = +/-q2.
    """
    a = _validate_unit_quat(q1, "q1")
    b = _validate_unit_quat(q2, "q2")
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def pose_metric(p1: Pose, p2: Pose, w: MetricWeights) -> float:
    """Weighted pose distance: alpha * rotation chord + beta * translation norm."""
    rot = quat_distance(p1.rotation, p2.rotation)
    trans = float(np.linalg.norm(p2.translation - p1.translation))
    return w.alpha * rot + w.beta * trans


def yaw_chord_distance(yaw1: float, yaw2: float) -> float:
    """quat_distance specialized to two yaw rotations (scalar fast path)."""
    quarter = 0.25 * (yaw1 - yaw2)
    return 2.0 * min(abs(math.sin(quarter)), abs(math.cos(quarter)))


def planar_pose_metric(
    x1: float, y1: float, yaw1: float,
    x2: float, y2: float, yaw2: float,
    w: MetricWeights,
) -> float:
    """pose_metric for planar poses without constructing Pose objects.

    Agrees with pose_metric(from_planar(...), from_planar(...), w) to
    floating-point roundoff; used in planner/controller inner loops.
    """
    rot = yaw_chord_distance(yaw1, yaw2)
    trans = math.hypot(x2 - x1, y2 - y1)
    return w.alpha * rot + w.beta * trans


def sample_pose_uniform(bounds: PoseBounds, rng: np.random.Generator) -> Pose:
    """Uniform planar pose over the bounds; z, roll and pitch stay fixed at zero.

    Deterministic given the generator state. Degenerate dimensions
    (lower == upper) return that value exactly.
    """
    x, y, yaw = rng.uniform(bounds.lower, bounds.upper)
    return Pose.from_planar(float(x), float(y), float(yaw))
