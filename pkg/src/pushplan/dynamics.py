"""Deterministic quasi-static planar push forward model.

A point finger advances along a straight line in fixed increments. While it
penetrates the object footprint, the object moves according to the ellipsoid
limit-surface model for a rigid body sliding on a uniform-pressure support:
the support load lies on an ellipsoid in (force, moment) space and the object
twist is parallel to the ellipsoid normal at that load. A single point
contact with Coulomb friction selects the load: if the commanded finger
motion lies inside the contact motion cone the contact sticks, otherwise the
force sits on a friction-cone edge and the finger slides along the surface.

Everything in this module is pure and allocation-light; the stepping loop is
scalar Python on purpose (it dominates planner runtime). Identical inputs
produce bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import Pose

DEFAULT_STEP_FORWARD = 0.002  # m, finger advance per micro-step
DEFAULT_STEP_BACK = 0.05      # m, approach clearance behind the footprint
DEFAULT_CONTACT_THRESHOLD = 0.001  # m, contact sensing band
DEFAULT_CONTACT_MU = 0.3      # finger-object Coulomb friction

_MAX_STEPS = 1_000_000


class ConfigurationError(ValueError):
    """Raised for physically inconsistent simulation inputs."""


class DegenerateDirectionError(ValueError):
    """Raised when a push direction cannot be derived (zero-length)."""


@dataclass(frozen=True)
class PushParams:
    """Step sizes shared by action constructors."""

    step_forward: float = DEFAULT_STEP_FORWARD
    step_back: float = DEFAULT_STEP_BACK
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD

    def __post_init__(self):
        for name in ("step_forward", "step_back", "contact_threshold"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ObjectModel:
    """Convex footprint sliding on a uniform-pressure support.

    footprint: (n, 2) counter-clockwise convex polygon, object frame, meters.
    com: (2,) centre of mass in the object frame; must lie inside the
        footprint (it need not be the centroid, e.g. an L-shaped object
        standing on its foot carries its mass off-centre).
    friction_mu: support friction coefficient (> 0). Under the quasi-static
        scale invariance only the pressure geometry matters for the motion
        direction, so this acts as a consistency parameter.
    contact_mu: finger-object Coulomb friction coefficient.

    The support pressure is uniform over the footprint. The limit-surface
    moment scale is derived from it: c = mean distance of footprint points
    from the COM, integrated by fan triangulation with the degree-2 Gauss
    rule (edge midpoints) per triangle.
    """

    footprint: np.ndarray
    com: np.ndarray
    friction_mu: float = 0.5
    contact_mu: float = DEFAULT_CONTACT_MU

    def __post_init__(self):
        pts = np.asarray(self.footprint, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError(f"footprint must be (n>=3, 2), got {pts.shape}")
        com = np.asarray(self.com, dtype=float)
        if com.shape != (2,):
            raise ValueError(f"com must have shape (2,), got {com.shape}")
        if self.friction_mu <= 0.0:
            raise ValueError("friction_mu must be > 0")
        if self.contact_mu <= 0.0:
            raise ValueError("contact_mu must be > 0")

        n = len(pts)
        verts = [(float(x), float(y)) for x, y in pts]
        edges = []
        min_edge = math.inf
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx2, cy2 = verts[(i + 2) % n]
            cross = (bx - ax) * (cy2 - by) - (by - ay) * (cx2 - bx)
            if cross <= 1e-12:
                raise ValueError(
                    "footprint must be strictly convex and counter-clockwise"
                )
            ex, ey = bx - ax, by - ay
            elen = math.hypot(ex, ey)
            min_edge = min(min_edge, elen)
            # outward normal of a CCW polygon edge
            nx, ny = ey / elen, -ex / elen
            edges.append((ax, ay, ex / elen, ey / elen, elen, nx, ny))

        cx, cy = float(com[0]), float(com[1])
        inside = all((cx - e[0]) * e[5] + (cy - e[1]) * e[6] < 0.0 for e in edges)
        if not inside:
            raise ValueError("com must lie strictly inside the footprint")

        # moment arm c = (1/A) * integral ||r - com|| dA over the footprint.
        # Fan triangulation from the COM, uniformly subdivided (the integrand
        # has a conic kink at the COM), 3-point Gauss rule (edge midpoints,
        # exact to degree 2) on every leaf triangle.
        def _tri_quad(p0, p1, p2, depth):
            if depth == 0:
                tri_area = 0.5 * abs(
                    (p1[0] - p0[0]) * (p2[1] - p0[1])
                    - (p1[1] - p0[1]) * (p2[0] - p0[0])
                )
                s = sum(
                    math.hypot(0.5 * (a[0] + b[0]) - cx, 0.5 * (a[1] + b[1]) - cy)
                    for a, b in ((p0, p1), (p1, p2), (p2, p0))
                )
                return tri_area, tri_area * s / 3.0
            m01 = (0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1]))
            m12 = (0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1]))
            m20 = (0.5 * (p2[0] + p0[0]), 0.5 * (p2[1] + p0[1]))
            area = 0.0
            moment = 0.0
            for tri in ((p0, m01, m20), (m01, p1, m12), (m20, m12, p2), (m01, m12, m20)):
                a, m = _tri_quad(*tri, depth - 1)
                area += a
                moment += m
            return area, moment

        area = 0.0
        moment = 0.0
        for i in range(n):
            a, m = _tri_quad((cx, cy), verts[i], verts[(i + 1) % n], 3)
            area += a
            moment += m
        c = moment / area

        radius = max(math.hypot(x - cx, y - cy) for x, y in verts)

        pts = pts.copy()
        com = com.copy()
        pts.flags.writeable = False
        com.flags.writeable = False
        object.__setattr__(self, "footprint", pts)
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "_verts", tuple(verts))
        object.__setattr__(self, "_edges", tuple(edges))
        object.__setattr__(self, "_com", (cx, cy))
        object.__setattr__(self, "_c2", c * c)
        object.__setattr__(self, "_min_edge", min_edge)
        object.__setattr__(self, "_max_radius", radius)
        object.__setattr__(self, "_area", area)

    @property
    def min_edge_length(self) -> float:
        return self._min_edge

    @property
    def max_radius(self) -> float:
        """Largest vertex distance from the COM."""
        return self._max_radius

    @property
    def moment_arm(self) -> float:
        """Characteristic length c of the limit-surface ellipsoid."""
        return math.sqrt(self._c2)

    def support(self, dx: float, dy: float) -> float:
        """Footprint extent from the COM along the unit direction (dx, dy)."""
        cx, cy = self._com
        return max((x - cx) * dx + (y - cy) * dy for x, y in self._verts)


@dataclass(frozen=True)
class WorldState:
    """Object pose plus finger position. The finger never sits strictly
    inside the footprint; the simulator resolves it to boundary contact."""

    object_pose: Pose
    finger_pos: np.ndarray
    in_contact: bool = False

    def __post_init__(self):
        pos = np.asarray(self.finger_pos, dtype=float)
        if pos.shape != (2,):
            raise ValueError(f"finger_pos must have shape (2,), got {pos.shape}")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "finger_pos", pos)


@dataclass(frozen=True)
class PushAction:
    """Straight-line finger push.

    The finger is first placed at approach_point (a free-space move), then
    advanced along `direction` in increments of step_forward until `travel`
    is consumed.
    """

    approach_point: np.ndarray
    direction: np.ndarray
    travel: float
    step_forward: float = DEFAULT_STEP_FORWARD
    step_back: float = DEFAULT_STEP_BACK
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD

    def __post_init__(self):
        ap = np.asarray(self.approach_point, dtype=float)
        if ap.shape != (2,):
            raise ValueError(f"approach_point must have shape (2,), got {ap.shape}")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,):
            raise ValueError(f"direction must have shape (2,), got {d.shape}")
        norm = float(math.hypot(d[0], d[1]))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit length, |direction| = {norm!r}")
        for name in ("travel", "step_forward", "step_back", "contact_threshold"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        ap = ap.copy()
        d = d / norm
        ap.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "approach_point", ap)
        object.__setattr__(self, "direction", d)

    def truncated(self, travel: float) -> "PushAction":
        """Same push cut short at `travel`; replays bit-identically up to it."""
        return PushAction(
            self.approach_point, self.direction, travel,
            self.step_forward, self.step_back, self.contact_threshold,
        )

    def to_dict(self) -> dict:
        return {
            "approach": [float(self.approach_point[0]), float(self.approach_point[1])],
            "direction": [float(self.direction[0]), float(self.direction[1])],
            "travel": float(self.travel),
            "step_forward": float(self.step_forward),
            "step_back": float(self.step_back),
            "contact_threshold": float(self.contact_threshold),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PushAction":
        return cls(
            np.asarray(data["approach"], dtype=float),
            np.asarray(data["direction"], dtype=float),
            float(data["travel"]),
            float(data["step_forward"]),
            float(data["step_back"]),
            float(data["contact_threshold"]),
        )


@dataclass(frozen=True)
class PushStep:
    """One evaluated micro-step of a push.

    Contact-free spans are compressed: the stepper evaluates the contact
    test only at grid points it cannot prove contact-free (distance to the
    footprint shrinks at most 1:1 with travel), so consecutive records may
    skip grid indices while the object is untouched. The object never moves
    across a skipped span.
    """

    index: int
    s: float
    finger: tuple[float, float]
    pose: tuple[float, float, float]
    in_contact: bool
    penetration: float
    moved: bool


def _poly_query(obj: ObjectModel, px: float, py: float, cos_y: float, sin_y: float,
                fx: float, fy: float):
    """Signed distance from a world point to the posed footprint.

    Returns (signed_dist, closest_x, closest_y, normal_out_x, normal_out_y)
    in world coordinates; signed_dist < 0 inside.
    """
    dx, dy = fx - px, fy - py
    lx = cos_y * dx + sin_y * dy
    ly = -sin_y * dx + cos_y * dy

    edges = obj._edges
    best_d = -math.inf
    best_i = 0
    inside = True
    for i, (ax, ay, ux, uy, elen, nx, ny) in enumerate(edges):
        d = (lx - ax) * nx + (ly - ay) * ny
        if d > 0.0:
            inside = False
        if d > best_d:
            best_d = d
            best_i = i

    if inside:
        ax, ay, ux, uy, elen, nx, ny = edges[best_i]
        t = (lx - ax) * ux + (ly - ay) * uy
        if t < 0.0:
            t = 0.0
        elif t > elen:
            t = elen
        cx_l, cy_l = ax + t * ux, ay + t * uy
        wx = px + cos_y * cx_l - sin_y * cy_l
        wy = py + sin_y * cx_l + cos_y * cy_l
        wnx = cos_y * nx - sin_y * ny
        wny = sin_y * nx + cos_y * ny
        return best_d, wx, wy, wnx, wny

    best_sq = math.inf
    bx_l = by_l = 0.0
    bnx = bny = 0.0
    for ax, ay, ux, uy, elen, nx, ny in edges:
        t = (lx - ax) * ux + (ly - ay) * uy
        if t < 0.0:
            t = 0.0
        elif t > elen:
            t = elen
        qx, qy = ax + t * ux, ay + t * uy
        sq = (lx - qx) ** 2 + (ly - qy) ** 2
        if sq < best_sq:
            best_sq = sq
            bx_l, by_l = qx, qy
            bnx, bny = nx, ny
    dist = math.sqrt(best_sq)
    if dist > 1e-12:
        bnx, bny = (lx - bx_l) / dist, (ly - by_l) / dist
    wx = px + cos_y * bx_l - sin_y * by_l
    wy = py + sin_y * bx_l + cos_y * by_l
    wnx = cos_y * bnx - sin_y * bny
    wny = sin_y * bnx + cos_y * bny
    return dist, wx, wy, wnx, wny


def _push_twist(rx: float, ry: float, nx: float, ny: float,
                ux: float, uy: float, c2: float, mu: float):
    """Object twist (vx, vy, omega) for unit pusher motion u at contact r.

    r is the contact point relative to the COM, n the inward contact normal,
    both in the world frame. The twist is scaled so the contact-point
    velocity matches u exactly when the contact sticks and matches u's
    normal component when it slides. Returns None if no consistent pushing
    motion exists.
    """
    a11 = 1.0 + ry * ry / c2
    a12 = -rx * ry / c2
    a22 = 1.0 + rx * rx / c2

    inv = 1.0 / math.sqrt(1.0 + mu * mu)
    ct, st = inv, mu * inv
    # friction cone edges about the inward normal
    flx, fly = nx * ct - ny * st, nx * st + ny * ct
    frx, fry = nx * ct + ny * st, -nx * st + ny * ct
    # contact-point velocities when the force rides each edge
    vlx, vly = a11 * flx + a12 * fly, a12 * flx + a22 * fly
    vrx, vry = a11 * frx + a12 * fry, a12 * frx + a22 * fry

    if ux * vly - uy * vlx < 0.0:
        # u lies ccw beyond the left cone edge: contact slides, force on it
        fx, fy, vex, vey = flx, fly, vlx, vly
    elif ux * vry - uy * vrx > 0.0:
        fx, fy, vex, vey = frx, fry, vrx, vry
    else:
        det = a11 * a22 - a12 * a12
        fx = (a22 * ux - a12 * uy) / det
        fy = (a11 * uy - a12 * ux) / det
        return fx, fy, (rx * fy - ry * fx) / c2

    un = ux * nx + uy * ny
    en = vex * nx + vey * ny
    if en <= 1e-12:
        return None
    k = un / en
    return k * fx, k * fy, k * (rx * fy - ry * fx) / c2


def push_steps(state: WorldState, obj: ObjectModel, action: PushAction) -> Iterator[PushStep]:
    """Generate the micro-step trace of a push; see PushStep for semantics."""
    if action.step_forward >= obj.min_edge_length:
        raise ConfigurationError(
            f"step_forward {action.step_forward} >= smallest footprint edge "
            f"{obj.min_edge_length}: tunneling risk"
        )
    if action.travel / action.step_forward > _MAX_STEPS:
        raise ConfigurationError(
            f"push requires more than {_MAX_STEPS} steps; shorten travel"
        )

    px, py, yaw = state.object_pose.planar()
    cos_y, sin_y = math.cos(yaw), math.sin(yaw)
    apx, apy = float(action.approach_point[0]), float(action.approach_point[1])
    ux, uy = float(action.direction[0]), float(action.direction[1])
    df = action.step_forward
    h = action.contact_threshold
    travel = action.travel
    c2 = obj._c2
    mu = obj.contact_mu
    ccx, ccy = obj._com

    d0, *_ = _poly_query(obj, px, py, cos_y, sin_y, apx, apy)
    if d0 < 0.0:
        raise ConfigurationError("approach point lies inside the object")

    i = 1
    while True:
        s = i * df
        last = s >= travel
        if last:
            s = travel
        fx, fy = apx + s * ux, apy + s * uy
        d, cpx, cpy, nox, noy = _poly_query(obj, px, py, cos_y, sin_y, fx, fy)

        if d > h:
            yield PushStep(i, s, (fx, fy), (px, py, yaw), False, -d, False)
            if last:
                return
            # distance shrinks at most 1:1 with travel: skip provably free steps
            i += max(1, int((d - h) / df))
            continue

        pen = -d if d < 0.0 else 0.0
        moved = False
        finger = (fx, fy)
        if pen > 0.0:
            nix, niy = -nox, -noy
            un = ux * nix + uy * niy
            twist = None
            if un > 1e-12:
                comx = px + cos_y * ccx - sin_y * ccy
                comy = py + sin_y * ccx + cos_y * ccy
                twist = _push_twist(cpx - comx, cpy - comy, nix, niy, ux, uy, c2, mu)
            if twist is not None:
                ell = pen / un
                px += ell * twist[0]
                py += ell * twist[1]
                yaw += ell * twist[2]
                cos_y, sin_y = math.cos(yaw), math.sin(yaw)
                moved = True
            d2, cp2x, cp2y, *_ = _poly_query(obj, px, py, cos_y, sin_y, fx, fy)
            if d2 < 0.0:
                # residual interpenetration (rotation nonlinearity): report
                # the finger resolved to the boundary
                finger = (cp2x, cp2y)
        yield PushStep(i, s, finger, (px, py, yaw), True, pen, moved)
        if last:
            return
        i += 1


def simulate_push(state: WorldState, obj: ObjectModel,
                  action: PushAction) -> tuple[WorldState, list[PushStep]]:
    """Run a push to completion.

    Returns the final world state and the evaluated micro-step trace. The
    object moves only on steps where contact is detected; identical inputs
    produce identical traces bit for bit.
    """
    trace = list(push_steps(state, obj, action))
    last = trace[-1]
    final = WorldState(
        Pose.from_planar(*last.pose),
        np.array(last.finger),
        last.in_contact,
    )
    return final, trace


def detect_contact(finger_pos, obj: ObjectModel, object_pose: Pose,
                   threshold: float = DEFAULT_CONTACT_THRESHOLD) -> tuple[bool, float]:
    """Contact test of a point finger against the posed footprint.

    Returns (in_contact, depth): contact iff the finger is within `threshold`
    of the footprint; depth is positive inside, zero on the boundary and
    negative outside (minus the clearance).
    """
    fp = np.asarray(finger_pos, dtype=float)
    px, py, yaw = object_pose.planar()
    d, *_ = _poly_query(obj, px, py, math.cos(yaw), math.sin(yaw),
                        float(fp[0]), float(fp[1]))
    return d <= threshold, -d


def finger_line_action(from_state: WorldState, obj: ObjectModel, target: Pose,
                       params: PushParams = PushParams(),
                       travel: float | None = None) -> PushAction:
    """Straight-line push from behind the COM toward the target translation.

    The push direction is the unit vector from the object COM (world frame)
    to the target position; the approach point sits behind the COM along the
    opposite direction, step_back clear of the footprint boundary, so the
    first contact always lands on the boundary. Default travel is the
    COM-to-target distance plus the approach clearance, which (for a
    sticking, through-COM push) parks the object at the target.
    """
    px, py, yaw = from_state.object_pose.planar()
    cos_y, sin_y = math.cos(yaw), math.sin(yaw)
    ccx, ccy = obj._com
    comx = px + cos_y * ccx - sin_y * ccy
    comy = py + sin_y * ccx + cos_y * ccy

    tx, ty = float(target.translation[0]), float(target.translation[1])
    dx, dy = tx - comx, ty - comy
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        raise DegenerateDirectionError(
            "target translation coincides with the current object position"
        )
    ux, uy = dx / dist, dy / dist

    # footprint extent behind the COM along -u, rotated into the world frame
    lx = cos_y * (-ux) + sin_y * (-uy)
    ly = -sin_y * (-ux) + cos_y * (-uy)
    standoff = obj.support(lx, ly) + params.step_back
    approach = np.array([comx - standoff * ux, comy - standoff * uy])

    if travel is None:
        travel = params.step_back + dist
    return PushAction(
        approach, np.array([ux, uy]), travel,
        params.step_forward, params.step_back, params.contact_threshold,
    )
