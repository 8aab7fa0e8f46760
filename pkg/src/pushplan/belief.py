"""Belief representations and updates.

Two belief families: exact discrete distributions over a finite label set,
and weighted particle clouds over world states for continuous pose
uncertainty. Updates are pure and return new beliefs; particle updates are
deterministic given the belief's rng_seed.

Entropy and Kullback-Leibler divergence are reported in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Pose, wrap_angle
from .dynamics import ObjectModel, WorldState, detect_contact

_SUM_TOL = 1e-9


class InconsistentObservationError(ValueError):
    """Observation has zero probability under the predicted belief."""


class DegenerateFilterError(ValueError):
    """Every particle has zero likelihood; inflate sigma and retry."""


class OutOfSupportError(ValueError):
    """KL divergence undefined: reference is zero where the belief is not."""


def _clean_probs(values, name: str) -> np.ndarray:
    probs = np.asarray(values, dtype=float)
    if probs.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(probs < -1e-12):
        raise ValueError(f"{name} contains negative entries")
    probs = np.clip(probs, 0.0, None)
    total = float(probs.sum())
    if abs(total - 1.0) > _SUM_TOL:
        raise ValueError(f"{name} sums to {total!r}, expected 1")
    probs.flags.writeable = False
    return probs


@dataclass(frozen=True)
class DiscreteBelief:
    """Probability distribution over an ordered finite support."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = _clean_probs(self.probs, "probs")
        if len(support) != len(probs):
            raise ValueError("support and probs must have matching lengths")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, support: Sequence) -> "DiscreteBelief":
        n = len(support)
        return cls(tuple(support), np.full(n, 1.0 / n))

    def prob_of(self, state) -> float:
        return float(self.probs[self.support.index(state)])

    def to_dict(self) -> dict:
        return {str(s): float(p) for s, p in zip(self.support, self.probs)}


@dataclass(frozen=True)
class ParticleBelief:
    """Weighted particle cloud; particle count stays constant across updates."""

    particles: tuple
    weights: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        particles = tuple(self.particles)
        if len(particles) < 1:
            raise ValueError("particle count must be >= 1")
        weights = _clean_probs(self.weights, "weights")
        if len(weights) != len(particles):
            raise ValueError("particles and weights must have matching lengths")
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_states(cls, states: Sequence[WorldState], rng_seed: int = 0) -> "ParticleBelief":
        n = len(states)
        return cls(tuple(states), np.full(n, 1.0 / n), rng_seed)

    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def mean_pose(self) -> Pose:
        """Weighted mean position with circular mean yaw."""
        xs = np.array([p.object_pose.planar() for p in self.particles])
        w = self.weights
        x = float(w @ xs[:, 0])
        y = float(w @ xs[:, 1])
        yaw = math.atan2(float(w @ np.sin(xs[:, 2])), float(w @ np.cos(xs[:, 2])))
        return Pose.from_planar(x, y, yaw)

    def covariance_diagonal(self) -> np.ndarray:
        """Weighted variance of (x, y, yaw); yaw deviations taken minimally."""
        xs = np.array([p.object_pose.planar() for p in self.particles])
        w = self.weights
        mx, my, myaw = self.mean_pose().planar()
        dyaw = np.array([wrap_angle(v - myaw) for v in xs[:, 2]])
        return np.array([
            float(w @ (xs[:, 0] - mx) ** 2),
            float(w @ (xs[:, 1] - my) ** 2),
            float(w @ dyaw**2),
        ])

    def summary(self) -> dict:
        return {
            "mean_pose": self.mean_pose().to_list(),
            "cov_diag": [float(v) for v in self.covariance_diagonal()],
            "entropy": entropy(self),
        }


@dataclass(frozen=True)
class History:
    """Action/observation record: events alternate (u_0, y_1, u_1, y_2, ...)."""

    initial_belief: DiscreteBelief | ParticleBelief
    events: tuple

    def __post_init__(self):
        events = tuple(self.events)
        if len(events) % 2 != 0:
            raise ValueError("events must pair each action with an observation")
        object.__setattr__(self, "events", events)

    def pairs(self):
        for i in range(0, len(self.events), 2):
            yield self.events[i], self.events[i + 1]


@dataclass(frozen=True)
class DiscreteObservationModel:
    """Observation table Pr(y | s', u), shape (n_actions, n_states, n_obs)."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 3:
            raise ValueError(f"table must be 3-d (u, s', y), got shape {table.shape}")
        if np.any(table < 0.0) or np.any(np.abs(table.sum(axis=2) - 1.0) > _SUM_TOL):
            raise ValueError("each observation row must be a distribution")
        table = table.copy()
        table.flags.writeable = False
        object.__setattr__(self, "table", table)


@dataclass(frozen=True)
class GaussianPoseNoise:
    """Planar pose observation noise: isotropic on translation, wrapped
    Gaussian (evaluated on the minimal angular difference) on yaw."""

    sigma_t: float = 0.005
    sigma_r: float = 0.02

    def __post_init__(self):
        if self.sigma_t <= 0.0 or self.sigma_r <= 0.0:
            raise ValueError("sigma_t and sigma_r must be > 0")

    def likelihood(self, observed: Pose, actual: Pose) -> float:
        """Unnormalized density of the observation given the true pose."""
        ox, oy, oyaw = observed.planar()
        ax, ay, ayaw = actual.planar()
        dt2 = (ox - ax) ** 2 + (oy - ay) ** 2
        dr = wrap_angle(oyaw - ayaw)
        return math.exp(
            -0.5 * dt2 / self.sigma_t**2 - 0.5 * dr**2 / self.sigma_r**2
        )

    def sample(self, pose: Pose, rng: np.random.Generator) -> Pose:
        x, y, yaw = pose.planar()
        dx, dy, dyaw = rng.normal(size=3) * (self.sigma_t, self.sigma_t, self.sigma_r)
        return Pose.from_planar(x + dx, y + dy, wrap_angle(yaw + dyaw))


@dataclass(frozen=True)
class ContactSensor:
    """Binary touch sensing: soft likelihood of observing contact at a finger
    position given a hypothesized object pose."""

    sigma: float = 0.005
    false_rate: float = 0.02

    def likelihood(self, contact: bool, finger_pos, obj: ObjectModel,
                   object_pose: Pose) -> float:
        _, depth = detect_contact(finger_pos, obj, object_pose)
        clearance = max(0.0, -depth)
        p_contact = self.false_rate + (1.0 - 2.0 * self.false_rate) * math.exp(
            -0.5 * clearance**2 / self.sigma**2
        )
        return p_contact if contact else 1.0 - p_contact


def bayes_update(
    b: DiscreteBelief,
    u: int,
    y: int,
    trans: np.ndarray,
    obs: DiscreteObservationModel,
) -> DiscreteBelief:
    """Exact discrete filter step: b'(s') ~ Pr(y|s',u) sum_s Pr(s'|u,s) b(s).

    trans has shape (n_actions, n_states, n_states) with rows trans[u][s]
    giving the distribution of the successor state. The posterior is
    renormalized; a zero-mass posterior raises InconsistentObservationError.
    """
    trans = np.asarray(trans, dtype=float)
    n = len(b.support)
    if trans.shape[1:] != (n, n) or obs.table.shape[1] != n:
        raise ValueError("transition/observation tables do not match the belief support")
    predicted = b.probs @ trans[u]
    posterior = predicted * obs.table[u][:, y]
    mass = float(posterior.sum())
    if mass <= 0.0:
        raise InconsistentObservationError(
            f"observation {y} after action {u} has zero probability"
        )
    return DiscreteBelief(b.support, posterior / mass)


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (np.arange(n) + rng.uniform()) / n
    return np.searchsorted(np.cumsum(weights), positions)


def particle_update(
    b: ParticleBelief,
    u,
    y: Pose,
    sim: Callable[[WorldState, object], WorldState],
    obs: GaussianPoseNoise,
) -> ParticleBelief:
    """Particle filter step: propagate through the forward model, reweight by
    the observation likelihood, resample systematically when the effective
    sample size drops below half the particle count.

    `sim` maps (state, action) to the successor state; with u=None the
    particles are not propagated (pure measurement update).
    """
    if u is None:
        particles = b.particles
    else:
        particles = tuple(sim(p, u) for p in b.particles)

    lik = np.array([obs.likelihood(y, p.object_pose) for p in particles])
    weights = b.weights * lik
    mass = float(weights.sum())
    if mass <= 0.0:
        raise DegenerateFilterError("all particle likelihoods are zero")
    weights = weights / mass

    n = len(particles)
    ess = 1.0 / float(np.sum(weights**2))
    if ess < n / 2.0:
        rng = np.random.default_rng(b.rng_seed)
        idx = _systematic_resample(weights, rng)
        particles = tuple(particles[i] for i in idx)
        weights = np.full(n, 1.0 / n)
    return ParticleBelief(particles, weights, b.rng_seed + 1)


def contact_update(
    b: ParticleBelief,
    finger_pos,
    contact: bool,
    obj: ObjectModel,
    sensor: ContactSensor = ContactSensor(),
) -> ParticleBelief:
    """Measurement-only update from a binary touch event.

    Reweights without resampling so the information gain is visible in the
    weight entropy; the next particle_update resamples if needed.
    """
    lik = np.array([
        sensor.likelihood(contact, finger_pos, obj, p.object_pose) for p in b.particles
    ])
    weights = b.weights * lik
    mass = float(weights.sum())
    if mass <= 0.0:
        raise DegenerateFilterError("contact observation is inconsistent with all particles")
    return ParticleBelief(b.particles, weights / mass, b.rng_seed + 1)


def entropy(b: DiscreteBelief | ParticleBelief) -> float:
    """Shannon entropy in bits; 0 log 0 = 0. Particle beliefs use weights."""
    p = b.weights if isinstance(b, ParticleBelief) else b.probs
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log2(nz)))


def kl_divergence(b_i: DiscreteBelief, b_j: DiscreteBelief) -> float:
    """KL(b_i || b_j) in bits over a shared, identically ordered support."""
    if b_i.support != b_j.support:
        raise OutOfSupportError("beliefs must share an identically ordered support")
    mask = b_i.probs > 0.0
    if np.any(b_j.probs[mask] <= 0.0):
        raise OutOfSupportError("reference belief is zero where the belief has mass")
    p = b_i.probs[mask]
    q = b_j.probs[mask]
    return float(np.sum(p * np.log2(p / q)))
