import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushplan.belief import (
    ContactSensor,
    DegenerateFilterError,
    DiscreteBelief,
    DiscreteObservationModel,
    GaussianPoseNoise,
    History,
    InconsistentObservationError,
    OutOfSupportError,
    ParticleBelief,
    bayes_update,
    contact_update,
    entropy,
    kl_divergence,
    particle_update,
)
from pushplan.dynamics import ObjectModel, WorldState, finger_line_action, simulate_push
from pushplan.geometry import Pose
from pushplan.pomdp import battleship_filter, battleship_initial_belief, battleship_model, placement_marginal


def random_distribution(rng, n):
    p = rng.random(n) + 1e-3
    return p / p.sum()


def random_tables(rng, ns, na, no):
    trans = np.stack([
        np.stack([random_distribution(rng, ns) for _ in range(ns)]) for _ in range(na)
    ])
    obs = np.stack([
        np.stack([random_distribution(rng, no) for _ in range(ns)]) for _ in range(na)
    ])
    return trans, DiscreteObservationModel(obs)


def enumeration_posterior(prior, trans, obs_table, events):
    """Joint enumeration over full state paths; independent of the filter."""
    ns = len(prior)
    post = [0.0] * ns
    for path in itertools.product(range(ns), repeat=len(events) + 1):
        p = prior[path[0]]
        for t, (u, y) in enumerate(events):
            p *= trans[u][path[t]][path[t + 1]] * obs_table[u][path[t + 1]][y]
        post[path[-1]] += p
    total = sum(post)
    return [v / total for v in post]


class TestDiscreteBelief:
    def test_normalization_enforced(self):
        with pytest.raises(ValueError):
            DiscreteBelief(("a", "b"), np.array([0.7, 0.7]))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            DiscreteBelief(("a", "b"), np.array([1.5, -0.5]))

    def test_uniform(self):
        b = DiscreteBelief.uniform(("a", "b", "c", "d"))
        assert b.prob_of("c") == pytest.approx(0.25)


class TestBayesUpdate:
    def test_battleship_posterior(self):
        model = battleship_model()
        b = battleship_filter(model, battleship_initial_belief(model),
                              [("C2", "miss"), ("B2", "hit")])
        marginal = placement_marginal(model, b)
        assert marginal == {"A2-B2": pytest.approx(0.5, abs=1e-12),
                            "B1-B2": pytest.approx(0.5, abs=1e-12)}

    def test_flat_likelihood_keeps_prior(self):
        rng = np.random.default_rng(0)
        n = 5
        prior = DiscreteBelief(tuple(range(n)), random_distribution(rng, n))
        trans = np.eye(n)[None, :, :]
        obs = DiscreteObservationModel(np.full((1, n, 2), 0.5))
        post = bayes_update(prior, 0, 0, trans, obs)
        assert np.allclose(post.probs, prior.probs, atol=1e-12)

    def test_delta_propagation(self):
        n = 3
        trans = np.zeros((1, n, n))
        trans[0, :, 2] = 1.0  # everything moves to state 2
        obs = np.zeros((1, n, 2))
        obs[0, :, 0] = 1.0
        b = DiscreteBelief.uniform(tuple(range(n)))
        post = bayes_update(b, 0, 0, trans, DiscreteObservationModel(obs))
        assert np.allclose(post.probs, [0.0, 0.0, 1.0])

    def test_impossible_observation_raises(self):
        n = 2
        trans = np.eye(n)[None, :, :]
        obs = np.zeros((1, n, 2))
        obs[0, :, 0] = 1.0  # observation 1 never happens
        b = DiscreteBelief.uniform((0, 1))
        with pytest.raises(InconsistentObservationError):
            bayes_update(b, 0, 1, trans, DiscreteObservationModel(obs))

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20)         :
            ns, na, no = 6, 2, 3
            trans, obs = random_tables(rng, ns, na, no)
            prior = random_distribution(rng, ns)
            events = [(int(rng.integers(na)), int(rng.integers(no))) for _ in range(3)]
            b = DiscreteBelief(tuple(range(ns)), prior)
            for u, y in events:
                b = bayes_update(b, u, y, trans, obs)
            oracle = enumeration_posterior(list(prior), trans, obs.table, events)
            assert np.allclose(b.probs, oracle, atol=1e-12)


class TestHistory:
    def test_alternation_enforced(self):
        b = DiscreteBelief.uniform((0, 1))
        with pytest.raises(ValueError):
            History(b, ("u0", "y1", "u1"))

    def test_pairs(self):
        b = DiscreteBelief.uniform((0, 1))
        h = History(b, ("u0", "y1", "u1", "y2"))
        assert list(h.pairs()) == [("u0", "y1"), ("u1", "y2")]


class TestEntropy:
    def test_point_mass(self):
        assert entropy(DiscreteBelief((0, 1, 2), np.array([0.0, 1.0, 0.0]))) == 0.0

    def test_uniform_six(self):
        b = DiscreteBelief.uniform(tuple(range(6)))
        assert entropy(b) == pytest.approx(math.log2(6), abs=1e-12)

    def test_fair_bit(self):
        assert entropy(DiscreteBelief((0, 1), np.array([0.5, 0.5]))) == pytest.approx(1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12))
    def test_bounds(self, seed, n):
        rng = np.random.default_rng(seed)
        b = DiscreteBelief(tuple(range(n)), random_distribution(rng, n))
        h = entropy(b)
        assert 0.0 <= h <= math.log2(n) + 1e-12


class TestKL:
    def test_zero_on_equal(self):
        rng = np.random.default_rng(1)
        p = random_distribution(rng, 5)
        b = DiscreteBelief(tuple(range(5)), p)
        assert kl_divergence(b, b) == pytest.approx(0.0, abs=1e-15)

    def test_one_bit(self):
        b_i = DiscreteBelief((0, 1), np.array([1.0, 0.0]))
        b_j = DiscreteBelief((0, 1), np.array([0.5, 0.5]))
        assert kl_divergence(b_i, b_j) == pytest.approx(1.0, abs=1e-12)

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p = random_distribution(rng, 4)
            q = random_distribution(rng, 4)
            b_i = DiscreteBelief(tuple(range(4)), p)
            b_j = DiscreteBelief(tuple(range(4)), q)
            oracle = sum(pi * math.log2(pi / qi) for pi, qi in zip(p, q) if pi > 0)
            assert kl_divergence(b_i, b_j) == pytest.approx(oracle, abs=1e-12)

    def test_out_of_support(self):
        b_i = DiscreteBelief((0, 1), np.array([0.5, 0.5]))
        b_j = DiscreteBelief((0, 1), np.array([1.0, 0.0]))
        with pytest.raises(OutOfSupportError):
            kl_divergence(b_i, b_j)

    def test_support_ordering_required(self):
        b_i = DiscreteBelief((0, 1), np.array([0.5, 0.5]))
        b_j = DiscreteBelief((1, 0), np.array([0.5, 0.5]))
        with pytest.raises(OutOfSupportError):
            kl_divergence(b_i, b_j)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        b_i = DiscreteBelief(tuple(range(6)), random_distribution(rng, 6))
        b_j = DiscreteBelief(tuple(range(6)), random_distribution(rng, 6))
        assert kl_divergence(b_i, b_j) >= -1e-12


@pytest.fixture
def square():
    return ObjectModel(
        np.array([[-0.05, -0.05], [0.05, -0.05], [0.05, 0.05], [-0.05, 0.05]]),
        np.zeros(2),
    )


def cloud_around(pose_xyyaw, n, rng, sigma_t=0.005, sigma_r=0.02, seed=0):
    x, y, yaw = pose_xyyaw
    states = [
        WorldState(
            Pose.from_planar(x + rng.normal(0, sigma_t), y + rng.normal(0, sigma_t),
                             yaw + rng.normal(0, sigma_r)),
            np.array([-0.3, 0.0]),
        )
        for _ in range(n)
    ]
    return ParticleBelief.from_states(states, rng_seed=seed)


class TestParticleBelief:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ParticleBelief((), np.array([]))

    def test_weight_concentration(self, square):
        # near-zero noise: the particle matching the observation takes all weight
        rng = np.random.default_rng(0)
        states = [WorldState(Pose.from_planar(0.1 * i, 0.0, 0.0), np.zeros(2)) for i in range(4)]
        b = ParticleBelief.from_states(states)
        obs = GaussianPoseNoise(sigma_t=1e-4, sigma_r=1e-4)
        post = particle_update(b, None, states[2].object_pose, sim=None, obs=obs)
        agg = {i: 0.0 for i in range(4)}
        for p, w in zip(post.particles, post.weights):
            agg[round(p.object_pose.planar()[0] / 0.1)] += w
        assert agg[2] > 0.999

    def test_symmetric_cloud_mean_preserved(self, square):
        rng = np.random.default_rng(3)
        offsets = [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.0, -0.01)]
        states = [WorldState(Pose.from_planar(0.2 + dx, 0.1 + dy, 0.0), np.zeros(2))
                  for dx, dy in offsets]
        b = ParticleBelief.from_states(states)
        post = particle_update(b, None, Pose.from_planar(0.2, 0.1, 0.0),
                               sim=None, obs=GaussianPoseNoise())
        mx, my, _ = post.mean_pose().planar()
        assert (mx, my) == (pytest.approx(0.2, abs=1e-9), pytest.approx(0.1, abs=1e-9))

    def test_degenerate_filter_raises(self):
        states = [WorldState(Pose.identity(), np.zeros(2))]
        b = ParticleBelief.from_states(states)
        far = Pose.from_planar(100.0, 100.0, 0.0)
        with pytest.raises(DegenerateFilterError):
            particle_update(b, None, far, sim=None, obs=GaussianPoseNoise(sigma_t=1e-4))

    def test_update_is_deterministic(self, square):
        rng = np.random.default_rng(5)
        b = cloud_around((0.0, 0.0, 0.0), 200, rng, seed=11)
        obs = GaussianPoseNoise()
        y = Pose.from_planar(0.002, -0.001, 0.01)
        p1 = particle_update(b, None, y, sim=None, obs=obs)
        p2 = particle_update(b, None, y, sim=None, obs=obs)
        assert np.array_equal(p1.weights, p2.weights)
        assert p1.rng_seed == p2.rng_seed == 12

    def test_tracking_rmse_under_noise(self, square):
        # 10 short pushes with noisy pose observations; weighted mean stays
        # within 3 sigma of ground truth on average
        sigma_t = 0.005
        rng = np.random.default_rng(2024)
        obs = GaussianPoseNoise(sigma_t=sigma_t, sigma_r=0.02)
        truth = WorldState(Pose.identity(), np.array([-0.3, 0.0]))
        belief = cloud_around((0.0, 0.0, 0.0), 500, rng, seed=99)

        def sim(state, action):
            return simulate_push(state, square, action)[0]

        errors = []
        for step in range(10):
            tx, ty, _ = truth.object_pose.planar()
            target = Pose.from_planar(tx + 0.03, ty + (0.01 if step % 2 else -0.01), 0.0)
            action = finger_line_action(truth, square, target)
            truth = sim(truth, action)
            y = obs.sample(truth.object_pose, rng)
            belief = particle_update(belief, action, y, sim, obs)
            mx, my, _ = belief.mean_pose().planar()
            tx, ty, _ = truth.object_pose.planar()
            errors.append((mx - tx) ** 2 + (my - ty) ** 2)
        rmse = math.sqrt(sum(errors) / len(errors))
        assert rmse < 3 * sigma_t

    def test_converges_to_discrete_posterior(self):
        # finite pose support: the particle posterior matches exact Bayes
        support_poses = [Pose.from_planar(0.02 * i, 0.0, 0.0) for i in range(5)]
        rng = np.random.default_rng(17)
        n = 10_000
        assignment = rng.integers(0, 5, size=n)
        states = [WorldState(support_poses[k], np.zeros(2)) for k in assignment]
        b = ParticleBelief.from_states(states, rng_seed=3)
        obs = GaussianPoseNoise(sigma_t=0.015, sigma_r=0.05)
        y = Pose.from_planar(0.037, 0.0, 0.0)

        post = particle_update(b, None, y, sim=None, obs=obs)
        agg = np.zeros(5)
        for p, w in zip(post.particles, post.weights):
            k = round(p.object_pose.planar()[0] / 0.02)
            agg[k] += w

        prior = np.bincount(assignment, minlength=5) / n
        lik = np.array([obs.likelihood(y, p) for p in support_poses])
        exact = prior * lik
        exact /= exact.sum()
        assert 0.5 * np.abs(agg - exact).sum() < 0.05

    def test_contact_update_reduces_entropy(self, square):
        rng = np.random.default_rng(8)
        b = cloud_around((0.0, 0.0, 0.0), 400, rng, sigma_t=0.02, seed=5)
        before = entropy(b)
        # touch the true boundary: particles whose footprint is far lose weight
        post = contact_update(b, np.array([0.05, 0.0]), True, square,
                              ContactSensor(sigma=0.003))
        assert entropy(post) < before
