"""Finite POMDP models and exact finite-horizon solving by enumeration.

Small models only: the solver expands the full action/observation tree with
memoization on (rounded belief, depth). The Battleship toy instance doubles
as a hand-checkable oracle for the belief machinery.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .belief import DiscreteBelief, DiscreteObservationModel, bayes_update

DEFAULT_NODE_BUDGET = 1_000_000


class ModelError(ValueError):
    """Belief and model state spaces do not match."""


class CapacityError(RuntimeError):
    """Enumeration exceeded the node budget."""


@dataclass(frozen=True)
class PomdpModel:
    """Finite POMDP: states, actions, observations, transition and
    observation tables, per-(state, action) rewards and a discount in [0, 1).

    trans[u, s, s'] = Pr(s' | s, u); obs[u, s', y] = Pr(y | s', u);
    reward[s, u] = immediate reward.
    """

    states: tuple
    actions: tuple
    observations: tuple
    trans: np.ndarray
    obs: np.ndarray
    reward: np.ndarray
    discount: float = 0.95

    def __post_init__(self):
        states = tuple(self.states)
        actions = tuple(self.actions)
        observations = tuple(self.observations)
        ns, na, no = len(states), len(actions), len(observations)
        trans = np.asarray(self.trans, dtype=float)
        obs = np.asarray(self.obs, dtype=float)
        reward = np.asarray(self.reward, dtype=float)
        if trans.shape != (na, ns, ns):
            raise ValueError(f"trans must have shape {(na, ns, ns)}, got {trans.shape}")
        if obs.shape != (na, ns, no):
            raise ValueError(f"obs must have shape {(na, ns, no)}, got {obs.shape}")
        if reward.shape != (ns, na):
            raise ValueError(f"reward must have shape {(ns, na)}, got {reward.shape}")
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("transition rows must be distributions")
        if np.any(obs < 0) or np.any(np.abs(obs.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("observation rows must be distributions")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        for arr in (trans, obs, reward):
            arr.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "observations", observations)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "reward", reward)

    def observation_model(self) -> DiscreteObservationModel:
        return DiscreteObservationModel(self.obs)

    def initial_belief(self) -> DiscreteBelief:
        return DiscreteBelief.uniform(self.states)


def load_pomdp(path) -> PomdpModel:
    """Read a model from a JSON file with explicit tables."""
    data = json.loads(Path(path).read_text())
    return PomdpModel(
        tuple(data["states"]),
        tuple(data["actions"]),
        tuple(data["observations"]),
        np.asarray(data["transitions"], dtype=float),
        np.asarray(data["observation_model"], dtype=float),
        np.asarray(data["rewards"], dtype=float),
        float(data.get("discount", 0.95)),
    )


@dataclass(frozen=True)
class PolicyTree:
    """Conditional plan: act, then branch on the received observation.

    `action` is an action index, or a tuple of (action, probability) pairs
    for a stochastic choice. Leaves (horizon 1) have children=None; internal
    nodes carry one child per observation.
    """

    action: int | tuple
    children: tuple | None = None

    @property
    def horizon(self) -> int:
        if self.children is None:
            return 1
        return 1 + max(child.horizon for child in self.children)

    def action_distribution(self) -> tuple:
        if isinstance(self.action, tuple):
            return self.action
        return ((self.action, 1.0),)


def _check_support(model: PomdpModel, b: DiscreteBelief):
    if b.support != model.states:
        raise ModelError("belief support does not match the model state space")


def belief_value(model: PomdpModel, b: DiscreteBelief, policy: PolicyTree | None) -> float:
    """Expected discounted reward of following the conditional plan from b."""
    if policy is None:
        return 0.0
    _check_support(model, b)
    return _policy_value(model, b.probs, policy)


def _policy_value(model: PomdpModel, probs: np.ndarray, node: PolicyTree) -> float:
    total = 0.0
    for u, pu in node.action_distribution():
        value = float(probs @ model.reward[:, u])
        if node.children is not None:
            predicted = probs @ model.trans[u]
            for y, child in enumerate(node.children):
                joint = predicted * model.obs[u][:, y]
                py = float(joint.sum())
                if py <= 0.0:
                    continue
                value += model.discount * py * _policy_value(model, joint / py, child)
        total += pu * value
    return total


class _Solver:
    """Exact expectimax over beliefs, memoized on (depth, rounded belief)."""

    def __init__(self, model: PomdpModel, node_budget: int):
        self.model = model
        self.budget = node_budget
        self.expanded = 0
        self.memo: dict = {}
        self._uniform: dict[int, PolicyTree] = {}

    def _filler(self, depth: int) -> PolicyTree:
        """Arbitrary valid subtree for unreachable observation branches."""
        tree = self._uniform.get(depth)
        if tree is None:
            if depth == 1:
                tree = PolicyTree(0)
            else:
                child = self._filler(depth - 1)
                tree = PolicyTree(0, tuple(child for _ in self.model.observations))
            self._uniform[depth] = tree
        return tree

    def solve(self, probs: np.ndarray, depth: int) -> tuple[float, PolicyTree | None]:
        if depth == 0:
            return 0.0, None
        key = (depth, tuple(np.round(probs, 12) + 0.0))
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.expanded += 1
        if self.expanded > self.budget:
            raise CapacityError(f"exceeded node budget of {self.budget}")
        model = self.model
        best_value = -np.inf
        best_action = 0
        best_children: tuple | None = None
        for u in range(len(model.actions)):
            value = float(probs @ model.reward[:, u])
            children = None
            if depth > 1:
                predicted = probs @ model.trans[u]
                kids = []
                for y in range(len(model.observations)):
                    joint = predicted * model.obs[u][:, y]
                    py = float(joint.sum())
                    if py <= 0.0:
                        kids.append(self._filler(depth - 1))
                        continue
                    v_y, tree_y = self.solve(joint / py, depth - 1)
                    value += model.discount * py * v_y
                    kids.append(tree_y)
                children = tuple(kids)
            if value > best_value:
                best_value = value
                best_action = u
                best_children = children
        result = (best_value, PolicyTree(best_action, best_children))
        self.memo[key] = result
        return result


def optimal_policy(
    model: PomdpModel,
    b0: DiscreteBelief,
    horizon: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> tuple[PolicyTree, float]:
    """Exact optimal conditional plan by full enumeration.

    Ties between equal-valued actions break to the lowest action index.
    Raises CapacityError when more than node_budget beliefs get expanded.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_support(model, b0)
    value, tree = _Solver(model, node_budget).solve(b0.probs, horizon)
    return tree, value


def q_value(
    model: PomdpModel,
    b: DiscreteBelief,
    u: int,
    horizon: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> float:
    """Value of taking u now and acting optimally for the remaining steps."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_support(model, b)
    value = float(b.probs @ model.reward[:, u])
    if horizon == 1:
        return value
    solver = _Solver(model, node_budget)
    predicted = b.probs @ model.trans[u]
    for y in range(len(model.observations)):
        joint = predicted * model.obs[u][:, y]
        py = float(joint.sum())
        if py <= 0.0:
            continue
        v_y, _ = solver.solve(joint / py, horizon - 1)
        value += model.discount * py * v_y
    return value


# --- Battleship toy instance -------------------------------------------------


def battleship_cells(cols: int = 3, rows: int = 2) -> tuple[str, ...]:
    """Cell names in reading order: A1, B1, C1, A2, ..."""
    return tuple(f"{chr(ord('A') + c)}{r + 1}" for r in range(rows) for c in range(cols))


def battleship_placements(cols: int = 3, rows: int = 2, ship_len: int = 2) -> tuple[tuple[str, ...], ...]:
    """All horizontal and vertical straight placements of the ship."""

    def name(c, r):
        return f"{chr(ord('A') + c)}{r + 1}"

    placements = []
    for r in range(rows):
        for c in range(cols - ship_len + 1):
            placements.append(tuple(name(c + i, r) for i in range(ship_len)))
    for c in range(cols):
        for r in range(rows - ship_len + 1):
            placements.append(tuple(name(c, r + i) for i in range(ship_len)))
    return tuple(placements)


def placement_label(cells: tuple[str, ...]) -> str:
    return "-".join(cells)


def battleship_model(
    cols: int = 3,
    rows: int = 2,
    ship_len: int = 2,
    hit_reward: float = 1.0,
    miss_reward: float = -0.1,
    discount: float = 0.95,
) -> PomdpModel:
    """One-sided Battleship as a finite POMDP.

    States are (ship placement, set of already-hit ship cells) pairs, labeled
    "A2-B2|B2". Actions shoot a cell; observations are "hit"/"miss" and are
    deterministic, so re-shooting a cell always repeats its prior result.
    A hit on a fresh ship cell earns hit_reward; everything else earns
    miss_reward (re-shooting a hit cell observes "hit" but pays the miss
    penalty, having destroyed nothing new).
    """
    cells = battleship_cells(cols, rows)
    placements = battleship_placements(cols, rows, ship_len)
    if not placements:
        raise ValueError("ship does not fit on the board")

    states = []
    state_parts = []
    for ship in placements:
        subsets = [()]
        for k in range(1, ship_len + 1):
            subsets.extend(combinations(ship, k))
        for hit_cells in subsets:
            states.append(f"{placement_label(ship)}|{'+'.join(hit_cells)}")
            state_parts.append((ship, frozenset(hit_cells)))
    index = {parts: i for i, parts in enumerate(state_parts)}

    ns, na, no = len(states), len(cells), 2
    trans = np.zeros((na, ns, ns))
    obs = np.zeros((na, ns, no))
    reward = np.zeros((ns, na))
    for u, cell in enumerate(cells):
        for s, (ship, hits) in enumerate(state_parts):
            if cell in ship:
                succ = index[(ship, hits | {cell})]
                obs[u, s, 0] = 1.0  # hit
                reward[s, u] = hit_reward if cell not in hits else miss_reward
            else:
                succ = s
                obs[u, s, 1] = 1.0  # miss
                reward[s, u] = miss_reward
            trans[u, s, succ] = 1.0

    return PomdpModel(tuple(states), cells, ("hit", "miss"), trans, obs, reward, discount)


def battleship_initial_belief(model: PomdpModel) -> DiscreteBelief:
    """Uniform over placements, no cells hit yet."""
    fresh = np.array([1.0 if s.endswith("|") else 0.0 for s in model.states])
    return DiscreteBelief(model.states, fresh / fresh.sum())


def battleship_filter(model: PomdpModel, b: DiscreteBelief,
                      shots: list[tuple[str, str]]) -> DiscreteBelief:
    """Chain exact filter steps through (cell, "hit"/"miss") shot records."""
    obs_model = model.observation_model()
    for cell, outcome in shots:
        u = model.actions.index(cell)
        y = model.observations.index(outcome)
        b = bayes_update(b, u, y, model.trans, obs_model)
    return b


def placement_marginal(model: PomdpModel, b: DiscreteBelief) -> dict[str, float]:
    """Posterior over ship placements, dropping zero-probability ones."""
    marginal: dict[str, float] = {}
    for label, p in zip(model.states, b.probs):
        if p > 0.0:
            placement = label.split("|", 1)[0]
            marginal[placement] = marginal.get(placement, 0.0) + float(p)
    return marginal
