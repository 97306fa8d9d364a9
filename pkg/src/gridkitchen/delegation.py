"""Belief maintenance over task allocations and action selection.

Each agent keeps a posterior over who-does-what.  Priors favor allocations
whose sub-tasks look quick to finish; observations of everyone's actions are
scored by softmax-of-Q likelihoods and folded in with Bayes rule.  The
posterior's argmax decides the agent's own sub-task, which it then pursues by
best response or, when it shares the task, by a joint plan.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from . import planner, recipes
from .planner import Plan, PlannerParams, PolicyFn, level0_policy, uniform_policy
from .recipes import SubTask, TaskAllocation, active_subtasks, allocation_space
from .world import ACTIONS, MOVES, STAY, WorldState

MODEL_KINDS = ("bd", "up", "fb", "dc", "greedy")
_UPDATING = ("bd", "up", "dc")
_MASS_FLOOR = 1e-9


@dataclass(frozen=True)
class AgentModel:
    kind: str = "bd"
    beta: float = 1.3

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")


class Observation(NamedTuple):
    state: WorldState
    actions: tuple[str, ...]


@dataclass(frozen=True)
class BeliefState:
    allocations: tuple[TaskAllocation, ...]
    masses: tuple[float, ...]
    active_names: tuple[str, ...]

    def mass_of(self, allocation: TaskAllocation) -> float:
        try:
            return self.masses[self.allocations.index(allocation)]
        except ValueError:
            return 0.0

    def rows(self) -> tuple[tuple[str, float], ...]:
        return tuple((a.signature, m) for a, m in zip(self.allocations, self.masses))


def select_allocation(belief: BeliefState) -> TaskAllocation:
    """Argmax allocation; exact ties go to the first in canonical order."""
    best = 0
    for i in range(1, len(belief.masses)):
        if belief.masses[i] > belief.masses[best]:
            best = i
    return belief.allocations[best]


class PlanStore:
    """Cache of plans keyed by task and transition model.

    Bound tables persist for the whole episode; only the query states change
    as the kitchen evolves, so revisited plans keep their learning.  A plan is
    a deterministic function of the episode seed and its own identity, never
    of who asked for it, so one store can safely serve every agent in an
    episode: each agent would compute bit-identical tables on its own.
    """

    def __init__(self, n_agents: int, params: PlannerParams, seed):
        self.n_agents = n_agents
        self.params = params
        self.seed = seed
        self._plans: dict = {}

    def _rng(self, key) -> random.Random:
        return random.Random(f"{self.seed}:{key!r}")

    def solo(self, mover: int, task: SubTask) -> Plan:
        key = ("solo", mover, task.name)
        plan = self._plans.get(key)
        if plan is None:
            plan = planner.solo_plan(task, mover, self.n_agents, self.params,
                                     self._rng(key))
            self._plans[key] = plan
        return plan

    def ego(self, me: int, task: SubTask, others_sig: tuple,
            policies: dict[int, PolicyFn]) -> Plan:
        key = ("ego", me, task.name, others_sig)
        plan = self._plans.get(key)
        if plan is None:
            plan = planner.best_response_plan(task, me, self.n_agents,
                                              policies, self.params, self._rng(key))
            self._plans[key] = plan
        return plan

    def joint(self, team: tuple[int, ...], task: SubTask, others_sig: tuple,
              policies: dict[int, PolicyFn]) -> Plan:
        key = ("joint", team, task.name, others_sig)
        plan = self._plans.get(key)
        if plan is None:
            plan = planner.joint_plan(task, team, self.n_agents, policies,
                                      self.params, self._rng(key))
            self._plans[key] = plan
        return plan


def _complement_signature(allocation: TaskAllocation, exclude: tuple[int, ...],
                          n_agents: int) -> tuple:
    return tuple((j, (allocation.task_of(j).name
                      if allocation.task_of(j) is not None else "None"))
                 for j in range(n_agents) if j not in exclude)


def _level0_policies(allocation: TaskAllocation, state: WorldState,
                     exclude: tuple[int, ...], n_agents: int,
                     store: PlanStore) -> dict[int, PolicyFn]:
    policies: dict[int, PolicyFn] = {}
    for j in range(n_agents):
        if j in exclude:
            continue
        task = allocation.task_of(j)
        if task is None:
            policies[j] = uniform_policy
        else:
            plan = store.solo(j, task)
            plan.train(state)
            policies[j] = level0_policy(plan)
    return policies


def init_prior(active: tuple[SubTask, ...], state: WorldState, kind: str,
               n_agents: int, self_id: int, store: PlanStore) -> BeliefState:
    """Prior mass per allocation: uniform for up, else the summed inverse of
    the estimated completion cost of each distinct sub-task it assigns.

    Cost estimates follow the allocation's own structure: a sub-task assigned
    to several agents is valued by the team's plan (its hand-off-aware upper
    bound before any training), a solo assignment by that agent's plan.  On
    divided maps this is what makes shared assignments win the argmax: solo
    estimates are all sentinel there, while a team estimate is finite.
    """
    space = allocation_space(active, n_agents, kind, self_id)
    names = tuple(t.name for t in sorted(active))
    if kind == "up":
        mass = 1.0 / len(space)
        return BeliefState(space, (mass,) * len(space), names)
    weights = []
    for allocation in space:
        total = 0.0
        groups: dict[SubTask, list[int]] = {}
        for agent, task in zip(allocation.agents, allocation.tasks):
            if task is not None:
                groups.setdefault(task, []).append(agent)
        for task, members in groups.items():
            if len(members) == 1:
                plan = store.solo(members[0], task)
                plan.train(state)
            else:
                team = tuple(sorted(members))
                policies = _level0_policies(allocation, state, team,
                                            n_agents, store)
                sig = _complement_signature(allocation, team, n_agents)
                plan = store.joint(team, task, sig, policies)
            total += 1.0 / max(plan.value_upper(state), _MASS_FLOOR)
        weights.append(total)
    grand = sum(weights)
    if grand <= 0.0:
        mass = 1.0 / len(space)
        return BeliefState(space, (mass,) * len(space), names)
    return BeliefState(space, tuple(w / grand for w in weights), names)


def _softmax_factor(costs, beta: float, observed_idx: int) -> float:
    lowest = min(costs)
    exps = [math.exp(-beta * (c - lowest)) for c in costs]
    return exps[observed_idx] / sum(exps)


def _action_distribution(plan: Plan, state: WorldState, beta: float) -> tuple[float, ...]:
    """Softmax over negated cost-to-go Q-values, normalized per agent."""
    costs = plan.action_costs(state)
    lowest = min(costs)
    exps = [math.exp(-beta * (c - lowest)) for c in costs]
    norm = sum(exps)
    return tuple(e / norm for e in exps)


def likelihood(obs: Observation, allocation: TaskAllocation, beta: float,
               store: PlanStore) -> float:
    """P(joint action | state, allocation): product of per-agent softmax
    factors over each agent's own 5 actions; agents assigned nothing act
    uniformly.

    An agent's Q-vector comes from the plan it would actually be running
    under this allocation.  For shared assignments that is the team's joint
    plan, marginalized per agent by giving teammates best-case components;
    scoring those agents against solo plans instead would make coordinated
    behavior (hand-offs, yielding) look irrational and bleed posterior mass
    to rival allocations while the team executes exactly as believed.
    """
    n_agents = len(obs.actions)
    factor = 1.0
    groups: dict[SubTask, list[int]] = {}
    for agent, task in zip(allocation.agents, allocation.tasks):
        if task is None:
            factor *= 1.0 / len(ACTIONS)
        else:
            groups.setdefault(task, []).append(agent)
    for task, members in groups.items():
        if len(members) == 1:
            agent = members[0]
            plan = store.solo(agent, task)
            dist = _action_distribution(plan, obs.state, beta)
            factor *= dist[ACTIONS.index(obs.actions[agent])]
            continue
        team = tuple(sorted(members))
        sig = _complement_signature(allocation, team, n_agents)
        policies = _level0_policies(allocation, obs.state, team, n_agents,
                                    store)
        plan = store.joint(team, task, sig, policies)
        joint_costs = plan.action_costs(obs.state)
        joint_actions = plan.transition.actions
        for k, agent in enumerate(team):
            marginal = {}
            for ja, c in zip(joint_actions, joint_costs):
                prev = marginal.get(ja[k])
                if prev is None or c < prev:
                    marginal[ja[k]] = c
            costs = [marginal[a] for a in ACTIONS]
            factor *= _softmax_factor(costs, beta,
                                      ACTIONS.index(obs.actions[agent]))
    return factor


def update_posterior(belief: BeliefState, obs: Observation, beta: float,
                     store: PlanStore) -> Optional[BeliefState]:
    """One Bayes step; None when every allocation has zero posterior mass."""
    updated = [m * likelihood(obs, a, beta, store) if m > 0.0 else 0.0
               for a, m in zip(belief.allocations, belief.masses)]
    total = sum(updated)
    if total <= 0.0:
        return None
    return BeliefState(belief.allocations, tuple(m / total for m in updated),
                       belief.active_names)


class DelegationAgent:
    """One decentralized agent: infers the team allocation, then acts on it."""

    def __init__(self, agent_id: int, model: AgentModel, n_agents: int,
                 tasks: tuple[SubTask, ...], params: PlannerParams, seed,
                 store: Optional[PlanStore] = None):
        self.id = agent_id
        self.model = model
        self.n_agents = n_agents
        self.tasks = tasks
        self.params = params
        self.store = store if store is not None else PlanStore(n_agents, params, seed)
        self.rng = random.Random(f"{seed}:{agent_id}:act")
        self.belief: Optional[BeliefState] = None
        self._intent: Optional[tuple[tuple[int, int], str, int]] = None

    def begin_step(self, state: WorldState, last_obs: Optional[Observation]) -> None:
        """Refresh beliefs: reinitialize when the active sub-task set changed,
        otherwise fold in the last observed joint action."""
        active = active_subtasks(self.tasks, state)
        names = tuple(t.name for t in sorted(active))
        if self.belief is None or names != self.belief.active_names:
            self.belief = init_prior(active, state, self.model.kind,
                                     self.n_agents, self.id, self.store)
            return
        if self.model.kind in _UPDATING and last_obs is not None:
            updated = update_posterior(self.belief, last_obs, self.model.beta,
                                       self.store)
            if updated is None:
                updated = init_prior(active, state, self.model.kind,
                                     self.n_agents, self.id, self.store)
            self.belief = updated

    def _policies_for(self, allocation: TaskAllocation, state: WorldState,
                      exclude: tuple[int, ...]) -> dict[int, PolicyFn]:
        """Level-0 models of everyone outside ``exclude``; the greedy baseline
        instead freezes them in place."""
        if self.model.kind == "greedy":
            return {j: (lambda _state: ((STAY, 1.0),))
                    for j in range(self.n_agents) if j not in exclude}
        return _level0_policies(allocation, state, exclude, self.n_agents,
                                self.store)

    def _others_signature(self, allocation: TaskAllocation,
                          exclude: tuple[int, ...]) -> tuple:
        if self.model.kind == "greedy":
            return ("frozen",)
        return _complement_signature(allocation, exclude, self.n_agents)

    def next_action(self, state: WorldState) -> str:
        action = self._model_action(state)
        self._intent = (state.agents[self.id].pos, action, state.clock)
        return action

    def _move_was_blocked(self, state: WorldState) -> bool:
        """True when last tick's move into open floor left us in place.

        Walls and counters never look like floor, so the only thing that can
        swallow such a move is another agent.  Two agents claiming the same
        cell re-create the exact state they just planned from and would claim
        it again forever; the caller breaks that symmetry with a coin flip.
        """
        if self._intent is None:
            return False
        pos, action, tick = self._intent
        if tick != state.clock - 1 or action == STAY:
            return False
        if state.agents[self.id].pos != pos:
            return False
        dx, dy = MOVES[action]
        return (pos[0] + dx, pos[1] + dy) in state.kitchen.floor

    def _model_action(self, state: WorldState) -> str:
        if self._move_was_blocked(state) and self.rng.random() < 0.5:
            return self.rng.choice(ACTIONS)
        allocation = select_allocation(self.belief)
        task = allocation.task_of(self.id)
        if task is None:
            return self.rng.choice(ACTIONS)
        teammates = allocation.teammates(self.id)
        if teammates:
            team = tuple(sorted((self.id,) + teammates))
            exclude = team
            policies = self._policies_for(allocation, state, exclude)
            sig = self._others_signature(allocation, exclude)
            plan = self.store.joint(team, task, sig, policies)
            plan.train(state)
            if plan.value_upper(state) >= self.params.sentinel:
                return self.rng.choice(ACTIONS)
            # Teammates must break joint-action ties identically or the
            # team executes mismatched halves of different optima; derive
            # the tie rng from the plan's identity and the clock so every
            # member draws the same sample.
            tie_rng = random.Random(
                f"{self.store.seed}:jtie:{task.name}:{team}:{state.clock}")
            joint_action = plan.policy(state, tie_rng)
            return joint_action[team.index(self.id)]
        if self.model.kind == "greedy":
            # Greedy's world model freezes everyone else, which is exactly
            # the solo transition; share those bound tables.
            plan = self.store.solo(self.id, task)
        else:
            exclude = (self.id,)
            policies = self._policies_for(allocation, state, exclude)
            sig = self._others_signature(allocation, exclude)
            plan = self.store.ego(self.id, task, sig, policies)
        plan.train(state)
        if plan.value_upper(state) >= self.params.sentinel:
            # The model says the task cannot be finished from here (the
            # operand rides in someone else's hands, or a wall or body cuts
            # off the route).  There is no informed gradient to follow, so
            # behave like the unassigned case.  The random walk doubles as
            # the escape hatch when two agents hold each other's operands,
            # since a wanderer that bumps a counter puts its load down.
            return self.rng.choice(ACTIONS)
        return plan.policy(state, self.rng)
