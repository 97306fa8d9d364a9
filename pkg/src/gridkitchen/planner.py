"""Bounded real-time dynamic programming for kitchen sub-tasks.

Plans solve a stochastic shortest path problem: reach any state satisfying a
sub-task's postconditions at minimum cost, where every tick costs 1 and any
non-Stay action costs an extra 0.1.  Value bounds are kept per state; the
lower bound starts from straight-line distances between a sub-task's operands
and the upper bound from a constructive walking estimate around barriers.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

from . import recipes
from .recipes import SubTask
from .world import ACTIONS, STAY, WorldState, step


@dataclass(frozen=True)
class PlannerParams:
    alpha: float = 0.01
    tau: float = 2.0
    max_trajectories: int = 100
    max_rollout_depth: int = 75
    step_cost: float = 1.0
    move_cost: float = 0.1
    max_steps: int = 100

    @property
    def sentinel(self) -> float:
        """Stand-in cost for unreachable configurations."""
        return self.max_steps * (self.step_cost + self.move_cost)


def manhattan(a: tuple[int, int], b: tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def operand_positions(state: WorldState, operand) -> tuple[tuple[int, int], ...]:
    """Grid cells where an operand currently lives.

    Station operands map to their tile cells.  Item operands match exactly;
    an item held by an agent counts at the holder's cell.
    """
    if operand == recipes.KNIFE_OPERAND:
        return state.kitchen.knives
    if operand == recipes.DELIVERY_OPERAND:
        return state.kitchen.deliveries
    positions = [pos for pos, item in state.board if item is operand]
    positions.extend(a.pos for a in state.agents if a.holding is operand)
    return tuple(positions)


def _instances(state: WorldState, operand):
    """(cell, holder) pairs for an operand: holder is the carrying agent's
    index, or None when the operand rests on the board or is a station."""
    if operand == recipes.KNIFE_OPERAND:
        return tuple((p, None) for p in state.kitchen.knives)
    if operand == recipes.DELIVERY_OPERAND:
        return tuple((p, None) for p in state.kitchen.deliveries)
    found = [(pos, None) for pos, item in state.board if item is operand]
    found.extend((a.pos, i) for i, a in enumerate(state.agents)
                 if a.holding is operand)
    return tuple(found)


def lower_bound(state: WorldState, task: SubTask, params: PlannerParams,
                carriers: int = 1, mover: Optional[int] = None) -> float:
    """Admissible remaining-cost estimate in ticks.

    Ignores barriers but charges every unavoidable phase: an agent must walk
    adjacent to an operand before it can move, a carried item travels at most
    one cell per tick, and the pickup and the final merge each take a tick of
    their own.  With two carriers both operands can close on each other, so
    that leg only needs half the separation.  ``mover`` restricts who may
    fetch (the solo transition moves one agent); otherwise anyone may.  Every
    counted tick contains a non-Stay action by construction, so the move
    surcharge applies to all of them.
    """
    if recipes.achieved_exactly(task, state):
        return 0.0
    xs = _instances(state, task.x)
    ys = _instances(state, task.y)
    if not xs or not ys:
        return params.sentinel
    agents = state.agents
    if mover is None:
        reachers = tuple(range(len(agents)))
    else:
        reachers = (mover,)

    def fetch(cell, holder):
        # Ticks of walking before the operand can first move.
        if holder is not None:
            if mover is not None and holder != mover:
                return None
            return 0
        best = min(manhattan(agents[i].pos, cell) for i in reachers)
        return best - 1 if best > 1 else 0

    def carry(dist, held):
        # Pickup, travel, and merge; a resting item needs at least the
        # pickup tick and the merge tick even when already next to the goal.
        if held:
            return max(dist, 1)
        return max(dist, 2)

    station = isinstance(task.y, str)
    best = params.sentinel
    for cx, hx in xs:
        for cy, hy in ys:
            d0 = manhattan(cx, cy)
            options = []
            fx = fetch(cx, hx)
            if fx is not None:
                options.append(fx + carry(d0, hx is not None))
            if not station:
                fy = fetch(cy, hy)
                if fy is not None:
                    options.append(fy + carry(d0, hy is not None))
                if carriers > 1 and len(agents) > 1:
                    half = (d0 + 1) // 2
                    for i in range(len(agents)):
                        for j in range(len(agents)):
                            if i == j:
                                continue
                            ri = 0 if hx is not None else manhattan(agents[i].pos, cx)
                            rj = 0 if hy is not None else manhattan(agents[j].pos, cy)
                            options.append(max(ri, rj, half))
            if options:
                pair = min(options)
                if pair < best:
                    best = pair
    return min(best * (params.step_cost + params.move_cost), params.sentinel)


def _floor_distances(state: WorldState, sources: tuple[tuple[int, int], ...],
                     skip_agents: tuple[int, ...] = ()) -> dict:
    """BFS over floor cells, treating other agents' cells as blocked.

    Results are memoized on the kitchen keyed by (sources, blocked cells);
    distinct states frequently share the same geometry.
    """
    kitchen = state.kitchen
    blocked = frozenset(a.pos for i, a in enumerate(state.agents)
                        if i not in skip_agents)
    key = (sources, blocked)
    hit = kitchen.dist_cache.get(key)
    if hit is not None:
        return hit
    dist = {}
    frontier = []
    for pos in sources:
        if pos in kitchen.floor and pos not in blocked:
            dist[pos] = 0
            frontier.append(pos)
    while frontier:
        nxt = []
        for pos in frontier:
            d = dist[pos]
            for nb in kitchen.neighbors[pos]:
                if nb not in dist and nb not in blocked:
                    dist[nb] = d + 1
                    nxt.append(nb)
        frontier = nxt
    kitchen.dist_cache[key] = dist
    return dist


def _rest_cells(state: WorldState, operand) -> tuple:
    kitchen = state.kitchen
    if operand == recipes.KNIFE_OPERAND:
        return kitchen.knives
    if operand == recipes.DELIVERY_OPERAND:
        return kitchen.deliveries
    return tuple(pos for pos, item in state.board if item is operand)


def _held_by(state: WorldState, operand) -> Optional[int]:
    if isinstance(operand, str):
        return None
    for i, agent in enumerate(state.agents):
        if agent.holding is operand:
            return i
    return None


def upper_bound(state: WorldState, task: SubTask, actor: int,
                params: PlannerParams) -> float:
    """Cost of a single-agent fetch-and-carry plan around barriers, with other
    agents as obstacles; sentinel when no such plan exists."""
    if recipes.achieved_exactly(task, state):
        return 0.0
    kitchen = state.kitchen
    me = state.agents[actor]
    per_step = params.step_cost + params.move_cost

    def rest_cells(operand):
        return _rest_cells(state, operand)

    def held_by(operand):
        return _held_by(state, operand)

    from_me = _floor_distances(state, (me.pos,), skip_agents=(actor,))
    penalty = 0
    for first, second in ((task.x, task.y), (task.y, task.x)):
        if isinstance(first, str):
            continue
        holder = held_by(first)
        other_holder = held_by(second)
        if other_holder is not None and other_holder != actor:
            continue
        if holder is not None and holder != actor:
            continue
        targets = rest_cells(second)
        blocked = ()
        if second == recipes.KNIFE_OPERAND:
            # A loaded knife station rejects the deposit, so only clear
            # stations count as direct targets; the loaded ones are priced
            # below with the shuffle that empties them first.
            blocked = tuple(k for k in targets if state.item_at(k) is not None)
            targets = tuple(k for k in targets if state.item_at(k) is None)
        steps = None
        if targets:
            adj_second = tuple(p for cell in targets
                               for p in kitchen.floor_adjacent(cell))
            if holder == actor:
                carry = min((from_me.get(p, None) for p in adj_second
                             if from_me.get(p) is not None), default=None)
                if carry is not None:
                    steps = carry + 1
            else:
                starts = rest_cells(first)
                if starts:
                    adj_first = tuple(p for cell in starts
                                      for p in kitchen.floor_adjacent(cell))
                    # Fetch and carry must chain through the same pickup
                    # cell, or the walk silently jumps a barrier the agent
                    # cannot cross.
                    to_target = _floor_distances(state, adj_second,
                                                 skip_agents=(actor,))
                    legs = min((from_me[p] + to_target[p] for p in adj_first
                                if p in from_me and p in to_target),
                               default=None)
                    if legs is not None:
                        extra = 0
                        if me.holding is not None:
                            # Shed the wrong item first: out to the nearest
                            # empty plain counter, drop, and walk back before
                            # running the unburdened fetch.
                            d_shed = min(
                                (from_me[p]
                                 for c in _plain_counters(kitchen)
                                 if state.item_at(c) is None
                                 for p in kitchen.floor_adjacent(c)
                                 if p in from_me), default=None)
                            if d_shed is None:
                                continue
                            extra = 2 * d_shed + 1
                        steps = legs + 2 + extra
        if blocked:
            cleared = _clearing_steps(state, task, actor, holder, blocked,
                                      from_me)
            if cleared is not None and (steps is None or cleared < steps):
                steps = cleared
        if steps is None:
            continue
        cost = steps * per_step
        if penalty == 0 or cost < penalty:
            penalty = cost
    if penalty <= 0:
        return params.sentinel
    return min(penalty, params.sentinel)


def _clearing_steps(state: WorldState, task: SubTask, actor: int,
                    holder: Optional[int], blocked: tuple,
                    from_me: dict) -> Optional[float]:
    """Ticks to empty a loaded knife station and then chop there.

    Constructive schedule: park whatever the actor carries on the nearest
    empty plain counter, move the blocking item to another one, fetch the
    operand and walk it back in.  Legs are priced through the station's
    access cell, so the sum overestimates the true walk and stays a sound
    upper bound while leaving the bound gap open for trials to close.
    """
    kitchen = state.kitchen
    best = None
    if holder is None:
        starts = _rest_cells(state, task.x)
        if not starts:
            return None
        adj_first = tuple(p for cell in starts
                          for p in kitchen.floor_adjacent(cell))
    for kcell in blocked:
        for hub in kitchen.floor_adjacent(kcell):
            d_hub = from_me.get(hub)
            if d_hub is None:
                continue
            field = _floor_distances(state, (hub,), skip_agents=(actor,))
            parks = sorted(
                d for d in (
                    min((field[p] for p in kitchen.floor_adjacent(c)
                         if p in field), default=None)
                    for c in _plain_counters(kitchen)
                    if state.item_at(c) is None)
                if d is not None)
            if not parks:
                continue
            if holder == actor:
                # Own item to the nearest counter (visited three times),
                # blocker to the second nearest.
                if len(parks) < 2:
                    continue
                steps = d_hub + 4 * parks[0] + 2 * parks[1] + 5
            else:
                d_op = min((field[p] for p in adj_first if p in field),
                           default=None)
                if d_op is None:
                    continue
                if state.agents[actor].holding is not None:
                    if len(parks) < 2:
                        continue
                    steps = d_hub + 2 * parks[0] + 2 * parks[1] + 2 * d_op + 5
                else:
                    steps = d_hub + 2 * parks[0] + 2 * d_op + 4
            if best is None or steps < best:
                best = steps
    return best


def _plain_counters(kitchen) -> tuple:
    cached = kitchen.scratch.get("plain_counters")
    if cached is None:
        stations = set(kitchen.knives) | set(kitchen.deliveries)
        cached = tuple(pos for pos in kitchen._tile_at
                       if pos not in kitchen.floor and pos not in stations)
        kitchen.scratch["plain_counters"] = cached
    return cached


def team_upper_bound(state: WorldState, task: SubTask, team: tuple[int, ...],
                     params: PlannerParams) -> float:
    """Cheapest constructive completion available to a team.

    Either some member finishes alone, or one member ferries the moving
    operand to a plain counter and another carries it onward from the far
    side.  The hand-off schedule is priced sequentially (one mover per tick)
    with everyone outside the walking pair treated as static obstacles, so
    the result is a cost some real execution achieves.  Sentinel when even a
    relay cannot bridge the operands.
    """
    best = min(upper_bound(state, task, actor, params) for actor in team)
    if len(team) < 2:
        return best
    if best == 0.0:
        return best
    kitchen = state.kitchen
    per_step = params.step_cost + params.move_cost
    counters = _plain_counters(kitchen)
    adj_floor = kitchen.adj_floor

    for first, second in ((task.x, task.y), (task.y, task.x)):
        if isinstance(first, str):
            continue
        holder = _held_by(state, first)
        other_holder = _held_by(state, second)
        adj_first = None
        if holder is None:
            starts = _rest_cells(state, first)
            if not starts:
                continue
            adj_first = tuple(p for cell in starts for p in adj_floor[cell])
        adj_second = None
        if other_holder is None:
            targets = _rest_cells(state, second)
            if second == recipes.KNIFE_OPERAND:
                # The relay leg cannot deposit on a loaded knife; when no
                # station is clear the solo bounds (which price the shuffle
                # that empties one) already cover the task.
                targets = tuple(k for k in targets
                                if state.item_at(k) is None)
            if not targets:
                continue
            adj_second = tuple(p for cell in targets for p in adj_floor[cell])
        for a in team:
            if holder is not None and holder != a:
                continue
            from_a = _floor_distances(state, (state.agents[a].pos,),
                                      skip_agents=(a,))
            if holder == a:
                reach_a = from_a
                inter_a = 1  # put the carried operand down at the relay cell
            else:
                # chain fetch and carry through one pickup cell, as in
                # upper_bound, but toward every floor cell at once
                fields = []
                for p in adj_first:
                    d0 = from_a.get(p)
                    if d0 is None:
                        continue
                    leg = _floor_distances(state, (p,), skip_agents=(a,))
                    fields.append((d0, leg))
                if not fields:
                    continue
                reach_a = {}
                for d0, leg in fields:
                    for cell, d in leg.items():
                        prev = reach_a.get(cell)
                        if prev is None or d0 + d < prev:
                            reach_a[cell] = d0 + d
                inter_a = 2 + (2 if state.agents[a].holding is not None else 0)
            for b in team:
                if b == a:
                    continue
                if other_holder is not None and other_holder != b:
                    continue
                from_b = _floor_distances(state, (state.agents[b].pos,),
                                          skip_agents=(b,))
                if other_holder == b:
                    val_b = from_b
                    inter_b = 1  # merge what b already holds at the relay
                else:
                    to_target = _floor_distances(state, adj_second,
                                                 skip_agents=(b,))
                    val_b = {cell: d + to_target[cell]
                             for cell, d in from_b.items() if cell in to_target}
                    inter_b = 2 + (2 if state.agents[b].holding is not None
                                   else 0)
                for c in counters:
                    legs_a = min((reach_a[p] for p in adj_floor[c]
                                  if p in reach_a), default=None)
                    if legs_a is None:
                        continue
                    legs_b = min((val_b[p] for p in adj_floor[c]
                                  if p in val_b), default=None)
                    if legs_b is None:
                        continue
                    cost = (legs_a + legs_b + inter_a + inter_b) * per_step
                    if cost < best:
                        best = cost
    return min(best, params.sentinel)


# --- transition models -------------------------------------------------------

PolicyFn = Callable[[WorldState], tuple[tuple[str, float], ...]]


def uniform_policy(state: WorldState) -> tuple[tuple[str, float], ...]:
    p = 1.0 / len(ACTIONS)
    return tuple((a, p) for a in ACTIONS)


def level0_policy(plan: Optional["Plan"]) -> PolicyFn:
    """Deterministic greedy pursuit of a plan's sub-task; uniform when idle.

    States the plan's own model scores as unreachable also predict uniform:
    an agent whose task is cut off has no gradient to follow and wanders,
    and modeling it as anything sharper would be false confidence.
    """
    if plan is None:
        return uniform_policy

    def policy(state: WorldState) -> tuple[tuple[str, float], ...]:
        if plan.at_goal(state):
            return ((STAY, 1.0),)
        if plan.value_upper(state) >= plan.params.sentinel:
            return uniform_policy(state)
        return ((plan.policy(state), 1.0),)

    return policy


class Transition:
    """Shared plumbing: per-action costs plus a per-state row cache.

    Subclasses fill ``actions`` and ``costs`` and implement ``_build`` which
    returns one successor tuple per action.  ``expand`` computes all rows for
    a state at once so backups touch a single cache entry, and a tick where
    nobody moves reuses the state itself (bounds ignore the clock).
    """

    actions: tuple = ()
    costs: tuple = ()

    def __init__(self, params: PlannerParams):
        self.params = params
        self._rows: dict = {}
        self._index: dict = {}

    def _finish_init(self):
        self._index = {a: i for i, a in enumerate(self.actions)}

    def cost(self, action) -> float:
        return self.costs[self._index[action]]

    def expand(self, state: WorldState):
        rows = self._rows.get(state)
        if rows is None:
            rows = self._build(state)
            self._rows[state] = rows
        return rows

    def successors(self, state: WorldState, action):
        return self.expand(state)[self._index[action]]

    def _combos(self, state: WorldState, others, policies):
        supports = [policies[j](state) for j in others]
        combos = []
        for picks in product(*supports):
            prob = 1.0
            for _, p in picks:
                prob *= p
            combos.append((tuple(a for a, _ in picks), prob))
        return combos


class FrozenOthers(Transition):
    """Single mover; everyone else holds still."""

    def __init__(self, mover: int, n_agents: int, params: PlannerParams):
        super().__init__(params)
        self.mover = mover
        self.n_agents = n_agents
        self.actions = ACTIONS
        self.costs = tuple(params.step_cost + (params.move_cost if a != STAY else 0.0)
                           for a in ACTIONS)
        self._finish_init()

    def _build(self, state: WorldState):
        rows = []
        for action in self.actions:
            if action == STAY:
                rows.append(((state, 1.0),))
                continue
            joint = [STAY] * self.n_agents
            joint[self.mover] = action
            rows.append(((step(state, tuple(joint)), 1.0),))
        return tuple(rows)


class MarginalTransition(Transition):
    """Ego dynamics with other agents integrated out via their policies."""

    def __init__(self, me: int, n_agents: int, policies: dict[int, PolicyFn],
                 params: PlannerParams):
        super().__init__(params)
        self.me = me
        self.n_agents = n_agents
        self.policies = policies
        self.actions = ACTIONS
        self.costs = tuple(params.step_cost + (params.move_cost if a != STAY else 0.0)
                           for a in ACTIONS)
        self.others = tuple(sorted(policies))
        self._finish_init()

    def _build(self, state: WorldState):
        combos = self._combos(state, self.others, self.policies)
        rows = []
        for action in self.actions:
            outcomes: dict[WorldState, float] = {}
            for other_actions, prob in combos:
                if action == STAY and all(a == STAY for a in other_actions):
                    nxt = state
                else:
                    joint = [STAY] * self.n_agents
                    joint[self.me] = action
                    for j, a in zip(self.others, other_actions):
                        joint[j] = a
                    nxt = step(state, tuple(joint))
                outcomes[nxt] = outcomes.get(nxt, 0.0) + prob
            rows.append(tuple(outcomes.items()))
        return tuple(rows)


class JointTransition(Transition):
    """Fictitious centralized control of a team sharing one sub-task."""

    def __init__(self, team: tuple[int, ...], n_agents: int,
                 policies: dict[int, PolicyFn], params: PlannerParams):
        super().__init__(params)
        self.team = tuple(sorted(team))
        self.n_agents = n_agents
        self.policies = policies
        self.actions = tuple(product(ACTIONS, repeat=len(self.team)))
        self.costs = tuple(
            params.step_cost + params.move_cost * sum(1 for a in action if a != STAY)
            for action in self.actions)
        self.others = tuple(sorted(policies))
        self._finish_init()

    def _build(self, state: WorldState):
        combos = self._combos(state, self.others, self.policies)
        rows = []
        for action in self.actions:
            team_stay = all(a == STAY for a in action)
            outcomes: dict[WorldState, float] = {}
            for other_actions, prob in combos:
                if team_stay and all(a == STAY for a in other_actions):
                    nxt = state
                else:
                    joint = [STAY] * self.n_agents
                    for member, a in zip(self.team, action):
                        joint[member] = a
                    for j, a in zip(self.others, other_actions):
                        joint[j] = a
                    nxt = step(state, tuple(joint))
                outcomes[nxt] = outcomes.get(nxt, 0.0) + prob
            rows.append(tuple(outcomes.items()))
        return tuple(rows)


def marginalize(me: int, n_agents: int, policies: dict[int, PolicyFn],
                params: PlannerParams) -> MarginalTransition:
    """Collapse other agents' policies into single-agent dynamics."""
    return MarginalTransition(me, n_agents, policies, params)


# --- plans -------------------------------------------------------------------

class Plan:
    """Value bounds plus greedy policy for one sub-task under one transition.

    Bounds persist across train() calls, so revisiting a plan later in the
    episode only refines what earlier trials already learned.  Q-values read
    through the lower bound and fall back to its heuristic when a state was
    never visited.
    """

    def __init__(self, task: SubTask, transition, params: PlannerParams,
                 upper_actors: tuple[int, ...], carriers: int,
                 rng: random.Random, skip_unreachable: bool = False,
                 mover: Optional[int] = None):
        self.task = task
        self.transition = transition
        self.params = params
        self.upper_actors = upper_actors
        self.carriers = carriers
        self.mover = mover
        self.rng = rng
        self.skip_unreachable = skip_unreachable
        self.vl: dict[WorldState, float] = {}
        self.vu: dict[WorldState, float] = {}
        self._stay = transition.actions[-1]
        self.trials_run = 0
        # Goal tests and heuristic evaluations depend only on (task, state),
        # not on the transition model, so plans share them through the
        # kitchen's scratch space; bound lazily since the kitchen is only
        # known once a state shows up.
        self._goal_cache: Optional[dict] = None
        self._hl_cache: Optional[dict] = None
        self._hu_cache: Optional[dict] = None

    def _bind(self, kitchen) -> None:
        scratch = kitchen.scratch
        self._goal_cache = scratch.setdefault(("goal", self.task), {})
        self._hl_cache = scratch.setdefault(
            ("hl", self.task, self.carriers, self.mover, self.params), {})
        self._hu_cache = scratch.setdefault(
            ("hu", self.task, self.upper_actors, self.params), {})

    def at_goal(self, state: WorldState) -> bool:
        cache = self._goal_cache
        if cache is None:
            self._bind(state.kitchen)
            cache = self._goal_cache
        hit = cache.get(state)
        if hit is None:
            hit = recipes.achieved_exactly(self.task, state)
            cache[state] = hit
        return hit

    def _h_lower(self, state: WorldState) -> float:
        cache = self._hl_cache
        v = cache.get(state)
        if v is None:
            v = lower_bound(state, self.task, self.params, self.carriers,
                            self.mover)
            cache[state] = v
        return v

    def _h_upper(self, state: WorldState) -> float:
        cache = self._hu_cache
        v = cache.get(state)
        if v is None:
            actors = self.upper_actors
            if len(actors) == 1:
                v = upper_bound(state, self.task, actors[0], self.params)
            else:
                v = team_upper_bound(state, self.task, actors, self.params)
            cache[state] = v
        return v

    def _bounds(self, state: WorldState) -> tuple[float, float]:
        """Current (lower, upper) value with lazy heuristic initialization.

        Goal states are pinned at zero, so successor loops never need a
        separate goal check.
        """
        lo = self.vl.get(state)
        if lo is not None:
            return lo, self.vu[state]
        if self.at_goal(state):
            self.vl[state] = self.vu[state] = 0.0
            return 0.0, 0.0
        lo = self._h_lower(state)
        hi = self._h_upper(state)
        self.vl[state] = lo
        self.vu[state] = hi
        return lo, hi

    def value_lower(self, state: WorldState) -> float:
        return self._bounds(state)[0]

    def value_upper(self, state: WorldState) -> float:
        return self._bounds(state)[1]

    def q_lower(self, state: WorldState, action) -> float:
        total = self.transition.cost(action)
        for nxt, p in self.transition.successors(state, action):
            total += p * self._bounds(nxt)[0]
        return total

    def q_upper(self, state: WorldState, action) -> float:
        total = self.transition.cost(action)
        for nxt, p in self.transition.successors(state, action):
            total += p * self._bounds(nxt)[1]
        return total

    def action_costs(self, state: WorldState) -> tuple[float, ...]:
        transition = self.transition
        bounds = self._bounds
        out = []
        for cost, succ in zip(transition.costs, transition.expand(state)):
            total = cost
            for nxt, p in succ:
                total += p * bounds(nxt)[0]
            out.append(total)
        return tuple(out)

    def policy(self, state: WorldState, rng: Optional[random.Random] = None):
        """Greedy action under the upper bound.

        Trials explore on the optimistic bound, but acting is pessimistic:
        the realized cost then stays within the trained upper bound, and
        unexplored regions (whose lower bound is loose) cannot lure the
        executed policy off the routes the plan has actually verified.

        Bounds are only trained to within alpha, so actions whose Q-values
        sit inside one alpha of the best are indistinguishable to the plan.
        Near-ties that would touch the board are dropped first when a pure
        move or wait ties with them: grabbing or dropping items while
        indifferent is churn that can flip other sub-tasks' preconditions
        and reset teammates' beliefs.  With an rng the remaining ties are
        resolved uniformly (this is where seeds diverge from one another);
        without one the first action in canonical order wins.

        When even the best upper value is the unreachable sentinel (the
        frozen-world model says the task cannot be finished from here, e.g.
        the operand sits in another agent's hand or a body blocks the only
        approach cell) the pessimistic bound is flat and greedy-on-upper
        would stand still forever.  Fall back to the optimistic bound then:
        it keeps a gradient toward the goal, and in the live world the
        blockage is usually transient.
        """
        if self.at_goal(state):
            return self._stay
        transition = self.transition
        bounds = self._bounds
        sentinel = self.params.sentinel
        tol = self.params.alpha
        qs = []
        q_los = []
        best_q = None
        best_lo_q = None
        for cost, succ in zip(transition.costs, transition.expand(state)):
            q = cost
            q_lo = cost
            for nxt, p in succ:
                lo, hi = bounds(nxt)
                q += p * hi
                q_lo += p * lo
            qs.append(q)
            q_los.append(q_lo)
            if best_q is None or q < best_q:
                best_q = q
            if best_lo_q is None or q_lo < best_lo_q:
                best_lo_q = q_lo
        if best_q >= sentinel:
            values, cutoff = q_los, best_lo_q + tol
        else:
            values, cutoff = qs, best_q + tol
        ties = [a for a, q in zip(transition.actions, values) if q <= cutoff]
        if len(ties) > 1:
            quiet = [a for a in ties if self._is_quiet(state, a)]
            if quiet:
                ties = quiet
        if rng is None or len(ties) == 1:
            return ties[0]
        return ties[rng.randrange(len(ties))]

    def _is_quiet(self, state: WorldState, action) -> bool:
        """True when the action never changes the board or anyone's hands."""
        for nxt, _ in self.transition.successors(state, action):
            if nxt.board != state.board:
                return False
            for before, after in zip(state.agents, nxt.agents):
                if before.holding is not after.holding:
                    return False
        return True

    def _backup(self, state: WorldState):
        """One Bellman backup on both bounds; returns the greedy-lower action.

        A single pass per action accumulates both expectations, and leaves
        every successor's bounds initialized as a side effect.
        """
        transition = self.transition
        vl = self.vl
        vu = self.vu
        bounds = self._bounds
        best_a = None
        best_l = None
        best_u = None
        for a, cost, succ in zip(transition.actions, transition.costs,
                                 transition.expand(state)):
            lo = cost
            hi = cost
            for nxt, p in succ:
                nl = vl.get(nxt)
                if nl is None:
                    nl, nu = bounds(nxt)
                else:
                    nu = vu[nxt]
                lo += p * nl
                hi += p * nu
            if best_u is None or hi < best_u:
                best_u = hi
            if best_l is None or lo < best_l - 1e-12:
                best_a, best_l = a, lo
        sentinel = self.params.sentinel
        if best_u > sentinel:
            best_u = sentinel
        vu[state] = best_u
        vl[state] = best_l if best_l < best_u else best_u
        return best_a

    def gap(self, state: WorldState) -> float:
        lo, hi = self._bounds(state)
        return hi - lo

    def _trial(self, start: WorldState) -> None:
        params = self.params
        vl = self.vl
        vu = self.vu
        rng_random = self.rng.random
        threshold_div = params.tau
        path = []
        state = start
        for _ in range(params.max_rollout_depth):
            if self.at_goal(state):
                break
            path.append(state)
            action = self._backup(state)
            succ = self.transition.successors(state, action)
            weights = []
            total = 0.0
            for nxt, p in succ:
                w = p * (vu[nxt] - vl[nxt])
                weights.append(w)
                total += w
            if total <= 1e-12 or total <= (vu[start] - vl[start]) / threshold_div:
                break
            pick = rng_random() * total
            acc = 0.0
            state = succ[-1][0]
            for (nxt, _), w in zip(succ, weights):
                acc += w
                if pick <= acc:
                    state = nxt
                    break
        for visited in reversed(path):
            self._backup(visited)

    def train(self, start: WorldState) -> None:
        """Run sampled trials from ``start`` until the bound gap closes to
        alpha or the trajectory budget is spent."""
        if self.at_goal(start):
            return
        if self.skip_unreachable and self.value_upper(start) >= self.params.sentinel:
            return
        alpha = self.params.alpha
        for _ in range(self.params.max_trajectories):
            if self.gap(start) <= alpha:
                return
            self._trial(start)
            self.trials_run += 1


def solo_plan(task: SubTask, mover: int, n_agents: int, params: PlannerParams,
              rng: random.Random) -> Plan:
    """Plan a sub-task for one agent with everyone else frozen in place."""
    transition = FrozenOthers(mover, n_agents, params)
    return Plan(task, transition, params, upper_actors=(mover,), carriers=1,
                rng=rng, skip_unreachable=True, mover=mover)


def best_response_plan(task: SubTask, me: int, n_agents: int,
                       policies: dict[int, PolicyFn], params: PlannerParams,
                       rng: random.Random) -> Plan:
    """Plan my sub-task while others follow their modeled policies.

    Training is skipped while the task is out of solo reach; cooperation that
    needs more than one pair of hands goes through joint plans instead.
    """
    transition = marginalize(me, n_agents, policies, params)
    return Plan(task, transition, params, upper_actors=(me,), carriers=2,
                rng=rng, skip_unreachable=True)


def joint_plan(task: SubTask, team: tuple[int, ...], n_agents: int,
               policies: dict[int, PolicyFn], params: PlannerParams,
               rng: random.Random) -> Plan:
    """Centralized plan for a team sharing a sub-task; each member later
    executes its own component of the greedy joint action.

    The team upper bound prices counter hand-offs, so a sentinel here means
    the operands live in regions not even a relay can bridge and training
    would only burn the trajectory budget.
    """
    transition = JointTransition(team, n_agents, policies, params)
    return Plan(task, transition, params, upper_actors=tuple(sorted(team)),
                carriers=2, rng=rng, skip_unreachable=True)
