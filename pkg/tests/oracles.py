"""Slow exact references the fast implementations are tested against."""
from __future__ import annotations

import heapq
import math
from itertools import product

from gridkitchen.recipes import SubTask, achieved_exactly
from gridkitchen.world import ACTIONS, STAY, WorldState, goal_delivered, step

INF = float("inf")


def reachable_states(start: WorldState, n_agents: int = 1) -> list[WorldState]:
    """Closure of the start state under every joint action."""
    joint = list(product(ACTIONS, repeat=n_agents))
    seen = {start}
    frontier = [start]
    while frontier:
        state = frontier.pop()
        for actions in joint:
            nxt = step(state, actions)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return list(seen)


def exact_values(states: list[WorldState], task: SubTask,
                 step_cost: float = 1.0, move_cost: float = 0.1) -> dict:
    """Optimal cost-to-go per state for one agent chasing one sub-task.

    Deterministic dynamics make the Bellman fixpoint a shortest-path
    problem, so this runs Dijkstra backwards from the goal set; values are
    exact, not iterated to a tolerance.  Unreachable states keep +inf.
    """
    successors: dict[WorldState, list] = {}
    predecessors: dict[WorldState, list] = {s: [] for s in states}
    for s in states:
        row = []
        for a in ACTIONS:
            cost = step_cost + (move_cost if a != STAY else 0.0)
            nxt = step(s, (a,))
            row.append((cost, nxt))
            predecessors[nxt].append((cost, s))
        successors[s] = row
    value = {s: INF for s in states}
    heap = []
    for s in states:
        if achieved_exactly(task, s):
            value[s] = 0.0
            heap.append((0.0, id(s), s))
    heapq.heapify(heap)
    while heap:
        dist, _, s = heapq.heappop(heap)
        if dist > value[s]:
            continue
        for cost, prev in predecessors[s]:
            if achieved_exactly(task, prev):
                continue
            cand = dist + cost
            if cand < value[prev] - 1e-12:
                value[prev] = cand
                heapq.heappush(heap, (cand, id(prev), prev))
    return value


def centralized_optimal_steps(start: WorldState, goal: tuple,
                              limit: int = 60) -> int:
    """Fewest time steps to deliver the goal when one controller moves
    every agent; breadth-first over joint actions."""
    n = len(start.agents)
    joint = list(product(ACTIONS, repeat=n))
    seen = {start}
    layer = [start]
    for depth in range(1, limit + 1):
        nxt_layer = []
        for state in layer:
            for actions in joint:
                nxt = step(state, actions)
                if nxt in seen:
                    continue
                if goal_delivered(nxt, goal):
                    return depth
                seen.add(nxt)
                nxt_layer.append(nxt)
        layer = nxt_layer
        if not layer:
            break
    raise RuntimeError(f"no delivery within {limit} steps")


def posterior_by_enumeration(prior_masses, allocations, history, beta, store):
    """Bayes by brute force: prior times the product of every observation's
    likelihood, evaluated per allocation, then normalized once at the end."""
    from gridkitchen.delegation import likelihood

    weights = []
    for allocation, mass in zip(allocations, prior_masses):
        w = mass
        for obs in history:
            w *= likelihood(obs, allocation, beta, store)
        weights.append(w)
    total = sum(weights)
    return tuple(w / total for w in weights)


def pearson_r(xs, ys) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)
