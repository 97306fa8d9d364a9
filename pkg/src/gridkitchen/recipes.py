"""Recipes compiled into Merge sub-tasks, plus task-allocation spaces."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations, permutations, product
from typing import Optional

from .world import (DELIVERY, KNIFE, Item, WorldState, food_item, merge_items,
                    mergeable, parse_item)

KNIFE_OPERAND = "Knife"
DELIVERY_OPERAND = "Delivery"
_STATIONS = (KNIFE_OPERAND, DELIVERY_OPERAND)


class SubTask:
    """Merge(x, y): bring two operands together.

    ``y`` is either an Item pattern or one of the station operands "Knife"
    and "Delivery".  Instances are interned by name so they hash fast and can
    be compared by identity inside planner loops.
    """

    __slots__ = ("x", "y", "name", "_hash")
    _cache: dict = {}

    def __new__(cls, x: Item, y):
        name = f"Merge({x!r}, {y if isinstance(y, str) else repr(y)})"
        cached = cls._cache.get(name)
        if cached is not None:
            return cached
        task = object.__new__(cls)
        object.__setattr__(task, "x", x)
        object.__setattr__(task, "y", y)
        object.__setattr__(task, "name", name)
        object.__setattr__(task, "_hash", hash(name))
        cls._cache[name] = task
        return task

    def __setattr__(self, name, value):
        raise AttributeError("SubTask is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return self is other

    def __lt__(self, other: "SubTask") -> bool:
        return self.name < other.name

    def __repr__(self) -> str:
        return self.name

    @property
    def is_chop(self) -> bool:
        return self.y == KNIFE_OPERAND

    @property
    def is_delivery(self) -> bool:
        return self.y == DELIVERY_OPERAND

    def result(self) -> Item:
        """The item whose presence marks this sub-task as done."""
        if self.is_chop:
            return food_item(self.x.foods[0].kind, chopped=True)
        if self.is_delivery:
            return self.x
        return merge_items(self.x, self.y)


def make_subtask(x: Item, y) -> SubTask:
    """Canonical operand ordering: foods before plates, then by notation."""
    if isinstance(y, str):
        return SubTask(x, y)
    if x.plate and not y.plate:
        x, y = y, x
    elif x.plate == y.plate and repr(y) < repr(x):
        x, y = y, x
    return SubTask(x, y)


def parse_subtask(name: str) -> SubTask:
    if not (name.startswith("Merge(") and name.endswith(")")):
        raise ValueError(f"bad sub-task name: {name!r}")
    inner = name[len("Merge("):-1]
    depth = 0
    split = -1
    for i, ch in enumerate(inner):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0:
            split = i
            break
    if split < 0:
        raise ValueError(f"bad sub-task name: {name!r}")
    x_text, y_text = inner[:split].strip(), inner[split + 1:].strip()
    y = y_text if y_text in _STATIONS else parse_item(y_text)
    return SubTask(parse_item(x_text), y)


@dataclass(frozen=True)
class Recipe:
    name: str
    goal: tuple[Item, ...]


def parse_recipe(text: str) -> Recipe:
    """Recipe files are key: value lines; ``deliver`` may repeat."""
    name = None
    goal = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"bad recipe line: {raw!r}")
        key = key.strip().lower()
        if key == "name":
            name = value.strip()
        elif key == "deliver":
            goal.append(parse_item(value.strip()))
        else:
            raise ValueError(f"unknown recipe key: {key!r}")
    if name is None or not goal:
        raise ValueError("recipe needs a name and at least one deliver line")
    return Recipe(name, tuple(sorted(goal)))


_BUILTIN_RECIPES = {
    "tomato": Recipe("tomato", (parse_item("Plate[Tomato.chopped]"),)),
    "tomato_lettuce": Recipe("tomato_lettuce", tuple(sorted((
        parse_item("Plate[Tomato.chopped]"),
        parse_item("Plate[Lettuce.chopped]"))))),
    "salad": Recipe("salad", (parse_item("Plate[Tomato.chopped, Lettuce.chopped]"),)),
}


def get_recipe(name: str) -> Recipe:
    try:
        return _BUILTIN_RECIPES[name.lower()]
    except KeyError:
        raise KeyError(f"unknown recipe {name!r}; "
                       f"builtins: {', '.join(sorted(_BUILTIN_RECIPES))}") from None


# --- sub-task compilation ---------------------------------------------------
#
# Nodes abstract away positions: (resting/held items, delivered items), both
# as sorted tuples.  Edges are the merge actions the dynamics allow.  The
# compiled task set is the union of edges over all shortest paths from the
# initial node to a nearest goal node.

_Node = tuple[tuple[Item, ...], tuple[Item, ...]]


def _node_edges(node: _Node, has_knife: bool) -> list[tuple[SubTask, _Node]]:
    items, delivered = node
    edges = []
    seen = set()
    if has_knife:
        for i, item in enumerate(items):
            if item.is_lone_food and not item.foods[0].chopped:
                task = SubTask(item, KNIFE_OPERAND)
                if task in seen:
                    continue
                seen.add(task)
                rest = items[:i] + items[i + 1:]
                nxt = (tuple(sorted(rest + (task.result(),))), delivered)
                edges.append((task, nxt))
    for i, j in combinations(range(len(items)), 2):
        a, b = items[i], items[j]
        if not mergeable(a, b):
            continue
        task = make_subtask(a, b)
        if task in seen:
            continue
        seen.add(task)
        rest = tuple(items[k] for k in range(len(items)) if k not in (i, j))
        nxt = (tuple(sorted(rest + (merge_items(a, b),))), delivered)
        edges.append((task, nxt))
    for i, item in enumerate(items):
        if not item.plate:
            continue
        task = SubTask(item, DELIVERY_OPERAND)
        if task in seen:
            continue
        seen.add(task)
        rest = items[:i] + items[i + 1:]
        nxt = (tuple(sorted(rest)), tuple(sorted(delivered + (item,))))
        edges.append((task, nxt))
    return edges


def _goal_reached(node: _Node, goal: tuple[Item, ...]) -> bool:
    remaining = list(node[1])
    for want in goal:
        if want not in remaining:
            return False
        remaining.remove(want)
    return True


def compile_subtasks(state: WorldState, recipe: Recipe) -> tuple[SubTask, ...]:
    """All Merge actions on any shortest route from the start to the goal."""
    has_knife = bool(state.kitchen.knives)
    start: _Node = (tuple(sorted(state.all_items())), ())
    if _goal_reached(start, recipe.goal):
        return ()
    depth = {start: 0}
    parents: dict[_Node, list[tuple[SubTask, _Node]]] = {start: []}
    frontier = deque([start])
    goal_nodes = []
    goal_depth = None
    while frontier:
        node = frontier.popleft()
        d = depth[node]
        if goal_depth is not None and d >= goal_depth:
            break
        for task, nxt in _node_edges(node, has_knife):
            if nxt in depth:
                if depth[nxt] == d + 1:
                    parents[nxt].append((task, node))
                continue
            depth[nxt] = d + 1
            parents[nxt] = [(task, node)]
            frontier.append(nxt)
            if _goal_reached(nxt, recipe.goal) and goal_depth is None:
                goal_depth = d + 1
            if goal_depth == d + 1 and _goal_reached(nxt, recipe.goal):
                goal_nodes.append(nxt)
    if goal_depth is None:
        raise ValueError(f"recipe {recipe.name!r} is unreachable from this kitchen")
    tasks = set()
    visited = set(goal_nodes)
    stack = list(goal_nodes)
    while stack:
        node = stack.pop()
        for task, parent in parents[node]:
            tasks.add(task)
            if parent not in visited:
                visited.add(parent)
                stack.append(parent)
    return tuple(sorted(tasks))


# --- preconditions, completion, active set ----------------------------------

def is_completed(task: SubTask, state: WorldState) -> bool:
    """Postconditions are monotone over the realized path: completion means
    some item in play contains the merge result (delivered items count)."""
    result = task.result()
    if task.is_delivery:
        return any(d.plate == result.plate and d.contains(result)
                   for d in state.delivered)
    return any(item.contains(result) for item in state.all_items())


def achieved_exactly(task: SubTask, state: WorldState) -> bool:
    """The merge happened as written: its product exists with nothing extra.

    ``is_completed`` is deliberately loose so that a sub-task stays done after
    its product is consumed downstream.  Plans executing a sub-task need the
    strict reading instead, otherwise dumping the operand into whatever
    partial assembly happens to be closest would count as success even when
    it strands a multi-dish goal.
    """
    result = task.result()
    if task.is_delivery:
        return result in state.delivered
    return result in state.all_items()


def preconditions_met(task: SubTask, state: WorldState) -> bool:
    """Both operands exist as exact standalone items and the result does not
    already exist."""
    if is_completed(task, state):
        return False
    needed = [task.x]
    if task.is_chop:
        if not state.kitchen.knives:
            return False
    elif task.is_delivery:
        if not state.kitchen.deliveries:
            return False
    else:
        needed.append(task.y)
    # Delivered items are out of play for further merging.
    available = [item for _, item in state.board]
    available.extend(a.holding for a in state.agents if a.holding is not None)
    for want in needed:
        if want not in available:
            return False
        available.remove(want)
    return True


def active_subtasks(tasks: tuple[SubTask, ...], state: WorldState) -> tuple[SubTask, ...]:
    return tuple(t for t in tasks if preconditions_met(t, state))


def completion_fraction(tasks: tuple[SubTask, ...], state: WorldState) -> float:
    if not tasks:
        return 1.0
    done = sum(1 for t in tasks if is_completed(t, state))
    return done / len(tasks)


# --- task allocations --------------------------------------------------------

class TaskAllocation:
    """Assignment of agents to sub-tasks (None = no assignment)."""

    __slots__ = ("agents", "tasks", "signature", "_hash")
    _cache: dict = {}

    def __new__(cls, agents: tuple[int, ...], tasks: tuple[Optional[SubTask], ...]):
        signature = "|".join(
            f"{a}:{t.name if t is not None else 'None'}"
            for a, t in zip(agents, tasks))
        cached = cls._cache.get(signature)
        if cached is not None:
            return cached
        alloc = object.__new__(cls)
        object.__setattr__(alloc, "agents", agents)
        object.__setattr__(alloc, "tasks", tasks)
        object.__setattr__(alloc, "signature", signature)
        object.__setattr__(alloc, "_hash", hash(signature))
        cls._cache[signature] = alloc
        return alloc

    def __setattr__(self, name, value):
        raise AttributeError("TaskAllocation is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return self is other

    def __repr__(self) -> str:
        return self.signature

    def task_of(self, agent: int) -> Optional[SubTask]:
        try:
            return self.tasks[self.agents.index(agent)]
        except ValueError:
            return None

    def teammates(self, agent: int) -> tuple[int, ...]:
        """Other agents assigned the same sub-task."""
        mine = self.task_of(agent)
        if mine is None:
            return ()
        return tuple(a for a, t in zip(self.agents, self.tasks)
                     if a != agent and t is mine)


def allocation_space(active: tuple[SubTask, ...], n_agents: int, kind: str,
                     self_id: int = 0) -> tuple[TaskAllocation, ...]:
    """Candidate allocations per model kind.

    bd/up/fb: every mapping of agents to active sub-tasks (sharing allowed).
    dc: assignments with no shared sub-task; when there are fewer active
    sub-tasks than agents the excess agents are left unassigned.
    greedy: singleton assignments of the acting agent only.
    """
    agents = tuple(range(n_agents))
    active = tuple(sorted(active))
    if kind == "greedy":
        if not active:
            return (TaskAllocation((self_id,), (None,)),)
        return tuple(TaskAllocation((self_id,), (t,)) for t in active)
    if not active:
        return (TaskAllocation(agents, (None,) * n_agents),)
    if kind in ("bd", "up", "fb"):
        return tuple(TaskAllocation(agents, combo)
                     for combo in product(active, repeat=n_agents))
    if kind == "dc":
        allocations = []
        k = min(n_agents, len(active))
        for chosen in combinations(agents, k):
            for perm in permutations(active, k):
                tasks: list[Optional[SubTask]] = [None] * n_agents
                for agent, task in zip(chosen, perm):
                    tasks[agent] = task
                allocations.append(TaskAllocation(agents, tuple(tasks)))
        return tuple(allocations)
    raise ValueError(f"unknown model kind {kind!r}")
