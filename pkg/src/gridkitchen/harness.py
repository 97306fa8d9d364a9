"""Episode runner, experiment matrix, and metrics."""
from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Iterable, Optional

from .delegation import AgentModel, DelegationAgent, Observation, PlanStore
from .planner import PlannerParams
from .recipes import (Recipe, SubTask, active_subtasks, compile_subtasks,
                      completion_fraction, get_recipe, make_subtask)
from .world import (ACTIONS, STAY, Event, Item, KitchenEnv, WorldState,
                    goal_delivered, parse_kitchen, step)

BUILTIN_MAPS = ("open2", "open3", "partial2", "partial3", "full2", "full3")


def load_kitchen_text(kitchen: str, recipe: str | None = None) -> str:
    """Builtin map name or a path to a map file.

    Builtin kitchens may ship recipe-specific object placements (the
    two-delivery recipe needs a second plate that would only mislead the
    others), so ``{kitchen}_{recipe}.txt`` wins over ``{kitchen}.txt`` when
    it exists.
    """
    path = Path(kitchen)
    if path.suffix == ".txt" or path.exists():
        return path.read_text()
    name = kitchen.lower()
    if name in BUILTIN_MAPS:
        maps = resources.files(__package__) / "maps"
        if recipe is not None:
            variant = maps / f"{name}_{recipe}.txt"
            if variant.is_file():
                return variant.read_text()
        return (maps / f"{name}.txt").read_text()
    raise ValueError(f"unknown kitchen {kitchen!r}; "
                     f"builtins: {', '.join(BUILTIN_MAPS)}")


@dataclass(frozen=True)
class EpisodeConfig:
    kitchen: str
    recipe: str
    agents: tuple[str, ...]
    seed: int = 0
    max_steps: int = 100
    beta: float = 1.3

    def scenario(self) -> str:
        return f"{self.kitchen}:{self.recipe}:{'+'.join(self.agents)}:{self.seed}"


@dataclass
class StepRecord:
    t: int
    positions: tuple[tuple[int, int], ...]
    holdings: tuple[Optional[Item], ...]
    actions: tuple[str, ...]
    beliefs: tuple[tuple[tuple[str, float], ...], ...]
    events: tuple[Event, ...]
    completion: float


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    time_steps: int
    completed: bool
    completion: float
    completion_series: tuple[float, ...]
    shuffles: tuple[int, ...]
    ordering_signature: str
    trace: tuple[StepRecord, ...]
    tasks: tuple[SubTask, ...]

    @property
    def shuffles_total(self) -> int:
        return sum(self.shuffles)


def run_episode(config: EpisodeConfig) -> EpisodeResult:
    state = parse_kitchen(load_kitchen_text(config.kitchen, config.recipe))
    n = len(state.agents)
    if n != len(config.agents):
        raise ValueError(f"map has {n} agent cells but {len(config.agents)} "
                         "models were given")
    recipe = get_recipe(config.recipe)
    tasks = compile_subtasks(state, recipe)
    params = PlannerParams(max_steps=config.max_steps)
    store = PlanStore(n, params, config.seed)
    agents = [DelegationAgent(i, AgentModel(kind, config.beta), n, tasks,
                              params, config.seed, store=store)
              for i, kind in enumerate(config.agents)]
    env = KitchenEnv(state, recipe.goal, config.max_steps)
    trace: list[StepRecord] = []
    series = [completion_fraction(tasks, state)]
    last_obs: Optional[Observation] = None
    while not env.done:
        current = env.state
        for agent in agents:
            agent.begin_step(current, last_obs)
        actions = tuple(agent.next_action(current) for agent in agents)
        new_state, events = env.step(actions)
        trace.append(StepRecord(
            t=current.clock,
            positions=tuple(a.pos for a in current.agents),
            holdings=tuple(a.holding for a in current.agents),
            actions=actions,
            beliefs=tuple(agent.belief.rows() for agent in agents),
            events=events,
            completion=completion_fraction(tasks, new_state),
        ))
        series.append(trace[-1].completion)
        last_obs = Observation(current, actions)
    final = env.state
    return EpisodeResult(
        config=config,
        time_steps=final.clock,
        completed=goal_delivered(final, recipe.goal),
        completion=completion_fraction(tasks, final),
        completion_series=tuple(series),
        shuffles=count_shuffles(trace, n, tuple(a.pos for a in final.agents)),
        ordering_signature=ordering_signature(trace),
        trace=tuple(trace),
        tasks=tasks,
    )


def count_shuffles(trace: Iterable[StepRecord], n_agents: int,
                   final_positions: Optional[tuple] = None) -> tuple[int, ...]:
    """Actions that undo the previous one: a move straight back to the prior
    cell, or picking up and putting down the same item (either order)."""
    records = list(trace)
    counts = [0] * n_agents
    for i in range(n_agents):
        cells = [r.positions[i] for r in records]
        if final_positions is not None:
            cells.append(final_positions[i])
        for a, b, c in zip(cells, cells[1:], cells[2:]):
            if b != a and c == a:
                counts[i] += 1
        handled = [(r.t, e) for r in records for e in r.events
                   if e.agent == i and e.kind in ("pickup", "putdown")]
        for (t1, e1), (t2, e2) in zip(handled, handled[1:]):
            if t2 == t1 + 1 and e1.item is e2.item and e1.kind != e2.kind:
                counts[i] += 1
    return tuple(counts)


def ordering_signature(trace: Iterable[StepRecord]) -> str:
    """Order in which assembly merges happened (chops and deliveries are
    unordered prep/finish work and are excluded)."""
    names = []
    for record in trace:
        for event in record.events:
            if event.kind == "merge":
                held, resting = event.operands
                names.append(make_subtask(held, resting).name)
    return ";".join(names)


# --- results table -----------------------------------------------------------

RESULT_COLUMNS = ("kitchen", "recipe", "agents", "seed", "time_steps",
                  "completion", "shuffles_total", "ordering_signature")


def result_row(result: EpisodeResult) -> dict:
    config = result.config
    return {
        "kitchen": config.kitchen,
        "recipe": config.recipe,
        "agents": "+".join(config.agents),
        "seed": config.seed,
        "time_steps": result.time_steps,
        "completion": result.completion,
        "shuffles_total": result.shuffles_total,
        "ordering_signature": result.ordering_signature,
        "shuffles_per_agent": "|".join(str(c) for c in result.shuffles),
    }


@dataclass
class ResultsTable:
    rows: list[dict] = field(default_factory=list)

    def add(self, result: EpisodeResult) -> None:
        self.rows.append(result_row(result))

    def write_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(RESULT_COLUMNS) + ["shuffles_per_agent"])
            writer.writeheader()
            writer.writerows(self.rows)

    @staticmethod
    def read_csv(path) -> "ResultsTable":
        import csv
        with open(path, newline="") as fh:
            rows = []
            for row in csv.DictReader(fh):
                row["seed"] = int(row["seed"])
                row["time_steps"] = int(row["time_steps"])
                row["completion"] = float(row["completion"])
                row["shuffles_total"] = int(row["shuffles_total"])
                rows.append(row)
        return ResultsTable(rows)

    def summarize(self, keys=("kitchen", "recipe", "agents")) -> list[dict]:
        """Group rows and report mean and standard error per metric."""
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault(tuple(row[k] for k in keys), []).append(row)
        out = []
        for group_key in sorted(groups):
            rows = groups[group_key]
            summary = dict(zip(keys, group_key))
            summary["episodes"] = len(rows)
            for metric in ("time_steps", "completion", "shuffles_total"):
                values = [float(r[metric]) for r in rows]
                mean, sem = mean_sem(values)
                summary[f"{metric}_mean"] = mean
                summary[f"{metric}_sem"] = sem
            out.append(summary)
        return out


def mean_sem(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


# --- matrix runner -----------------------------------------------------------

def matrix_configs(spec: dict, seeds: int) -> list[EpisodeConfig]:
    """Expand a matrix declaration into episode configs.

    Expected keys: kitchens, recipes, models (list of kinds), mode
    ("self_play" or "ad_hoc"), optional n_agents (default 2 for self_play),
    optional max_steps and beta.
    """
    kitchens = spec["kitchens"]
    recipe_names = spec["recipes"]
    models = spec["models"]
    mode = spec.get("mode", "self_play")
    max_steps = spec.get("max_steps", 100)
    beta = spec.get("beta", 1.3)
    teams: list[tuple[str, ...]]
    if mode == "self_play":
        n = spec.get("n_agents", 2)
        teams = [(m,) * n for m in models]
    elif mode == "ad_hoc":
        teams = [(a, b) for a, b in product(models, repeat=2)]
    else:
        raise ValueError(f"unknown matrix mode {mode!r}")
    configs = []
    for kitchen in kitchens:
        for recipe in recipe_names:
            for team in teams:
                for seed in range(seeds):
                    configs.append(EpisodeConfig(kitchen, recipe, tuple(team),
                                                 seed, max_steps, beta))
    return configs


def _episode_row(config: EpisodeConfig) -> dict:
    return result_row(run_episode(config))


def run_matrix(configs: list[EpisodeConfig], jobs: int = 1) -> ResultsTable:
    table = ResultsTable()
    if jobs <= 1:
        for config in configs:
            table.rows.append(_episode_row(config))
        return table
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for row in pool.map(_episode_row, configs, chunksize=1):
            table.rows.append(row)
    return table


def ordering_stats(rows: Iterable[dict]) -> dict[str, float]:
    """Frequency of each completion-order signature."""
    counts: dict[str, int] = {}
    total = 0
    for row in rows:
        sig = row["ordering_signature"]
        counts[sig] = counts.get(sig, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {sig: counts[sig] / total for sig in sorted(counts)}


# --- traces ------------------------------------------------------------------

def write_trace(result: EpisodeResult, path) -> None:
    config = result.config
    with open(path, "w") as fh:
        fh.write(json.dumps({
            "type": "config", "kitchen": config.kitchen, "recipe": config.recipe,
            "agents": list(config.agents), "seed": config.seed,
            "max_steps": config.max_steps, "beta": config.beta,
            "scenario": config.scenario(),
        }, sort_keys=True) + "\n")
        for record in result.trace:
            fh.write(json.dumps({
                "type": "step", "t": record.t,
                "actions": list(record.actions),
                "positions": [list(p) for p in record.positions],
                "holdings": [repr(h) if h is not None else None
                             for h in record.holdings],
                "events": [[e.kind, e.agent, repr(e.item)] for e in record.events],
                "beliefs": [[[sig, mass] for sig, mass in rows]
                            for rows in record.beliefs],
                "completion": record.completion,
            }, sort_keys=True) + "\n")
        fh.write(json.dumps({
            "type": "result", "time_steps": result.time_steps,
            "completed": result.completed, "completion": result.completion,
            "shuffles": list(result.shuffles),
            "ordering_signature": result.ordering_signature,
        }, sort_keys=True) + "\n")


def read_trace_beliefs(path) -> list[tuple[str, int, int, str, float]]:
    """(scenario, time, agent, allocation, mass) rows from a trace file."""
    rows = []
    scenario = None
    with open(path) as fh:
        for line in fh:
            record = json.loads(line)
            if record["type"] == "config":
                scenario = record["scenario"]
            elif record["type"] == "step":
                for agent, belief in enumerate(record["beliefs"]):
                    for sig, mass in belief:
                        rows.append((scenario, record["t"], agent, sig, mass))
    return rows


# --- belief correlation -------------------------------------------------------

def correlate(model_rows: Iterable[tuple], reference_rows: Iterable[tuple]) -> tuple[float, int]:
    """Pearson r between model belief masses and a reference distribution.

    Rows are (scenario, time, allocation, mass); model rows may carry an extra
    agent field, in which case masses are averaged over agents.  Pairs are
    matched on (scenario, time, allocation).
    """
    merged: dict[tuple, list[float]] = {}
    for row in model_rows:
        if len(row) == 5:
            scenario, t, _agent, allocation, mass = row
        else:
            scenario, t, allocation, mass = row
        merged.setdefault((scenario, t, allocation), []).append(mass)
    model = {key: sum(vals) / len(vals) for key, vals in merged.items()}
    pairs = []
    for row in reference_rows:
        scenario, t, allocation, mass = row
        key = (scenario, t, allocation)
        if key in model:
            pairs.append((model[key], mass))
    n = len(pairs)
    if n < 2:
        raise ValueError("need at least two matched (scenario, time, allocation) pairs")
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    syy = sum(y * y for y in ys)
    sxy = sum(x * y for x, y in pairs)
    den = math.sqrt(n * sxx - sx * sx) * math.sqrt(n * syy - sy * sy)
    if den == 0.0:
        raise ValueError("constant series has no Pearson correlation")
    return (n * sxy - sx * sy) / den, n


# --- brute-force team optimum --------------------------------------------------

def centralized_optimal_steps(state: WorldState, goal: tuple[Item, ...],
                              max_steps: int = 100) -> Optional[int]:
    """Minimum steps for a clairvoyant centralized controller, by BFS over
    joint actions.  Exponential in agents; intended for small reference maps."""
    if goal_delivered(state, goal):
        return 0
    n = len(state.agents)
    joint_actions = [a for a in product(ACTIONS, repeat=n)
                     if any(x != STAY for x in a)]
    seen = {state}
    frontier = deque([(state, 0)])
    while frontier:
        current, depth = frontier.popleft()
        if depth >= max_steps:
            continue
        for actions in joint_actions:
            nxt = step(current, actions)
            if nxt in seen:
                continue
            if goal_delivered(nxt, goal):
                return depth + 1
            seen.add(nxt)
            frontier.append((nxt, depth + 1))
    return None
