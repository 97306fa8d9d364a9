"""Decentralized multi-agent coordination in grid-world kitchens."""

from .delegation import AgentModel, BeliefState, DelegationAgent, Observation
from .harness import EpisodeConfig, EpisodeResult, ResultsTable, run_episode
from .planner import PlannerParams
from .recipes import Recipe, SubTask, TaskAllocation, compile_subtasks, get_recipe
from .world import Item, Kitchen, WorldState, parse_kitchen

__version__ = "0.1.0"

__all__ = [
    "AgentModel", "BeliefState", "DelegationAgent", "Observation",
    "EpisodeConfig", "EpisodeResult", "ResultsTable", "run_episode",
    "PlannerParams", "Recipe", "SubTask", "TaskAllocation",
    "compile_subtasks", "get_recipe", "Item", "Kitchen", "WorldState",
    "parse_kitchen", "__version__",
]
