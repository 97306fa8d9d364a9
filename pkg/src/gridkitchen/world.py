"""Grid kitchen environment: tiles, movable items, simultaneous-move dynamics."""
from __future__ import annotations

from typing import Iterable, NamedTuple, Optional

# Actions are (dx, dy) moves on the grid plus Stay.  The tuple order below is
# the canonical tie-break order used everywhere a single action must be picked
# from equally good candidates.
NORTH = "N"
SOUTH = "S"
EAST = "E"
WEST = "W"
STAY = "Stay"
ACTIONS = (NORTH, SOUTH, EAST, WEST, STAY)
MOVES = {NORTH: (0, -1), SOUTH: (0, 1), EAST: (1, 0), WEST: (-1, 0), STAY: (0, 0)}

FLOOR = "Floor"
COUNTER = "Counter"
KNIFE = "Knife"
DELIVERY = "Delivery"

_TILE_CHARS = {"-": COUNTER, "/": KNIFE, "*": DELIVERY, " ": FLOOR}
_CHAR_FOR_TILE = {v: k for k, v in _TILE_CHARS.items()}

TOMATO = "Tomato"
LETTUCE = "Lettuce"
FOOD_KINDS = (TOMATO, LETTUCE)

DEFAULT_MAX_STEPS = 100


class Food(NamedTuple):
    kind: str
    chopped: bool

    def __repr__(self) -> str:
        return f"{self.kind}.{'chopped' if self.chopped else 'unchopped'}"


class Item:
    """A movable thing: a lone food, a combined group of foods, or a plate.

    Instances are interned so identity comparison and hashing stay cheap in
    planner inner loops.  ``plate`` marks presence of a plate; ``foods`` is the
    sorted tuple of foods merged into the item (empty for a bare plate).
    """

    __slots__ = ("plate", "foods", "_hash", "_repr")
    _cache: dict = {}

    def __new__(cls, plate: bool, foods: Iterable[Food] = ()):
        foods = tuple(sorted(foods))
        key = (plate, foods)
        cached = cls._cache.get(key)
        if cached is not None:
            return cached
        item = object.__new__(cls)
        object.__setattr__(item, "plate", plate)
        object.__setattr__(item, "foods", foods)
        object.__setattr__(item, "_hash", hash(key))
        if plate:
            text = "Plate[" + ", ".join(repr(f) for f in foods) + "]"
        elif len(foods) == 1:
            text = repr(foods[0])
        else:
            text = "[" + ", ".join(repr(f) for f in foods) + "]"
        object.__setattr__(item, "_repr", text)
        cls._cache[key] = item
        return item

    def __setattr__(self, name, value):
        raise AttributeError("Item is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return self is other

    def __lt__(self, other: "Item") -> bool:
        return self._repr < other._repr

    def __repr__(self) -> str:
        return self._repr

    @property
    def is_lone_food(self) -> bool:
        return not self.plate and len(self.foods) == 1

    def contains(self, pattern: "Item") -> bool:
        """True when this item includes everything ``pattern`` asks for."""
        if pattern.plate and not self.plate:
            return False
        remaining = list(self.foods)
        for food in pattern.foods:
            if food not in remaining:
                return False
            remaining.remove(food)
        return True


def food_item(kind: str, chopped: bool = False) -> Item:
    return Item(False, (Food(kind, chopped),))


def plate_item(*foods: Food) -> Item:
    return Item(True, foods)


def mergeable(a: Item, b: Item) -> bool:
    """Two items combine when at most one is a plate and every food is chopped."""
    if a.plate and b.plate:
        return False
    return all(f.chopped for f in a.foods) and all(f.chopped for f in b.foods)


def merge_items(a: Item, b: Item) -> Item:
    return Item(a.plate or b.plate, a.foods + b.foods)


def parse_item(text: str) -> Item:
    """Parse item notation: ``Tomato.unchopped``, ``Plate[Tomato.chopped]``,
    ``[Tomato.chopped, Lettuce.chopped]``."""
    text = text.strip()
    if text.startswith("Plate"):
        inner = text[len("Plate"):].strip()
        if inner in ("", "[]"):
            return Item(True)
        if not (inner.startswith("[") and inner.endswith("]")):
            raise ValueError(f"bad plate notation: {text!r}")
        return Item(True, _parse_food_list(inner[1:-1]))
    if text.startswith("[") and text.endswith("]"):
        return Item(False, _parse_food_list(text[1:-1]))
    return Item(False, (_parse_food(text),))


def _parse_food_list(inner: str) -> tuple[Food, ...]:
    inner = inner.strip()
    if not inner:
        return ()
    return tuple(_parse_food(part) for part in inner.split(","))


def _parse_food(text: str) -> Food:
    text = text.strip()
    kind, sep, status = text.partition(".")
    if kind not in FOOD_KINDS or status not in ("chopped", "unchopped"):
        raise ValueError(f"bad food notation: {text!r}")
    return Food(kind, status == "chopped")


class Kitchen:
    """Static layout: tile kinds plus precomputed lookups for planning."""

    __slots__ = ("tiles", "width", "height", "floor", "knives", "deliveries",
                 "neighbors", "_tile_at", "adj_floor", "dist_cache", "scratch")

    def __init__(self, tiles: tuple[tuple[str, ...], ...]):
        self.tiles = tiles
        self.height = len(tiles)
        self.width = len(tiles[0])
        floor = []
        knives = []
        deliveries = []
        for y, row in enumerate(tiles):
            for x, tile in enumerate(row):
                if tile == FLOOR:
                    floor.append((x, y))
                elif tile == KNIFE:
                    knives.append((x, y))
                elif tile == DELIVERY:
                    deliveries.append((x, y))
        self.floor = frozenset(floor)
        self.knives = tuple(knives)
        self.deliveries = tuple(deliveries)
        neighbors = {}
        for (x, y) in floor:
            neighbors[(x, y)] = tuple(
                (x + dx, y + dy) for a, (dx, dy) in MOVES.items()
                if a != STAY and (x + dx, y + dy) in self.floor)
        self.neighbors = neighbors
        self._tile_at = {(x, y): tile for y, row in enumerate(tiles)
                         for x, tile in enumerate(row)}
        self.adj_floor = {
            (x, y): tuple(p for p in ((x, y - 1), (x, y + 1), (x + 1, y), (x - 1, y))
                          if p in self.floor)
            for y in range(self.height) for x in range(self.width)}
        # Scratch space for planners to memoize shortest-path maps (keyed by
        # source and blocked cells) and per-task state evaluations; states
        # sharing geometry share the work.
        self.dist_cache: dict = {}
        self.scratch: dict = {}

    def tile(self, pos: tuple[int, int]) -> str:
        return self._tile_at.get(pos, COUNTER)

    def is_floor(self, pos: tuple[int, int]) -> bool:
        return pos in self.floor

    def floor_adjacent(self, pos: tuple[int, int]) -> tuple[tuple[int, int], ...]:
        return self.adj_floor[pos]


class AgentState(NamedTuple):
    pos: tuple[int, int]
    holding: Optional[Item]


class WorldState:
    """Immutable snapshot of everything that moves.

    ``clock`` is bookkeeping for episode truncation and is deliberately
    excluded from equality and hashing so planners can memoize values for
    physically identical configurations reached at different times.
    """

    __slots__ = ("kitchen", "agents", "board", "delivered", "clock", "_hash")

    def __init__(self, kitchen: Kitchen, agents: tuple[AgentState, ...],
                 board: tuple[tuple[tuple[int, int], Item], ...],
                 delivered: tuple[Item, ...], clock: int = 0):
        self.kitchen = kitchen
        self.agents = agents
        self.board = board
        self.delivered = delivered
        self.clock = clock
        self._hash = hash((agents, board, delivered))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if other.__class__ is not WorldState:
            return NotImplemented
        return (self._hash == other._hash and self.kitchen is other.kitchen
                and self.agents == other.agents and self.board == other.board
                and self.delivered == other.delivered)

    def __repr__(self) -> str:
        return (f"WorldState(t={self.clock}, agents={self.agents}, "
                f"board={self.board}, delivered={self.delivered})")

    def item_at(self, pos: tuple[int, int]) -> Optional[Item]:
        for p, item in self.board:
            if p == pos:
                return item
        return None

    def all_items(self) -> tuple[Item, ...]:
        """Every item in play: resting, held, and delivered."""
        items = [item for _, item in self.board]
        items.extend(a.holding for a in self.agents if a.holding is not None)
        items.extend(self.delivered)
        return tuple(items)

    def replace(self, agents=None, board=None, delivered=None, clock=None) -> "WorldState":
        return WorldState(
            self.kitchen,
            self.agents if agents is None else agents,
            self.board if board is None else board,
            self.delivered if delivered is None else delivered,
            self.clock if clock is None else clock,
        )


class Event(NamedTuple):
    kind: str                 # pickup | putdown | chop | merge | deliver
    agent: int
    item: Item                # resulting item (chop/merge) or the moved item
    pos: tuple[int, int]
    operands: tuple = ()      # (held, resting) pair for merges


def parse_kitchen(text: str) -> WorldState:
    """Build the initial state from kitchen map text.

    Map characters: ``-`` counter, ``/`` knife station, ``*`` delivery
    station, space floor, ``t``/``l`` raw tomato/lettuce on a counter, ``p``
    plate on a counter, digits 1-9 agent start cells on floor.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip("\n"):
        lines.pop()
    if not lines:
        raise ValueError("empty kitchen map")
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise ValueError("kitchen map rows must be rectangular")
    tiles = []
    board = []
    starts = {}
    for y, line in enumerate(lines):
        row = []
        for x, ch in enumerate(line):
            if ch in _TILE_CHARS:
                row.append(_TILE_CHARS[ch])
            elif ch == "t":
                row.append(COUNTER)
                board.append(((x, y), food_item(TOMATO)))
            elif ch == "l":
                row.append(COUNTER)
                board.append(((x, y), food_item(LETTUCE)))
            elif ch == "p":
                row.append(COUNTER)
                board.append(((x, y), Item(True)))
            elif ch.isdigit() and ch != "0":
                row.append(FLOOR)
                starts[int(ch)] = (x, y)
            else:
                raise ValueError(f"unknown map character {ch!r} at {(x, y)}")
        tiles.append(tuple(row))
    kitchen = Kitchen(tuple(tiles))
    for y in (0, kitchen.height - 1):
        if any(kitchen.tiles[y][x] == FLOOR for x in range(kitchen.width)):
            raise ValueError("kitchen border must be solid")
    for y in range(kitchen.height):
        if kitchen.tiles[y][0] == FLOOR or kitchen.tiles[y][-1] == FLOOR:
            raise ValueError("kitchen border must be solid")
    if not kitchen.deliveries:
        raise ValueError("kitchen needs at least one delivery station")
    if not starts:
        raise ValueError("kitchen needs at least one agent start cell")
    if sorted(starts) != list(range(1, len(starts) + 1)):
        raise ValueError("agent start cells must be numbered 1..n")
    agents = tuple(AgentState(starts[i], None) for i in sorted(starts))
    return WorldState(kitchen, agents, tuple(sorted(board)), ())


def serialize_kitchen(state: WorldState) -> str:
    """Inverse of parse_kitchen for freshly parsed states."""
    kitchen = state.kitchen
    grid = [[_CHAR_FOR_TILE[kitchen.tiles[y][x]] for x in range(kitchen.width)]
            for y in range(kitchen.height)]
    for (x, y), item in state.board:
        if item == Item(True):
            grid[y][x] = "p"
        elif item == food_item(TOMATO):
            grid[y][x] = "t"
        elif item == food_item(LETTUCE):
            grid[y][x] = "l"
        else:
            raise ValueError(f"cannot serialize composed item {item!r}")
    for i, agent in enumerate(state.agents):
        x, y = agent.pos
        grid[y][x] = str(i + 1)
    return "\n".join("".join(row) for row in grid) + "\n"


def _resolve(state: WorldState, actions: tuple[str, ...]):
    """Final agent positions plus attempted interactions.

    Moves into non-floor tiles are interaction attempts and never change
    position.  Of the rest, a move fails when two agents claim the same cell,
    when a pair would swap, or when the target is occupied by an agent that
    does not vacate; failures cascade until a fixpoint.  Returns
    ``(positions, interactions)`` where interactions are ``(agent, target)``
    pairs in agent order.
    """
    floor = state.kitchen.floor
    agents = state.agents
    n = len(agents)
    pos = [a.pos for a in agents]
    desired = list(pos)
    movers = []
    interactions = []
    for i, action in enumerate(actions):
        if action == STAY:
            continue
        dx, dy = MOVES[action]
        px, py = pos[i]
        target = (px + dx, py + dy)
        if target in floor:
            desired[i] = target
            movers.append(i)
        else:
            interactions.append((i, target))
    if not movers:
        return tuple(pos), interactions
    if len(movers) == 1:
        i = movers[0]
        target = desired[i]
        if not any(pos[j] == target for j in range(n) if j != i):
            pos[i] = target
        return tuple(pos), interactions
    moving = [desired[i] != pos[i] for i in range(n)]
    claims: dict = {}
    for i in movers:
        claims.setdefault(desired[i], []).append(i)
    for claimants in claims.values():
        if len(claimants) > 1:
            for i in claimants:
                moving[i] = False
    for i in range(n):
        for j in range(i + 1, n):
            if (moving[i] and moving[j]
                    and desired[i] == pos[j] and desired[j] == pos[i]):
                moving[i] = moving[j] = False
    changed = True
    while changed:
        changed = False
        occupied = {pos[j] for j in range(n) if not moving[j]}
        for i in range(n):
            if moving[i] and desired[i] in occupied:
                moving[i] = False
                changed = True
    return tuple(desired[i] if moving[i] else pos[i] for i in range(n)), interactions


def resolve_moves(state: WorldState, actions: tuple[str, ...]) -> tuple[tuple[int, int], ...]:
    """Final agent positions under simultaneous moves."""
    return _resolve(state, actions)[0]


def _interact(kitchen: Kitchen, agent_id: int, agent: AgentState,
              target: tuple[int, int], board: dict, delivered: list) -> tuple[AgentState, Optional[Event]]:
    tile = kitchen.tile(target)
    held = agent.holding
    resting = board.get(target)
    if tile == DELIVERY:
        # Delivered items are final: no pickup, and only plates are accepted.
        if held is not None and held.plate:
            delivered.append(held)
            return agent._replace(holding=None), Event("deliver", agent_id, held, target)
        return agent, None
    if held is None:
        if resting is not None:
            del board[target]
            return agent._replace(holding=resting), Event("pickup", agent_id, resting, target)
        return agent, None
    if resting is None:
        if tile == KNIFE and held.is_lone_food and not held.foods[0].chopped:
            chopped = food_item(held.foods[0].kind, chopped=True)
            board[target] = chopped
            return agent._replace(holding=None), Event("chop", agent_id, chopped, target)
        board[target] = held
        return agent._replace(holding=None), Event("putdown", agent_id, held, target)
    if mergeable(held, resting):
        merged = merge_items(held, resting)
        board[target] = merged
        event = Event("merge", agent_id, merged, target, (held, resting))
        return agent._replace(holding=None), event
    return agent, None


def step_events(state: WorldState, actions: tuple[str, ...]) -> tuple[WorldState, tuple[Event, ...]]:
    """Advance one tick: resolve moves, then apply interactions in agent order.

    The board and delivered tuples are only copied when some agent actually
    interacts, which keeps pure-movement ticks (the planner's common case)
    cheap.
    """
    if len(actions) != len(state.agents):
        raise ValueError("one action per agent required")
    kitchen = state.kitchen
    final_pos, interactions = _resolve(state, actions)
    agents = list(state.agents)
    for i, p in enumerate(final_pos):
        a = agents[i]
        if p != a.pos:
            agents[i] = AgentState(p, a.holding)
    board = None
    delivered = None
    events = None
    for i, target in interactions:
        if board is None:
            board = dict(state.board)
            delivered = list(state.delivered)
            events = []
        agents[i], event = _interact(kitchen, i, agents[i], target, board, delivered)
        if event is not None:
            events.append(event)
    if board is None:
        new_state = WorldState(kitchen, tuple(agents), state.board,
                               state.delivered, state.clock + 1)
        return new_state, ()
    new_state = WorldState(kitchen, tuple(agents), tuple(sorted(board.items())),
                           tuple(sorted(delivered)), state.clock + 1)
    return new_state, tuple(events)


def step(state: WorldState, actions: tuple[str, ...]) -> WorldState:
    return step_events(state, actions)[0]


def is_terminal(state: WorldState, goal: tuple[Item, ...],
                max_steps: int = DEFAULT_MAX_STEPS) -> bool:
    """Episode ends when every goal item is delivered or the clock runs out."""
    if state.clock >= max_steps:
        return True
    return goal_delivered(state, goal)


def goal_delivered(state: WorldState, goal: tuple[Item, ...]) -> bool:
    remaining = list(state.delivered)
    for want in goal:
        if want not in remaining:
            return False
        remaining.remove(want)
    return True


class KitchenEnv:
    """Thin stateful wrapper enforcing the terminal-state contract."""

    def __init__(self, state: WorldState, goal: tuple[Item, ...],
                 max_steps: int = DEFAULT_MAX_STEPS):
        self.state = state
        self.goal = goal
        self.max_steps = max_steps

    @property
    def done(self) -> bool:
        return is_terminal(self.state, self.goal, self.max_steps)

    def step(self, actions: tuple[str, ...]) -> tuple[WorldState, tuple[Event, ...]]:
        if self.done:
            raise RuntimeError("step() called on terminal state")
        self.state, events = step_events(self.state, actions)
        return self.state, events
