"""Environment dynamics: parsing, items, movement conflicts, interactions."""
import collections

import pytest
from hypothesis import given, settings, strategies as st

from gridkitchen.world import (
    ACTIONS, COUNTER, DELIVERY, EAST, FLOOR, KNIFE, NORTH, SOUTH, STAY, WEST,
    AgentState, Event, Food, Item, food_item, goal_delivered, is_terminal,
    merge_items, mergeable, parse_item, parse_kitchen, plate_item,
    resolve_moves, serialize_kitchen, step, step_events,
)

TOMATO_RAW = food_item("Tomato")
TOMATO_CHOPPED = food_item("Tomato", chopped=True)
LETTUCE_CHOPPED = food_item("Lettuce", chopped=True)
PLATE = Item(True)

PAIR_ROW = """\
*----
-12 -
-----
"""

FACING_ROW = """\
*----
-1 2-
-----
"""


def row_state(text=PAIR_ROW):
    return parse_kitchen(text)


# ---------------------------------------------------------------------------
# parsing and serialization


def test_parse_round_trip(handoff_divider):
    # Kitchen objects compare by identity, so round-trip through the text form.
    text = serialize_kitchen(handoff_divider)
    assert serialize_kitchen(parse_kitchen(text)) == text
    reparsed = parse_kitchen(text)
    assert reparsed.agents == handoff_divider.agents
    assert reparsed.board == handoff_divider.board


def test_parse_places_items_and_agents():
    state = parse_kitchen("-t-\n*1/\n-p-\n")
    assert state.item_at((1, 0)) == TOMATO_RAW
    assert state.item_at((1, 2)) == PLATE
    assert state.agents == (AgentState((1, 1), None),)
    assert state.kitchen.tile((0, 1)) == DELIVERY
    assert state.kitchen.tile((2, 1)) == KNIFE


def test_parse_rejects_ragged_rows():
    with pytest.raises(ValueError, match="rectangular"):
        parse_kitchen("---\n-1-\n--\n")


def test_parse_rejects_open_border():
    with pytest.raises(ValueError, match="border"):
        parse_kitchen("- -\n-1-\n---\n")


def test_parse_rejects_missing_delivery():
    with pytest.raises(ValueError, match="delivery"):
        parse_kitchen("---\n-1-\n---\n")


def test_parse_rejects_gapped_agent_numbers():
    with pytest.raises(ValueError, match="numbered"):
        parse_kitchen("-----\n*1 3-\n-----\n")


def test_tile_outside_grid_reads_as_counter():
    state = row_state()
    assert state.kitchen.tile((-5, 99)) == COUNTER


# ---------------------------------------------------------------------------
# items


def test_items_are_interned():
    assert food_item("Tomato") is food_item("Tomato")
    assert plate_item(Food("Tomato", True)) is parse_item("Plate[Tomato.chopped]")


def test_item_foods_sorted_canonically():
    a = Item(True, (Food("Tomato", True), Food("Lettuce", True)))
    b = Item(True, (Food("Lettuce", True), Food("Tomato", True)))
    assert a is b


def test_parse_item_round_trips_through_repr():
    for text in ("Tomato.unchopped", "Plate[]",
                 "Plate[Lettuce.chopped, Tomato.chopped]",
                 "[Lettuce.chopped, Tomato.chopped]"):
        assert repr(parse_item(text)) == text


def test_parse_item_rejects_unknown_food():
    with pytest.raises(ValueError):
        parse_item("Onion.unchopped")


def test_contains_is_multiset_inclusion():
    double = Item(True, (Food("Tomato", True), Food("Tomato", True)))
    single = plate_item(Food("Tomato", True))
    assert double.contains(single)
    assert not single.contains(double)
    assert not TOMATO_CHOPPED.contains(PLATE)


def test_merge_rules():
    assert mergeable(TOMATO_CHOPPED, PLATE)
    assert mergeable(TOMATO_CHOPPED, LETTUCE_CHOPPED)
    assert not mergeable(TOMATO_RAW, PLATE)
    assert not mergeable(PLATE, PLATE)
    merged = merge_items(TOMATO_CHOPPED, plate_item(Food("Lettuce", True)))
    assert merged is parse_item("Plate[Lettuce.chopped, Tomato.chopped]")


# ---------------------------------------------------------------------------
# movement resolution


def test_move_onto_floor():
    state = parse_kitchen(FACING_ROW)
    assert resolve_moves(state, (EAST, STAY)) == ((2, 1), (3, 1))


def test_move_into_counter_is_not_a_move():
    state = parse_kitchen(FACING_ROW)
    assert resolve_moves(state, (NORTH, SOUTH)) == ((1, 1), (3, 1))


def test_contested_cell_blocks_both():
    state = parse_kitchen(FACING_ROW)
    assert resolve_moves(state, (EAST, WEST)) == ((1, 1), (3, 1))


def test_swap_blocked():
    state = row_state()
    assert resolve_moves(state, (EAST, WEST)) == ((1, 1), (2, 1))


def test_move_into_stationary_agent_blocked():
    state = row_state()
    assert resolve_moves(state, (EAST, STAY)) == ((1, 1), (2, 1))


def test_column_advances_together():
    state = row_state()
    assert resolve_moves(state, (EAST, EAST)) == ((2, 1), (3, 1))


def test_block_cascades_down_the_column():
    # The front agent is walled in, so the follower's move also fails.
    state = parse_kitchen("-*--\n-12-\n----\n")
    assert resolve_moves(state, (EAST, EAST)) == ((1, 1), (2, 1))


# ---------------------------------------------------------------------------
# interactions


def steps(state, *action_rows):
    events = []
    for row in action_rows:
        state, evs = step_events(state, row)
        events.extend(evs)
    return state, events


def test_pickup_and_putdown():
    state = parse_kitchen("-t-\n*1/\n---\n")
    state, events = steps(state, (NORTH,), (NORTH,))
    assert events == [
        Event("pickup", 0, TOMATO_RAW, (1, 0)),
        Event("putdown", 0, TOMATO_RAW, (1, 0)),
    ]
    assert state.agents[0].holding is None
    assert state.item_at((1, 0)) == TOMATO_RAW


def test_chop_on_knife():
    state = parse_kitchen("-t-\n*1/\n---\n")
    state, events = steps(state, (NORTH,), (EAST,))
    assert events[-1] == Event("chop", 0, TOMATO_CHOPPED, (2, 1))
    assert state.item_at((2, 1)) == TOMATO_CHOPPED
    assert state.agents[0].holding is None


def test_knife_does_not_rechop():
    state = parse_kitchen("-t-\n*1/\n---\n")
    state, events = steps(state, (NORTH,), (EAST,), (EAST,), (EAST,))
    # pickup, chop, pickup again, then the chopped food just rests there.
    assert [e.kind for e in events] == ["pickup", "chop", "pickup", "putdown"]
    assert state.item_at((2, 1)) == TOMATO_CHOPPED


def test_merge_onto_plate():
    state = parse_kitchen("-p-\n*1/\n---\n")
    held = TOMATO_CHOPPED
    state = state.replace(agents=(AgentState((1, 1), held),))
    state, events = steps(state, (NORTH,))
    assert events == [Event("merge", 0, plate_item(Food("Tomato", True)),
                            (1, 0), (held, PLATE))]
    assert state.agents[0].holding is None


def test_unchopped_food_does_not_merge():
    state = parse_kitchen("-p-\n*1/\n---\n")
    state = state.replace(agents=(AgentState((1, 1), TOMATO_RAW),))
    after, events = steps(state, (NORTH,))
    assert events == []
    assert after.agents[0].holding == TOMATO_RAW
    assert after.item_at((1, 0)) == PLATE


def test_delivery_accepts_only_plates():
    state = parse_kitchen("---\n*1/\n---\n")
    state = state.replace(agents=(AgentState((1, 1), TOMATO_CHOPPED),))
    after, events = steps(state, (WEST,))
    assert events == []
    assert after.agents[0].holding == TOMATO_CHOPPED

    plated = plate_item(Food("Tomato", True))
    state = state.replace(agents=(AgentState((1, 1), plated),))
    after, events = steps(state, (WEST,))
    assert events == [Event("deliver", 0, plated, (0, 1))]
    assert after.delivered == (plated,)
    assert after.agents[0].holding is None


def test_delivered_items_cannot_be_taken_back():
    plated = plate_item(Food("Tomato", True))
    state = parse_kitchen("---\n*1/\n---\n").replace(delivered=(plated,))
    after, events = steps(state, (WEST,))
    assert events == []
    assert after.delivered == (plated,)


def test_pure_movement_shares_board_tuple():
    state = parse_kitchen(FACING_ROW)
    after = step(state, (STAY, STAY))
    assert after.board is state.board
    assert after.clock == 1


# ---------------------------------------------------------------------------
# state identity and termination


def test_clock_excluded_from_equality_and_hash():
    state = row_state()
    later = state.replace(clock=57)
    assert state == later
    assert hash(state) == hash(later)
    assert len({state: 1, later: 2}) == 1


def test_goal_delivered_is_a_multiset_check():
    plated = plate_item(Food("Tomato", True))
    state = row_state().replace(delivered=(plated,))
    assert goal_delivered(state, (plated,))
    assert not goal_delivered(state, (plated, plated))
    assert goal_delivered(state.replace(delivered=(plated, plated)), (plated, plated))


def test_is_terminal_on_timeout():
    state = row_state()
    assert not is_terminal(state, (PLATE,), max_steps=10)
    assert is_terminal(state.replace(clock=10), (PLATE,), max_steps=10)


# ---------------------------------------------------------------------------
# invariants under random play


def food_census(state):
    counts = collections.Counter()
    for item in state.all_items():
        counts["plates"] += item.plate
        for food in item.foods:
            counts[food.kind] += 1
    return counts


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(ACTIONS), st.sampled_from(ACTIONS)),
                max_size=30))
def test_random_play_invariants(action_rows):
    state = parse_kitchen("-tl--p-\n*  -  /\n-1 - 2-\n-  -  -\n-------\n")
    census = food_census(state)
    for t, row in enumerate(action_rows):
        state = step(state, row)
        assert state.clock == t + 1
        assert food_census(state) == census
        positions = [a.pos for a in state.agents]
        assert len(set(positions)) == len(positions)
        assert all(state.kitchen.is_floor(p) for p in positions)
        assert all(not state.kitchen.is_floor(p) for p, _ in state.board)
