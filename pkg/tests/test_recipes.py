"""Recipe compilation, sub-task semantics, and allocation spaces."""
import pytest

from gridkitchen.recipes import (
    DELIVERY_OPERAND, KNIFE_OPERAND, Recipe, TaskAllocation, achieved_exactly,
    active_subtasks, allocation_space, compile_subtasks, completion_fraction,
    get_recipe, is_completed, make_subtask, parse_recipe, parse_subtask,
    preconditions_met,
)
from gridkitchen.world import AgentState, Item, food_item, parse_item, parse_kitchen

TOMATO_RAW = food_item("Tomato")
TOMATO_CHOPPED = food_item("Tomato", chopped=True)
LETTUCE_RAW = food_item("Lettuce")
LETTUCE_CHOPPED = food_item("Lettuce", chopped=True)
PLATE = Item(True)

SALAD_KITCHEN = """\
-tlp-
*   /
-1  -
-----
"""

TWO_PLATE_KITCHEN = """\
-tlpp-
*    /
-1   -
------
"""


def names(tasks):
    return tuple(t.name for t in tasks)


# ---------------------------------------------------------------------------
# sub-task identity and naming


def test_subtasks_are_interned_by_name():
    a = make_subtask(TOMATO_RAW, KNIFE_OPERAND)
    b = parse_subtask("Merge(Tomato.unchopped, Knife)")
    assert a is b
    assert a.is_chop and not a.is_delivery


def test_make_subtask_orders_operands_canonically():
    assert make_subtask(PLATE, TOMATO_CHOPPED) is make_subtask(TOMATO_CHOPPED, PLATE)
    assert (make_subtask(TOMATO_CHOPPED, LETTUCE_CHOPPED)
            is make_subtask(LETTUCE_CHOPPED, TOMATO_CHOPPED))
    assert make_subtask(TOMATO_CHOPPED, LETTUCE_CHOPPED).x is LETTUCE_CHOPPED


def test_subtask_results():
    assert make_subtask(TOMATO_RAW, KNIFE_OPERAND).result() is TOMATO_CHOPPED
    assert (make_subtask(TOMATO_CHOPPED, PLATE).result()
            is parse_item("Plate[Tomato.chopped]"))
    plated = parse_item("Plate[Tomato.chopped]")
    assert make_subtask(plated, DELIVERY_OPERAND).result() is plated


def test_parse_subtask_rejects_malformed_names():
    for bad in ("Chop(Tomato)", "Merge(Tomato.unchopped)", "Merge()"):
        with pytest.raises(ValueError):
            parse_subtask(bad)


# ---------------------------------------------------------------------------
# recipes


def test_builtin_recipes():
    assert get_recipe("tomato").goal == (parse_item("Plate[Tomato.chopped]"),)
    assert get_recipe("salad").goal == (
        parse_item("Plate[Lettuce.chopped, Tomato.chopped]"),)
    assert len(get_recipe("tomato_lettuce").goal) == 2
    with pytest.raises(KeyError):
        get_recipe("soup")


def test_parse_recipe_text():
    recipe = parse_recipe("""
    # lunch special
    name: demo
    deliver: Plate[Tomato.chopped]
    deliver: Plate[Lettuce.chopped]
    """)
    assert recipe.name == "demo"
    assert recipe.goal == get_recipe("tomato_lettuce").goal


def test_parse_recipe_requires_name_and_goal():
    with pytest.raises(ValueError):
        parse_recipe("name: empty\n")


# ---------------------------------------------------------------------------
# compilation: a frozen task set per recipe on a reference kitchen


def test_compile_tomato_tasks():
    state = parse_kitchen(SALAD_KITCHEN)
    tasks = compile_subtasks(state, get_recipe("tomato"))
    assert names(tasks) == (
        "Merge(Plate[Tomato.chopped], Delivery)",
        "Merge(Tomato.chopped, Plate[])",
        "Merge(Tomato.unchopped, Knife)",
    )


def test_compile_salad_tasks_cover_all_assembly_orders():
    state = parse_kitchen(SALAD_KITCHEN)
    tasks = compile_subtasks(state, get_recipe("salad"))
    assert names(tasks) == (
        "Merge(Lettuce.chopped, Plate[Tomato.chopped])",
        "Merge(Lettuce.chopped, Plate[])",
        "Merge(Lettuce.chopped, Tomato.chopped)",
        "Merge(Lettuce.unchopped, Knife)",
        "Merge(Plate[Lettuce.chopped, Tomato.chopped], Delivery)",
        "Merge(Tomato.chopped, Plate[Lettuce.chopped])",
        "Merge(Tomato.chopped, Plate[])",
        "Merge(Tomato.unchopped, Knife)",
        "Merge([Lettuce.chopped, Tomato.chopped], Plate[])",
    )


def test_compile_two_dish_tasks_never_cross_contaminate():
    state = parse_kitchen(TWO_PLATE_KITCHEN)
    tasks = compile_subtasks(state, get_recipe("tomato_lettuce"))
    assert names(tasks) == (
        "Merge(Lettuce.chopped, Plate[])",
        "Merge(Lettuce.unchopped, Knife)",
        "Merge(Plate[Lettuce.chopped], Delivery)",
        "Merge(Plate[Tomato.chopped], Delivery)",
        "Merge(Tomato.chopped, Plate[])",
        "Merge(Tomato.unchopped, Knife)",
    )


def test_compile_fails_when_goal_unreachable():
    state = parse_kitchen("-t-p-\n*1  -\n-----\n")  # no knife anywhere
    with pytest.raises(ValueError, match="unreachable"):
        compile_subtasks(state, get_recipe("tomato"))


# ---------------------------------------------------------------------------
# completion and preconditions


def with_items(*items):
    state = parse_kitchen(SALAD_KITCHEN)
    spots = [(1, 0), (2, 0), (3, 0), (2, 3)]
    return state.replace(board=tuple(zip(spots, items)))


def test_completed_is_loose_achieved_is_exact():
    plate_task = make_subtask(TOMATO_CHOPPED, PLATE)
    full = parse_item("Plate[Lettuce.chopped, Tomato.chopped]")
    state = with_items(full)
    # The plated tomato was consumed into the salad: still "completed", but
    # no longer exactly present.
    assert is_completed(plate_task, state)
    assert not achieved_exactly(plate_task, state)


def test_delivery_completion_only_counts_delivered_items():
    dish = parse_item("Plate[Tomato.chopped]")
    task = make_subtask(dish, DELIVERY_OPERAND)
    on_counter = with_items(dish)
    assert not is_completed(task, on_counter)
    delivered = on_counter.replace(board=(), delivered=(dish,))
    assert is_completed(task, delivered)
    assert achieved_exactly(task, delivered)


def test_preconditions_need_exact_standalone_operands():
    task = make_subtask(TOMATO_CHOPPED, PLATE)
    assert preconditions_met(task, with_items(TOMATO_CHOPPED, PLATE))
    # A tomato already on a plate is not a standalone chopped tomato.
    assert not preconditions_met(task, with_items(parse_item("Plate[Tomato.chopped]"), PLATE))
    assert not preconditions_met(task, with_items(TOMATO_CHOPPED))


def test_preconditions_see_held_items():
    task = make_subtask(TOMATO_CHOPPED, PLATE)
    state = with_items(PLATE)
    state = state.replace(agents=(AgentState(state.agents[0].pos, TOMATO_CHOPPED),))
    assert preconditions_met(task, state)


def test_preconditions_false_once_result_exists():
    task = make_subtask(TOMATO_RAW, KNIFE_OPERAND)
    assert not preconditions_met(task, with_items(TOMATO_RAW, TOMATO_CHOPPED))


def test_delivered_items_are_out_of_play():
    dish = parse_item("Plate[Tomato.chopped]")
    task = make_subtask(dish, DELIVERY_OPERAND)
    state = with_items(dish).replace(board=(), delivered=(dish,))
    assert not preconditions_met(task, state)


def test_active_subtasks_and_completion_fraction():
    state = parse_kitchen(SALAD_KITCHEN)
    tasks = compile_subtasks(state, get_recipe("salad"))
    active = active_subtasks(tasks, state)
    assert names(active) == (
        "Merge(Lettuce.unchopped, Knife)",
        "Merge(Tomato.unchopped, Knife)",
    )
    assert completion_fraction(tasks, state) == 0.0
    assert completion_fraction((), state) == 1.0


# ---------------------------------------------------------------------------
# allocations


CHOP_T = make_subtask(TOMATO_RAW, KNIFE_OPERAND)
CHOP_L = make_subtask(LETTUCE_RAW, KNIFE_OPERAND)


def test_allocations_are_interned():
    a = TaskAllocation((0, 1), (CHOP_T, CHOP_T))
    b = TaskAllocation((0, 1), (CHOP_T, CHOP_T))
    assert a is b
    assert a.signature == ("0:Merge(Tomato.unchopped, Knife)"
                           "|1:Merge(Tomato.unchopped, Knife)")


def test_task_of_and_teammates():
    alloc = TaskAllocation((0, 1, 2), (CHOP_T, CHOP_L, CHOP_T))
    assert alloc.task_of(1) is CHOP_L
    assert alloc.task_of(7) is None
    assert alloc.teammates(0) == (2,)
    assert alloc.teammates(1) == ()


def test_full_space_allows_sharing():
    space = allocation_space((CHOP_T, CHOP_L), 2, "bd")
    assert len(space) == 4
    assert TaskAllocation((0, 1), (CHOP_T, CHOP_T)) in space
    for kind in ("up", "fb"):
        assert allocation_space((CHOP_T, CHOP_L), 2, kind) == space


def test_divide_and_conquer_space_is_injective():
    space = allocation_space((CHOP_T, CHOP_L), 2, "dc")
    assert len(space) == 2
    for alloc in space:
        assigned = [t for t in alloc.tasks if t is not None]
        assert len(assigned) == len(set(assigned))
    # More agents than tasks: the leftover agent idles.
    space = allocation_space((CHOP_T,), 2, "dc")
    assert {a.signature for a in space} == {
        "0:Merge(Tomato.unchopped, Knife)|1:None",
        "0:None|1:Merge(Tomato.unchopped, Knife)",
    }


def test_greedy_space_covers_only_self():
    space = allocation_space((CHOP_T, CHOP_L), 3, "greedy", self_id=2)
    assert {a.signature for a in space} == {
        "2:Merge(Tomato.unchopped, Knife)",
        "2:Merge(Lettuce.unchopped, Knife)",
    }
    assert space[0].task_of(0) is None


def test_empty_active_set_yields_unassigned_allocation():
    (alloc,) = allocation_space((), 2, "bd")
    assert alloc.tasks == (None, None)
    (alloc,) = allocation_space((), 2, "greedy", self_id=1)
    assert alloc.tasks == (None,)
