from __future__ import annotations

import pytest

from gridkitchen.recipes import KNIFE_OPERAND, make_subtask
from gridkitchen.world import parse_item, parse_kitchen

# Small kitchens sized so their full state space enumerates in well under a
# second.  CHOP_3X3 and SERVE_3X3 have a 3x3 floor; CHOP_5X5 a 5x5 floor;
# CORRIDOR squeezes everything into two walkable cells.

CHOP_3X3 = """\
-t---
-   /
*   -
-1  -
-----
"""

SERVE_3X3 = """\
-tp--
-   -
*   /
-  1-
-----
"""

CHOP_5X5 = """\
-t-----
-     -
-     -
*     /
-     -
-  1  -
-------
"""

CORRIDOR = """\
-t-
-1-
* /
---
"""

HANDOFF_DIVIDER = """\
-t---
* - /
-1-2-
-----
"""

TOMATO = parse_item("Tomato.unchopped")
TOMATO_CHOPPED = parse_item("Tomato.chopped")
PLATE = parse_item("Plate[]")
PLATED_TOMATO = parse_item("Plate[Tomato.chopped]")

CHOP_TOMATO = make_subtask(TOMATO, KNIFE_OPERAND)
PLATE_TOMATO = make_subtask(TOMATO_CHOPPED, PLATE)


@pytest.fixture
def chop_3x3():
    return parse_kitchen(CHOP_3X3)


@pytest.fixture
def serve_3x3():
    return parse_kitchen(SERVE_3X3)


@pytest.fixture
def chop_5x5():
    return parse_kitchen(CHOP_5X5)


@pytest.fixture
def corridor():
    return parse_kitchen(CORRIDOR)


@pytest.fixture
def handoff_divider():
    return parse_kitchen(HANDOFF_DIVIDER)
