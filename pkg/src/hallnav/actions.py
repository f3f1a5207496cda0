"""The 9 discrete driving actions shared by every stage of the stack."""

from __future__ import annotations

import enum


class ActionLabel(enum.IntEnum):
    """Discrete driving command, one per joystick sector."""

    BACKWARDS_LEFT = 0
    BACKWARDS = 1
    BACKWARDS_RIGHT = 2
    SLIGHTLY_FORWARDS = 3
    STOP = 4
    SLIGHTLY_BACKWARDS = 5
    FORWARDS_LEFT = 6
    FORWARDS = 7
    FORWARDS_RIGHT = 8


# Horizontal mirror: swaps the left/right variants, fixes everything else.
MIRROR_LABEL = {
    ActionLabel.BACKWARDS_LEFT: ActionLabel.BACKWARDS_RIGHT,
    ActionLabel.BACKWARDS: ActionLabel.BACKWARDS,
    ActionLabel.BACKWARDS_RIGHT: ActionLabel.BACKWARDS_LEFT,
    ActionLabel.SLIGHTLY_FORWARDS: ActionLabel.SLIGHTLY_FORWARDS,
    ActionLabel.STOP: ActionLabel.STOP,
    ActionLabel.SLIGHTLY_BACKWARDS: ActionLabel.SLIGHTLY_BACKWARDS,
    ActionLabel.FORWARDS_LEFT: ActionLabel.FORWARDS_RIGHT,
    ActionLabel.FORWARDS: ActionLabel.FORWARDS,
    ActionLabel.FORWARDS_RIGHT: ActionLabel.FORWARDS_LEFT,
}
