"""Desk-scale imitation-learning driving stack.

A raycast corridor simulator stands in for the car and its camera, a
teleoperation server collects timestamp-paired demonstrations, and a
from-scratch convolutional network learns the 9-way action mapping that
the autopilot then drives closed-loop.
"""

from hallnav.actions import ActionLabel

__all__ = ["ActionLabel"]
__version__ = "0.1.0"
