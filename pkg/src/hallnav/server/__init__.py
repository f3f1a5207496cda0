"""Recording server: ingestion, live teleoperation, dataset export."""

from hallnav.server.app import create_app
from hallnav.server.store import ExportOptions, SessionStore, StoreError
from hallnav.server.teleop import TeleopLoop

__all__ = ["create_app", "ExportOptions", "SessionStore", "StoreError", "TeleopLoop"]
