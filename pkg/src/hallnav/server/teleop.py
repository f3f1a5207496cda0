"""Live teleoperation: wall-clock tick loop between joystick and simulator.

The loop owns the session clock. Joystick posts are stamped on receipt with
milliseconds since the loop was created, which keeps frame and sample
timelines on one clock regardless of what the client believes the time is;
pairing tolerates far more skew than a LAN round trip introduces anyway.
"""

from __future__ import annotations

import threading
import time

from hallnav import datapipe, sim
from hallnav.datapipe import JoystickSample, TimestampedFrame
from hallnav.server.store import SessionStore, StoreError

DEFAULT_TICK_MS = 100


class TeleopLoop(threading.Thread):
    """One live controller driving one session at a fixed wall-clock rate.

    Each tick: take the latest joystick sample (Stop if none arrived yet),
    quantize, step the simulation by tick_ms of simulated time, render, and
    persist the frame at its nominal tick timestamp. Collisions are logged
    and the run continues.
    """

    daemon = True

    def __init__(
        self,
        store: SessionStore,
        session_id: str,
        world: sim.WorldMap,
        tick_ms: int = DEFAULT_TICK_MS,
        render_cfg: sim.RenderConfig | None = None,
    ):
        super().__init__(name=f"teleop-{session_id}")
        if tick_ms <= 0:
            raise ValueError(f"tick_ms must be positive, got {tick_ms}")
        self.store = store
        self.session_id = session_id
        self.world = world
        self.tick_ms = tick_ms
        self.render_cfg = render_cfg or sim.RenderConfig()
        self.state = world.start_state()
        self.controller: str | None = None
        self.collisions: list[int] = []
        self.ticks = 0
        self._t0 = time.monotonic()
        self._latest = (0.0, 0.0)
        self._mutex = threading.Lock()
        self._halt = threading.Event()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def submit(self, controller: str, x: float, y: float) -> JoystickSample:
        """Accept one joystick sample; returns it with the server stamp."""
        with self._mutex:
            if self.controller is None:
                self.controller = controller
            elif controller != self.controller:
                raise StoreError(
                    "controller_conflict",
                    f"session {self.session_id} already has a controller",
                )
            sample = JoystickSample(x=x, y=y, timestamp_ms=self.now_ms())
            self._latest = (x, y)
        self.store.append_sample(self.session_id, sample)
        return sample

    def run(self) -> None:
        k = 0
        while True:
            target = self._t0 + (k + 1) * self.tick_ms / 1000
            if self._halt.wait(max(0.0, target - time.monotonic())):
                return
            with self._mutex:
                x, y = self._latest
            action = datapipe.quantize_joystick(JoystickSample(x=x, y=y, timestamp_ms=0))
            self.state, collided = sim.step(
                self.world, self.state, action, self.tick_ms / 1000
            )
            ts = (k + 1) * self.tick_ms
            frame = sim.render(self.world, self.state, self.render_cfg)
            self.store.append_frame(
                self.session_id, TimestampedFrame(image=frame, timestamp_ms=ts)
            )
            if collided:
                self.collisions.append(ts)
            self.ticks = k + 1
            k += 1

    def stop(self) -> None:
        self._halt.set()
        if self.is_alive():
            self.join()
