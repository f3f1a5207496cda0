"""Closed-loop driving: capture, preprocess, predict, actuate, repeat.

Preprocessing at drive time is exactly the training preprocessing (resize
to the model input, histogram equalization, scale to [0,1]); skew between
the two is the classic way these policies fall apart in the field.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hallnav import datapipe, imaging, protocol, sim
from hallnav.actions import ActionLabel
from hallnav.cnn.network import ModelConfig, predict


@dataclass
class StepRecord:
    step: int
    action: ActionLabel
    collision: bool
    packet: bytes


@dataclass
class DriveReport:
    steps: int
    collisions: int
    distance: float
    final_state: sim.CarState
    log: list[StepRecord] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "steps": self.steps,
                "collisions": self.collisions,
                "distance": round(self.distance, 6),
                "final_state": {
                    "x": self.final_state.x,
                    "y": self.final_state.y,
                    "heading": self.final_state.heading,
                },
                "actions": [int(r.action) for r in self.log],
            },
            indent=2,
        )

    def write_log_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "action", "collision"])
            for r in self.log:
                writer.writerow([r.step, int(r.action), int(r.collision)])


def preprocess_frame(frame: imaging.GrayImage, width: int, height: int) -> np.ndarray:
    """Camera frame -> one model input channel, matching training."""
    resized = imaging.resize(frame, width, height)
    return datapipe.image_to_channel(imaging.equalize_hist(resized))


def drive(
    params: dict,
    cfg: ModelConfig,
    world: sim.WorldMap,
    start: sim.CarState,
    steps: int,
    rate_hz: float = 4.0,
    seed: int = 0,
    render_cfg: sim.RenderConfig | None = None,
) -> DriveReport:
    """Drive `steps` control ticks at rate_hz from `start`.

    Each tick renders the camera, preprocesses, predicts, takes the argmax
    action (ties to the lowest index), logs the encoded motor packet, and
    steps the simulation by 1/rate_hz. Inference is deterministic; the
    seed is accepted for interface stability but no randomness remains
    once dropout is disabled.
    """
    del seed
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    channels, height, width = cfg.in_shape
    render_cfg = render_cfg or sim.RenderConfig()
    dt = 1.0 / rate_hz
    state = start
    buffer: list[np.ndarray] = []
    report = DriveReport(steps=0, collisions=0, distance=0.0, final_state=start)
    for i in range(steps):
        channel = preprocess_frame(sim.render(world, state, render_cfg), width, height)
        if channels == 1:
            tensor = channel[None]
        else:
            if not buffer:
                buffer = [channel] * channels  # cold start: repeat first frame
            else:
                buffer = buffer[1:] + [channel]
            tensor = np.stack(buffer)
        confidences = predict(params, cfg, tensor)
        action = ActionLabel(int(np.argmax(confidences)))
        packet = protocol.encode_packet(
            protocol.action_to_motors(action, int(i * 1000 / rate_hz))
        )
        new_state, collided = sim.step(world, state, action, dt)
        report.log.append(
            StepRecord(step=i, action=action, collision=collided, packet=packet)
        )
        report.steps += 1
        report.collisions += int(collided)
        report.distance += float(
            np.hypot(new_state.x - state.x, new_state.y - state.y)
        )
        state = new_state
    report.final_state = state
    return report
