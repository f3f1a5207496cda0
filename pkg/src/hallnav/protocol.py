"""Bit-exact codec for timestamped three-motor command packets.

Wire format (19 bytes):

    [0xA5] [timestamp_ms: u64 LE] [3 x (motor_id, direction, speed)] [checksum]

Motor triples appear in motor_id order (1 rear drive, 2 front drive,
3 steering). The checksum is the two's complement of the low 8 bits of the
sum of the preceding 18 bytes, so the 19 bytes sum to 0 mod 256.
See docs/protocol.md for a worked example.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from hallnav.actions import ActionLabel

MAGIC = 0xA5
PACKET_LEN = 19

REAR_DRIVE = 1
FRONT_DRIVE = 2
STEERING = 3

FULL_SPEED = 200
SLIGHT_SPEED = 100
STEER_SPEED = 255


class Direction(enum.IntEnum):
    RELEASE = 0
    FORWARD = 1
    BACKWARD = 2


class ProtocolError(ValueError):
    """Decode/encode failure with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class MotorCommand:
    motor_id: int
    direction: Direction
    speed: int

    def __post_init__(self):
        if self.motor_id not in (REAR_DRIVE, FRONT_DRIVE, STEERING):
            raise ProtocolError("motor_id", f"unknown motor_id {self.motor_id}")
        if not 0 <= self.speed <= 255:
            raise ProtocolError("speed", f"speed {self.speed} outside 0..255")
        if self.direction == Direction.RELEASE and self.speed != 0:
            raise ProtocolError(
                "speed", f"released motor {self.motor_id} must have speed 0"
            )


@dataclass(frozen=True)
class CommandPacket:
    timestamp_ms: int
    commands: tuple[MotorCommand, MotorCommand, MotorCommand]

    def __post_init__(self):
        if not 0 <= self.timestamp_ms < 2**64:
            raise ProtocolError("timestamp", f"timestamp {self.timestamp_ms} not u64")
        ids = sorted(c.motor_id for c in self.commands)
        if ids != [REAR_DRIVE, FRONT_DRIVE, STEERING]:
            raise ProtocolError("motor_id", f"need motors {{1,2,3}} once each, got {ids}")

    def command_for(self, motor_id: int) -> MotorCommand:
        for c in self.commands:
            if c.motor_id == motor_id:
                return c
        raise KeyError(motor_id)


@dataclass(frozen=True)
class CommandBatch:
    packets: tuple[CommandPacket, ...]

    def __post_init__(self):
        ts = [p.timestamp_ms for p in self.packets]
        for i in range(1, len(ts)):
            if ts[i] < ts[i - 1]:
                raise ProtocolError(
                    "order", f"timestamps decrease at packet {i}: {ts[i - 1]} -> {ts[i]}"
                )


def encode_packet(p: CommandPacket) -> bytes:
    body = struct.pack("<BQ", MAGIC, p.timestamp_ms)
    for motor_id in (REAR_DRIVE, FRONT_DRIVE, STEERING):
        c = p.command_for(motor_id)
        body += struct.pack("BBB", c.motor_id, int(c.direction), c.speed)
    checksum = (-sum(body)) & 0xFF
    return body + bytes([checksum])


def decode_packet(b: bytes) -> CommandPacket:
    """Inverse of encode_packet. Raises ProtocolError with a distinct code
    for each failure mode: length, magic, checksum, motor_id, direction,
    speed."""
    if len(b) != PACKET_LEN:
        raise ProtocolError("length", f"packet is {len(b)} bytes, expected {PACKET_LEN}")
    if b[0] != MAGIC:
        raise ProtocolError("magic", f"bad magic byte 0x{b[0]:02X}")
    if sum(b) & 0xFF != 0:
        raise ProtocolError("checksum", "checksum mismatch")
    timestamp_ms = struct.unpack_from("<Q", b, 1)[0]
    commands = []
    seen = set()
    for i in range(3):
        motor_id, direction, speed = b[9 + 3 * i : 12 + 3 * i]
        if direction > 2:
            raise ProtocolError("direction", f"direction byte {direction} > 2")
        if motor_id in seen:
            raise ProtocolError("motor_id", f"duplicate motor_id {motor_id}")
        seen.add(motor_id)
        commands.append(MotorCommand(motor_id, Direction(direction), speed))
    return CommandPacket(timestamp_ms=timestamp_ms, commands=tuple(commands))


# Longitudinal sense and speed per action; steering is bang-bang because the
# front bracket carries a plain DC motor, not a servo.
_DRIVE_TABLE = {
    ActionLabel.BACKWARDS_LEFT: (Direction.BACKWARD, FULL_SPEED),
    ActionLabel.BACKWARDS: (Direction.BACKWARD, FULL_SPEED),
    ActionLabel.BACKWARDS_RIGHT: (Direction.BACKWARD, FULL_SPEED),
    ActionLabel.SLIGHTLY_FORWARDS: (Direction.FORWARD, SLIGHT_SPEED),
    ActionLabel.STOP: (Direction.RELEASE, 0),
    ActionLabel.SLIGHTLY_BACKWARDS: (Direction.BACKWARD, SLIGHT_SPEED),
    ActionLabel.FORWARDS_LEFT: (Direction.FORWARD, FULL_SPEED),
    ActionLabel.FORWARDS: (Direction.FORWARD, FULL_SPEED),
    ActionLabel.FORWARDS_RIGHT: (Direction.FORWARD, FULL_SPEED),
}

_STEER_TABLE = {
    ActionLabel.BACKWARDS_LEFT: (Direction.FORWARD, STEER_SPEED),
    ActionLabel.FORWARDS_LEFT: (Direction.FORWARD, STEER_SPEED),
    ActionLabel.BACKWARDS_RIGHT: (Direction.BACKWARD, STEER_SPEED),
    ActionLabel.FORWARDS_RIGHT: (Direction.BACKWARD, STEER_SPEED),
}


def action_to_motors(action: ActionLabel, timestamp_ms: int) -> CommandPacket:
    """Map a discrete action to the three motor commands it stands for."""
    drive_dir, drive_speed = _DRIVE_TABLE[ActionLabel(action)]
    steer_dir, steer_speed = _STEER_TABLE.get(
        ActionLabel(action), (Direction.RELEASE, 0)
    )
    return CommandPacket(
        timestamp_ms=timestamp_ms,
        commands=(
            MotorCommand(REAR_DRIVE, drive_dir, drive_speed),
            MotorCommand(FRONT_DRIVE, drive_dir, drive_speed),
            MotorCommand(STEERING, steer_dir, steer_speed),
        ),
    )
