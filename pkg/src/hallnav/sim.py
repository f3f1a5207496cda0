"""2D corridor world with a kinematic car and a raycast grayscale camera.

World frame: x east in meters, y north in meters, heading 0 = east and
counterclockwise positive, so +omega turns the car left. Row 0 of a map
file is the northern edge of the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from hallnav.actions import ActionLabel
from hallnav.imaging import GrayImage, round_half_up

DEFAULT_CELL_SIZE = 0.5

SPEED_FULL = 0.6
SPEED_SLIGHT = 0.3
TURN_RATE = 0.9

# Per action: (forward speed m/s, turn rate rad/s). Reversing flips the turn
# sense, mirroring front-axle steering geometry.
ACTION_MOTION = {
    ActionLabel.BACKWARDS_LEFT: (-SPEED_FULL, -TURN_RATE),
    ActionLabel.BACKWARDS: (-SPEED_FULL, 0.0),
    ActionLabel.BACKWARDS_RIGHT: (-SPEED_FULL, TURN_RATE),
    ActionLabel.SLIGHTLY_FORWARDS: (SPEED_SLIGHT, 0.0),
    ActionLabel.STOP: (0.0, 0.0),
    ActionLabel.SLIGHTLY_BACKWARDS: (-SPEED_SLIGHT, 0.0),
    ActionLabel.FORWARDS_LEFT: (SPEED_FULL, TURN_RATE),
    ActionLabel.FORWARDS: (SPEED_FULL, 0.0),
    ActionLabel.FORWARDS_RIGHT: (SPEED_FULL, -TURN_RATE),
}

_HEADING_CHARS = {">": 0.0, "^": math.pi / 2, "<": math.pi, "v": 3 * math.pi / 2}

# Oracle thresholds (meters): back off when the center ray is short, steer
# toward the more open side when the side rays disagree enough.
ORACLE_BACKOFF = 0.4
ORACLE_SIDE_DIFF = 0.3
ORACLE_SIDE_ANGLE = math.radians(30.0)

# Collision sampling granularity along the motion segment, meters.
MARCH_STEP = 0.01


class MapError(ValueError):
    """Malformed map text; carries the (row, col) it was detected at."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        if row is not None:
            message = f"{message} at row {row}" + ("" if col is None else f", col {col}")
        super().__init__(message)
        self.row = row
        self.col = col


@dataclass(frozen=True)
class WorldMap:
    """Occupancy grid; cells[row][col] is True for Wall."""

    cells: np.ndarray
    cell_size: float
    start: tuple[int, int]
    start_heading: float

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @property
    def width_m(self) -> float:
        return self.cols * self.cell_size

    @property
    def height_m(self) -> float:
        return self.rows * self.cell_size

    def cell_at(self, x: float, y: float) -> tuple[int, int]:
        col = int(math.floor(x / self.cell_size))
        row = self.rows - 1 - int(math.floor(y / self.cell_size))
        return row, col

    def is_wall(self, x: float, y: float) -> bool:
        row, col = self.cell_at(x, y)
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return True
        return bool(self.cells[row, col])

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = (col + 0.5) * self.cell_size
        y = (self.rows - 1 - row + 0.5) * self.cell_size
        return x, y

    def start_state(self) -> "CarState":
        x, y = self.cell_center(*self.start)
        return CarState(x=x, y=y, heading=self.start_heading, speed=0.0)


@dataclass(frozen=True)
class CarState:
    x: float
    y: float
    heading: float
    speed: float = 0.0


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 48
    fov: float = math.radians(66.0)
    max_depth: float = 5.0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError(f"frame must be at least 8x8, got {self.width}x{self.height}")
        if not 0 < self.fov < math.pi:
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")
        if self.max_depth <= 0:
            raise ValueError(f"max_depth must be positive, got {self.max_depth}")


def load_map(text: str, cell_size: float = DEFAULT_CELL_SIZE) -> WorldMap:
    """Parse map text: rows of '#' (wall), '.' (free) and exactly one 'S'
    (start), with an optional final line giving the start heading as one of
    > < ^ v (default east)."""
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    heading = 0.0
    if lines and lines[-1].strip() in _HEADING_CHARS:
        heading = _HEADING_CHARS[lines[-1].strip()]
        lines = lines[:-1]
    if len(lines) < 3:
        raise MapError(f"map needs at least 3 rows, got {len(lines)}")
    width = len(lines[0])
    if width < 3:
        raise MapError(f"map needs at least 3 columns, got {width}")
    start = None
    grid = np.zeros((len(lines), width), dtype=bool)
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(
                f"row has {len(line)} columns, expected {width}", row=r, col=len(line)
            )
        for c, ch in enumerate(line):
            if ch == "#":
                grid[r, c] = True
            elif ch == "S":
                if start is not None:
                    raise MapError("multiple starts", row=r, col=c)
                start = (r, c)
            elif ch != ".":
                raise MapError(f"unknown map character {ch!r}", row=r, col=c)
    if start is None:
        raise MapError("no start cell")
    for r in range(len(lines)):
        for c in range(width):
            if (r in (0, len(lines) - 1) or c in (0, width - 1)) and not grid[r, c]:
                raise MapError("open boundary", row=r, col=c)
    return WorldMap(cells=grid, cell_size=cell_size, start=start, start_heading=heading)


def cast_ray(world: WorldMap, x: float, y: float, angle: float) -> tuple[float, str]:
    """Distance from (x, y) along angle to the first wall, via grid DDA.

    Returns (distance, side) where side is 'x' for an east/west-facing
    surface (crossing a vertical gridline) and 'y' otherwise. The closed
    boundary guarantees a hit.
    """
    c = world.cell_size
    dx = math.cos(angle)
    dy = math.sin(angle)
    ix = int(math.floor(x / c))
    iy = int(math.floor(y / c))

    if dx > 0:
        step_x, t_max_x = 1, ((ix + 1) * c - x) / dx
    elif dx < 0:
        step_x, t_max_x = -1, (ix * c - x) / dx
    else:
        step_x, t_max_x = 0, math.inf
    if dy > 0:
        step_y, t_max_y = 1, ((iy + 1) * c - y) / dy
    elif dy < 0:
        step_y, t_max_y = -1, (iy * c - y) / dy
    else:
        step_y, t_max_y = 0, math.inf
    t_delta_x = c / abs(dx) if dx != 0 else math.inf
    t_delta_y = c / abs(dy) if dy != 0 else math.inf

    while True:
        if t_max_x <= t_max_y:
            ix += step_x
            dist, side = t_max_x, "x"
            t_max_x += t_delta_x
        else:
            iy += step_y
            dist, side = t_max_y, "y"
            t_max_y += t_delta_y
        row = world.rows - 1 - iy
        if not (0 <= row < world.rows and 0 <= ix < world.cols):
            return dist, side  # off-grid counts as a hit; cannot happen on closed maps
        if world.cells[row, ix]:
            return dist, side


def step(
    world: WorldMap, state: CarState, action: ActionLabel, dt: float
) -> tuple[CarState, bool]:
    """Advance the car by one action for dt seconds.

    Integrates x += v cos(h) dt, y += v sin(h) dt, h += omega dt. If the
    motion segment touches a wall cell (sampled every 1 cm, endpoint
    included) the position is left unchanged and the collision flag is set;
    heading still advances so a blocked car can steer free.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, omega = ACTION_MOTION[ActionLabel(action)]
    nx = state.x + v * math.cos(state.heading) * dt
    ny = state.y + v * math.sin(state.heading) * dt
    nh = (state.heading + omega * dt) % (2 * math.pi)

    collided = False
    travel = math.hypot(nx - state.x, ny - state.y)
    if travel > 0:
        samples = max(1, int(math.ceil(travel / MARCH_STEP)))
        for i in range(1, samples + 1):
            t = i / samples
            if world.is_wall(state.x + (nx - state.x) * t, state.y + (ny - state.y) * t):
                collided = True
                break
    if collided:
        nx, ny = state.x, state.y
    return CarState(x=nx, y=ny, heading=nh, speed=v), collided


_CEILING = 25
_FLOOR_NEAR = 120
_FLOOR_FAR = 40
_SIDE_FACTOR = 0.8


def render(world: WorldMap, state: CarState, cfg: RenderConfig) -> GrayImage:
    """Raycast a first-person grayscale frame.

    One ray per column across the fov (pixel centers). Wall slab height is
    inversely proportional to the perpendicular hit distance; intensity is
    round(255 * max(0, 1 - d / max_depth)) from the euclidean distance,
    scaled by 0.8 on east/west-facing surfaces. Ceiling is constant 25, the
    floor fades 40 -> 120 from horizon to bottom edge.
    """
    w, h = cfg.width, cfg.height
    frame = np.empty((h, w), dtype=np.uint8)
    horizon = h // 2
    frame[:horizon, :] = _CEILING
    n_floor = h - horizon
    t = np.arange(n_floor) / (n_floor - 1) if n_floor > 1 else np.ones(1)
    frame[horizon:, :] = round_half_up(_FLOOR_FAR + t * (_FLOOR_NEAR - _FLOOR_FAR))[
        :, None
    ].astype(np.uint8)

    for i in range(w):
        offset = cfg.fov / 2 - (i + 0.5) * cfg.fov / w
        dist, side = cast_ray(world, state.x, state.y, state.heading + offset)
        if dist >= cfg.max_depth:
            continue
        shade = round_half_up(255.0 * max(0.0, 1.0 - dist / cfg.max_depth))
        if side == "x":
            shade = round_half_up(shade * _SIDE_FACTOR)
        perp = dist * math.cos(offset)
        slab = h * world.cell_size / max(perp, 1e-9)
        top = max(0, int(round_half_up(h / 2 - slab / 2)))
        bottom = min(h, int(round_half_up(h / 2 + slab / 2)))
        frame[top:bottom, i] = int(shade)
    return GrayImage.from_array(frame)


def oracle_policy(world: WorldMap, state: CarState) -> ActionLabel:
    """Scripted driver: three rays (left 30 deg, center, right 30 deg).

    Backs off when the center ray is under 0.4 m, otherwise steers toward
    the side whose ray is longer by more than 0.3 m, otherwise goes
    straight.
    """
    left, _ = cast_ray(world, state.x, state.y, state.heading + ORACLE_SIDE_ANGLE)
    center, _ = cast_ray(world, state.x, state.y, state.heading)
    right, _ = cast_ray(world, state.x, state.y, state.heading - ORACLE_SIDE_ANGLE)
    if center < ORACLE_BACKOFF:
        return ActionLabel.BACKWARDS
    if left - right > ORACLE_SIDE_DIFF:
        return ActionLabel.FORWARDS_LEFT
    if right - left > ORACLE_SIDE_DIFF:
        return ActionLabel.FORWARDS_RIGHT
    return ActionLabel.FORWARDS


def mirror_map(world: WorldMap) -> WorldMap:
    """Mirror the world east-west (columns reversed); used by symmetry tests."""
    cells = world.cells[:, ::-1].copy()
    start = (world.start[0], world.cols - 1 - world.start[1])
    heading = (math.pi - world.start_heading) % (2 * math.pi)
    return WorldMap(
        cells=cells, cell_size=world.cell_size, start=start, start_heading=heading
    )
