"""Turn raw teleoperation recordings into labeled, balanced training data.

Pipeline stages: slice video into quarter-second frames, quantize joystick
positions into the 9 action sectors, pair frames with the nearest-in-time
sample, then optionally balance classes by duplication, stack frame
sequences into multi-channel examples, or add a Canny edge channel.
Datasets round-trip through a directory of PGM files plus a labels CSV
(see docs/dataset.md).
"""

from __future__ import annotations

import csv
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from hallnav import imaging
from hallnav.actions import MIRROR_LABEL, ActionLabel
from hallnav.imaging import GrayImage, round_half_up

DEFAULT_INTERVAL_MS = 250
DEFAULT_MAX_GAP_MS = 500
DEFAULT_STACK_N = 10
DEFAULT_TEST_FRACTION = 0.33

# Joystick sector geometry: dead zone, "slightly" ring, and the half-angle
# of the straight-ahead wedge. Published to clients at /api/quantizer.
DEAD_ZONE_RADIUS = 0.15
SLIGHT_RADIUS = 0.5
SECTOR_HALF_ANGLE_DEG = 30.0


@dataclass(frozen=True)
class TimestampedFrame:
    image: GrayImage
    timestamp_ms: int


@dataclass(frozen=True)
class JoystickSample:
    x: float
    y: float
    timestamp_ms: int

    def __post_init__(self):
        if abs(self.x) > 1 or abs(self.y) > 1:
            raise ValueError(f"joystick out of range: ({self.x}, {self.y})")


@dataclass(frozen=True)
class LabeledExample:
    """One training example: C x H x W tensor in [0,1] plus its action.

    origin identifies the pre-duplication source example so balanced
    copies can be kept on one side of a train/test split.
    """

    tensor: np.ndarray
    label: ActionLabel
    timestamp_ms: int
    origin: int

    def __post_init__(self):
        if self.tensor.ndim != 3:
            raise ValueError(f"tensor must be C x H x W, got shape {self.tensor.shape}")
        if self.tensor.min() < 0 or self.tensor.max() > 1:
            raise ValueError("tensor values must lie in [0, 1]")


@dataclass
class Dataset:
    examples: list[LabeledExample]
    shape: tuple[int, int, int]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for ex in self.examples:
            if tuple(ex.tensor.shape) != tuple(self.shape):
                raise ValueError(
                    f"example shape {ex.tensor.shape} != dataset shape {self.shape}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for ex in self.examples:
            counts[int(ex.label)] = counts.get(int(ex.label), 0) + 1
        return counts


def image_to_channel(img: GrayImage) -> np.ndarray:
    """GrayImage -> (H, W) float64 channel in [0, 1]."""
    return img.to_array().astype(np.float64) / 255.0


def channel_to_image(channel: np.ndarray) -> GrayImage:
    return GrayImage.from_array(
        np.clip(round_half_up(channel * 255.0), 0, 255).astype(np.uint8)
    )


def slice_video(
    frames,
    video_start_ms: int,
    interval_ms: int = DEFAULT_INTERVAL_MS,
) -> list[TimestampedFrame]:
    """Pick one frame per interval tick from a raw frame stream.

    `frames` is an iterable of (GrayImage, offset_ms) with strictly
    increasing offsets. For each tick k*interval_ms inside the video span
    the frame with the nearest offset wins (ties go to the earlier frame);
    a source frame is used at most once. Output timestamps are
    video_start_ms + chosen offset.
    """
    if interval_ms <= 0:
        raise ValueError(f"interval_ms must be positive, got {interval_ms}")
    items = list(frames)
    if not items:
        return []
    offsets = [off for _, off in items]
    for i in range(1, len(offsets)):
        if offsets[i] <= offsets[i - 1]:
            raise ValueError(
                f"frame offsets must be strictly increasing, got "
                f"{offsets[i - 1]} then {offsets[i]} at index {i}"
            )
    out: list[TimestampedFrame] = []
    used = -1  # index of the last consumed source frame
    tick = 0
    while tick <= offsets[-1]:
        j = bisect_left(offsets, tick)
        # candidates: offsets[j-1] (below tick) and offsets[j] (at/above);
        # on equal distance the earlier frame wins
        if j == 0:
            pick = 0
        elif j == len(offsets):
            pick = j - 1
        elif tick - offsets[j - 1] <= offsets[j] - tick:
            pick = j - 1
        else:
            pick = j
        if pick > used:
            img, off = items[pick]
            out.append(TimestampedFrame(image=img, timestamp_ms=video_start_ms + off))
            used = pick
        tick += interval_ms
    return out


def quantize_joystick(sample: JoystickSample) -> ActionLabel:
    """Map a joystick position to one of the 9 action sectors.

    A dead zone (r < 0.15) is Stop; the ring up to r = 0.5 is Slightly
    Forwards/Backwards by the sign of y; beyond that the angle from the
    forward axis picks straight/left/right, mirrored for reverse.
    """
    r = math.hypot(sample.x, sample.y)
    if r < DEAD_ZONE_RADIUS:
        return ActionLabel.STOP
    if r < SLIGHT_RADIUS:
        return (
            ActionLabel.SLIGHTLY_FORWARDS
            if sample.y >= 0
            else ActionLabel.SLIGHTLY_BACKWARDS
        )
    if sample.y >= 0:
        theta = math.degrees(math.atan2(sample.x, sample.y))
        if theta < -SECTOR_HALF_ANGLE_DEG:
            return ActionLabel.FORWARDS_LEFT
        if theta > SECTOR_HALF_ANGLE_DEG:
            return ActionLabel.FORWARDS_RIGHT
        return ActionLabel.FORWARDS
    theta = math.degrees(math.atan2(sample.x, -sample.y))
    if theta < -SECTOR_HALF_ANGLE_DEG:
        return ActionLabel.BACKWARDS_LEFT
    if theta > SECTOR_HALF_ANGLE_DEG:
        return ActionLabel.BACKWARDS_RIGHT
    return ActionLabel.BACKWARDS


# Canonical stick position per action; each quantizes back to its action.
# Used to synthesize joystick logs for scripted (oracle) drivers.
_DIAG = 0.9 * math.sqrt(0.5)
ACTION_STICK_POSITION = {
    ActionLabel.BACKWARDS_LEFT: (-_DIAG, -_DIAG),
    ActionLabel.BACKWARDS: (0.0, -0.9),
    ActionLabel.BACKWARDS_RIGHT: (_DIAG, -_DIAG),
    ActionLabel.SLIGHTLY_FORWARDS: (0.0, 0.3),
    ActionLabel.STOP: (0.0, 0.0),
    ActionLabel.SLIGHTLY_BACKWARDS: (0.0, -0.3),
    ActionLabel.FORWARDS_LEFT: (-_DIAG, _DIAG),
    ActionLabel.FORWARDS: (0.0, 0.9),
    ActionLabel.FORWARDS_RIGHT: (_DIAG, _DIAG),
}


def stick_for_action(action: ActionLabel, timestamp_ms: int) -> JoystickSample:
    x, y = ACTION_STICK_POSITION[ActionLabel(action)]
    return JoystickSample(x=x, y=y, timestamp_ms=timestamp_ms)


def pair(
    frames: list[TimestampedFrame],
    samples: list[JoystickSample],
    max_gap_ms: int = DEFAULT_MAX_GAP_MS,
) -> list[tuple[TimestampedFrame, ActionLabel]]:
    """Match each frame to the nearest-in-time joystick sample.

    Both inputs must be sorted by timestamp. Ties go to the earlier sample;
    frames whose nearest sample is further than max_gap_ms are dropped.
    """
    if not frames or not samples:
        return []
    ts = [s.timestamp_ms for s in samples]
    out = []
    j = 0
    for frame in frames:
        t = frame.timestamp_ms
        while j + 1 < len(ts) and ts[j + 1] < t:
            j += 1
        best = j
        # earlier sample wins ties, so only move forward on a strict win
        if j + 1 < len(ts) and abs(ts[j + 1] - t) < abs(ts[j] - t):
            best = j + 1
        if abs(ts[best] - t) > max_gap_ms:
            continue
        out.append((frame, quantize_joystick(samples[best])))
    return out


def examples_from_pairs(
    pairs: list[tuple[TimestampedFrame, ActionLabel]],
) -> Dataset:
    """Single-frame examples (C=1) from pair() output."""
    if not pairs:
        return Dataset(examples=[], shape=(0, 0, 0))
    h, w = pairs[0][0].image.height, pairs[0][0].image.width
    examples = [
        LabeledExample(
            tensor=image_to_channel(frame.image)[None, :, :],
            label=label,
            timestamp_ms=frame.timestamp_ms,
            origin=i,
        )
        for i, (frame, label) in enumerate(pairs)
    ]
    return Dataset(examples=examples, shape=(1, h, w))


def balance_by_duplication(d: Dataset) -> Dataset:
    """Duplicate minority-class examples until all present classes match
    the majority count. Originals keep their order; duplicates are appended
    per class (ascending label), cycling each class's examples in order.
    Duplicates share their source's origin id."""
    if not d.examples:
        raise ValueError("cannot balance an empty dataset")
    by_class: dict[int, list[LabeledExample]] = {}
    for ex in d.examples:
        by_class.setdefault(int(ex.label), []).append(ex)
    target = max(len(v) for v in by_class.values())
    out = list(d.examples)
    for label in sorted(by_class):
        members = by_class[label]
        for i in range(target - len(members)):
            out.append(members[i % len(members)])
    return Dataset(
        examples=out, shape=d.shape, params={**d.params, "balanced": True}
    )


def stack_frames(
    labeled: list[tuple[TimestampedFrame, ActionLabel]],
    n: int = DEFAULT_STACK_N,
    interval_ms: int = DEFAULT_INTERVAL_MS,
) -> list[LabeledExample]:
    """Group n consecutive frames into one n-channel example.

    Sliding window, stride 1, channels ordered oldest to newest; the label
    and timestamp come from the last frame. Windows spanning more than
    n*interval + interval (a recording gap) are skipped.
    """
    if len(labeled) < n:
        return []
    max_span = n * interval_ms + interval_ms
    out = []
    for i, window in enumerate(zip(*(labeled[k:] for k in range(n)))):
        first, last = window[0][0], window[-1][0]
        if last.timestamp_ms - first.timestamp_ms > max_span:
            continue
        tensor = np.stack([image_to_channel(f.image) for f, _ in window])
        out.append(
            LabeledExample(
                tensor=tensor,
                label=window[-1][1],
                timestamp_ms=last.timestamp_ms,
                origin=i,
            )
        )
    return out


def add_canny_channel(
    d: Dataset,
    sigma: float = imaging.CANNY_SIGMA,
    low: float = imaging.CANNY_LOW,
    high: float = imaging.CANNY_HIGH,
) -> Dataset:
    """Append each example's Canny edge map as a second channel."""
    c, h, w = d.shape
    if c != 1:
        raise ValueError(f"canny channel needs single-channel input, got C={c}")
    examples = []
    for ex in d.examples:
        edges = imaging.canny(channel_to_image(ex.tensor[0]), sigma, low, high)
        tensor = np.stack([ex.tensor[0], image_to_channel(edges)])
        examples.append(replace(ex, tensor=tensor))
    return Dataset(
        examples=examples,
        shape=(2, h, w),
        params={**d.params, "canny": {"sigma": sigma, "low": low, "high": high}},
    )


def flip_augment(d: Dataset) -> Dataset:
    """Append horizontally mirrored copies with left/right labels swapped.

    Off by default in the pipeline; mirroring demonstrations was found to
    hurt accuracy, but the hook stays available.
    """
    flipped = [
        LabeledExample(
            tensor=ex.tensor[:, :, ::-1].copy(),
            label=MIRROR_LABEL[ex.label],
            timestamp_ms=ex.timestamp_ms,
            origin=len(d.examples) + i,
        )
        for i, ex in enumerate(d.examples)
    ]
    return Dataset(
        examples=list(d.examples) + flipped,
        shape=d.shape,
        params={**d.params, "flip_augment": True},
    )


def split(
    d: Dataset, test_fraction: float = DEFAULT_TEST_FRACTION, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Deterministic seeded train/test split.

    Examples are grouped by origin so duplicated copies never straddle the
    split; groups are shuffled and assigned to the test side until it holds
    at least round(N * test_fraction) examples.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups: dict[int, list[LabeledExample]] = {}
    order: list[int] = []
    for ex in d.examples:
        if ex.origin not in groups:
            groups[ex.origin] = []
            order.append(ex.origin)
        groups[ex.origin].append(ex)
    rng = random.Random(seed)
    rng.shuffle(order)
    target = int(round_half_up(len(d.examples) * test_fraction))
    test: list[LabeledExample] = []
    train: list[LabeledExample] = []
    for origin in order:
        side = test if len(test) < target else train
        side.extend(groups[origin])
    return (
        Dataset(examples=train, shape=d.shape, params=dict(d.params)),
        Dataset(examples=test, shape=d.shape, params=dict(d.params)),
    )


LABELS_FILE = "labels.csv"


def export_dataset(d: Dataset, directory: str | Path) -> Path:
    """Write a dataset as PGM files plus a labels CSV.

    Each example becomes <timestamp_ms>_<k>.pgm per channel k and one CSV
    row `timestamp_ms,label`, sorted by timestamp. Duplicated examples
    share files (identical content) and contribute one CSV row each.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = sorted(
        range(len(d.examples)), key=lambda i: (d.examples[i].timestamp_ms, i)
    )
    with open(directory / LABELS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_ms", "label"])
        for i in rows:
            ex = d.examples[i]
            writer.writerow([ex.timestamp_ms, int(ex.label)])
            for k in range(ex.tensor.shape[0]):
                path = directory / f"{ex.timestamp_ms}_{k}.pgm"
                data = imaging.write_pgm(channel_to_image(ex.tensor[k]))
                if path.exists() and path.read_bytes() != data:
                    raise ValueError(
                        f"conflicting content for timestamp {ex.timestamp_ms} "
                        f"channel {k}"
                    )
                path.write_bytes(data)
    return directory


def import_dataset(directory: str | Path) -> Dataset:
    """Inverse of export_dataset.

    Rows sharing one timestamp are duplicates of one source example and get
    a shared origin id. Images without a CSV row, or rows without their
    image files, are reported with the offending timestamp.
    """
    directory = Path(directory)
    labels_path = directory / LABELS_FILE
    if not labels_path.exists():
        raise FileNotFoundError(f"no {LABELS_FILE} in {directory}")
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_ms", "label"]:
            raise ValueError(f"bad labels header: {header}")
        rows = [(int(t), int(label)) for t, label in reader]

    pgms = {}
    for path in directory.glob("*.pgm"):
        t_str, _, k_str = path.stem.partition("_")
        pgms.setdefault(int(t_str), {})[int(k_str)] = path
    labeled_ts = {t for t, _ in rows}
    orphan = sorted(set(pgms) - labeled_ts)
    if orphan:
        raise ValueError(f"image without label row at timestamp {orphan[0]}")

    examples = []
    origin_by_ts: dict[int, int] = {}
    shape = None
    for t, label in rows:
        if t not in pgms:
            raise ValueError(f"label row without image at timestamp {t}")
        channels = pgms[t]
        tensor = np.stack(
            [
                image_to_channel(imaging.read_pgm(channels[k].read_bytes()))
                for k in sorted(channels)
            ]
        )
        if sorted(channels) != list(range(len(channels))):
            raise ValueError(f"non-contiguous channel files at timestamp {t}")
        if shape is None:
            shape = tensor.shape
        origin = origin_by_ts.setdefault(t, len(origin_by_ts))
        examples.append(
            LabeledExample(
                tensor=tensor,
                label=ActionLabel(label),
                timestamp_ms=t,
                origin=origin,
            )
        )
    if shape is None:
        return Dataset(examples=[], shape=(0, 0, 0))
    return Dataset(examples=examples, shape=tuple(shape))
