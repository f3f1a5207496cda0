"""Directory-per-session recording store.

Layout under the store root:

    s0001/
      manifest.json     session metadata and close-time summary
      frames/           one PGM per stored frame, named <timestamp>.pgm
      samples.csv       joystick log, header t,x,y
    exports/            derived dataset directories, keyed by options

No database engine on purpose: every record is a plain file, exports are
bit-exact functions of the stored records, and everything can be inspected
with `ls` and a PGM viewer. All ingest paths are append-only; nothing ever
rewrites a stored frame or sample.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from hallnav import datapipe, imaging
from hallnav.datapipe import Dataset, JoystickSample, TimestampedFrame

# gap inserted between sessions when a multi-session export rebases
# timelines onto one clock; larger than any stack window span so stacked
# examples never straddle a session boundary
_SESSION_GAP_MS = 10_000

_MANIFEST = "manifest.json"
_SAMPLES = "samples.csv"
_FRAMES_DIR = "frames"


class StoreError(Exception):
    """Store-level failure with a stable machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class ExportOptions:
    """Pipeline switches for dataset export.

    `stack` > 1 turns on multi-frame stacking and excludes `canny`
    (stacked tensors are all-grayscale by construction).
    """

    width: int | None = None
    height: int | None = None
    equalize: bool = True
    balance: bool = True
    canny: bool = False
    stack: int = 0
    max_gap_ms: int = datapipe.DEFAULT_MAX_GAP_MS
    interval_ms: int = datapipe.DEFAULT_INTERVAL_MS

    def __post_init__(self):
        if (self.width is None) != (self.height is None):
            raise StoreError("bad_options", "width and height must be set together")
        if self.canny and self.stack > 1:
            raise StoreError("bad_options", "canny and stack are mutually exclusive")
        if self.max_gap_ms <= 0 or self.interval_ms <= 0:
            raise StoreError("bad_options", "max_gap_ms and interval_ms must be positive")

    def key(self) -> str:
        size = f"{self.width}x{self.height}" if self.width else "native"
        return (
            f"{size}-eq{int(self.equalize)}-bal{int(self.balance)}"
            f"-canny{int(self.canny)}-stack{self.stack}"
            f"-gap{self.max_gap_ms}-iv{self.interval_ms}"
        )


class SessionStore:
    """All mutation goes through one lock; desk-scale traffic never needs
    finer grain and the lock makes the append-only guarantee easy to audit.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    # -- session lifecycle -------------------------------------------------

    def create(self, map_name: str) -> str:
        with self._lock:
            taken = [p.name for p in self.root.iterdir() if p.name.startswith("s")]
            n = 1
            while f"s{n:04d}" in taken:
                n += 1
            sid = f"s{n:04d}"
            d = self.root / sid
            (d / _FRAMES_DIR).mkdir(parents=True)
            self._write_manifest(
                sid,
                {
                    "session_id": sid,
                    "map": map_name,
                    "state": "live",
                    "mode": None,
                    "last_sample_ms": None,
                    "collisions": [],
                },
            )
            return sid

    def close(self, sid: str, collisions: list[int] | None = None) -> dict:
        with self._lock:
            man = self._manifest(sid)
            if man["state"] == "closed":
                return man
            frames = self.frames(sid)
            samples = self.samples(sid)
            ts = [f.timestamp_ms for f in frames] + [s.timestamp_ms for s in samples]
            man["state"] = "closed"
            man["frames"] = len(frames)
            man["samples"] = len(samples)
            man["t_min"] = min(ts) if ts else None
            man["t_max"] = max(ts) if ts else None
            if collisions is not None:
                man["collisions"] = list(collisions)
            self._write_manifest(sid, man)
            return man

    def exists(self, sid: str) -> bool:
        return (self.root / sid / _MANIFEST).is_file()

    def manifest(self, sid: str) -> dict:
        with self._lock:
            return self._manifest(sid)

    def _manifest(self, sid: str) -> dict:
        path = self.root / sid / _MANIFEST
        if not path.is_file():
            raise StoreError("unknown_session", f"no session {sid!r}")
        return json.loads(path.read_text())

    def _write_manifest(self, sid: str, man: dict) -> None:
        path = self.root / sid / _MANIFEST
        path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")

    def claim_mode(self, sid: str, mode: str) -> dict:
        """Mark an open session as upload or live; a session is one or the
        other for life, decided by whichever ingestion path touches it first.
        """
        with self._lock:
            man = self._manifest(sid)
            if man["state"] != "live":
                raise StoreError("session_closed", f"session {sid} is closed")
            if man["mode"] not in (None, mode):
                raise StoreError(
                    "mode_conflict",
                    f"session {sid} is in {man['mode']} mode, not {mode}",
                )
            if man["mode"] is None:
                man["mode"] = mode
                self._write_manifest(sid, man)
            return man

    # -- ingestion (upload mode) --------------------------------------------

    def ingest_video(
        self,
        sid: str,
        start_ms: int,
        frames: list[tuple[imaging.GrayImage, int]],
        interval_ms: int = datapipe.DEFAULT_INTERVAL_MS,
    ) -> int:
        """Slice a raw frame stream and persist the surviving frames."""
        with self._lock:
            self.claim_mode(sid, "upload")
            try:
                sliced = datapipe.slice_video(frames, start_ms, interval_ms)
            except ValueError as e:
                raise StoreError("bad_payload", str(e)) from e
            fdir = self.root / sid / _FRAMES_DIR
            paths = []
            for frame in sliced:
                path = fdir / f"{frame.timestamp_ms:012d}.pgm"
                if path.exists():
                    raise StoreError(
                        "timestamp_conflict",
                        f"frame at {frame.timestamp_ms} ms already stored",
                    )
                paths.append((path, imaging.write_pgm(frame.image)))
            for path, blob in paths:  # all-or-nothing: conflicts checked first
                path.write_bytes(blob)
            return len(paths)

    def ingest_commands(self, sid: str, rows: list[tuple[int, float, float]]) -> int:
        """Append a batch of (t, x, y) joystick rows; batch must be sorted."""
        with self._lock:
            man = self.claim_mode(sid, "upload")
            for i in range(1, len(rows)):
                if rows[i][0] < rows[i - 1][0]:
                    raise StoreError(
                        "unsorted", f"batch timestamps decrease at index {i}"
                    )
            last = man.get("last_sample_ms")
            if rows and last is not None and rows[0][0] < last:
                raise StoreError(
                    "unsorted",
                    f"batch starts at {rows[0][0]} ms, before stored {last} ms",
                )
            try:
                samples = [JoystickSample(x=x, y=y, timestamp_ms=t) for t, x, y in rows]
            except ValueError as e:
                raise StoreError("range", str(e)) from e
            for s in samples:
                self._append_sample_row(sid, s)
            if samples:
                man["last_sample_ms"] = samples[-1].timestamp_ms
                self._write_manifest(sid, man)
            return len(samples)

    # -- live teleop hooks ---------------------------------------------------

    def append_frame(self, sid: str, frame: TimestampedFrame) -> None:
        with self._lock:
            path = self.root / sid / _FRAMES_DIR / f"{frame.timestamp_ms:012d}.pgm"
            if path.exists():
                raise StoreError(
                    "timestamp_conflict", f"frame at {frame.timestamp_ms} ms already stored"
                )
            path.write_bytes(imaging.write_pgm(frame.image))

    def append_sample(self, sid: str, sample: JoystickSample) -> None:
        with self._lock:
            self._append_sample_row(sid, sample)

    def _append_sample_row(self, sid: str, s: JoystickSample) -> None:
        path = self.root / sid / _SAMPLES
        fresh = not path.exists()
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(["t", "x", "y"])
            writer.writerow([s.timestamp_ms, s.x, s.y])

    # -- reading -------------------------------------------------------------

    def frames(self, sid: str) -> list[TimestampedFrame]:
        if not self.exists(sid):
            raise StoreError("unknown_session", f"no session {sid!r}")
        fdir = self.root / sid / _FRAMES_DIR
        out = []
        for path in sorted(fdir.glob("*.pgm")):
            out.append(
                TimestampedFrame(
                    image=imaging.read_pgm(path.read_bytes()),
                    timestamp_ms=int(path.stem),
                )
            )
        return out

    def samples(self, sid: str) -> list[JoystickSample]:
        if not self.exists(sid):
            raise StoreError("unknown_session", f"no session {sid!r}")
        path = self.root / sid / _SAMPLES
        if not path.is_file():
            return []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            return [
                JoystickSample(x=float(x), y=float(y), timestamp_ms=int(t))
                for t, x, y in reader
            ]

    def counts(self, sid: str) -> tuple[int, int]:
        if not self.exists(sid):
            raise StoreError("unknown_session", f"no session {sid!r}")
        fdir = self.root / sid / _FRAMES_DIR
        n_frames = sum(1 for _ in fdir.glob("*.pgm"))
        path = self.root / sid / _SAMPLES
        n_samples = 0
        if path.is_file():
            with open(path) as fh:
                n_samples = max(0, sum(1 for _ in fh) - 1)
        return n_frames, n_samples

    def latest_frame(self, sid: str) -> TimestampedFrame | None:
        frames = self.frames(sid)
        return frames[-1] if frames else None

    # -- export ----------------------------------------------------------------

    def export(
        self, session_ids: list[str], opts: ExportOptions
    ) -> tuple[Path, dict]:
        """Run the labeling pipeline over closed sessions.

        Returns the dataset directory plus a manifest with per-class
        counts. The result is a pure function of stored records and
        options; repeat calls reuse the existing directory.
        """
        with self._lock:
            all_pairs: list[tuple[TimestampedFrame, datapipe.ActionLabel]] = []
            clock_end: int | None = None
            for sid in session_ids:
                man = self._manifest(sid)
                if man["state"] != "closed":
                    raise StoreError("session_live", f"session {sid} is still live")
                frames = self.frames(sid)
                samples = self.samples(sid)
                ts_all = [f.timestamp_ms for f in frames] + [
                    s.timestamp_ms for s in samples
                ]
                if not ts_all:
                    continue
                # rebase later sessions onto one shared clock, far enough
                # apart that no pairing or stacking window can bridge them
                shift = 0
                if clock_end is not None:
                    shift = clock_end + _SESSION_GAP_MS - min(ts_all)
                clock_end = max(ts_all) + shift
                frames = [
                    TimestampedFrame(
                        image=self._preprocess(f.image, opts),
                        timestamp_ms=f.timestamp_ms + shift,
                    )
                    for f in frames
                ]
                samples = [
                    JoystickSample(x=s.x, y=s.y, timestamp_ms=s.timestamp_ms + shift)
                    for s in samples
                ]
                all_pairs.extend(datapipe.pair(frames, samples, opts.max_gap_ms))
            if not all_pairs:
                raise StoreError(
                    "empty_pairing",
                    f"no frame has a sample within {opts.max_gap_ms} ms",
                )
            if opts.stack > 1:
                examples = datapipe.stack_frames(
                    all_pairs, opts.stack, opts.interval_ms
                )
                if not examples:
                    raise StoreError(
                        "empty_pairing",
                        f"no window of {opts.stack} frames fits the span limit",
                    )
                img = all_pairs[0][0].image
                dataset = Dataset(
                    examples=examples,
                    shape=(opts.stack, img.height, img.width),
                    params={"stack": opts.stack, "interval_ms": opts.interval_ms},
                )
            else:
                dataset = datapipe.examples_from_pairs(all_pairs)
                if opts.canny:
                    dataset = datapipe.add_canny_channel(dataset)
            if opts.balance:
                dataset = datapipe.balance_by_duplication(dataset)

            name = "+".join(session_ids) + "-" + opts.key()
            out = self.root / "exports" / name
            manifest = {
                "sessions": list(session_ids),
                "options": asdict(opts),
                "total": len(dataset),
                "classes": {str(k): v for k, v in sorted(dataset.class_counts().items())},
            }
            if not out.exists():
                datapipe.export_dataset(dataset, out)
                (out / "manifest.json").write_text(
                    json.dumps(manifest, indent=2, sort_keys=True) + "\n"
                )
            return out, manifest

    @staticmethod
    def _preprocess(img: imaging.GrayImage, opts: ExportOptions) -> imaging.GrayImage:
        if opts.width is not None:
            img = imaging.resize(img, opts.width, opts.height)
        if opts.equalize:
            img = imaging.equalize_hist(img)
        return img
