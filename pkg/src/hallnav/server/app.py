"""HTTP face of the recording server.

Endpoint paths and JSON field names are part of the external contract;
clients (the browser UI, the CLI) talk to these and nothing else. Errors
always come back as JSON {code, message}.
"""

from __future__ import annotations

import gzip
import io
import tarfile
import threading
from pathlib import Path

from fastapi import FastAPI, File, Form, Header, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from hallnav import datapipe, imaging, sim
from hallnav.actions import ActionLabel
from hallnav.datapipe import JoystickSample
from hallnav.server.store import ExportOptions, SessionStore, StoreError
from hallnav.server.teleop import TeleopLoop

_STATUS = {
    "unknown_session": 404,
    "no_frames": 404,
    "session_closed": 409,
    "session_live": 409,
    "mode_conflict": 409,
    "timestamp_conflict": 409,
    "controller_conflict": 409,
    "empty_pairing": 409,
}
# anything not listed is a 400-class client error


class SessionRequest(BaseModel):
    map: str


class SessionCreated(BaseModel):
    session_id: str


class StoredCount(BaseModel):
    stored: int


class JoystickIn(BaseModel):
    t: int
    x: float = Field(ge=-1.0, le=1.0)
    y: float = Field(ge=-1.0, le=1.0)


class JoystickAck(BaseModel):
    t: int
    action: int


class CloseResult(BaseModel):
    state: str
    frames: int
    samples: int


class SessionStatus(BaseModel):
    session_id: str
    map: str
    state: str
    mode: str | None
    frames: int
    samples: int
    collisions: int
    last_frame_ms: int | None


class QuantizerInfo(BaseModel):
    """Sector geometry plus a labeled 21x21 reference grid.

    labels[iy * grid_size + ix] is the action for (xs[ix], ys[iy]); clients
    reimplementing the quantizer check themselves against this grid.
    """

    dead_zone_radius: float
    slight_radius: float
    sector_half_angle_deg: float
    actions: list[str]
    grid_size: int
    xs: list[float]
    ys: list[float]
    labels: list[int]


def _targz(directory: Path) -> bytes:
    """Reproducible tar.gz of a directory: sorted members, zeroed metadata."""
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        with tarfile.open(fileobj=gz, mode="w") as tar:
            for path in sorted(p for p in directory.rglob("*") if p.is_file()):
                info = tarfile.TarInfo(str(path.relative_to(directory)))
                info.size = path.stat().st_size
                info.mtime = 0
                info.mode = 0o644
                with open(path, "rb") as fh:
                    tar.addfile(info, fh)
    return buf.getvalue()


def _png(img: imaging.GrayImage) -> bytes:
    from PIL import Image

    out = io.BytesIO()
    Image.frombytes("L", (img.width, img.height), img.pixels).save(out, format="PNG")
    return out.getvalue()


def create_app(
    data_dir: str | Path,
    maps_dir: str | Path,
    static_dir: str | Path | None = None,
) -> FastAPI:
    store = SessionStore(data_dir)
    maps_dir = Path(maps_dir)
    app = FastAPI(title="hallnav recording server")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Frame-Timestamp", "X-Collisions", "X-Session-State"],
    )
    app.state.store = store

    loops: dict[str, TeleopLoop] = {}
    registry = threading.Lock()
    worlds: dict[str, sim.WorldMap] = {}

    class ApiError(Exception):
        def __init__(self, code: str, message: str):
            self.code = code
            self.message = message

    @app.exception_handler(ApiError)
    def _api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=_STATUS.get(exc.code, 400),
            content={"code": exc.code, "message": exc.message},
        )

    @app.exception_handler(StoreError)
    def _store_error(request: Request, exc: StoreError):
        return JSONResponse(
            status_code=_STATUS.get(exc.code, 400),
            content={"code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    def _validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=422,
            content={
                "code": "validation",
                "message": f"{loc}: {first.get('msg', 'invalid request')}",
            },
        )

    def load_world(name: str) -> sim.WorldMap:
        if name not in worlds:
            if Path(name).name != name or not name:
                raise ApiError("unknown_map", f"bad map name {name!r}")
            path = maps_dir / f"{name}.map"
            if not path.is_file():
                raise ApiError("unknown_map", f"no map {name!r} in {maps_dir}")
            try:
                worlds[name] = sim.load_map(path.read_text())
            except sim.MapError as e:
                raise ApiError("bad_map", f"map {name!r}: {e}") from e
        return worlds[name]

    # -- sessions -------------------------------------------------------------

    @app.post("/api/session", response_model=SessionCreated)
    def create_session(body: SessionRequest):
        load_world(body.map)  # fail fast on unknown maps
        return {"session_id": store.create(body.map)}

    @app.post("/api/session/{sid}/video", response_model=StoredCount)
    async def upload_video(
        sid: str,
        start_ms: int = Form(),
        index: UploadFile = File(),
        frames: UploadFile = File(),
    ):
        index_text = (await index.read()).decode("ascii", "replace")
        blob = await frames.read()
        try:
            offsets = [int(tok) for tok in index_text.split()]
            images = imaging.read_pgm_stream(blob)
        except ValueError as e:
            raise ApiError("bad_payload", str(e)) from e
        if len(images) != len(offsets):
            raise ApiError(
                "bad_payload",
                f"{len(images)} frames but {len(offsets)} index entries",
            )
        return {"stored": store.ingest_video(sid, start_ms, list(zip(images, offsets)))}

    @app.post("/api/session/{sid}/commands", response_model=StoredCount)
    def upload_commands(sid: str, body: list[JoystickIn]):
        return {"stored": store.ingest_commands(sid, [(s.t, s.x, s.y) for s in body])}

    @app.post("/api/session/{sid}/joystick", response_model=JoystickAck)
    def joystick(
        sid: str,
        body: JoystickIn,
        x_controller_id: str | None = Header(default=None, alias="X-Controller-Id"),
    ):
        if not x_controller_id:
            raise ApiError("missing_controller", "X-Controller-Id header required")
        with registry:
            loop = loops.get(sid)
            if loop is None:
                man = store.claim_mode(sid, "live")
                loop = TeleopLoop(store, sid, load_world(man["map"]))
                loop.start()
                loops[sid] = loop
        sample = loop.submit(x_controller_id, body.x, body.y)
        return {
            "t": sample.timestamp_ms,
            "action": int(datapipe.quantize_joystick(sample)),
        }

    @app.post("/api/session/{sid}/close", response_model=CloseResult)
    def close_session(sid: str):
        with registry:
            loop = loops.pop(sid, None)
        if loop is not None:
            loop.stop()
            man = store.close(sid, collisions=loop.collisions)
        else:
            man = store.close(sid)
        return {
            "state": man["state"],
            "frames": man.get("frames", 0),
            "samples": man.get("samples", 0),
        }

    # -- viewing ---------------------------------------------------------------

    @app.get("/api/session/{sid}/frame")
    def latest_frame(sid: str, format: str = "pgm"):
        if format not in ("pgm", "png"):
            raise ApiError("bad_payload", f"format must be pgm or png, not {format!r}")
        man = store.manifest(sid)
        frame = store.latest_frame(sid)
        if frame is None:
            # nothing recorded yet: show the start pose so viewers are not blind
            world = load_world(man["map"])
            img = sim.render(world, world.start_state(), sim.RenderConfig())
            ts = 0
        else:
            img, ts = frame.image, frame.timestamp_ms
        with registry:
            loop = loops.get(sid)
        collisions = len(loop.collisions) if loop else len(man.get("collisions", []))
        body = imaging.write_pgm(img) if format == "pgm" else _png(img)
        media = "image/x-portable-graymap" if format == "pgm" else "image/png"
        return Response(
            content=body,
            media_type=media,
            headers={
                "X-Frame-Timestamp": str(ts),
                "X-Collisions": str(collisions),
                "X-Session-State": man["state"],
            },
        )

    @app.get("/api/session/{sid}/status", response_model=SessionStatus)
    def status(sid: str):
        man = store.manifest(sid)
        n_frames, n_samples = store.counts(sid)
        with registry:
            loop = loops.get(sid)
        collisions = len(loop.collisions) if loop else len(man.get("collisions", []))
        last = store.latest_frame(sid)
        return {
            "session_id": sid,
            "map": man["map"],
            "state": man["state"],
            "mode": man["mode"],
            "frames": n_frames,
            "samples": n_samples,
            "collisions": collisions,
            "last_frame_ms": last.timestamp_ms if last else None,
        }

    # -- export ------------------------------------------------------------------

    @app.get("/api/session/{sid}/export")
    def export(
        sid: str,
        width: int | None = None,
        height: int | None = None,
        equalize: bool = True,
        balance: bool = True,
        canny: bool = False,
        stack: int = 0,
        max_gap: int = datapipe.DEFAULT_MAX_GAP_MS,
        interval: int = datapipe.DEFAULT_INTERVAL_MS,
    ):
        opts = ExportOptions(
            width=width,
            height=height,
            equalize=equalize,
            balance=balance,
            canny=canny,
            stack=stack,
            max_gap_ms=max_gap,
            interval_ms=interval,
        )
        directory, manifest = store.export([sid], opts)
        return Response(
            content=_targz(directory),
            media_type="application/gzip",
            headers={
                "Content-Disposition": f'attachment; filename="{directory.name}.tar.gz"',
                "X-Export-Total": str(manifest["total"]),
            },
        )

    # -- shared quantizer geometry -------------------------------------------------

    @app.get("/api/quantizer", response_model=QuantizerInfo)
    def quantizer():
        grid = 21
        xs = [(i - 10) / 10 for i in range(grid)]
        ys = list(xs)
        labels = [
            int(datapipe.quantize_joystick(JoystickSample(x=x, y=y, timestamp_ms=0)))
            for y in ys
            for x in xs
        ]
        return {
            "dead_zone_radius": datapipe.DEAD_ZONE_RADIUS,
            "slight_radius": datapipe.SLIGHT_RADIUS,
            "sector_half_angle_deg": datapipe.SECTOR_HALF_ANGLE_DEG,
            "actions": [ActionLabel(i).name for i in range(9)],
            "grid_size": grid,
            "xs": xs,
            "ys": ys,
            "labels": labels,
        }

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
