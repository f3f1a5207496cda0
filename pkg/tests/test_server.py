import gzip
import hashlib
import io
import tarfile
import time

import pytest
from fastapi.testclient import TestClient

from hallnav import datapipe, imaging, sim
from hallnav.actions import ActionLabel
from hallnav.imaging import GrayImage
from hallnav.server import ExportOptions, SessionStore, StoreError, TeleopLoop
from hallnav.server.app import create_app


@pytest.fixture()
def client(tmp_path, maps_dir):
    app = create_app(tmp_path / "data", maps_dir)
    with TestClient(app) as c:
        c.app = app
        yield c


def tile(fill, w=8, h=8):
    return GrayImage(width=w, height=h, pixels=bytes([fill % 256]) * (w * h))


def pgm_stream(images):
    return b"".join(imaging.write_pgm(img) for img in images)


def new_session(client, map_name="straight"):
    r = client.post("/api/session", json={"map": map_name})
    assert r.status_code == 200, r.text
    return r.json()["session_id"]


def upload_video(client, sid, start_ms, offsets, fills=None):
    fills = fills or [o % 256 for o in offsets]
    files = {
        "index": ("index.txt", " ".join(str(o) for o in offsets).encode()),
        "frames": ("frames.pgm", pgm_stream([tile(f) for f in fills])),
    }
    return client.post(
        f"/api/session/{sid}/video", data={"start_ms": str(start_ms)}, files=files
    )


def upload_commands(client, sid, rows):
    body = [{"t": t, "x": x, "y": y} for t, x, y in rows]
    return client.post(f"/api/session/{sid}/commands", json=body)


def store_snapshot(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in root.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }


# -- session lifecycle ----------------------------------------------------------


def test_sessions_get_sequential_ids(client):
    assert new_session(client) == "s0001"
    assert new_session(client) == "s0002"


def test_unknown_map_rejected(client):
    r = client.post("/api/session", json={"map": "nope"})
    assert r.status_code == 400
    assert r.json()["code"] == "unknown_map"
    r = client.post("/api/session", json={"map": "../straight"})
    assert r.status_code == 400


def test_unknown_session_is_404(client):
    r = client.get("/api/session/s9999/status")
    assert r.status_code == 404
    assert r.json()["code"] == "unknown_session"


def test_close_is_idempotent(client):
    sid = new_session(client)
    first = client.post(f"/api/session/{sid}/close").json()
    assert first == {"state": "closed", "frames": 0, "samples": 0}
    again = client.post(f"/api/session/{sid}/close").json()
    assert again == first


def test_closed_session_rejects_ingestion(client):
    sid = new_session(client)
    client.post(f"/api/session/{sid}/close")
    r = upload_video(client, sid, 0, [0])
    assert r.status_code == 409
    assert r.json()["code"] == "session_closed"


# -- video upload ------------------------------------------------------------------


def test_video_upload_slices_and_counts(client):
    sid = new_session(client)
    r = upload_video(client, sid, 0, [0, 100, 200, 300])
    assert r.status_code == 200
    assert r.json() == {"stored": 2}  # quarter-second ticks keep offsets 0 and 200
    status = client.get(f"/api/session/{sid}/status").json()
    assert status["frames"] == 2
    assert status["mode"] == "upload"


def test_video_upload_empty_payload_stores_zero(client):
    sid = new_session(client)
    files = {"index": ("i", b""), "frames": ("f", b"")}
    r = client.post(f"/api/session/{sid}/video", data={"start_ms": "0"}, files=files)
    assert r.status_code == 200
    assert r.json() == {"stored": 0}


def test_video_uploads_accumulate(client):
    sid = new_session(client)
    assert upload_video(client, sid, 0, [0, 250]).json() == {"stored": 2}
    assert upload_video(client, sid, 1000, [0, 250]).json() == {"stored": 2}
    assert client.get(f"/api/session/{sid}/status").json()["frames"] == 4


def test_video_replay_conflict_leaves_store_untouched(client, tmp_path):
    sid = new_session(client)
    upload_video(client, sid, 0, [0, 250])
    before = store_snapshot(tmp_path / "data")
    r = upload_video(client, sid, 0, [0, 250], fills=[9, 9])
    assert r.status_code == 409
    assert r.json()["code"] == "timestamp_conflict"
    assert store_snapshot(tmp_path / "data") == before


def test_video_index_frame_count_mismatch(client):
    sid = new_session(client)
    files = {
        "index": ("i", b"0 250 500"),
        "frames": ("f", pgm_stream([tile(1), tile(2)])),
    }
    r = client.post(f"/api/session/{sid}/video", data={"start_ms": "0"}, files=files)
    assert r.status_code == 400
    assert r.json()["code"] == "bad_payload"


def test_video_unsorted_offsets_rejected(client):
    sid = new_session(client)
    r = upload_video(client, sid, 0, [250, 0])
    assert r.status_code == 400
    assert "strictly increasing" in r.json()["message"]


# -- command upload -----------------------------------------------------------------


def test_commands_append_across_batches(client):
    sid = new_session(client)
    assert upload_commands(client, sid, [(0, 0.0, 0.9), (100, 0.0, 0.9)]).json() == {
        "stored": 2
    }
    assert upload_commands(client, sid, [(200, 0.0, 0.0)]).json() == {"stored": 1}
    assert client.get(f"/api/session/{sid}/status").json()["samples"] == 3


def test_commands_unsorted_batch_names_first_inversion(client):
    sid = new_session(client)
    r = upload_commands(client, sid, [(0, 0.0, 0.0), (500, 0.0, 0.0), (400, 0.0, 0.0)])
    assert r.status_code == 400
    assert r.json()["code"] == "unsorted"
    assert "index 2" in r.json()["message"]


def test_commands_cannot_backdate_past_stored(client):
    sid = new_session(client)
    upload_commands(client, sid, [(1000, 0.0, 0.0)])
    r = upload_commands(client, sid, [(500, 0.0, 0.0)])
    assert r.status_code == 400
    assert r.json()["code"] == "unsorted"


def test_commands_out_of_range_rejected(client):
    sid = new_session(client)
    r = upload_commands(client, sid, [(0, 1.5, 0.0)])
    assert r.status_code == 422
    assert r.json()["code"] == "validation"


def test_store_level_range_check(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create("straight")
    with pytest.raises(StoreError) as e:
        store.ingest_commands(sid, [(0, 2.0, 0.0)])
    assert e.value.code == "range"


# -- append-only guarantee -------------------------------------------------------------


def test_stored_records_never_change(client, tmp_path):
    root = tmp_path / "data"
    sid = new_session(client)
    upload_video(client, sid, 0, [0, 250])
    after_video = store_snapshot(root)
    upload_commands(client, sid, [(0, 0.0, 0.9)])
    upload_video(client, sid, 5000, [0])
    upload_commands(client, sid, [(250, 0.0, 0.9)])
    client.post(f"/api/session/{sid}/close")
    final = store_snapshot(root)
    for name, digest in after_video.items():
        if name.endswith(".pgm"):
            assert final[name] == digest
    # the sample log only ever grows; earlier rows stay put
    samples = (root / sid / "samples.csv").read_text().splitlines()
    assert samples[0] == "t,x,y"
    assert samples[1].startswith("0,")
    assert samples[2].startswith("250,")


# -- live teleoperation ------------------------------------------------------------------


def test_joystick_requires_controller_header(client):
    sid = new_session(client)
    r = client.post(f"/api/session/{sid}/joystick", json={"t": 0, "x": 0.0, "y": 0.9})
    assert r.status_code == 400
    assert r.json()["code"] == "missing_controller"


def test_joystick_ack_quantizes_on_server(client):
    sid = new_session(client)
    r = client.post(
        f"/api/session/{sid}/joystick",
        json={"t": 123456, "x": 0.0, "y": 0.9},
        headers={"X-Controller-Id": "pad-1"},
    )
    assert r.status_code == 200
    ack = r.json()
    assert ack["action"] == int(ActionLabel.FORWARDS)
    # the server stamps samples with its own clock, not the client's t
    assert 0 <= ack["t"] < 10_000
    client.post(f"/api/session/{sid}/close")


def test_second_controller_rejected(client):
    sid = new_session(client)
    headers = {"X-Controller-Id": "pad-1"}
    client.post(f"/api/session/{sid}/joystick", json={"t": 0, "x": 0.0, "y": 0.0}, headers=headers)
    r = client.post(
        f"/api/session/{sid}/joystick",
        json={"t": 1, "x": 0.0, "y": 0.0},
        headers={"X-Controller-Id": "pad-2"},
    )
    assert r.status_code == 409
    assert r.json()["code"] == "controller_conflict"
    client.post(f"/api/session/{sid}/close")


def test_upload_session_rejects_joystick_and_vice_versa(client):
    sid = new_session(client)
    upload_video(client, sid, 0, [0])
    r = client.post(
        f"/api/session/{sid}/joystick",
        json={"t": 0, "x": 0.0, "y": 0.0},
        headers={"X-Controller-Id": "pad-1"},
    )
    assert r.status_code == 409
    assert r.json()["code"] == "mode_conflict"

    live = new_session(client)
    client.post(
        f"/api/session/{live}/joystick",
        json={"t": 0, "x": 0.0, "y": 0.0},
        headers={"X-Controller-Id": "pad-1"},
    )
    r = upload_video(client, live, 0, [0])
    assert r.status_code == 409
    assert r.json()["code"] == "mode_conflict"
    client.post(f"/api/session/{live}/close")


def test_teleop_loop_ticks_and_persists(tmp_path, maps_dir):
    store = SessionStore(tmp_path)
    sid = store.create("straight")
    store.claim_mode(sid, "live")
    world = sim.load_map((maps_dir / "straight.map").read_text())
    loop = TeleopLoop(store, sid, world, tick_ms=10, render_cfg=sim.RenderConfig(width=8, height=8))
    loop.start()
    loop.submit("pad-1", 0.0, 0.9)
    time.sleep(0.3)
    loop.stop()
    frames = store.frames(sid)
    assert 10 <= len(frames) <= 90
    ts = [f.timestamp_ms for f in frames]
    assert ts == [10 * (k + 1) for k in range(len(frames))]
    assert store.samples(sid)[0].y == 0.9
    assert loop.collisions == []


def test_teleop_loop_defaults_to_stop(tmp_path, maps_dir):
    store = SessionStore(tmp_path)
    sid = store.create("straight")
    world = sim.load_map((maps_dir / "straight.map").read_text())
    loop = TeleopLoop(store, sid, world, tick_ms=10, render_cfg=sim.RenderConfig(width=8, height=8))
    loop.start()
    time.sleep(0.15)
    loop.stop()
    frames = store.frames(sid)
    assert len(frames) >= 2
    # no input means Stop: the camera never moves
    assert len({f.image.pixels for f in frames}) == 1


def test_live_session_round_trip_via_http(client):
    sid = new_session(client)
    headers = {"X-Controller-Id": "pad-1"}
    for _ in range(3):
        client.post(
            f"/api/session/{sid}/joystick",
            json={"t": 0, "x": 0.0, "y": 0.9},
            headers=headers,
        )
        time.sleep(0.12)
    result = client.post(f"/api/session/{sid}/close").json()
    assert result["state"] == "closed"
    assert result["samples"] == 3
    assert result["frames"] >= 2
    man = client.app.state.store.manifest(sid)
    assert man["t_min"] >= 0
    assert man["t_max"] >= man["t_min"]


# -- frame viewing -----------------------------------------------------------------------


def test_frame_before_any_recording_shows_start_pose(client):
    sid = new_session(client)
    r = client.get(f"/api/session/{sid}/frame")
    assert r.status_code == 200
    assert r.headers["X-Frame-Timestamp"] == "0"
    assert r.headers["X-Session-State"] == "live"
    img = imaging.read_pgm(r.content)
    assert (img.width, img.height) == (64, 48)


def test_frame_returns_latest_upload(client):
    sid = new_session(client)
    upload_video(client, sid, 0, [0, 250], fills=[5, 77])
    r = client.get(f"/api/session/{sid}/frame")
    assert r.headers["X-Frame-Timestamp"] == "250"
    assert imaging.read_pgm(r.content).pixels == bytes([77]) * 64


def test_frame_png_format(client):
    sid = new_session(client)
    r = client.get(f"/api/session/{sid}/frame", params={"format": "png"})
    assert r.status_code == 200
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    r = client.get(f"/api/session/{sid}/frame", params={"format": "bmp"})
    assert r.status_code == 400


# -- export --------------------------------------------------------------------------------


def paired_session(client, n=6):
    sid = new_session(client)
    upload_video(client, sid, 0, [250 * i for i in range(n)], fills=list(range(40, 40 + n)))
    rows = [(250 * i, 0.0, 0.9 if i % 2 else 0.0) for i in range(n)]
    upload_commands(client, sid, rows)
    client.post(f"/api/session/{sid}/close")
    return sid


def test_export_requires_closed_session(client):
    sid = new_session(client)
    upload_video(client, sid, 0, [0])
    r = client.get(f"/api/session/{sid}/export")
    assert r.status_code == 409
    assert r.json()["code"] == "session_live"


def test_export_with_nothing_paired_is_an_error(client):
    sid = new_session(client)
    upload_video(client, sid, 0, [0])
    client.post(f"/api/session/{sid}/close")
    r = client.get(f"/api/session/{sid}/export")
    assert r.status_code == 409
    assert r.json()["code"] == "empty_pairing"


def test_export_tarball_contents(client, tmp_path):
    sid = paired_session(client)
    r = client.get(f"/api/session/{sid}/export", params={"balance": "false"})
    assert r.status_code == 200
    assert r.headers["content-type"] == "application/gzip"
    total = int(r.headers["X-Export-Total"])
    assert total == 6
    with tarfile.open(fileobj=io.BytesIO(r.content), mode="r:gz") as tar:
        names = sorted(tar.getnames())
        assert "labels.csv" in names
        assert "manifest.json" in names
        assert sum(1 for n in names if n.endswith(".pgm")) == 6
    # unpack and reimport through the dataset reader
    out = tmp_path / "unpacked"
    with tarfile.open(fileobj=io.BytesIO(r.content), mode="r:gz") as tar:
        tar.extractall(out)
    d = datapipe.import_dataset(out)
    assert len(d) == 6
    assert d.shape == (1, 8, 8)


def test_export_is_byte_identical_across_calls(client):
    sid = paired_session(client)
    a = client.get(f"/api/session/{sid}/export")
    b = client.get(f"/api/session/{sid}/export")
    assert a.content == b.content


def test_export_balance_equalizes_class_counts(client):
    sid = paired_session(client)  # 3 stop frames, 3 forwards frames alternating
    r = client.get(f"/api/session/{sid}/export")
    assert int(r.headers["X-Export-Total"]) == 6
    heavy = new_session(client)
    upload_video(client, heavy, 0, [250 * i for i in range(4)])
    upload_commands(
        client, heavy, [(0, 0.0, 0.9), (250, 0.0, 0.9), (500, 0.0, 0.9), (750, 0.0, 0.0)]
    )
    client.post(f"/api/session/{heavy}/close")
    r = client.get(f"/api/session/{heavy}/export")
    assert int(r.headers["X-Export-Total"]) == 6  # 3 forwards + 1 stop -> 3 + 3


def test_export_option_validation(client):
    sid = paired_session(client)
    r = client.get(f"/api/session/{sid}/export", params={"width": 32})
    assert r.status_code == 400
    assert r.json()["code"] == "bad_options"
    r = client.get(f"/api/session/{sid}/export", params={"canny": "true", "stack": 3})
    assert r.status_code == 400


def test_export_resize_and_stack(client, tmp_path):
    sid = new_session(client)
    n = 12
    upload_video(client, sid, 0, [250 * i for i in range(n)])
    upload_commands(client, sid, [(250 * i, 0.0, 0.9) for i in range(n)])
    client.post(f"/api/session/{sid}/close")
    r = client.get(
        f"/api/session/{sid}/export",
        params={"width": 16, "height": 12, "stack": 10, "balance": "false"},
    )
    assert r.status_code == 200
    assert int(r.headers["X-Export-Total"]) == 3  # 12 frames, windows of 10
    out = tmp_path / "stacked"
    with tarfile.open(fileobj=io.BytesIO(r.content), mode="r:gz") as tar:
        tar.extractall(out)
    d = datapipe.import_dataset(out)
    assert d.shape == (10, 12, 16)


def test_multi_session_export_rebases_timelines(client, tmp_path):
    a = paired_session(client)
    b = paired_session(client)
    store = client.app.state.store
    directory, manifest = store.export([a, b], ExportOptions(balance=False))
    assert manifest["total"] == 12
    d = datapipe.import_dataset(directory)
    ts = sorted(ex.timestamp_ms for ex in d.examples)
    # second session's clock starts one full gap after the first ends
    assert ts[6] - ts[5] >= 10_000


# -- quantizer reference grid -------------------------------------------------------------


def test_quantizer_grid(client):
    r = client.get("/api/quantizer")
    assert r.status_code == 200
    q = r.json()
    assert q["grid_size"] == 21
    assert len(q["labels"]) == 441
    assert q["xs"][0] == -1.0 and q["xs"][-1] == 1.0
    assert q["actions"][4] == "STOP" and len(q["actions"]) == 9
    for iy, y in enumerate(q["ys"]):
        for ix, x in enumerate(q["xs"]):
            want = datapipe.quantize_joystick(
                datapipe.JoystickSample(x=x, y=y, timestamp_ms=0)
            )
            assert q["labels"][iy * 21 + ix] == int(want)
