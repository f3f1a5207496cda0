"""Command line front door for the whole pipeline.

Every subcommand is a thin composition of module operations; the only
logic here is argument parsing and file plumbing. A config file of
`subcommand.option = value` lines may set defaults, flags always win.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

import click
import numpy as np

from hallnav import autopilot, datapipe, imaging, sim
from hallnav.actions import ActionLabel
from hallnav.cnn import (
    ModelConfig,
    ModelFileError,
    evaluate,
    load_model,
    save_model,
)
from hallnav.cnn import train as train_network
from hallnav.datapipe import Dataset, JoystickSample
from hallnav.server.store import SessionStore, StoreError

# actions injected while collecting with the oracle: the car occasionally
# wanders off the oracle's line (the label stays the oracle's choice), so
# the dataset covers recovery poses, not just one clean racing line
_EXPLORE_ACTIONS = (
    ActionLabel.SLIGHTLY_FORWARDS,
    ActionLabel.FORWARDS_LEFT,
    ActionLabel.FORWARDS,
    ActionLabel.FORWARDS_RIGHT,
)


def _fail(exc: Exception, code: str | None = None) -> None:
    code = code or getattr(exc, "code", None) or type(exc).__name__
    raise click.ClickException(f"{code}: {exc}")


def _read_config(path: str) -> dict:
    defaults: dict[str, dict] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise click.ClickException(
                f"config: line {lineno} must be subcommand.option = value"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        cmd, opt = key.split(".", 1)
        defaults.setdefault(cmd, {})[opt.replace("-", "_")] = value
    return defaults


def _load_world(path: str) -> sim.WorldMap:
    try:
        return sim.load_map(Path(path).read_text())
    except sim.MapError as e:
        _fail(e, "bad_map")


def _load_dataset(path: str) -> Dataset:
    try:
        return datapipe.import_dataset(path)
    except (ValueError, FileNotFoundError) as e:
        _fail(e, "bad_dataset")


def _load_net(path: str):
    try:
        return load_model(path)
    except (ModelFileError, OSError) as e:
        _fail(e)


def _parse_pose(text: str | None, world: sim.WorldMap) -> sim.CarState:
    if text is None:
        return world.start_state()
    try:
        x, y, deg = (float(p) for p in text.split(","))
    except ValueError:
        raise click.UsageError(f"pose must be x,y,heading_deg, got {text!r}")
    return sim.CarState(x=x, y=y, heading=np.radians(deg) % (2 * np.pi), speed=0.0)


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Defaults file with subcommand.option = value lines.",
)
@click.version_option(package_name="hallnav")
@click.pass_context
def main(ctx: click.Context, config_path: str | None):
    """Desk-scale imitation-learning driving pipeline."""
    if config_path:
        ctx.default_map = _read_config(config_path)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--maps-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--static-dir", default=None, type=click.Path(exists=True, file_okay=False))
def serve(host: str, port: int, data_dir: str, maps_dir: str, static_dir: str | None):
    """Run the recording server."""
    import uvicorn

    from hallnav.server import create_app

    uvicorn.run(create_app(data_dir, maps_dir, static_dir), host=host, port=port)


@main.command()
@click.option("--map", "map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--oracle", is_flag=True, help="Drive with the scripted wall-avoider.")
@click.option("--seconds", default=600.0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--noise", default=0.1, show_default=True,
              help="Chance per tick of wandering off the oracle's action.")
@click.option("--interval-ms", default=datapipe.DEFAULT_INTERVAL_MS, show_default=True)
def collect(map_path, oracle, seconds, out_dir, seed, noise, interval_ms):
    """Record a demonstration session into a store directory."""
    if not oracle:
        raise click.UsageError("only --oracle collection is available here; "
                               "live human sessions go through `serve`")
    world = _load_world(map_path)
    state = world.start_state()
    rng = random.Random(seed)
    rcfg = sim.RenderConfig()
    ticks = int(seconds * 1000) // interval_ms
    frames: list[tuple[imaging.GrayImage, int]] = []
    rows: list[tuple[int, float, float]] = []
    collisions = 0
    for k in range(ticks):
        offset = k * interval_ms
        frames.append((sim.render(world, state, rcfg), offset))
        action = sim.oracle_policy(world, state)
        stick = datapipe.stick_for_action(action, offset)
        rows.append((stick.timestamp_ms, stick.x, stick.y))
        executed = action
        if noise > 0 and rng.random() < noise:
            executed = rng.choice(_EXPLORE_ACTIONS)
        state, hit = sim.step(world, state, executed, interval_ms / 1000)
        collisions += int(hit)
    store = SessionStore(out_dir)
    try:
        sid = store.create(Path(map_path).stem)
        n = store.ingest_video(sid, 0, frames, interval_ms)
        m = store.ingest_commands(sid, rows)
        store.close(sid)
    except StoreError as e:
        _fail(e)
    click.echo(f"{sid}: {n} frames, {m} samples, {collisions} collisions")


@main.command(name="slice")
@click.option("--video", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Concatenated PGM stream.")
@click.option("--index", required=True, type=click.Path(exists=True, dir_okay=False),
              help="One frame offset (ms) per line.")
@click.option("--start-ms", default=0, show_default=True)
@click.option("--interval-ms", default=datapipe.DEFAULT_INTERVAL_MS, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def slice_cmd(video, index, start_ms, interval_ms, out_dir):
    """Pick one frame per interval tick and write <timestamp>.pgm files."""
    try:
        images = imaging.read_pgm_stream(Path(video).read_bytes())
        offsets = [int(tok) for tok in Path(index).read_text().split()]
        if len(images) != len(offsets):
            raise ValueError(
                f"{len(images)} frames but {len(offsets)} index entries"
            )
        sliced = datapipe.slice_video(list(zip(images, offsets)), start_ms, interval_ms)
    except ValueError as e:
        _fail(e, "bad_payload")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for frame in sliced:
        (out / f"{frame.timestamp_ms:012d}.pgm").write_bytes(
            imaging.write_pgm(frame.image)
        )
    click.echo(f"{len(sliced)} frames -> {out}")


@main.command()
@click.option("--frames", "frames_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of <timestamp>.pgm frames.")
@click.option("--samples", "samples_csv", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Joystick log CSV with header t,x,y.")
@click.option("--max-gap-ms", default=datapipe.DEFAULT_MAX_GAP_MS, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def pair(frames_dir, samples_csv, max_gap_ms, out_dir):
    """Label frames with the nearest-in-time joystick sample."""
    frames = [
        datapipe.TimestampedFrame(
            image=imaging.read_pgm(p.read_bytes()), timestamp_ms=int(p.stem)
        )
        for p in sorted(Path(frames_dir).glob("*.pgm"))
    ]
    try:
        with open(samples_csv, newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)  # header
            samples = [
                JoystickSample(x=float(x), y=float(y), timestamp_ms=int(t))
                for t, x, y in reader
            ]
    except ValueError as e:
        _fail(e, "bad_samples")
    pairs = datapipe.pair(frames, samples, max_gap_ms)
    dataset = datapipe.examples_from_pairs(pairs)
    datapipe.export_dataset(dataset, out_dir)
    if not pairs:
        click.echo("warning: no frame had a sample in range, dataset is empty", err=True)
    click.echo(f"{len(pairs)} examples -> {out_dir}")


@main.command()
@click.option("--data", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--resize", default=None, help="Target size as WxH, e.g. 64x48.")
@click.option("--equalize", is_flag=True)
@click.option("--canny", is_flag=True)
@click.option("--stack", default=0, show_default=True,
              help="Stack N consecutive frames into N-channel examples.")
@click.option("--balance", is_flag=True, help="Duplicate to equal class counts.")
@click.option("--interval-ms", default=datapipe.DEFAULT_INTERVAL_MS, show_default=True)
def preprocess(in_dir, out_dir, resize, equalize, canny, stack, balance, interval_ms):
    """Transform an exported dataset: resize, equalize, canny/stack, balance.

    Operations always apply in that order; stacking and the edge channel
    both need plain single-channel input and are mutually exclusive.
    """
    if canny and stack > 1:
        raise click.UsageError("--canny and --stack are mutually exclusive")
    d = _load_dataset(in_dir)
    size = None
    if resize:
        try:
            w, h = (int(p) for p in resize.lower().split("x"))
        except ValueError:
            raise click.UsageError(f"--resize must be WxH, got {resize!r}")
        size = (w, h)
    if (size or equalize) and d.shape[0] != 1:
        _fail(ValueError(f"resize/equalize need single-channel data, got C={d.shape[0]}"),
              "bad_dataset")
    if size or equalize:
        examples = []
        for ex in d.examples:
            img = datapipe.channel_to_image(ex.tensor[0])
            if size:
                img = imaging.resize(img, *size)
            if equalize:
                img = imaging.equalize_hist(img)
            examples.append(
                datapipe.LabeledExample(
                    tensor=datapipe.image_to_channel(img)[None],
                    label=ex.label,
                    timestamp_ms=ex.timestamp_ms,
                    origin=ex.origin,
                )
            )
        h, w = examples[0].tensor.shape[1:]
        d = Dataset(examples=examples, shape=(1, h, w), params=dict(d.params))
    if stack > 1:
        if d.shape[0] != 1:
            _fail(ValueError("stacking needs single-channel data"), "bad_dataset")
        pairs = [
            (datapipe.TimestampedFrame(
                image=datapipe.channel_to_image(ex.tensor[0]),
                timestamp_ms=ex.timestamp_ms,
            ), ex.label)
            for ex in d.examples
        ]
        stacked = datapipe.stack_frames(pairs, stack, interval_ms)
        if not stacked:
            _fail(ValueError("no stack window fits the span limit"), "empty_result")
        d = Dataset(
            examples=stacked,
            shape=stacked[0].tensor.shape,
            params={**d.params, "stack": stack},
        )
    elif canny:
        d = datapipe.add_canny_channel(d)
    if balance:
        d = datapipe.balance_by_duplication(d)
    datapipe.export_dataset(d, out_dir)
    click.echo(f"{len(d)} examples, shape {d.shape} -> {out_dir}")


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--epochs", default=15, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--lr", default=0.001, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--test-fraction", default=datapipe.DEFAULT_TEST_FRACTION, show_default=True)
@click.option("--conv1", default=16, show_default=True)
@click.option("--conv2", default=32, show_default=True)
@click.option("--kernel", default=3, show_default=True)
@click.option("--dense", default=128, show_default=True)
@click.option("--dropout", default=0.5, show_default=True)
@click.option("--history", "history_path", default=None, type=click.Path(dir_okay=False))
def train(data_dir, model_path, epochs, batch_size, lr, seed, test_fraction,
          conv1, conv2, kernel, dense, dropout, history_path):
    """Fit the action classifier on an exported dataset.

    The same --seed drives the train/test split, the weight init, and the
    shuffling, so train and a later eval agree on what was held out.
    """
    d = _load_dataset(data_dir)
    if not len(d):
        _fail(ValueError("dataset is empty"), "bad_dataset")
    train_set, _ = datapipe.split(d, test_fraction, seed)
    try:
        cfg = ModelConfig(
            in_shape=d.shape,
            conv1_filters=conv1,
            conv2_filters=conv2,
            kernel=kernel,
            dense_units=dense,
            dropout=dropout,
        )
        params, history = train_network(
            cfg, train_set, epochs=epochs, batch_size=batch_size, seed=seed, lr=lr
        )
    except ValueError as e:
        _fail(e, "bad_config")
    save_model(params, cfg, model_path)
    history_path = history_path or f"{model_path}.history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['loss']:.6f}", f"{row['accuracy']:.6f}"])
    last = history[-1]
    click.echo(
        f"trained {len(train_set)} examples, {epochs} epochs: "
        f"loss {last['loss']:.4f}, accuracy {last['accuracy']:.4f} -> {model_path}"
    )


@main.command(name="eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--split", "side", type=click.Choice(["test", "train", "all"]),
              default="test", show_default=True)
@click.option("--test-fraction", default=datapipe.DEFAULT_TEST_FRACTION, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--confusion", "confusion_path", default=None, type=click.Path(dir_okay=False))
def eval_cmd(model_path, data_dir, side, test_fraction, seed, confusion_path):
    """Accuracy and confusion matrix on a dataset split."""
    params, cfg = _load_net(model_path)
    d = _load_dataset(data_dir)
    if side != "all":
        train_set, test_set = datapipe.split(d, test_fraction, seed)
        d = test_set if side == "test" else train_set
    if not len(d):
        _fail(ValueError(f"{side} split is empty"), "bad_dataset")
    if d.shape != cfg.in_shape:
        _fail(ValueError(f"dataset shape {d.shape} != model input {cfg.in_shape}"),
              "shape_mismatch")
    accuracy, confusion = evaluate(params, cfg, d)
    if confusion_path:
        with open(confusion_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + [str(i) for i in range(confusion.shape[1])])
            for i, row in enumerate(confusion):
                writer.writerow([i] + [int(v) for v in row])
    click.echo(f"accuracy {accuracy:.6f} on {len(d)} {side} examples")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", default=500, show_default=True)
@click.option("--rate-hz", default=4.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--start", "pose", default=None, help="Start pose x,y,heading_deg.")
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False))
@click.option("--log", "log_path", default=None, type=click.Path(dir_okay=False))
def drive(model_path, map_path, steps, rate_hz, seed, pose, report_path, log_path):
    """Drive the model closed-loop and report collisions and distance."""
    params, cfg = _load_net(model_path)
    world = _load_world(map_path)
    start = _parse_pose(pose, world)
    report = autopilot.drive(params, cfg, world, start, steps, rate_hz, seed)
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")
    if log_path:
        report.write_log_csv(log_path)
    click.echo(report.to_json())


@main.command(name="render-map")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pose", default=None, help="Camera pose x,y,heading_deg.")
@click.option("--width", default=64, show_default=True)
@click.option("--height", default=48, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def render_map(map_path, pose, width, height, out_path):
    """Render one first-person frame from a map."""
    world = _load_world(map_path)
    state = _parse_pose(pose, world)
    try:
        rcfg = sim.RenderConfig(width=width, height=height)
    except ValueError as e:
        _fail(e, "bad_config")
    img = sim.render(world, state, rcfg)
    Path(out_path).write_bytes(imaging.write_pgm(img))
    click.echo(f"{width}x{height} frame -> {out_path}")


if __name__ == "__main__":
    main()
