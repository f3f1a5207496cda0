/** DOM wiring: joystick pad with sector overlay, live view, status bar. */

import { ApiClient, FrameResponse } from "./api.js";
import { JoystickPad, StickState } from "./joystick.js";
import {
  ACTION_NAMES,
  Action,
  DEAD_ZONE_RADIUS,
  SLIGHT_RADIUS,
  quantize,
} from "./quantizer.js";
import { TeleopSession, TeleopStatus } from "./session.js";

const DEG = Math.PI / 180;

// Screen-space angular extent of each outer sector (canvas y points down).
const OUTER_SECTORS: Array<[Action, number, number]> = [
  [Action.ForwardsLeft, -180 * DEG, -120 * DEG],
  [Action.Forwards, -120 * DEG, -60 * DEG],
  [Action.ForwardsRight, -60 * DEG, 0],
  [Action.BackwardsRight, 0, 60 * DEG],
  [Action.Backwards, 60 * DEG, 120 * DEG],
  [Action.BackwardsLeft, 120 * DEG, 180 * DEG],
];

function ring(
  ctx: CanvasRenderingContext2D,
  cx: number,
  cy: number,
  r0: number,
  r1: number,
  a0: number,
  a1: number,
): void {
  ctx.beginPath();
  ctx.arc(cx, cy, r1, a0, a1);
  ctx.arc(cx, cy, r0, a1, a0, true);
  ctx.closePath();
}

export function drawPad(
  canvas: HTMLCanvasElement,
  stick: StickState,
  active: Action | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // headless test environments have no 2d context
  const size = canvas.width;
  const c = size / 2;
  const r = c - 2;
  const rDead = r * DEAD_ZONE_RADIUS;
  const rSlight = r * SLIGHT_RADIUS;
  const rOuter = r * 1.5; // clipped to the square pad

  ctx.clearRect(0, 0, size, size);
  ctx.save();
  ctx.beginPath();
  ctx.rect(1, 1, size - 2, size - 2);
  ctx.clip();

  const highlight = (action: Action) => {
    ctx.fillStyle = action === active ? "#2f81f7" : "#161b22";
    ctx.fill();
    ctx.strokeStyle = "#30363d";
    ctx.stroke();
  };

  for (const [action, a0, a1] of OUTER_SECTORS) {
    ring(ctx, c, c, rSlight, rOuter, a0, a1);
    highlight(action);
  }
  ring(ctx, c, c, rDead, rSlight, -Math.PI, 0);
  highlight(Action.SlightlyForwards);
  ring(ctx, c, c, rDead, rSlight, 0, Math.PI);
  highlight(Action.SlightlyBackwards);
  ctx.beginPath();
  ctx.arc(c, c, rDead, 0, 2 * Math.PI);
  highlight(Action.Stop);
  ctx.restore();

  if (stick.active) {
    ctx.beginPath();
    ctx.arc(c + stick.x * r, c - stick.y * r, 9, 0, 2 * Math.PI);
    ctx.fillStyle = "#e6edf3";
    ctx.fill();
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function mountApp(): void {
  const api = new ApiClient("");
  const controllerId = `web-${Math.random().toString(36).slice(2, 10)}`;

  const mapInput = el<HTMLInputElement>("map");
  const startBtn = el<HTMLButtonElement>("start");
  const stopBtn = el<HTMLButtonElement>("stop");
  const exportLink = el<HTMLAnchorElement>("export");
  const padCanvas = el<HTMLCanvasElement>("pad");
  const view = el<HTMLImageElement>("view");
  const statusLine = el<HTMLElement>("status");
  const sectorName = el<HTMLElement>("sector");

  let lastCollisions = 0;
  let frameUrl: string | null = null;

  const session = new TeleopSession(api, controllerId, {
    onFrame: (frame: FrameResponse) => {
      const url = URL.createObjectURL(frame.blob);
      view.src = url;
      if (frameUrl) URL.revokeObjectURL(frameUrl);
      frameUrl = url;
      if (frame.collisions > lastCollisions) {
        statusLine.classList.add("alert");
        setTimeout(() => statusLine.classList.remove("alert"), 600);
      }
      lastCollisions = frame.collisions;
    },
    onStatus: (s: TeleopStatus) => {
      const bits = [
        s.sessionId ?? "no session",
        s.state,
        `frames ${s.frames}`,
        `collisions ${s.collisions}`,
        `${s.sampleRate} samples/s`,
        `${s.recordingS.toFixed(1)} s`,
      ];
      if (s.staleFrame) bits.push("stale frame");
      statusLine.textContent = bits.join(" | ");
      statusLine.classList.toggle("disconnected", s.state === "disconnected");
      if (s.state === "closed") {
        startBtn.disabled = false;
        stopBtn.disabled = true;
        padCanvas.classList.add("off");
        const url = session.exportUrl();
        if (url) {
          exportLink.href = url;
          exportLink.classList.remove("off");
        }
      }
    },
  });

  const pad = new JoystickPad(padCanvas, (x, y) => void session.sendStick(x, y));
  const repaint = (stick: StickState) => {
    const active = stick.active ? quantize(stick.x, stick.y) : null;
    drawPad(padCanvas, stick, active);
    sectorName.textContent =
      active === null ? "idle" : `${ACTION_NAMES[active]} (${active})`;
  };
  pad.onMove(repaint);
  repaint(pad.state());

  startBtn.addEventListener("click", () => {
    startBtn.disabled = true;
    stopBtn.disabled = false;
    padCanvas.classList.remove("off");
    exportLink.classList.add("off");
    void session.start(mapInput.value.trim() || "corners").catch((err) => {
      statusLine.textContent = `start failed: ${err.message}`;
      startBtn.disabled = false;
      stopBtn.disabled = true;
    });
  });

  stopBtn.addEventListener("click", () => {
    void session.close();
  });
}

if (typeof document !== "undefined" && document.getElementById("pad")) {
  mountApp();
}
