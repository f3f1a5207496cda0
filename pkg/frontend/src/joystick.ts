/**
 * Virtual joystick pad.
 *
 * Tracks one pointer on a square pad, normalizes it to the unit square
 * (y up), and emits samples at a fixed 10 Hz while active. Releasing the
 * pointer emits exactly one (0, 0) Stop sample and then goes quiet; an
 * inactive stick never sends anything else.
 */

export interface StickState {
  x: number;
  y: number;
  active: boolean;
}

export type SampleHandler = (x: number, y: number) => void;

const SAMPLE_INTERVAL_MS = 100;

export class JoystickPad {
  private pointerId: number | null = null;
  private x = 0;
  private y = 0;
  private timer: ReturnType<typeof setInterval> | null = null;
  private moveListeners: Array<(s: StickState) => void> = [];

  constructor(
    private el: HTMLElement,
    private onSample: SampleHandler,
    private size?: number,
  ) {
    el.addEventListener("pointerdown", (e) => this.down(e as PointerEvent));
    el.addEventListener("pointermove", (e) => this.move(e as PointerEvent));
    el.addEventListener("pointerup", (e) => this.up(e as PointerEvent));
    el.addEventListener("pointercancel", (e) => this.up(e as PointerEvent));
  }

  state(): StickState {
    return { x: this.x, y: this.y, active: this.pointerId !== null };
  }

  onMove(fn: (s: StickState) => void): void {
    this.moveListeners.push(fn);
  }

  private down(e: PointerEvent): void {
    if (this.pointerId !== null) return;
    this.pointerId = e.pointerId;
    if (this.el.setPointerCapture) {
      try {
        this.el.setPointerCapture(e.pointerId);
      } catch {
        // jsdom and some browsers throw for synthetic pointers; tracking
        // still works through the element listeners
      }
    }
    this.track(e);
    this.timer = setInterval(
      () => this.onSample(this.x, this.y),
      SAMPLE_INTERVAL_MS,
    );
    this.onSample(this.x, this.y);
  }

  private move(e: PointerEvent): void {
    if (e.pointerId !== this.pointerId) return;
    this.track(e);
  }

  private up(e: PointerEvent): void {
    if (e.pointerId !== this.pointerId) return;
    this.pointerId = null;
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.x = 0;
    this.y = 0;
    this.notify();
    this.onSample(0, 0); // single Stop on release
  }

  private track(e: PointerEvent): void {
    const rect = this.el.getBoundingClientRect();
    // jsdom reports zero-size rects; fall back to the configured size
    const w = rect.width > 0 ? rect.width : (this.size ?? 200);
    const h = rect.height > 0 ? rect.height : (this.size ?? 200);
    const cx = rect.left + w / 2;
    const cy = rect.top + h / 2;
    this.x = clamp(((e.clientX - cx) * 2) / w);
    this.y = clamp(((cy - e.clientY) * 2) / h); // screen y points down
    this.notify();
  }

  private notify(): void {
    const s = this.state();
    for (const fn of this.moveListeners) fn(s);
  }
}

function clamp(v: number): number {
  return Math.max(-1, Math.min(1, v));
}
