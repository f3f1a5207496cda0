// @vitest-environment jsdom

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { JoystickPad } from "../src/joystick.js";

// jsdom has no PointerEvent; MouseEvent with the right type string reaches
// the same listeners and the pad only reads clientX/clientY/pointerId.
function pointer(type: string, clientX: number, clientY: number): MouseEvent {
  return new MouseEvent(type, { clientX, clientY, bubbles: true });
}

describe("JoystickPad", () => {
  let el: HTMLElement;
  let samples: Array<[number, number]>;
  let pad: JoystickPad;

  beforeEach(() => {
    vi.useFakeTimers();
    el = document.createElement("div");
    document.body.appendChild(el);
    samples = [];
    pad = new JoystickPad(el, (x, y) => samples.push([x, y]), 200);
  });

  afterEach(() => {
    vi.useRealTimers();
    el.remove();
  });

  it("stays quiet until the pointer goes down", () => {
    vi.advanceTimersByTime(2000);
    expect(samples).toEqual([]);
    expect(pad.state().active).toBe(false);
  });

  it("samples at 10 Hz while held", () => {
    el.dispatchEvent(pointer("pointerdown", 100, 0)); // straight up
    vi.advanceTimersByTime(1000);
    expect(samples.length).toBe(11); // one immediate plus ten ticks
    for (const [x, y] of samples) {
      expect(x).toBeCloseTo(0, 6);
      expect(y).toBeCloseTo(1, 6);
    }
  });

  it("tracks movement and clamps to the unit square", () => {
    el.dispatchEvent(pointer("pointerdown", 100, 100));
    el.dispatchEvent(pointer("pointermove", 500, -500)); // way off the pad
    expect(pad.state()).toEqual({ x: 1, y: 1, active: true });
    el.dispatchEvent(pointer("pointermove", 150, 100));
    expect(pad.state().x).toBeCloseTo(0.5, 6);
    expect(pad.state().y).toBeCloseTo(0, 6);
  });

  it("release emits exactly one stop sample and then nothing", () => {
    el.dispatchEvent(pointer("pointerdown", 100, 0));
    vi.advanceTimersByTime(500);
    const before = samples.length;
    el.dispatchEvent(pointer("pointerup", 100, 0));
    expect(samples.length).toBe(before + 1);
    expect(samples[samples.length - 1]).toEqual([0, 0]);
    expect(pad.state()).toEqual({ x: 0, y: 0, active: false });
    vi.advanceTimersByTime(3000);
    expect(samples.length).toBe(before + 1);
  });

  it("reports stick state to overlay listeners", () => {
    const seen: boolean[] = [];
    pad.onMove((s) => seen.push(s.active));
    el.dispatchEvent(pointer("pointerdown", 100, 50));
    el.dispatchEvent(pointer("pointerup", 100, 50));
    expect(seen).toEqual([true, false]);
  });
});
