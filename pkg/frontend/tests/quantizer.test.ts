import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ACTION_NAMES,
  Action,
  DEAD_ZONE_RADIUS,
  SECTOR_HALF_ANGLE_DEG,
  SLIGHT_RADIUS,
  quantize,
} from "../src/quantizer.js";
import { ApiClient } from "../src/api.js";
import { TestServer, startServer } from "./server.js";

describe("quantize", () => {
  it("maps the canonical stick positions", () => {
    expect(quantize(0, 0)).toBe(Action.Stop);
    expect(quantize(0, 0.9)).toBe(Action.Forwards);
    expect(quantize(0, 0.3)).toBe(Action.SlightlyForwards);
    expect(quantize(0, -0.3)).toBe(Action.SlightlyBackwards);
    expect(quantize(-0.64, 0.64)).toBe(Action.ForwardsLeft);
    expect(quantize(0.64, 0.64)).toBe(Action.ForwardsRight);
    expect(quantize(0, -0.9)).toBe(Action.Backwards);
    expect(quantize(-0.64, -0.64)).toBe(Action.BackwardsLeft);
    expect(quantize(0.64, -0.64)).toBe(Action.BackwardsRight);
  });

  it("treats the release position as Stop", () => {
    expect(quantize(0, 0)).toBe(Action.Stop);
  });
});

describe("server conformance", () => {
  let server: TestServer;

  beforeAll(async () => {
    server = await startServer();
  }, 30000);

  afterAll(() => {
    server.stop();
  });

  it("agrees with the server on all 441 grid points", async () => {
    const api = new ApiClient(server.baseUrl);
    const info = await api.getQuantizer();

    expect(info.grid_size).toBe(21);
    expect(info.xs).toHaveLength(21);
    expect(info.ys).toHaveLength(21);
    expect(info.labels).toHaveLength(441);
    expect(info.dead_zone_radius).toBe(DEAD_ZONE_RADIUS);
    expect(info.slight_radius).toBe(SLIGHT_RADIUS);
    expect(info.sector_half_angle_deg).toBe(SECTOR_HALF_ANGLE_DEG);
    expect(info.actions).toEqual([...ACTION_NAMES]);

    let mismatches = 0;
    for (let iy = 0; iy < info.ys.length; iy++) {
      for (let ix = 0; ix < info.xs.length; ix++) {
        const want = info.labels[iy * info.xs.length + ix];
        const got = quantize(info.xs[ix], info.ys[iy]);
        if (got !== want) mismatches++;
      }
    }
    expect(mismatches).toBe(0);
  });
});
