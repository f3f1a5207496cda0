import { execFileSync } from "node:child_process";
import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Action } from "../src/quantizer.js";
import { TeleopSession } from "../src/session.js";
import { TestServer, startServer } from "./server.js";

const DRIVE_MS = 30_000;

// Extracts the export tarball and round-trips it through the real importer.
const PY_IMPORT = `
import sys, tarfile
from hallnav.datapipe import import_dataset
with tarfile.open(sys.argv[1]) as tf:
    tf.extractall(sys.argv[2])
d = import_dataset(sys.argv[2])
print(len(d.examples), *d.shape)
`;

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

describe("scripted live session", () => {
  let server: TestServer;
  let workDir: string;

  beforeAll(async () => {
    server = await startServer();
    workDir = fs.mkdtempSync(path.join(os.tmpdir(), "hallnav-smoke-"));
  }, 30000);

  afterAll(() => {
    server.stop();
  });

  it("drives 30 s, closes, and the export imports with >= 100 examples", async () => {
    const api = new ApiClient(server.baseUrl);
    let framesSeen = 0;
    const acks = new Set<number>();
    const session = new TeleopSession(api, "smoke-rig", {
      onFrame: () => framesSeen++,
      onStatus: (s) => {
        if (s.lastAction !== null) acks.add(s.lastAction);
      },
    });

    const sid = await session.start("corners");
    const t0 = Date.now();
    while (Date.now() - t0 < DRIVE_MS) {
      // lap the ring: forward for 3.5 s, then turn left for 2.5 s
      const phase = (Date.now() - t0) % 6000;
      const [x, y] = phase < 3500 ? [0, 0.9] : [-0.64, 0.64];
      await session.sendStick(x, y);
      await sleep(100);
    }
    await session.close();

    const status = session.status();
    expect(status.state).toBe("closed");
    expect(acks.has(Action.Forwards)).toBe(true);
    expect(acks.has(Action.ForwardsLeft)).toBe(true);
    // live view kept up: 30 s at 5 Hz polling clears the 4 Hz floor
    expect(framesSeen).toBeGreaterThanOrEqual(120);

    const serverStatus = await api.getStatus(sid);
    expect(serverStatus.state).toBe("closed");
    expect(serverStatus.samples).toBeGreaterThanOrEqual(250);

    // balance=false so the total counts genuine paired examples
    const res = await fetch(api.exportUrl(sid, false));
    expect(res.status).toBe(200);
    const total = Number(res.headers.get("X-Export-Total"));
    expect(total).toBeGreaterThanOrEqual(100);

    const tarPath = path.join(workDir, "export.tar.gz");
    fs.writeFileSync(tarPath, Buffer.from(await res.arrayBuffer()));
    const destDir = path.join(workDir, "imported");
    const out = execFileSync("python3", ["-c", PY_IMPORT, tarPath, destDir])
      .toString()
      .trim();
    const [count, channels, height, width] = out.split(/\s+/).map(Number);
    expect(count).toBe(total);
    expect(count).toBeGreaterThanOrEqual(100);
    expect([channels, height, width]).toEqual([1, 48, 64]);
  });
});
