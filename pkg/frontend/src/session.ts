/**
 * Live teleop session lifecycle: create, stream stick samples, poll frames,
 * close. The DOM layer and the scripted smoke test both drive this class,
 * so it owns no rendering, only state and timing.
 */

import { ApiClient, FrameResponse } from "./api.js";

export type SessionState = "idle" | "live" | "closed" | "disconnected";

export interface TeleopStatus {
  sessionId: string | null;
  state: SessionState;
  frames: number;
  collisions: number;
  sampleRate: number;
  recordingS: number;
  lastAction: number | null;
  staleFrame: boolean;
}

export interface SessionEvents {
  onFrame?: (frame: FrameResponse) => void;
  onStatus?: (status: TeleopStatus) => void;
}

const POLL_INTERVAL_MS = 200; // 5 Hz, above the 4 Hz viewing floor

export class TeleopSession {
  private sid: string | null = null;
  private state: SessionState = "idle";
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private startedAt = 0;
  private frames = 0;
  private collisions = 0;
  private lastAction: number | null = null;
  private staleFrame = false;
  private sentTimes: number[] = [];

  constructor(
    private api: ApiClient,
    private controllerId: string,
    private events: SessionEvents = {},
  ) {}

  status(): TeleopStatus {
    const now = Date.now();
    this.sentTimes = this.sentTimes.filter((t) => now - t < 1000);
    return {
      sessionId: this.sid,
      state: this.state,
      frames: this.frames,
      collisions: this.collisions,
      sampleRate: this.sentTimes.length,
      recordingS: this.startedAt ? (now - this.startedAt) / 1000 : 0,
      lastAction: this.lastAction,
      staleFrame: this.staleFrame,
    };
  }

  get sessionId(): string | null {
    return this.sid;
  }

  async start(map: string): Promise<string> {
    this.sid = await this.api.createSession(map);
    this.state = "live";
    this.startedAt = Date.now();
    this.frames = 0;
    this.collisions = 0;
    this.pollTimer = setInterval(() => void this.poll(), POLL_INTERVAL_MS);
    this.emitStatus();
    return this.sid;
  }

  /** Forward one stick sample; drops it while disconnected. */
  async sendStick(x: number, y: number): Promise<void> {
    if (this.sid === null || this.state === "closed") return;
    if (this.state === "disconnected") return; // sampling pauses until a poll succeeds
    try {
      const ack = await this.api.postJoystick(this.sid, this.controllerId, x, y);
      this.lastAction = ack.action;
      this.sentTimes.push(Date.now());
    } catch (err) {
      if (err instanceof TypeError) {
        // fetch network failure; API errors (409 etc.) stay loud
        this.state = "disconnected";
      }
      this.emitStatus();
      return;
    }
    this.emitStatus();
  }

  async close(): Promise<void> {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
    if (this.sid !== null) {
      await this.api.closeSession(this.sid);
    }
    this.state = "closed";
    this.emitStatus();
  }

  exportUrl(balance = true): string | null {
    return this.sid === null ? null : this.api.exportUrl(this.sid, balance);
  }

  private async poll(): Promise<void> {
    if (this.sid === null) return;
    let frame: FrameResponse;
    try {
      frame = await this.api.getFrame(this.sid);
    } catch {
      this.staleFrame = true;
      this.emitStatus();
      return;
    }
    this.staleFrame = false;
    if (this.state === "disconnected") this.state = "live";
    this.frames += 1;
    this.collisions = frame.collisions;
    this.events.onFrame?.(frame);
    this.emitStatus();
  }

  private emitStatus(): void {
    this.events.onStatus?.(this.status());
  }
}
