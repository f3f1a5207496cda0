/** Thin typed wrapper around the recording server's HTTP API. */

import { QuantizerInfo } from "./quantizer.js";

export interface SessionStatus {
  session_id: string;
  map: string;
  state: string;
  mode: string | null;
  frames: number;
  samples: number;
  collisions: number;
  last_frame_ms: number | null;
}

export interface JoystickAck {
  t: number;
  action: number;
}

export interface CloseResult {
  state: string;
  frames: number;
  samples: number;
}

export interface FrameResponse {
  blob: Blob;
  timestampMs: number;
  collisions: number;
  state: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let code = "http_error";
    let message = res.statusText;
    try {
      const body = await res.json();
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(res.status, code, message);
  }
  return res.json() as Promise<T>;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  async createSession(map: string): Promise<string> {
    const res = await fetch(`${this.baseUrl}/api/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ map }),
    });
    const body = await asJson<{ session_id: string }>(res);
    return body.session_id;
  }

  async postJoystick(
    sid: string,
    controllerId: string,
    x: number,
    y: number,
  ): Promise<JoystickAck> {
    const res = await fetch(`${this.baseUrl}/api/session/${sid}/joystick`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Controller-Id": controllerId,
      },
      body: JSON.stringify({ t: Date.now(), x, y }),
    });
    return asJson<JoystickAck>(res);
  }

  async getFrame(sid: string, format: "pgm" | "png" = "png"): Promise<FrameResponse> {
    const res = await fetch(
      `${this.baseUrl}/api/session/${sid}/frame?format=${format}`,
    );
    if (!res.ok) {
      throw new ApiError(res.status, "frame_failed", res.statusText);
    }
    return {
      blob: await res.blob(),
      timestampMs: Number(res.headers.get("X-Frame-Timestamp") ?? -1),
      collisions: Number(res.headers.get("X-Collisions") ?? 0),
      state: res.headers.get("X-Session-State") ?? "unknown",
    };
  }

  async getStatus(sid: string): Promise<SessionStatus> {
    return asJson(await fetch(`${this.baseUrl}/api/session/${sid}/status`));
  }

  async closeSession(sid: string): Promise<CloseResult> {
    const res = await fetch(`${this.baseUrl}/api/session/${sid}/close`, {
      method: "POST",
    });
    return asJson<CloseResult>(res);
  }

  async getQuantizer(): Promise<QuantizerInfo> {
    return asJson(await fetch(`${this.baseUrl}/api/quantizer`));
  }

  exportUrl(sid: string, balance = true): string {
    return `${this.baseUrl}/api/session/${sid}/export?balance=${balance}`;
  }
}
