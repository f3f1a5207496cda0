/**
 * Joystick sector quantization, mirroring the server's geometry.
 *
 * The server publishes the same constants plus a 21x21 reference grid at
 * GET /api/quantizer; the conformance test checks this module against it
 * point by point so the two sides cannot drift.
 */

export const DEAD_ZONE_RADIUS = 0.15;
export const SLIGHT_RADIUS = 0.5;
export const SECTOR_HALF_ANGLE_DEG = 30;

export enum Action {
  BackwardsLeft = 0,
  Backwards = 1,
  BackwardsRight = 2,
  SlightlyForwards = 3,
  Stop = 4,
  SlightlyBackwards = 5,
  ForwardsLeft = 6,
  Forwards = 7,
  ForwardsRight = 8,
}

export const ACTION_NAMES = [
  "BACKWARDS_LEFT",
  "BACKWARDS",
  "BACKWARDS_RIGHT",
  "SLIGHTLY_FORWARDS",
  "STOP",
  "SLIGHTLY_BACKWARDS",
  "FORWARDS_LEFT",
  "FORWARDS",
  "FORWARDS_RIGHT",
] as const;

export interface QuantizerInfo {
  dead_zone_radius: number;
  slight_radius: number;
  sector_half_angle_deg: number;
  actions: string[];
  grid_size: number;
  xs: number[];
  ys: number[];
  labels: number[];
}

/** Map a stick position in the unit square to one of the 9 action sectors. */
export function quantize(x: number, y: number): Action {
  const r = Math.hypot(x, y);
  if (r < DEAD_ZONE_RADIUS) return Action.Stop;
  if (r < SLIGHT_RADIUS) {
    return y >= 0 ? Action.SlightlyForwards : Action.SlightlyBackwards;
  }
  // Angle from the forward axis, mirrored for reverse so left stays left.
  const theta = (Math.atan2(x, y >= 0 ? y : -y) * 180) / Math.PI;
  if (y >= 0) {
    if (theta < -SECTOR_HALF_ANGLE_DEG) return Action.ForwardsLeft;
    if (theta > SECTOR_HALF_ANGLE_DEG) return Action.ForwardsRight;
    return Action.Forwards;
  }
  if (theta < -SECTOR_HALF_ANGLE_DEG) return Action.BackwardsLeft;
  if (theta > SECTOR_HALF_ANGLE_DEG) return Action.BackwardsRight;
  return Action.Backwards;
}
