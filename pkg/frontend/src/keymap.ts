/**
 * Keyboard layout: WASD moves, arrow keys rotate, Space jumps.
 * Anything else maps to nothing and is ignored by the caller.
 */

import type { Cmd } from "./protocol";

const BY_CODE: Record<string, Cmd> = {
  KeyW: "forward",
  KeyS: "backward",
  KeyA: "strafe_left",
  KeyD: "strafe_right",
  ArrowLeft: "rotate_left",
  ArrowRight: "rotate_right",
  Space: "jump",
};

// Fallback for events without a physical-key code (synthetic or legacy).
const BY_KEY: Record<string, Cmd> = {
  w: "forward", W: "forward",
  s: "backward", S: "backward",
  a: "strafe_left", A: "strafe_left",
  d: "strafe_right", D: "strafe_right",
  ArrowLeft: "rotate_left",
  ArrowRight: "rotate_right",
  " ": "jump",
};

export interface KeyEventLike {
  code?: string;
  key?: string;
}

export function keyToCmd(ev: KeyEventLike): Cmd | null {
  if (ev.code !== undefined && ev.code in BY_CODE) return BY_CODE[ev.code]!;
  if (ev.key !== undefined && ev.key in BY_KEY) return BY_KEY[ev.key]!;
  return null;
}
