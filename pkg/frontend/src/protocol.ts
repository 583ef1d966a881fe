/**
 * Wire types for the session websocket.
 *
 * The server speaks single-line JSON over one connection at path /session:
 * it greets with a scene summary, a recording status, and the current view,
 * then answers every frame-producing request (`cmd`, `set_light`) with
 * exactly one `frame` message. Recording toggles are answered with
 * `recording` messages; the one that follows `stop_recording` carries the
 * saved file path. A second concurrent connection is refused with close
 * code 4000.
 */

export type Cmd =
  | "forward"
  | "backward"
  | "strafe_left"
  | "strafe_right"
  | "rotate_left"
  | "rotate_right"
  | "jump"
  | "idle";

export const COMMANDS: readonly Cmd[] = [
  "forward", "backward", "strafe_left", "strafe_right",
  "rotate_left", "rotate_right", "jump", "idle",
];

/** Close code the server uses to refuse a second concurrent session. */
export const CLOSE_BUSY = 4000;

export interface Pose {
  pos: [number, number, number];
  yaw: number;
}

export interface FrameMsg {
  type: "frame";
  step: number;
  t: number;
  pose: Pose;
  png_b64: string;
}

export interface SceneSummaryMsg {
  type: "scene_summary";
  /** [xmin, ymin, xmax, ymax] in meters. */
  bounds: [number, number, number, number];
  /** Wall segments [x0, y0, x1, y1] in plan view. */
  minimap_walls: [number, number, number, number][];
  light_ids: number[];
}

export interface RecordingMsg {
  type: "recording";
  active: boolean;
  frames: number;
  /** Present on the reply to stop_recording: where the trajectory landed. */
  path?: string;
}

export type ServerMsg = FrameMsg | SceneSummaryMsg | RecordingMsg;

export type ClientMsg =
  | { type: "cmd"; cmd: Cmd }
  | { type: "start_recording" }
  | { type: "stop_recording" }
  | { type: "set_light"; id: number };

export class ProtocolError extends Error {}

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function numTuple(v: unknown, n: number): number[] | null {
  return Array.isArray(v) && v.length === n && v.every(isNum) ? v : null;
}

/**
 * Parse one server message, rejecting anything that does not match the
 * wire contract. Pose state downstream comes exclusively from messages
 * that passed this gate.
 */
export function parseServerMsg(raw: string): ServerMsg {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    throw new ProtocolError(`not JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof msg !== "object" || msg === null) {
    throw new ProtocolError("message is not an object");
  }
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "frame": {
      const pose = m.pose as Record<string, unknown> | undefined;
      const pos = pose ? numTuple(pose.pos, 3) : null;
      if (!isNum(m.step) || !isNum(m.t) || !pos || !isNum(pose?.yaw) ||
          typeof m.png_b64 !== "string") {
        throw new ProtocolError("malformed frame message");
      }
      return {
        type: "frame", step: m.step, t: m.t,
        pose: { pos: pos as [number, number, number], yaw: pose!.yaw as number },
        png_b64: m.png_b64,
      };
    }
    case "scene_summary": {
      const bounds = numTuple(m.bounds, 4);
      const walls = Array.isArray(m.minimap_walls)
        ? m.minimap_walls.map((w) => numTuple(w, 4)) : null;
      const lights = Array.isArray(m.light_ids) && m.light_ids.every(isNum)
        ? (m.light_ids as number[]) : null;
      if (!bounds || !walls || walls.some((w) => w === null) || !lights) {
        throw new ProtocolError("malformed scene_summary message");
      }
      return {
        type: "scene_summary",
        bounds: bounds as [number, number, number, number],
        minimap_walls: walls as [number, number, number, number][],
        light_ids: lights,
      };
    }
    case "recording": {
      if (typeof m.active !== "boolean" || !isNum(m.frames) ||
          (m.path !== undefined && typeof m.path !== "string")) {
        throw new ProtocolError("malformed recording message");
      }
      const out: RecordingMsg = {
        type: "recording", active: m.active, frames: m.frames,
      };
      if (typeof m.path === "string") out.path = m.path;
      return out;
    }
    default:
      throw new ProtocolError(`unknown message type ${String(m.type)}`);
  }
}

export function serialize(msg: ClientMsg): string {
  return JSON.stringify(msg);
}
