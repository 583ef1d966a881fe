import { describe, expect, it } from "vitest";

import {
  ProtocolError,
  parseServerMsg,
  serialize,
} from "../src/protocol";

describe("parseServerMsg", () => {
  it("accepts a well-formed frame", () => {
    const msg = parseServerMsg(JSON.stringify({
      type: "frame", step: 7, t: 0.7,
      pose: { pos: [1.5, -2.25, 1.5], yaw: 135.0 },
      png_b64: "aGVsbG8=",
    }));
    expect(msg.type).toBe("frame");
    if (msg.type === "frame") {
      expect(msg.step).toBe(7);
      expect(msg.pose.pos).toEqual([1.5, -2.25, 1.5]);
      expect(msg.pose.yaw).toBe(135.0);
    }
  });

  it("accepts a scene summary and a recording status", () => {
    const summary = parseServerMsg(JSON.stringify({
      type: "scene_summary", bounds: [0, 0, 10, 8],
      minimap_walls: [[0, 0, 10, 0]], light_ids: [0, 1],
    }));
    expect(summary.type).toBe("scene_summary");

    const rec = parseServerMsg(JSON.stringify({
      type: "recording", active: false, frames: 11,
      path: "/tmp/out/trajectory_000.jsonl",
    }));
    expect(rec.type).toBe("recording");
    if (rec.type === "recording") {
      expect(rec.frames).toBe(11);
      expect(rec.path).toBe("/tmp/out/trajectory_000.jsonl");
    }
  });

  it("keeps the path absent when the server sent none", () => {
    const rec = parseServerMsg(
      JSON.stringify({ type: "recording", active: true, frames: 3 }));
    if (rec.type === "recording") expect("path" in rec).toBe(false);
  });

  it.each([
    "not json at all",
    "42",
    JSON.stringify({ type: "telemetry" }),
    JSON.stringify({ type: "frame", step: 1, t: 0.1 }),
    JSON.stringify({
      type: "frame", step: 1, t: 0.1,
      pose: { pos: [1, 2], yaw: 0 }, png_b64: "",
    }),
    JSON.stringify({ type: "scene_summary", bounds: [0, 0, 10] }),
    JSON.stringify({ type: "recording", active: "yes", frames: 0 }),
  ])("rejects malformed input %#", (raw) => {
    expect(() => parseServerMsg(raw)).toThrow(ProtocolError);
  });
});

describe("serialize", () => {
  it("produces single-line JSON the server understands", () => {
    expect(JSON.parse(serialize({ type: "cmd", cmd: "forward" })))
      .toEqual({ type: "cmd", cmd: "forward" });
    expect(serialize({ type: "start_recording" }))
      .not.toContain("\n");
    expect(JSON.parse(serialize({ type: "set_light", id: 2 })))
      .toEqual({ type: "set_light", id: 2 });
  });
});
