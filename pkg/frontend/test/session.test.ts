import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Session } from "../src/session";
import { MockServer } from "./mock-server";

function mkSession(server: MockServer, backoffBaseMs = 500): Session {
  return new Session({
    url: "ws://localhost:8765/session",
    factory: server.factory(),
    backoffBaseMs,
  });
}

/** Advance fake time, running every timer that falls due. */
function tick(ms = 0): void {
  vi.advanceTimersByTime(ms);
}

beforeEach(() => { vi.useFakeTimers(); });
afterEach(() => { vi.useRealTimers(); });

describe("connecting", () => {
  it("processes exactly one scene summary and shows the greeting frame", () => {
    const server = new MockServer();
    const session = mkSession(server);
    session.connect();
    tick();
    expect(session.state.status).toBe("live");
    expect(session.state.summariesSeen).toBe(1);
    expect(session.state.summary?.bounds).toEqual([0, 0, 10, 8]);
    expect(session.state.frame?.pose.pos).toEqual([5, 4, 1.5]);
    expect(session.state.recording).toEqual({ active: false, frames: 0 });
    expect(session.state.error).toBeNull();
  });

  it("shows a busy state when a second client connects", () => {
    const server = new MockServer();
    const first = mkSession(server);
    first.connect();
    tick();
    const second = mkSession(server);
    second.connect();
    tick();
    expect(second.state.status).toBe("busy");
    expect(second.state.error).toContain("another session");
    expect(first.state.status).toBe("live");
    // A refusal is not retried: no connection storm against a held seat.
    const made = server.connectionsMade;
    tick(60_000);
    expect(server.connectionsMade).toBe(made);
  });

  it("raises the error banner immediately when the server is absent", () => {
    const server = new MockServer();
    server.down = true;
    const session = mkSession(server);
    session.connect();
    tick(); // connection refused on the first event-loop turn, well under 3 s
    expect(session.state.error).not.toBeNull();
    expect(session.state.status).toBe("reconnecting");
  });

  it("backs off exponentially and gives up after five attempts", () => {
    const server = new MockServer();
    server.down = true;
    const session = mkSession(server, 500);
    session.connect();
    tick();
    expect(server.connectionsMade).toBe(1);
    // Retries fall due at +500, +1000, +2000, +4000, +8000.
    tick(499);
    expect(server.connectionsMade).toBe(1);
    tick(1);
    expect(server.connectionsMade).toBe(2);
    tick(1000);
    expect(server.connectionsMade).toBe(3);
    tick(2000);
    expect(server.connectionsMade).toBe(4);
    tick(4000);
    expect(server.connectionsMade).toBe(5);
    tick(8000);
    expect(server.connectionsMade).toBe(6);
    expect(session.state.status).toBe("failed");
    expect(session.state.error).toContain("gave up");
    tick(60_000);
    expect(server.connectionsMade).toBe(6); // stays down until retry()
  });

  it("recovers when the server comes back during the backoff window", () => {
    const server = new MockServer();
    server.down = true;
    const session = mkSession(server);
    session.connect();
    tick();
    tick(500); // first retry also fails
    expect(session.state.status).toBe("reconnecting");
    server.down = false;
    tick(1000); // second retry lands
    expect(session.state.status).toBe("live");
    expect(session.state.attempt).toBe(0);
    expect(session.state.error).toBeNull();
  });
});

describe("command serialization", () => {
  it("never has more than one cmd outstanding under key repeat and latency",
     () => {
    const server = new MockServer({ latencyMs: 100 });
    const session = mkSession(server);
    let worstOutstanding = 0;
    session.subscribe((s) => {
      worstOutstanding = Math.max(worstOutstanding, s.outstanding);
    });
    session.connect();
    tick();

    // Hold W for a second: auto-repeat fires every 50 ms while each frame
    // takes 100 ms to come back.
    for (let i = 0; i < 20; i++) {
      session.request("forward");
      tick(50);
    }
    tick(200); // let the tail drain

    expect(server.violations).toBe(0);
    expect(worstOutstanding).toBe(1);
    const cmds = server.received.filter((m) => m.type === "cmd");
    expect(cmds.length).toBeGreaterThanOrEqual(5);
    expect(cmds.length).toBeLessThanOrEqual(12);
    expect(cmds.every((m) => m.cmd === "forward")).toBe(true);
  });

  it("coalesces to the most recent request while one is in flight", () => {
    const server = new MockServer({ latencyMs: 100 });
    const session = mkSession(server);
    session.connect();
    tick();
    session.request("forward");
    tick(10);
    session.request("rotate_left"); // superseded before the frame returns
    tick(10);
    session.request("jump");
    tick(300);
    const cmds = server.received
      .filter((m) => m.type === "cmd").map((m) => m.cmd);
    expect(cmds).toEqual(["forward", "jump"]);
  });

  it("advances the displayed pose by step_len on forward at yaw 0", () => {
    const server = new MockServer();
    const session = mkSession(server);
    session.connect();
    tick();
    session.request("forward");
    tick();
    const cmds = server.received.filter((m) => m.type === "cmd");
    expect(cmds.length).toBe(1);
    expect(session.state.frame?.pose.pos[0]).toBeCloseTo(5.1, 12);
    expect(session.state.frame?.pose.pos[1]).toBeCloseTo(4.0, 12);
  });

  it("gates set_light through the same one-in-flight rule", () => {
    const server = new MockServer({ latencyMs: 80 });
    const session = mkSession(server);
    session.connect();
    tick();
    session.request("forward");
    session.setLight(2);
    tick(500);
    expect(server.violations).toBe(0);
    const types = server.received.map((m) => m.type);
    expect(types).toEqual(["cmd", "set_light"]);
  });
});

describe("recording", () => {
  it("counts 11 frames after start plus ten moves, then shows the saved path",
     () => {
    const server = new MockServer({ latencyMs: 20 });
    const session = mkSession(server);
    session.connect();
    tick();

    session.startRecording();
    tick(20);
    expect(session.state.recording).toEqual({ active: true, frames: 1 });

    for (let i = 0; i < 10; i++) {
      session.request(i % 2 === 0 ? "forward" : "rotate_right");
      tick(40);
    }
    expect(session.state.recording).toEqual({ active: true, frames: 11 });

    session.stopRecording();
    tick(20);
    expect(session.state.recording.active).toBe(false);
    expect(session.state.recording.frames).toBe(11);
    expect(session.state.savedPath).toBe("/mock/out/trajectory_000.jsonl");
  });

  it("restores the recording flag from the server after a reconnect", () => {
    const server = new MockServer();
    const session = mkSession(server);
    session.connect();
    tick();
    session.startRecording();
    tick();
    for (const cmd of ["forward", "forward", "rotate_left"] as const) {
      session.request(cmd);
      tick();
    }
    expect(session.state.recording).toEqual({ active: true, frames: 4 });
    const poseBefore = session.state.frame!.pose;

    server.dropConnection();
    expect(session.state.status).toBe("reconnecting");
    tick(500);
    expect(session.state.status).toBe("live");
    // Recording state and pose both come back from the server's greeting.
    expect(session.state.recording).toEqual({ active: true, frames: 4 });
    expect(session.state.frame!.pose).toEqual(poseBefore);
  });

  it("resumes cleanly after a mid-flight disconnect", () => {
    const server = new MockServer({ latencyMs: 100 });
    const session = mkSession(server);
    session.connect();
    tick();
    session.request("forward");
    tick(10); // frame still owed when the link dies
    server.dropConnection();
    tick(500);
    expect(session.state.status).toBe("live");
    expect(session.state.outstanding).toBe(0);
    session.request("forward");
    tick(200);
    expect(server.violations).toBe(0);
  });
});
