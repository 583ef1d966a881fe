/**
 * Heads-up readouts: pose line, connection status, recording counter, and
 * the error banner. Pure string formatting on top of session state — every
 * number shown here was taken verbatim from a server message.
 */

import type { SessionState } from "./session";

export function formatPose(state: SessionState): string {
  const f = state.frame;
  if (f === null) return "no frame yet";
  const [x, y, z] = f.pose.pos;
  return `x ${x.toFixed(2)}  y ${y.toFixed(2)}  z ${z.toFixed(2)}  ` +
         `yaw ${f.pose.yaw.toFixed(1)}°  step ${f.step}  ` +
         `t ${f.t.toFixed(1)}s`;
}

export function formatStatus(state: SessionState): string {
  switch (state.status) {
    case "idle": return "idle";
    case "connecting": return "connecting…";
    case "live": return "live";
    case "reconnecting":
      return `reconnecting (attempt ${state.attempt})…`;
    case "busy": return "busy";
    case "failed": return "connection failed";
    case "closed": return "closed";
  }
}

export function formatRecording(state: SessionState): string {
  if (state.recording.active) {
    return `● REC ${state.recording.frames} frames`;
  }
  if (state.savedPath !== null) return `saved: ${state.savedPath}`;
  return "not recording";
}

/** Elements the HUD writes into; the browser hands in real DOM nodes. */
export interface TextSink { textContent: string | null }

export interface HudElements {
  pose: TextSink;
  status: TextSink;
  recording: TextSink;
  // `hidden` is string | boolean in the DOM (hidden="until-found").
  banner: TextSink & { hidden: string | boolean };
}

export function renderHud(els: HudElements, state: SessionState): void {
  els.pose.textContent = formatPose(state);
  els.status.textContent = formatStatus(state);
  els.recording.textContent = formatRecording(state);
  if (state.error !== null) {
    els.banner.textContent = state.error;
    els.banner.hidden = false;
  } else {
    els.banner.textContent = "";
    els.banner.hidden = true;
  }
}
