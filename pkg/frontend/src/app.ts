/**
 * Browser entry point: wires the session state machine to the page.
 *
 * All interaction flows one way — key presses and buttons become protocol
 * messages, server messages become state, state becomes pixels. The page
 * holds no authority over anything: pose, recording counter, and saved
 * paths all display exactly what the server last said.
 */

import { renderHud } from "./hud";
import { keyToCmd } from "./keymap";
import { drawMinimap } from "./minimap";
import { Session, type SocketLike } from "./session";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const hostInput = el<HTMLInputElement>("host");
const portInput = el<HTMLInputElement>("port");
const connectBtn = el<HTMLButtonElement>("connect");
const retryBtn = el<HTMLButtonElement>("retry");
const startBtn = el<HTMLButtonElement>("rec-start");
const stopBtn = el<HTMLButtonElement>("rec-stop");
const lightSelect = el<HTMLSelectElement>("light");
const frameImg = el<HTMLImageElement>("frame");
const mapCanvas = el<HTMLCanvasElement>("minimap");
const hudEls = {
  pose: el<HTMLElement>("pose"),
  status: el<HTMLElement>("status"),
  recording: el<HTMLElement>("recording"),
  banner: el<HTMLElement>("banner"),
};

let session: Session | null = null;
let shownPng: string | null = null;
let lightIdsShown = "";

function render(): void {
  if (session === null) return;
  const s = session.state;
  renderHud(hudEls, s);

  if (s.frame !== null && s.frame.png_b64 !== shownPng) {
    shownPng = s.frame.png_b64;
    frameImg.src = `data:image/png;base64,${shownPng}`;
  }

  const ctx = mapCanvas.getContext("2d");
  if (ctx !== null) {
    drawMinimap(ctx, mapCanvas.width, mapCanvas.height, s.summary, s.frame);
  }

  if (s.summary !== null) {
    const ids = s.summary.light_ids.join(",");
    if (ids !== lightIdsShown) {
      lightIdsShown = ids;
      lightSelect.innerHTML = "";
      for (const id of s.summary.light_ids) {
        const opt = document.createElement("option");
        opt.value = String(id);
        opt.textContent = `light ${id}`;
        lightSelect.appendChild(opt);
      }
    }
  }

  const live = s.status === "live";
  startBtn.disabled = !live || s.recording.active;
  stopBtn.disabled = !live || !s.recording.active;
  lightSelect.disabled = !live;
  retryBtn.hidden = s.status !== "busy" && s.status !== "failed";
  connectBtn.disabled = live || s.status === "connecting" ||
    s.status === "reconnecting";
}

connectBtn.addEventListener("click", () => {
  session?.close();
  shownPng = null;
  lightIdsShown = "";
  session = new Session({
    url: `ws://${hostInput.value}:${portInput.value}/session`,
    factory: (url) => new WebSocket(url) as unknown as SocketLike,
  });
  session.subscribe(render);
  session.connect();
});

retryBtn.addEventListener("click", () => session?.retry());
startBtn.addEventListener("click", () => session?.startRecording());
stopBtn.addEventListener("click", () => session?.stopRecording());
lightSelect.addEventListener("change", () => {
  session?.setLight(Number(lightSelect.value));
});

window.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement) return; // typing a host/port
  const cmd = keyToCmd(ev);
  if (cmd !== null && session !== null) {
    ev.preventDefault();
    session.request(cmd);
  }
});

window.addEventListener("beforeunload", () => session?.close());
