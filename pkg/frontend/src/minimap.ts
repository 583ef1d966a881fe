/**
 * Plan-view minimap: the scene's wall segments plus a dot for the avatar.
 *
 * The world→pixel mapping is a single uniform-scale transform derived from
 * the scene bounds, and the dot is required to land exactly where that
 * transform puts the latest pose — integer canvas coordinates, no drift,
 * no smoothing. `worldToPixel` is the whole contract; drawing just uses it.
 */

import type { FrameMsg, SceneSummaryMsg } from "./protocol";

export interface MapTransform {
  scale: number;   // pixels per meter (uniform)
  ox: number;      // pixel x of world xmin
  oy: number;      // pixel y of world ymax (world +y points up the canvas)
  xmin: number;
  ymax: number;
}

export function boundsTransform(
  bounds: [number, number, number, number],
  widthPx: number,
  heightPx: number,
  marginPx = 8,
): MapTransform {
  const [xmin, ymin, xmax, ymax] = bounds;
  const scale = Math.min(
    (widthPx - 2 * marginPx) / (xmax - xmin),
    (heightPx - 2 * marginPx) / (ymax - ymin),
  );
  const ox = (widthPx - (xmax - xmin) * scale) / 2;
  const oy = (heightPx - (ymax - ymin) * scale) / 2;
  return { scale, ox, oy, xmin, ymax };
}

export function worldToPixel(
  tr: MapTransform, x: number, y: number,
): [number, number] {
  return [
    Math.round(tr.ox + (x - tr.xmin) * tr.scale),
    Math.round(tr.oy + (tr.ymax - y) * tr.scale),
  ];
}

/** The slice of CanvasRenderingContext2D the minimap draws through;
 * tests substitute a recorder. */
export interface Canvas2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
}

const HEADING_PX = 10;
const DOT_PX = 4;

export function drawMinimap(
  ctx: Canvas2DLike,
  widthPx: number,
  heightPx: number,
  summary: SceneSummaryMsg | null,
  frame: FrameMsg | null,
): void {
  ctx.clearRect(0, 0, widthPx, heightPx);
  ctx.fillStyle = "#11151a";
  ctx.fillRect(0, 0, widthPx, heightPx);
  if (summary === null) return;

  const tr = boundsTransform(summary.bounds, widthPx, heightPx);

  ctx.strokeStyle = "#8fa3b8";
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (const [x0, y0, x1, y1] of summary.minimap_walls) {
    const [px0, py0] = worldToPixel(tr, x0, y0);
    const [px1, py1] = worldToPixel(tr, x1, y1);
    ctx.moveTo(px0, py0);
    ctx.lineTo(px1, py1);
  }
  ctx.stroke();

  if (frame === null) return;
  const [px, py] = worldToPixel(tr, frame.pose.pos[0], frame.pose.pos[1]);
  // World yaw 0 looks along +x; positive yaw turns toward -y on screen
  // because the canvas y axis points down.
  const head = (frame.pose.yaw * Math.PI) / 180;
  ctx.strokeStyle = "#ffb454";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(px, py);
  ctx.lineTo(px + HEADING_PX * Math.cos(head),
             py - HEADING_PX * Math.sin(head));
  ctx.stroke();
  ctx.fillStyle = "#ffb454";
  ctx.beginPath();
  ctx.arc(px, py, DOT_PX, 0, 2 * Math.PI);
  ctx.fill();
}
