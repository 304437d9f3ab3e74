// Canvas keypoint rendering. Points only, colored by region tag; the lip
// region is drawn larger so the controlled keypoints stand out.

import type { FrameMessage } from "./messages";

export const REGION_COLORS: Record<string, string> = {
  lips: "#ff5470",
  eyes: "#3da9fc",
  brows: "#ffd803",
  other: "#94a1b2",
  none: "#4a4a55",
};

export const FALLBACK_COLOR = "#7f7f8c";

export function regionColor(tag: string): string {
  return REGION_COLORS[tag] ?? FALLBACK_COLOR;
}

export function markerRadius(tag: string): number {
  return tag === "lips" ? 5 : 3;
}

// Map keypoint space onto the canvas: centered, y up, uniform scale chosen
// so the [-1.5, 1.5] square fits with a margin.
function toCanvas(
  p: [number, number],
  width: number,
  height: number
): [number, number] {
  const scale = Math.min(width, height) / 3.4;
  return [width / 2 + p[0] * scale, height / 2 - p[1] * scale];
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  msg: FrameMessage,
  width: number,
  height: number
): void {
  ctx.clearRect(0, 0, width, height);
  for (let i = 0; i < msg.points.length; i++) {
    const tag = msg.regions[i] ?? "none";
    const [x, y] = toCanvas(msg.points[i], width, height);
    ctx.fillStyle = regionColor(tag);
    ctx.beginPath();
    ctx.arc(x, y, markerRadius(tag), 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function legendEntries(regions: string[]): Array<{ name: string; color: string }> {
  const seen = new Set<string>();
  const entries: Array<{ name: string; color: string }> = [];
  for (const tag of regions) {
    if (!seen.has(tag)) {
      seen.add(tag);
      entries.push({ name: tag, color: regionColor(tag) });
    }
  }
  return entries;
}
