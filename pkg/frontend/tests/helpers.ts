import type { FrameMessage, Schedule } from "../src/messages";

export function neutralSchedule(): Schedule {
  return {
    lip_scale: { mode: "fixed", factor: 1.0 },
    phoneme_edits: [],
    emotion: { mode: "global", category: "neutral", intensity: 0.0 },
    kalman: null,
  };
}

export function frame(index: number, over: Partial<FrameMessage> = {}): FrameMessage {
  return {
    type: "frame",
    index,
    points: [
      [0.0, 0.0],
      [0.4, 0.5],
      [-0.5, 0.2],
      [0.1, -0.6],
    ],
    coords: [
      [0.0, 0.0, 0.0],
      [0.4, 0.5, 0.1],
      [-0.5, 0.2, 0.0],
      [0.1, -0.6, 0.2],
    ],
    regions: ["other", "lips", "eyes", "lips"],
    controls: neutralSchedule(),
    state: "playing",
    ...over,
  };
}

export function jsonResponse(status: number, body: unknown) {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: String(status),
    json: async () => body,
  };
}
