// Wire types for the /v1 API. These mirror the server's published schemas;
// the client never invents fields the server did not send.

export interface LipScaleDoc {
  mode: "off" | "fixed" | "amplitude";
  factor?: number;
  f_min?: number;
  f_max?: number;
  rms_ref?: number | "auto";
}

export interface PhonemeEditDoc {
  name: string;
  lambda: number;
  start: number;
  stop: number;
}

export interface RegionEmotionDoc {
  category: string;
  intensity: number;
}

export interface EmotionDoc {
  mode: "global" | "regional";
  category?: string;
  intensity?: number;
  regions?: Record<string, RegionEmotionDoc>;
}

export interface KalmanDoc {
  q: number;
  r: number;
}

export interface Schedule {
  lip_scale: LipScaleDoc;
  phoneme_edits: PhonemeEditDoc[];
  emotion: EmotionDoc;
  kalman: KalmanDoc | null;
}

// A partial schedule sent to PUT /controls; unmentioned fields keep their
// server-side values.
export type SchedulePatch = Partial<Schedule>;

export interface FrameMessage {
  type: "frame";
  index: number;
  points: [number, number][];
  coords: number[][];
  regions: string[];
  controls: Schedule;
  state: string;
}

export interface EndMessage {
  type: "end";
  frame_count: number;
}

export type StreamMessage = FrameMessage | EndMessage;

export interface SessionInfo {
  session_id: string;
  state: string;
  frame_count: number;
  n_kp: number;
  fps: number;
  schedule: Schedule;
}

export interface SessionStatus {
  session_id: string;
  state: string;
  frame_count: number;
  produced: number;
  delivered: number;
  schedule: Schedule;
}

export interface ControlsEcho {
  schedule: Schedule;
  applied_from: number;
}

export interface TransportStatus {
  state: string;
  produced: number;
  delivered: number;
  frame_count: number;
}
