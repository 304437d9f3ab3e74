// Panel state and its reducer. Pure: every mutation of what the panel shows
// goes through reduce(), which makes the monotonicity and echo rules testable
// without a DOM.
//
// Two rules from the service contract are enforced here:
//  - frames are displayed in strictly increasing index order; anything older
//    than the newest displayed frame is dropped and counted, never drawn
//  - the schedule the panel shows is always the last server echo, never a
//    locally constructed value

import type { FrameMessage, Schedule } from "./messages";

export type Connection = "idle" | "connecting" | "open" | "closed";

export interface PanelState {
  sessionId: string | null;
  connection: Connection;
  transport: string;
  frameCount: number;
  lastFrame: FrameMessage | null;
  dropped: number;
  schedule: Schedule | null;
  appliedFrom: number | null;
  // widget group locked while its PUT is in flight; null when idle
  pending: string | null;
  error: string | null;
}

export type Action =
  | { type: "session"; id: string; frameCount: number; schedule: Schedule }
  | { type: "connection"; status: Connection }
  | { type: "frame"; msg: FrameMessage }
  | { type: "end"; frameCount: number }
  | { type: "transport"; state: string }
  | { type: "controlsSent"; widget: string }
  | { type: "controlsEcho"; schedule: Schedule; appliedFrom: number }
  | { type: "controlsRejected"; detail: string }
  | { type: "reset" };

export function initialState(): PanelState {
  return {
    sessionId: null,
    connection: "idle",
    transport: "created",
    frameCount: 0,
    lastFrame: null,
    dropped: 0,
    schedule: null,
    appliedFrom: null,
    pending: null,
    error: null,
  };
}

export function reduce(state: PanelState, action: Action): PanelState {
  switch (action.type) {
    case "session":
      return {
        ...initialState(),
        sessionId: action.id,
        frameCount: action.frameCount,
        schedule: action.schedule,
      };
    case "connection":
      return { ...state, connection: action.status };
    case "frame": {
      if (state.lastFrame && action.msg.index <= state.lastFrame.index) {
        return { ...state, dropped: state.dropped + 1 };
      }
      return { ...state, lastFrame: action.msg, transport: action.msg.state };
    }
    case "end":
      return { ...state, transport: "finished", frameCount: action.frameCount };
    case "transport":
      return { ...state, transport: action.state };
    case "controlsSent":
      return { ...state, pending: action.widget, error: null };
    case "controlsEcho":
      return {
        ...state,
        schedule: action.schedule,
        appliedFrom: action.appliedFrom,
        pending: null,
      };
    case "controlsRejected":
      // schedule and appliedFrom stay as they were: a rejected PUT changed
      // nothing on the server
      return { ...state, pending: null, error: action.detail };
    case "reset":
      return initialState();
  }
}

// Tiny store so the DOM layer can subscribe without a framework.
export class Store {
  private state = initialState();
  private listeners: Array<(s: PanelState) => void> = [];

  get(): PanelState {
    return this.state;
  }

  dispatch(action: Action): PanelState {
    this.state = reduce(this.state, action);
    for (const fn of this.listeners) fn(this.state);
    return this.state;
  }

  subscribe(fn: (s: PanelState) => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }
}
