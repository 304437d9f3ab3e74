import { describe, expect, it } from "vitest";

import type { Schedule } from "../src/messages";
import { initialState, reduce, Store, type PanelState } from "../src/state";
import { frame, neutralSchedule } from "./helpers";

function started(schedule: Schedule = neutralSchedule()): PanelState {
  return reduce(initialState(), {
    type: "session",
    id: "s1",
    frameCount: 10,
    schedule,
  });
}

describe("frame ordering", () => {
  it("accepts strictly increasing indices", () => {
    let s = started();
    s = reduce(s, { type: "frame", msg: frame(0) });
    s = reduce(s, { type: "frame", msg: frame(1) });
    s = reduce(s, { type: "frame", msg: frame(2) });
    expect(s.lastFrame?.index).toBe(2);
    expect(s.dropped).toBe(0);
  });

  it("drops stale and duplicate frames, counting each", () => {
    let s = started();
    s = reduce(s, { type: "frame", msg: frame(3) });
    s = reduce(s, { type: "frame", msg: frame(1) });
    s = reduce(s, { type: "frame", msg: frame(3) });
    s = reduce(s, { type: "frame", msg: frame(4) });
    expect(s.lastFrame?.index).toBe(4);
    expect(s.dropped).toBe(2);
  });

  it("a dropped frame leaves the displayed frame untouched", () => {
    let s = started();
    const shown = frame(5);
    s = reduce(s, { type: "frame", msg: shown });
    s = reduce(s, { type: "frame", msg: frame(2) });
    expect(s.lastFrame).toBe(shown);
  });

  it("never fabricates a frame: only frame actions set lastFrame", () => {
    let s = started();
    s = reduce(s, { type: "transport", state: "playing" });
    s = reduce(s, { type: "controlsEcho", schedule: neutralSchedule(), appliedFrom: 0 });
    s = reduce(s, { type: "end", frameCount: 10 });
    expect(s.lastFrame).toBeNull();
  });
});

describe("schedule echo", () => {
  it("shows the session's initial schedule before any echo", () => {
    const schedule = neutralSchedule();
    expect(started(schedule).schedule).toBe(schedule);
  });

  it("replaces the schedule only with server echoes", () => {
    let s = started();
    const echoed: Schedule = {
      ...neutralSchedule(),
      lip_scale: { mode: "fixed", factor: 2.0 },
    };
    s = reduce(s, { type: "controlsSent", widget: "lip" });
    expect(s.schedule).toEqual(neutralSchedule());
    s = reduce(s, { type: "controlsEcho", schedule: echoed, appliedFrom: 4 });
    expect(s.schedule).toBe(echoed);
    expect(s.appliedFrom).toBe(4);
  });

  it("locks the widget while a PUT is in flight and unlocks on echo", () => {
    let s = started();
    s = reduce(s, { type: "controlsSent", widget: "emotion" });
    expect(s.pending).toBe("emotion");
    s = reduce(s, { type: "controlsEcho", schedule: neutralSchedule(), appliedFrom: 0 });
    expect(s.pending).toBeNull();
  });

  it("a rejected PUT keeps the previous schedule and surfaces the detail", () => {
    let s = started();
    const before = s.schedule;
    s = reduce(s, { type: "controlsSent", widget: "lip" });
    s = reduce(s, { type: "controlsRejected", detail: "ScheduleError: bad factor" });
    expect(s.schedule).toBe(before);
    expect(s.appliedFrom).toBeNull();
    expect(s.pending).toBeNull();
    expect(s.error).toContain("ScheduleError");
  });

  it("the next send clears a stale error", () => {
    let s = started();
    s = reduce(s, { type: "controlsSent", widget: "lip" });
    s = reduce(s, { type: "controlsRejected", detail: "nope" });
    s = reduce(s, { type: "controlsSent", widget: "lip" });
    expect(s.error).toBeNull();
  });
});

describe("transport and lifecycle", () => {
  it("frame messages carry the transport state", () => {
    let s = started();
    s = reduce(s, { type: "frame", msg: frame(0, { state: "playing" }) });
    expect(s.transport).toBe("playing");
  });

  it("end marks the run finished with the final count", () => {
    let s = started();
    s = reduce(s, { type: "end", frameCount: 10 });
    expect(s.transport).toBe("finished");
    expect(s.frameCount).toBe(10);
  });

  it("a new session resets frames, drops and errors", () => {
    let s = started();
    s = reduce(s, { type: "frame", msg: frame(0) });
    s = reduce(s, { type: "frame", msg: frame(0) });
    s = reduce(s, { type: "controlsRejected", detail: "x" });
    s = reduce(s, { type: "session", id: "s2", frameCount: 5, schedule: neutralSchedule() });
    expect(s.sessionId).toBe("s2");
    expect(s.lastFrame).toBeNull();
    expect(s.dropped).toBe(0);
    expect(s.error).toBeNull();
  });
});

describe("store", () => {
  it("notifies subscribers with the reduced state", () => {
    const store = new Store();
    const seen: number[] = [];
    store.subscribe((s) => seen.push(s.dropped));
    store.dispatch({ type: "frame", msg: frame(0) });
    store.dispatch({ type: "frame", msg: frame(0) });
    expect(seen).toEqual([0, 1]);
  });

  it("unsubscribe stops notifications", () => {
    const store = new Store();
    let calls = 0;
    const off = store.subscribe(() => calls++);
    store.dispatch({ type: "transport", state: "playing" });
    off();
    store.dispatch({ type: "transport", state: "paused" });
    expect(calls).toBe(1);
  });
});
