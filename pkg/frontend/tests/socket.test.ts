import { describe, expect, it } from "vitest";

import type { StreamMessage } from "../src/messages";
import { openStream } from "../src/socket";
import { frame } from "./helpers";

class FakeSocket {
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onmessage: ((e: { data: string }) => void) | null = null;
  closed = false;

  close() {
    this.closed = true;
    this.onclose?.();
  }

  emit(data: string) {
    this.onmessage?.({ data });
  }
}

function connect() {
  const socket = new FakeSocket();
  const messages: StreamMessage[] = [];
  const statuses: string[] = [];
  const handle = openStream(
    "ws://test/v1/sessions/s1/stream",
    {
      onMessage: (m) => messages.push(m),
      onStatus: (s) => statuses.push(s),
    },
    () => socket as unknown as WebSocket
  );
  return { socket, messages, statuses, handle };
}

describe("stream socket", () => {
  it("reports connecting then open", () => {
    const { socket, statuses } = connect();
    expect(statuses).toEqual(["connecting"]);
    socket.onopen?.();
    expect(statuses).toEqual(["connecting", "open"]);
  });

  it("parses frame and end messages", () => {
    const { socket, messages } = connect();
    socket.emit(JSON.stringify(frame(0)));
    socket.emit(JSON.stringify({ type: "end", frame_count: 1 }));
    expect(messages.length).toBe(2);
    expect(messages[0].type).toBe("frame");
    expect(messages[1]).toEqual({ type: "end", frame_count: 1 });
  });

  it("counts malformed payloads instead of throwing", () => {
    const { socket, messages, handle } = connect();
    socket.emit("{not json");
    socket.emit(JSON.stringify({ type: "mystery" }));
    socket.emit(JSON.stringify(frame(0)));
    expect(handle.parseErrors()).toBe(2);
    expect(messages.length).toBe(1);
  });

  it("an unexpected close surfaces as a status change", () => {
    const { socket, statuses } = connect();
    socket.onopen?.();
    socket.close();
    expect(statuses).toEqual(["connecting", "open", "closed"]);
  });

  it("a deliberate close is silent", () => {
    const { socket, statuses, handle } = connect();
    socket.onopen?.();
    handle.close();
    expect(socket.closed).toBe(true);
    expect(statuses).toEqual(["connecting", "open"]);
  });
});
