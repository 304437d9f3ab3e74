// Stream socket for one session. Parses server messages and hands them to
// callbacks; reconnecting is safe because delivery resumes from the server's
// cursor, so a new socket picks up exactly where the old one stopped.

import type { StreamMessage } from "./messages";

export interface StreamHandlers {
  onMessage(msg: StreamMessage): void;
  onStatus(status: "connecting" | "open" | "closed"): void;
}

export interface StreamHandle {
  close(): void;
  parseErrors(): number;
}

type SocketFactory = (url: string) => WebSocket;

export function openStream(
  url: string,
  handlers: StreamHandlers,
  makeSocket: SocketFactory = (u) => new WebSocket(u)
): StreamHandle {
  let parseErrors = 0;
  let closed = false;

  handlers.onStatus("connecting");
  const ws = makeSocket(url);

  ws.onopen = () => handlers.onStatus("open");
  ws.onclose = () => {
    if (!closed) handlers.onStatus("closed");
  };
  ws.onmessage = (event: MessageEvent) => {
    let msg: StreamMessage;
    try {
      msg = JSON.parse(event.data as string);
    } catch {
      parseErrors += 1;
      return;
    }
    if (msg.type !== "frame" && msg.type !== "end") {
      parseErrors += 1;
      return;
    }
    handlers.onMessage(msg);
  };

  return {
    close() {
      closed = true;
      ws.close();
    },
    parseErrors: () => parseErrors,
  };
}
