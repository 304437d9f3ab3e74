import type {
  ControlsEcho,
  SchedulePatch,
  SessionInfo,
  SessionStatus,
  TransportStatus,
} from "./messages";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

function postJson<T>(url: string, body: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
}

export function uploadAsset(
  base: string,
  kind: "identity" | "audio" | "weights" | "phonemes",
  content: string,
  name = ""
): Promise<{ asset_id: string; kind: string }> {
  return postJson(`${base}/v1/assets`, { kind, content, name });
}

export interface SessionRequest {
  identity: string;
  audio: string;
  weights: string;
  phonemes?: string;
  style?: number;
  pose?: "static" | "nod" | "sway";
  schedule?: SchedulePatch;
  realtime?: boolean;
}

export function createSession(base: string, body: SessionRequest): Promise<SessionInfo> {
  return postJson(`${base}/v1/sessions`, body);
}

export function getSession(base: string, id: string): Promise<SessionStatus> {
  return request(`${base}/v1/sessions/${id}`);
}

export function putControls(
  base: string,
  id: string,
  patch: SchedulePatch
): Promise<ControlsEcho> {
  return request(`${base}/v1/sessions/${id}/controls`, {
    method: "PUT",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(patch),
  });
}

export function transport(
  base: string,
  id: string,
  action: "play" | "pause" | "seek",
  frame?: number
): Promise<TransportStatus> {
  const body: { action: string; frame?: number } = { action };
  if (frame !== undefined) body.frame = frame;
  return postJson(`${base}/v1/sessions/${id}/transport`, body);
}

export function getMeta(
  base: string,
  kind: "emotions" | "regions" | "phonemes",
  session?: string
): Promise<string[]> {
  const query = session ? `?session=${encodeURIComponent(session)}` : "";
  return request<{ names: string[] }>(`${base}/v1/meta/${kind}${query}`).then(
    (r) => r.names
  );
}

// Download target for the finished run; the server owns the file format.
export function trajectoryUrl(base: string, id: string): string {
  return `${base}/v1/sessions/${id}/trajectory`;
}

export function streamUrl(base: string, id: string): string {
  const origin = base || (typeof location !== "undefined" ? location.origin : "");
  const ws = origin.replace(/^http/, "ws");
  return `${ws}/v1/sessions/${id}/stream`;
}
