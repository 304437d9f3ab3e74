import {
  createSession,
  getMeta,
  streamUrl,
  trajectoryUrl,
  transport,
  uploadAsset,
} from "./api";
import { fillSelect, wireControls } from "./controls";
import type { FrameMessage, Schedule } from "./messages";
import { drawFrame, legendEntries } from "./render";
import { openStream, type StreamHandle } from "./socket";
import { Store } from "./state";

const app = document.querySelector<HTMLDivElement>("#app")!;
app.innerHTML = `
  <h1>facemotion panel</h1>
  <section id="setup">
    <h2>Session</h2>
    <div class="row">
      <label>identity <input type="file" id="file-identity"></label>
      <label>audio <input type="file" id="file-audio"></label>
      <label>weights <input type="file" id="file-weights"></label>
      <label>phonemes <input type="file" id="file-phonemes"></label>
    </div>
    <div class="row">
      <label>pose
        <select id="pose">
          <option>static</option><option>nod</option><option>sway</option>
        </select>
      </label>
      <label>style <input type="number" id="style" value="0" min="0" style="width:4em"></label>
      <button id="create">Create session</button>
      <span id="setup-status"></span>
    </div>
  </section>

  <section id="viewer" hidden>
    <div class="row">
      <canvas id="scene" width="480" height="480"></canvas>
      <div id="legend"></div>
    </div>
    <div class="row">
      <button id="play">Play</button>
      <button id="pause">Pause</button>
      <a id="download" hidden>Download trajectory</a>
      <span id="frame-line"></span>
    </div>

    <fieldset id="group-lip">
      <legend>Lip scale</legend>
      <select id="lip-mode">
        <option>off</option><option>fixed</option><option>amplitude</option>
      </select>
      <label>factor <input type="range" id="lip-factor" min="0" max="3" step="0.05" value="1"></label>
      <label>f_min <input type="number" id="lip-fmin" value="0.25" step="0.05" style="width:5em"></label>
      <label>f_max <input type="number" id="lip-fmax" value="2.0" step="0.05" style="width:5em"></label>
      <button id="apply-lip">Apply</button>
    </fieldset>

    <fieldset id="group-phoneme">
      <legend>Phoneme edit</legend>
      <select id="ph-name"></select>
      <label>&lambda; <input type="range" id="ph-lambda" min="0" max="3" step="0.05" value="1"></label>
      <label>start <input type="number" id="ph-start" value="0" min="0" style="width:5em"></label>
      <label>stop <input type="number" id="ph-stop" value="0" min="0" style="width:5em"></label>
      <button id="apply-phoneme">Apply</button>
    </fieldset>

    <fieldset id="group-emotion">
      <legend>Emotion</legend>
      <select id="emo-mode"><option>global</option><option>regional</option></select>
      <select id="emo-region"></select>
      <select id="emo-category"></select>
      <label>intensity <input type="range" id="emo-intensity" min="0" max="3" step="0.05" value="0"></label>
      <button id="apply-emotion">Apply</button>
    </fieldset>

    <fieldset id="group-kalman">
      <legend>Kalman</legend>
      <label><input type="checkbox" id="kalman-on"> enabled</label>
      <label>q <input type="number" id="kalman-q" value="0.0001" step="0.0001" style="width:6em"></label>
      <label>r <input type="number" id="kalman-r" value="0.01" step="0.001" style="width:6em"></label>
      <button id="apply-kalman">Apply</button>
    </fieldset>

    <div id="control-error" class="error"></div>
    <pre id="schedule-view"></pre>
  </section>
`;

const store = new Store();
const base = "";
let sessionId: string | null = null;
let stream: StreamHandle | null = null;
let latest: FrameMessage | null = null;

const canvas = document.querySelector<HTMLCanvasElement>("#scene")!;
const ctx = canvas.getContext("2d")!;
const frameLine = document.querySelector<HTMLElement>("#frame-line")!;
const scheduleView = document.querySelector<HTMLElement>("#schedule-view")!;
const setupStatus = document.querySelector<HTMLElement>("#setup-status")!;

function readFile(id: string): Promise<string | null> {
  const input = document.querySelector<HTMLInputElement>(`#${id}`)!;
  const file = input.files && input.files[0];
  if (!file) return Promise.resolve(null);
  return file.text();
}

function renderSchedule(schedule: Schedule | null) {
  scheduleView.textContent = schedule ? JSON.stringify(schedule, null, 1) : "";
}

store.subscribe((s) => {
  frameLine.textContent =
    `${s.transport}  frame ${s.lastFrame ? s.lastFrame.index : "-"} / ${s.frameCount}` +
    (s.dropped ? `  dropped ${s.dropped}` : "") +
    (s.appliedFrom !== null ? `  controls from ${s.appliedFrom}` : "");
  renderSchedule(s.schedule);
  if (s.transport === "finished" && sessionId) {
    const link = document.querySelector<HTMLAnchorElement>("#download")!;
    link.href = trajectoryUrl(base, sessionId);
    link.hidden = false;
  }
});

// Draw on animation frames; the reducer already enforced monotone order, so
// whatever is in lastFrame is safe to show.
function paint() {
  const frame = store.get().lastFrame;
  if (frame && frame !== latest) {
    drawFrame(ctx, frame, canvas.width, canvas.height);
    latest = frame;
  }
  requestAnimationFrame(paint);
}
requestAnimationFrame(paint);

document.querySelector<HTMLButtonElement>("#create")!.addEventListener("click", async () => {
  try {
    setupStatus.textContent = "uploading...";
    const [identity, audio, weights, phonemes] = await Promise.all([
      readFile("file-identity"),
      readFile("file-audio"),
      readFile("file-weights"),
      readFile("file-phonemes"),
    ]);
    if (!identity || !audio || !weights) {
      setupStatus.textContent = "identity, audio and weights files are required";
      return;
    }
    const ids = {
      identity: (await uploadAsset(base, "identity", identity)).asset_id,
      audio: (await uploadAsset(base, "audio", audio)).asset_id,
      weights: (await uploadAsset(base, "weights", weights)).asset_id,
      ...(phonemes
        ? { phonemes: (await uploadAsset(base, "phonemes", phonemes)).asset_id }
        : {}),
    };
    const info = await createSession(base, {
      ...ids,
      pose: document.querySelector<HTMLSelectElement>("#pose")!.value as
        | "static" | "nod" | "sway",
      style: Number(document.querySelector<HTMLInputElement>("#style")!.value),
    });
    sessionId = info.session_id;
    store.dispatch({
      type: "session",
      id: info.session_id,
      frameCount: info.frame_count,
      schedule: info.schedule,
    });
    setupStatus.textContent = `session ${info.session_id}: ${info.frame_count} frames`;
    document.querySelector<HTMLElement>("#viewer")!.hidden = false;

    const [emotions, regions, phonemeNames] = await Promise.all([
      getMeta(base, "emotions", info.session_id),
      getMeta(base, "regions", info.session_id),
      getMeta(base, "phonemes", info.session_id),
    ]);
    fillSelect(document.querySelector<HTMLSelectElement>("#emo-category")!, emotions);
    fillSelect(document.querySelector<HTMLSelectElement>("#emo-region")!, regions);
    fillSelect(document.querySelector<HTMLSelectElement>("#ph-name")!, phonemeNames);

    connect();
  } catch (err) {
    setupStatus.textContent = err instanceof Error ? err.message : String(err);
  }
});

function connect() {
  if (!sessionId) return;
  if (stream) stream.close();
  stream = openStream(streamUrl(base, sessionId), {
    onMessage(msg) {
      if (msg.type === "frame") {
        store.dispatch({ type: "frame", msg });
        const legend = document.querySelector<HTMLElement>("#legend")!;
        if (!legend.childElementCount) {
          for (const entry of legendEntries(msg.regions)) {
            const item = document.createElement("div");
            item.innerHTML = `<span class="swatch" style="background:${entry.color}"></span>${entry.name}`;
            legend.appendChild(item);
          }
        }
      } else {
        store.dispatch({ type: "end", frameCount: msg.frame_count });
      }
    },
    onStatus(status) {
      store.dispatch({ type: "connection", status: status === "open" ? "open" : status === "connecting" ? "connecting" : "closed" });
      // resume from the server cursor if the socket drops mid-run
      if (status === "closed" && store.get().transport !== "finished") {
        setTimeout(connect, 500);
      }
    },
  });
}

document.querySelector<HTMLButtonElement>("#play")!.addEventListener("click", async () => {
  if (!sessionId) return;
  const status = await transport(base, sessionId, "play");
  store.dispatch({ type: "transport", state: status.state });
});

document.querySelector<HTMLButtonElement>("#pause")!.addEventListener("click", async () => {
  if (!sessionId) return;
  const status = await transport(base, sessionId, "pause");
  store.dispatch({ type: "transport", state: status.state });
});

wireControls(document, { base, store, sessionId: () => sessionId });
