// Control widgets. Each commit sends exactly one PUT with a partial schedule;
// the widget group stays disabled until the server echoes the effective
// schedule (or rejects it), so the panel never shows a control value the
// server has not confirmed.

import { ApiError, putControls } from "./api";
import type { SchedulePatch } from "./messages";
import type { Store } from "./state";

export interface ControlDeps {
  base: string;
  store: Store;
  sessionId: () => string | null;
}

export async function commitControl(
  deps: ControlDeps,
  widget: string,
  patch: SchedulePatch
): Promise<void> {
  const id = deps.sessionId();
  if (id === null) return;
  deps.store.dispatch({ type: "controlsSent", widget });
  try {
    const echo = await putControls(deps.base, id, patch);
    deps.store.dispatch({
      type: "controlsEcho",
      schedule: echo.schedule,
      appliedFrom: echo.applied_from,
    });
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      deps.store.dispatch({ type: "controlsRejected", detail: err.detail });
    } else {
      deps.store.dispatch({
        type: "controlsRejected",
        detail: err instanceof Error ? err.message : String(err),
      });
    }
  }
}

function num(root: ParentNode, id: string): number {
  const el = root.querySelector<HTMLInputElement>(`#${id}`);
  return el ? Number(el.value) : NaN;
}

function sel(root: ParentNode, id: string): string {
  const el = root.querySelector<HTMLSelectElement | HTMLInputElement>(`#${id}`);
  return el ? el.value : "";
}

export function lipScalePatch(root: ParentNode): SchedulePatch {
  const mode = sel(root, "lip-mode");
  if (mode === "off") return { lip_scale: { mode: "off" } };
  if (mode === "fixed") {
    return { lip_scale: { mode: "fixed", factor: num(root, "lip-factor") } };
  }
  return {
    lip_scale: {
      mode: "amplitude",
      f_min: num(root, "lip-fmin"),
      f_max: num(root, "lip-fmax"),
      rms_ref: "auto",
    },
  };
}

export function phonemePatch(root: ParentNode): SchedulePatch {
  const name = sel(root, "ph-name");
  if (!name) return { phoneme_edits: [] };
  return {
    phoneme_edits: [
      {
        name,
        lambda: num(root, "ph-lambda"),
        start: num(root, "ph-start"),
        stop: num(root, "ph-stop"),
      },
    ],
  };
}

export function emotionPatch(root: ParentNode): SchedulePatch {
  const mode = sel(root, "emo-mode");
  if (mode === "regional") {
    const region = sel(root, "emo-region");
    return {
      emotion: {
        mode: "regional",
        regions: {
          [region]: {
            category: sel(root, "emo-category"),
            intensity: num(root, "emo-intensity"),
          },
        },
      },
    };
  }
  return {
    emotion: {
      mode: "global",
      category: sel(root, "emo-category"),
      intensity: num(root, "emo-intensity"),
    },
  };
}

export function kalmanPatch(root: ParentNode): SchedulePatch {
  const on = root.querySelector<HTMLInputElement>("#kalman-on");
  if (!on || !on.checked) return { kalman: null };
  return { kalman: { q: num(root, "kalman-q"), r: num(root, "kalman-r") } };
}

export interface WidgetGroup {
  fieldset: HTMLFieldSetElement;
  buildPatch: (root: ParentNode) => SchedulePatch;
}

// Wire every control group: commit on its Apply button, lock with the
// pending flag, surface rejection text in the shared error line.
export function wireControls(root: ParentNode, deps: ControlDeps): void {
  const groups: Array<[string, (r: ParentNode) => SchedulePatch]> = [
    ["lip", lipScalePatch],
    ["phoneme", phonemePatch],
    ["emotion", emotionPatch],
    ["kalman", kalmanPatch],
  ];

  for (const [name, buildPatch] of groups) {
    const button = root.querySelector<HTMLButtonElement>(`#apply-${name}`);
    if (!button) continue;
    button.addEventListener("click", () => {
      void commitControl(deps, name, buildPatch(root));
    });
  }

  const errorLine = root.querySelector<HTMLElement>("#control-error");
  deps.store.subscribe((s) => {
    for (const [name] of groups) {
      const fieldset = root.querySelector<HTMLFieldSetElement>(`#group-${name}`);
      if (fieldset) fieldset.disabled = s.pending === name;
    }
    if (errorLine) errorLine.textContent = s.error ?? "";
  });
}

export function fillSelect(el: HTMLSelectElement, names: string[]): void {
  el.innerHTML = "";
  for (const name of names) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    el.appendChild(option);
  }
}
