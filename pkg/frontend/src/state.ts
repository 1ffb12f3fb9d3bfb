/**
 * Viewer state and its wire form.
 *
 * A ViewState captures everything needed to reproduce a frame: the
 * slide-pixel viewport, the output size, and the render controls. It
 * serializes to the query string of `GET /slides/{id}/render` so a view
 * is shareable as a URL and the server needs no session.
 */

export interface ViewState {
  /** Slide-pixel viewport, half-open on the right/bottom edge. */
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  /** Output frame size in device pixels. */
  width: number;
  height: number;
  /** Per-colour on/off toggles (the render `status` vector). */
  channels: boolean[];
  /** Per-colour contrast window [iInf, iSup] in sample units. */
  contrast: [number, number][];
  gamma: number;
  level: number;
  pipeline: string;
}

export function defaultState(colours: number, width = 512, height = 384): ViewState {
  return {
    x0: 0,
    y0: 0,
    x1: width,
    y1: height,
    width,
    height,
    channels: Array.from({ length: colours }, () => true),
    contrast: Array.from({ length: colours }, () => [0, 65535] as [number, number]),
    gamma: 1.0,
    level: 1,
    pipeline: "raw",
  };
}

export function allChannelsOff(state: ViewState): boolean {
  return state.channels.every((on) => !on);
}

/** Floats print with a decimal point so the query form is canonical. */
function num(v: number): string {
  return Number.isInteger(v) ? v.toFixed(1) : String(v);
}

export function renderQuery(state: ViewState): string {
  const q = new URLSearchParams();
  q.set("x0", num(state.x0));
  q.set("y0", num(state.y0));
  q.set("x1", num(state.x1));
  q.set("y1", num(state.y1));
  q.set("w", String(state.width));
  q.set("h", String(state.height));
  q.set("contrast", state.contrast.map(([lo, hi]) => `${lo}:${hi}`).join(","));
  q.set("status", state.channels.map((on) => (on ? "1" : "0")).join(","));
  q.set("gamma", num(state.gamma));
  q.set("level", String(state.level));
  q.set("pipeline", state.pipeline);
  return q.toString();
}

export function renderUrl(base: string, slideId: string, state: ViewState): string {
  return `${base}/slides/${encodeURIComponent(slideId)}/render?${renderQuery(state)}`;
}

export function parseRenderQuery(query: string): ViewState {
  const q = new URLSearchParams(query);
  const need = (key: string): string => {
    const v = q.get(key);
    if (v === null) throw new Error(`missing query field ${key}`);
    return v;
  };
  const contrast = need("contrast")
    .split(",")
    .map((pair) => {
      const [lo, hi] = pair.split(":");
      return [Number(lo), Number(hi)] as [number, number];
    });
  const channels = need("status")
    .split(",")
    .map((s) => Number(s) !== 0);
  if (channels.length !== contrast.length) {
    throw new Error("status and contrast disagree on colour count");
  }
  return {
    x0: Number(need("x0")),
    y0: Number(need("y0")),
    x1: Number(need("x1")),
    y1: Number(need("y1")),
    width: Number(need("w")),
    height: Number(need("h")),
    channels,
    contrast,
    gamma: Number(q.get("gamma") ?? "1.0"),
    level: Number(q.get("level") ?? "1"),
    pipeline: q.get("pipeline") ?? "raw",
  };
}
