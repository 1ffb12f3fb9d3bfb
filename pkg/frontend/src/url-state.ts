/**
 * Shareable view URLs: the browser location carries the slide id plus
 * the exact render query, so pasting the URL reproduces the frame.
 * Writes go through history.replaceState on a debounce to avoid one
 * history entry per mouse-wheel tick.
 */

import { parseRenderQuery, renderQuery, type ViewState } from "./state";

const WRITE_DEBOUNCE_MS = 250;

let writeTimer: ReturnType<typeof setTimeout> | null = null;

export function readLocation(): { slideId: string; state: ViewState } | null {
  if (typeof window === "undefined") return null;
  const params = new URLSearchParams(window.location.search);
  const slideId = params.get("slide");
  if (slideId === null) return null;
  try {
    params.delete("slide");
    return { slideId, state: parseRenderQuery(params.toString()) };
  } catch {
    return null;
  }
}

export function scheduleLocationWrite(slideId: string, state: ViewState): void {
  if (typeof window === "undefined") return;
  if (writeTimer !== null) clearTimeout(writeTimer);
  writeTimer = setTimeout(() => {
    writeTimer = null;
    const url = new URL(window.location.href);
    url.search = `slide=${encodeURIComponent(slideId)}&${renderQuery(state)}`;
    window.history.replaceState(null, "", url.toString());
  }, WRITE_DEBOUNCE_MS);
}
