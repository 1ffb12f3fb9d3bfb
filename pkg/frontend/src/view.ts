/**
 * Viewport geometry: pan and zoom operate on the slide-pixel rectangle
 * while the output size stays fixed, so `scale = width / (x1 - x0)` is
 * the display pixels-per-slide-pixel ratio the level chooser consumes.
 */

import type { ViewState } from "./state";

export function viewScale(state: ViewState): number {
  return state.width / (state.x1 - state.x0);
}

/** Shift the viewport by a screen-pixel delta (drag gesture). */
export function pan(state: ViewState, dxScreen: number, dyScreen: number): ViewState {
  const s = viewScale(state);
  const dx = dxScreen / s;
  const dy = dyScreen / s;
  return { ...state, x0: state.x0 + dx, x1: state.x1 + dx, y0: state.y0 + dy, y1: state.y1 + dy };
}

/**
 * Scale the viewport by `factor` about a screen-pixel anchor, so the
 * slide point under the cursor stays put. factor > 1 zooms in.
 */
export function zoomAt(
  state: ViewState,
  factor: number,
  anchorX = state.width / 2,
  anchorY = state.height / 2,
): ViewState {
  if (!(factor > 0)) throw new Error("zoom factor must be positive");
  const s = viewScale(state);
  const px = state.x0 + anchorX / s;
  const py = state.y0 + anchorY / s;
  const spanX = (state.x1 - state.x0) / factor;
  const spanY = (state.y1 - state.y0) / factor;
  const fx = anchorX / state.width;
  const fy = anchorY / state.height;
  return {
    ...state,
    x0: px - fx * spanX,
    x1: px + (1 - fx) * spanX,
    y0: py - fy * spanY,
    y1: py + (1 - fy) * spanY,
  };
}
