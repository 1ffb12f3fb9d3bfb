import { describe, expect, it } from "vitest";

import { defaultState, type ViewState } from "../src/state";
import { pan, viewScale, zoomAt } from "../src/view";

const EPS = 1e-9;

function expectViewportClose(a: ViewState, b: ViewState) {
  expect(Math.abs(a.x0 - b.x0)).toBeLessThan(EPS);
  expect(Math.abs(a.x1 - b.x1)).toBeLessThan(EPS);
  expect(Math.abs(a.y0 - b.y0)).toBeLessThan(EPS);
  expect(Math.abs(a.y1 - b.y1)).toBeLessThan(EPS);
}

describe("pan", () => {
  it("shifts by the screen delta divided by the scale", () => {
    const state = { ...defaultState(1), x0: 0, x1: 1024, y0: 0, y1: 768, width: 512, height: 384 };
    // scale = 512/1024 = 0.5, so 10 screen px is 20 slide px
    const moved = pan(state, 10, -6);
    expect(moved.x0).toBeCloseTo(20, 9);
    expect(moved.x1).toBeCloseTo(1044, 9);
    expect(moved.y0).toBeCloseTo(-12, 9);
    expect(moved.y1).toBeCloseTo(756, 9);
  });

  it("preserves the viewport span and the scale", () => {
    const state = defaultState(1);
    const moved = pan(state, 37, 91);
    expect(moved.x1 - moved.x0).toBeCloseTo(state.x1 - state.x0, 9);
    expect(viewScale(moved)).toBeCloseTo(viewScale(state), 9);
  });
});

describe("zoom", () => {
  it("x2 then x0.5 about the same anchor restores the viewport", () => {
    const state = { ...defaultState(2), x0: 120.5, x1: 900.5, y0: 40, y1: 625, width: 512, height: 384 };
    const back = zoomAt(zoomAt(state, 2.0, 100, 50), 0.5, 100, 50);
    expectViewportClose(back, state);
  });

  it("x2 then x0.5 about different anchors still restores the span", () => {
    const state = defaultState(3);
    const back = zoomAt(zoomAt(state, 2.0, 10, 10), 0.5, 400, 300);
    expect(back.x1 - back.x0).toBeCloseTo(state.x1 - state.x0, 9);
    expect(back.y1 - back.y0).toBeCloseTo(state.y1 - state.y0, 9);
  });

  it("keeps the slide point under the anchor fixed", () => {
    const state = { ...defaultState(1), x0: 0, x1: 1024, y0: 0, y1: 768, width: 512, height: 384 };
    const anchorX = 128;
    const anchorY = 96;
    const before = state.x0 + anchorX / viewScale(state);
    const zoomed = zoomAt(state, 3.0, anchorX, anchorY);
    const after = zoomed.x0 + anchorX / viewScale(zoomed);
    expect(after).toBeCloseTo(before, 9);
  });

  it("doubles the scale when zooming in by two", () => {
    const state = defaultState(1);
    expect(viewScale(zoomAt(state, 2.0))).toBeCloseTo(2 * viewScale(state), 9);
  });

  it("rejects a non-positive factor", () => {
    expect(() => zoomAt(defaultState(1), 0)).toThrow(/positive/);
  });
});
