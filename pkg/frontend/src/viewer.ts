/**
 * DOM shell: wires mouse gestures and the control panel to the pure
 * state/view/level/fetcher modules and paints frames into an <img>.
 */

import { RenderFetcher, type Frame } from "./fetcher";
import { fetchHeader, slideExtent, type SlideHeader } from "./gateway";
import { chooseLevel, type ZoomPolicy } from "./level";
import { allChannelsOff, defaultState, renderUrl, type ViewState } from "./state";
import { scheduleLocationWrite } from "./url-state";
import { pan, viewScale, zoomAt } from "./view";

export interface ViewerElements {
  image: HTMLImageElement;
  banner: HTMLElement;
  levelIndicator: HTMLElement;
}

const BLACK_PIXEL_PNG =
  "data:image/png;base64,iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNgAAAAAgABSK+kcQAAAABJRU5ErkJggg==";

export class Viewer {
  state: ViewState;
  readonly header: SlideHeader;
  private readonly policy: ZoomPolicy;
  private readonly fetcher: RenderFetcher;
  private objectUrl: string | null = null;

  constructor(
    private readonly base: string,
    private readonly slideId: string,
    header: SlideHeader,
    private readonly el: ViewerElements,
    initial?: ViewState,
  ) {
    this.header = header;
    this.policy = { levels: header.mip_levels };
    this.state = initial ?? this.fittedState();
    this.fetcher = new RenderFetcher({
      fetchFn: (url) => fetch(url),
      onFrame: (frame) => this.paint(frame),
      onBanner: (message) => {
        this.el.banner.textContent = message ?? "";
        this.el.banner.hidden = message === null;
      },
    });
    this.el.image.addEventListener("pointerdown", (down) => this.dragFrom(down));
    this.el.image.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.zoom(ev.deltaY < 0 ? 1.25 : 0.8, ev.offsetX, ev.offsetY);
    });
    this.refresh();
  }

  private fittedState(): ViewState {
    const extent = slideExtent(this.header);
    const state = defaultState(this.header.tile.colours);
    const scale = Math.min(state.width / extent.width, state.height / extent.height);
    return { ...state, x1: state.width / scale, y1: state.height / scale };
  }

  private dragFrom(down: PointerEvent): void {
    let lastX = down.clientX;
    let lastY = down.clientY;
    const move = (ev: PointerEvent) => {
      this.state = pan(this.state, lastX - ev.clientX, lastY - ev.clientY);
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.refresh();
    };
    const up = () => {
      window.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
    };
    window.addEventListener("pointermove", move);
    window.addEventListener("pointerup", up);
  }

  zoom(factor: number, anchorX?: number, anchorY?: number): void {
    this.state = zoomAt(this.state, factor, anchorX, anchorY);
    this.refresh(factor > 1 ? 1 : -1);
  }

  setChannel(index: number, on: boolean): void {
    this.state.channels[index] = on;
    this.refresh();
  }

  setContrast(index: number, lo: number, hi: number): void {
    this.state.contrast[index] = [lo, hi];
    this.refresh();
  }

  setGamma(gamma: number): void {
    this.state.gamma = gamma;
    this.refresh();
  }

  setPipeline(name: string): void {
    this.state.pipeline = name;
    this.refresh();
  }

  refresh(direction = 0): void {
    this.state.level = chooseLevel(this.policy, viewScale(this.state), direction);
    this.el.levelIndicator.textContent = `L${this.state.level}`;
    scheduleLocationWrite(this.slideId, this.state);
    this.fetcher.request(renderUrl(this.base, this.slideId, this.state), allChannelsOff(this.state));
  }

  private paint(frame: Frame): void {
    if (this.objectUrl !== null) URL.revokeObjectURL(this.objectUrl);
    if (frame.kind === "black") {
      this.objectUrl = null;
      this.el.image.src = BLACK_PIXEL_PNG;
      return;
    }
    this.objectUrl = URL.createObjectURL(new Blob([frame.bytes], { type: "image/png" }));
    this.el.image.src = this.objectUrl;
  }
}

export async function createViewer(
  base: string,
  slideId: string,
  el: ViewerElements,
  initial?: ViewState,
): Promise<Viewer> {
  const header = await fetchHeader(base, slideId);
  return new Viewer(base, slideId, header, el, initial);
}
