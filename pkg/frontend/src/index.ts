export { RenderFetcher, type FetchLike, type Frame } from "./fetcher";
export { fetchHeader, listSlides, slideExtent, type SlideHeader } from "./gateway";
export { chooseLevel, snapScale, type ZoomPolicy } from "./level";
export {
  allChannelsOff,
  defaultState,
  parseRenderQuery,
  renderQuery,
  renderUrl,
  type ViewState,
} from "./state";
export { readLocation, scheduleLocationWrite } from "./url-state";
export { pan, viewScale, zoomAt } from "./view";
export { createViewer, Viewer, type ViewerElements } from "./viewer";
