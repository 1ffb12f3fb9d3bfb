/**
 * Thin client for the gateway's JSON endpoints. The render endpoint is
 * handled by RenderFetcher; tile PNGs are plain <img> URLs.
 */

export interface SlideHeader {
  slide_id: string;
  attributes: Record<string, unknown>;
  mosaic: { rows: number; cols: number };
  tile: { height: number; width: number; colours: number };
  pixel_pitch_nm: number;
  colour_names: string[];
  layout: string;
  chunk: { h: number; w: number };
  codec_chain: number[];
  mip_levels: number[];
  fovs: {
    r: number;
    c: number;
    linear_index: number;
    stage: [number, number, number];
    pixel_origin: [number, number];
  }[];
}

export async function listSlides(base: string): Promise<string[]> {
  const response = await fetch(`${base}/slides`);
  if (!response.ok) throw new Error(`slide list failed with status ${response.status}`);
  return (await response.json()) as string[];
}

export async function fetchHeader(base: string, slideId: string): Promise<SlideHeader> {
  const response = await fetch(`${base}/slides/${encodeURIComponent(slideId)}/header`);
  if (response.status === 404) throw new Error(`unknown slide ${slideId}`);
  if (!response.ok) throw new Error(`header fetch failed with status ${response.status}`);
  return (await response.json()) as SlideHeader;
}

/** Full mosaic extent in slide pixels, from the header's fov origins. */
export function slideExtent(header: SlideHeader): { width: number; height: number } {
  let width = 0;
  let height = 0;
  for (const fov of header.fovs) {
    width = Math.max(width, fov.pixel_origin[1] + header.tile.width);
    height = Math.max(height, fov.pixel_origin[0] + header.tile.height);
  }
  return { width, height };
}
