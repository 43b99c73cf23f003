// Client-side layer filtering and score coloring.
//
// The score sliders re-filter the already-loaded features locally; the
// result must match the server's export filter exactly for the same
// bounds (both sides are closed intervals, and features without a score
// property pass through).

import type { Feature, LayerViewState, RampId } from "./types.js";

export function featureScore(feature: Feature): number | undefined {
  const value = feature.properties["score"];
  return typeof value === "number" ? value : undefined;
}

export function scoreRange(features: Feature[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const f of features) {
    const s = featureScore(f);
    if (s === undefined) continue;
    if (s < lo) lo = s;
    if (s > hi) hi = s;
  }
  if (lo > hi) return [0, 1]; // no scored features (e.g. contact layers)
  return [lo, hi];
}

export function createLayerView(
  layerId: string,
  features: Feature[],
  rampId: RampId,
): LayerViewState {
  const [lo, hi] = scoreRange(features);
  return { layerId, visible: true, scoreMin: lo, scoreMax: hi, rampId, features };
}

/** New state with clamped bounds; never mutates (renders re-derive). */
export function withScoreBounds(
  view: LayerViewState,
  scoreMin: number,
  scoreMax: number,
): LayerViewState {
  if (scoreMin > scoreMax) [scoreMin, scoreMax] = [scoreMax, scoreMin];
  return { ...view, scoreMin, scoreMax };
}

export function withVisibility(view: LayerViewState, visible: boolean): LayerViewState {
  return { ...view, visible };
}

/** The filtered feature set the map should render. Hidden layers render
 *  nothing; otherwise a feature passes iff its score lies in the closed
 *  interval [scoreMin, scoreMax] (scoreless features always pass). */
export function applyClientFilter(view: LayerViewState): Feature[] {
  if (!view.visible) return [];
  return view.features.filter((f) => {
    const s = featureScore(f);
    if (s === undefined) return true;
    return s >= view.scoreMin && s <= view.scoreMax;
  });
}

// Two fixed ramps: blue for host-style layers, red for source-style.
const RAMPS: Record<RampId, { low: [number, number, number]; high: [number, number, number] }> = {
  "host-blue": { low: [0xef, 0xf3, 0xff], high: [0x08, 0x51, 0x9c] },
  "source-red": { low: [0xfe, 0xe5, 0xd9], high: [0xa5, 0x0f, 0x15] },
};

function hex2(v: number): string {
  return Math.round(v).toString(16).padStart(2, "0");
}

/** Continuous ramp over the layer's observed score range. */
export function colorForScore(view: LayerViewState, score: number | undefined): string {
  const ramp = RAMPS[view.rampId];
  const [lo, hi] = scoreRange(view.features);
  let t = 1.0;
  if (score !== undefined && hi > lo) {
    t = (score - lo) / (hi - lo);
    t = Math.max(0, Math.min(1, t));
  }
  const rgb = ramp.low.map((c, i) => c + t * ((ramp.high[i] ?? 0) - c));
  return `#${hex2(rgb[0] ?? 0)}${hex2(rgb[1] ?? 0)}${hex2(rgb[2] ?? 0)}`;
}
