// Wire types for the geoevidence HTTP API plus client-side view state.

export interface GeoJsonGeometry {
  type: string;
  coordinates: unknown;
}

export interface Feature {
  type: "Feature";
  properties: Record<string, unknown>;
  geometry: GeoJsonGeometry;
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: Feature[];
}

export interface HistogramBin {
  low: number;
  high: number;
  count: number;
}

export interface QueryResult {
  layer_id: string;
  histogram: HistogramBin[];
  excluded_count: number;
  selected_count: number;
  eligible_count: number;
  tau: number;
}

export interface LayerManifest {
  layer_id: string;
  kind: string;
  query?: string;
  provider_id?: string;
  tau?: number;
  dataset_id?: string;
  input_layer_ids?: string[];
  r1?: number;
  r2?: number;
  crs: string;
}

export interface ContactResult {
  layer_id: string;
  kind: string;
  area_m2: number;
  r1: number;
  r2: number;
}

export interface DepositModel {
  deposit_type: string;
  characteristics: Record<string, string>;
  source_docs: string[];
  edited: boolean;
}

export interface JobStatus {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  result_ref: string | null;
  error: string | null;
}

export type RampId = "host-blue" | "source-red";

/** Per-layer client view state. Filtering happens entirely client-side
 *  over the loaded features; slider moves never hit the server. */
export interface LayerViewState {
  layerId: string;
  visible: boolean;
  scoreMin: number;
  scoreMax: number;
  rampId: RampId;
  features: Feature[];
}

export type LonLat = [number, number];
