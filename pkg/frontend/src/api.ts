// Thin fetch client for the geoevidence service. The UI touches the
// backend exclusively through this module.

import type {
  ContactResult,
  DepositModel,
  FeatureCollection,
  HistogramBin,
  JobStatus,
  LayerManifest,
  LonLat,
  QueryResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly code: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(message, code, resp.status);
}

export interface QueryRequest {
  dataset_id: string;
  query?: string;
  deposit_type?: string;
  characteristic?: string;
  tau?: number;
  percentile?: number;
  provider_id?: string;
  focus_area?: string;
  bins?: number;
  request_id?: string;
}

export interface IngestRequest {
  dataset_id: string;
  attributes_path?: string;
  geometry_path?: string;
  signature_columns?: string[];
  key_columns?: string[];
  join_column?: string;
  min_desc_length?: number;
  dissolve?: boolean;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createProject(projectId: string): Promise<{ project_id: string }> {
    return this.post("/projects", { project_id: projectId });
  }

  listDatasets(projectId: string): Promise<Array<{ dataset_id: string; count: number; crs: string }>> {
    return this.request(`/projects/${projectId}/datasets`);
  }

  ingestDataset(projectId: string, body: IngestRequest): Promise<{ job_id: string }> {
    return this.post(`/projects/${projectId}/datasets`, body);
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.request(`/jobs/${jobId}`);
  }

  async waitForJob(jobId: string, timeoutMs = 60_000): Promise<JobStatus> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "failed") return job;
      await new Promise((resolve) => setTimeout(resolve, 50));
    }
    throw new ApiError(`job ${jobId} timed out`, "timeout", 0);
  }

  runQuery(projectId: string, body: QueryRequest): Promise<QueryResult> {
    return this.post(`/projects/${projectId}/queries`, body);
  }

  layerManifest(layerId: string): Promise<LayerManifest> {
    return this.request(`/layers/${layerId}`);
  }

  layerGeojson(layerId: string): Promise<FeatureCollection> {
    return this.request(`/layers/${layerId}/geojson`);
  }

  layerHistogram(layerId: string, bins = 20): Promise<{ query?: string; histogram: HistogramBin[] }> {
    return this.request(`/layers/${layerId}/histogram?bins=${bins}`);
  }

  private exportUrl(layerId: string, scoreMin?: number, scoreMax?: number): string {
    const params = new URLSearchParams({ format: "geojson" });
    if (scoreMin !== undefined) params.set("score_min", String(scoreMin));
    if (scoreMax !== undefined) params.set("score_max", String(scoreMax));
    return `/layers/${layerId}/export?${params.toString()}`;
  }

  exportLayer(layerId: string, scoreMin?: number, scoreMax?: number): Promise<FeatureCollection> {
    return this.request(this.exportUrl(layerId, scoreMin, scoreMax));
  }

  /** Raw export body, byte-for-byte what the server sent. The download
   *  button must pass these bytes through untouched. */
  async exportLayerRaw(layerId: string, scoreMin?: number, scoreMax?: number): Promise<string> {
    const resp = await fetch(this.baseUrl + this.exportUrl(layerId, scoreMin, scoreMax));
    if (!resp.ok) await parseError(resp);
    return await resp.text();
  }

  findContact(
    projectId: string,
    layerIds: string[],
    r1: number,
    r2: number,
  ): Promise<ContactResult> {
    return this.post(`/projects/${projectId}/contact`, { layer_ids: layerIds, r1, r2 });
  }

  listDepositModels(): Promise<{ deposit_types: string[] }> {
    return this.request("/deposit-models");
  }

  getDepositModel(depositType: string): Promise<DepositModel> {
    return this.request(`/deposit-models/${encodeURIComponent(depositType)}`);
  }

  putDepositModel(depositType: string, characteristics: Record<string, string>): Promise<DepositModel> {
    return this.request(`/deposit-models/${encodeURIComponent(depositType)}`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ characteristics }),
    });
  }

  listFocusAreas(projectId: string): Promise<Array<{ name: string; crs?: string }>> {
    return this.request(`/projects/${projectId}/focus-areas`);
  }

  postFocusArea(
    projectId: string,
    name: string,
    polygon: LonLat[],
  ): Promise<{ name: string; vertex_count: number }> {
    return this.post(`/projects/${projectId}/focus-areas`, { name, polygon });
  }
}
