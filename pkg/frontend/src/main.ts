// Bootstrap: read config, wire the map and panels together.

import { ApiClient } from "./api.js";
import { MapView } from "./mapView.js";
import { Panels, type AppState } from "./panels.js";

interface UiConfig {
  apiBase: string;
  projectId: string;
  datasetId: string;
  basemapUrl: string;
}

declare global {
  interface Window {
    GEOEVIDENCE_CONFIG?: Partial<UiConfig>;
  }
}

const DEFAULTS: UiConfig = {
  apiBase: "http://127.0.0.1:8319",
  projectId: "default",
  datasetId: "sgmc",
  basemapUrl: "https://tile.openstreetmap.org/{z}/{x}/{y}.png",
};

async function start(): Promise<void> {
  const config: UiConfig = { ...DEFAULTS, ...(window.GEOEVIDENCE_CONFIG ?? {}) };
  const api = new ApiClient(config.apiBase);
  await api.createProject(config.projectId);

  const mapView = new MapView("map", config.basemapUrl);
  const state: AppState = {
    projectId: config.projectId,
    datasetId: config.datasetId,
    views: new Map(),
  };
  const sidebar = document.getElementById("sidebar");
  if (!sidebar) throw new Error("missing #sidebar element");
  new Panels(sidebar, api, mapView, state);

  const datasets = await api.listDatasets(config.projectId);
  const banner = document.getElementById("dataset-banner");
  if (banner) {
    banner.textContent = datasets.length
      ? `datasets: ${datasets.map((d) => `${d.dataset_id} (${d.count})`).join(", ")}`
      : "no datasets ingested yet; use the CLI or POST /projects/{id}/datasets";
  }
}

void start();
