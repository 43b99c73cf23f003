// Leaflet map wiring: score-colored evidence layers with attribute
// tooltips, plus an interactive focus-area draw mode.
//
// Leaflet is loaded globally from a script tag (no bundler); only its
// types are imported here.

import type * as Leaflet from "leaflet";
import { applyClientFilter, colorForScore, featureScore } from "./layerState.js";
import type { Feature, LayerViewState, LonLat } from "./types.js";

declare const L: typeof Leaflet;

function tooltipHtml(feature: Feature): string {
  const rows = Object.entries(feature.properties)
    .filter(([k]) => !k.startsWith("__"))
    .map(([k, v]) => `<tr><th>${k}</th><td>${String(v)}</td></tr>`)
    .join("");
  return `<table class="tooltip-table">${rows}</table>`;
}

export class MapView {
  readonly map: Leaflet.Map;
  private groups = new Map<string, Leaflet.GeoJSON>();
  private drawMarkers: Leaflet.CircleMarker[] = [];
  private drawVertices: LonLat[] = [];
  private drawHandler: ((vertices: LonLat[]) => void) | null = null;

  constructor(container: string | HTMLElement, basemapUrl: string) {
    this.map = L.map(container, { center: [39.0, -118.0], zoom: 7 });
    if (basemapUrl) {
      L.tileLayer(basemapUrl, { maxZoom: 18 }).addTo(this.map);
    }
    this.map.on("click", (event: Leaflet.LeafletMouseEvent) => {
      if (!this.drawHandler) return;
      const vertex: LonLat = [event.latlng.lng, event.latlng.lat];
      this.drawVertices.push(vertex);
      this.drawMarkers.push(
        L.circleMarker(event.latlng, { radius: 4, color: "#444" }).addTo(this.map),
      );
    });
    this.map.on("dblclick", () => {
      if (!this.drawHandler) return;
      const handler = this.drawHandler;
      const vertices = this.drawVertices;
      this.cancelDraw();
      handler(vertices);
    });
  }

  /** Re-render one layer from its view state (client-side filter only). */
  refreshLayer(view: LayerViewState): void {
    const existing = this.groups.get(view.layerId);
    if (existing) this.map.removeLayer(existing);
    const visible = applyClientFilter(view);
    const group = L.geoJSON(
      { type: "FeatureCollection", features: visible } as never,
      {
        style: (feature) => ({
          color: "#333",
          weight: 0.5,
          fillOpacity: 0.65,
          fillColor: colorForScore(view, featureScore(feature as unknown as Feature)),
        }),
        onEachFeature: (feature, layer) => {
          layer.bindTooltip(tooltipHtml(feature as unknown as Feature), { sticky: true });
        },
      },
    );
    group.addTo(this.map);
    this.groups.set(view.layerId, group);
  }

  removeLayer(layerId: string): void {
    const group = this.groups.get(layerId);
    if (group) {
      this.map.removeLayer(group);
      this.groups.delete(layerId);
    }
  }

  fitToLayer(layerId: string): void {
    const group = this.groups.get(layerId);
    const bounds = group?.getBounds();
    if (bounds && bounds.isValid()) this.map.fitBounds(bounds.pad(0.2));
  }

  /** Click to add vertices; double-click finishes and calls back. */
  startDraw(onFinish: (vertices: LonLat[]) => void): void {
    this.cancelDraw();
    this.drawHandler = onFinish;
    this.map.doubleClickZoom.disable();
  }

  cancelDraw(): void {
    for (const marker of this.drawMarkers) this.map.removeLayer(marker);
    this.drawMarkers = [];
    this.drawVertices = [];
    this.drawHandler = null;
    this.map.doubleClickZoom.enable();
  }

  get drawing(): boolean {
    return this.drawHandler !== null;
  }
}
