// Control panels: query form (custom + deposit-model modes), per-layer
// controls (visibility, score sliders, metadata, export), find-contact
// dialog, and the saved focus-area list.

import { ApiClient, ApiError } from "./api.js";
import { drawFocusArea } from "./focus.js";
import {
  applyClientFilter,
  createLayerView,
  scoreRange,
  withScoreBounds,
  withVisibility,
} from "./layerState.js";
import type { MapView } from "./mapView.js";
import type { HistogramBin, LayerViewState, LonLat, RampId } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function downloadText(filename: string, text: string): void {
  const blob = new Blob([text], { type: "application/geo+json" });
  const url = URL.createObjectURL(blob);
  const link = el("a", { href: url, download: filename });
  document.body.appendChild(link);
  link.click();
  link.remove();
  URL.revokeObjectURL(url);
}

function histogramSvg(bins: HistogramBin[]): SVGSVGElement {
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 200 60");
  svg.setAttribute("class", "histogram");
  const max = Math.max(1, ...bins.map((b) => b.count));
  const width = 200 / Math.max(1, bins.length);
  bins.forEach((bin, i) => {
    const h = (bin.count / max) * 56;
    const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
    rect.setAttribute("x", String(i * width));
    rect.setAttribute("y", String(60 - h));
    rect.setAttribute("width", String(Math.max(1, width - 1)));
    rect.setAttribute("height", String(h));
    rect.setAttribute("fill", "#4a78b0");
    const title = document.createElementNS("http://www.w3.org/2000/svg", "title");
    title.textContent = `[${bin.low.toFixed(3)}, ${bin.high.toFixed(3)}]: ${bin.count}`;
    rect.appendChild(title);
    svg.appendChild(rect);
  });
  return svg;
}

export interface AppState {
  projectId: string;
  datasetId: string;
  views: Map<string, LayerViewState>;
  focusArea?: string;
}

export class Panels {
  private layerList: HTMLElement;
  private status: HTMLElement;
  private focusList: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private mapView: MapView,
    private state: AppState,
  ) {
    this.status = el("div", { class: "status" });
    this.layerList = el("div", { class: "layer-list" });
    this.focusList = el("ul", { class: "focus-list" });
    this.buildQueryPanel();
    this.buildFocusPanel();
    this.buildContactPanel();
    const layersPanel = el("section", { class: "panel" });
    layersPanel.appendChild(el("h3", {}, "Evidence layers"));
    layersPanel.appendChild(this.layerList);
    this.root.appendChild(layersPanel);
    this.root.appendChild(this.status);
  }

  private say(message: string, isError = false): void {
    this.status.textContent = message;
    this.status.className = isError ? "status error" : "status";
  }

  // -- query panel --------------------------------------------------------

  private buildQueryPanel(): void {
    const panel = el("section", { class: "panel" });
    panel.appendChild(el("h3", {}, "Query"));

    const modeSelect = el("select", { id: "query-mode" });
    modeSelect.append(
      new Option("Custom text", "custom"),
      new Option("Deposit model", "model"),
    );
    panel.appendChild(modeSelect);

    const customBox = el("div", { class: "mode-custom" });
    const queryText = el("textarea", {
      id: "query-text",
      placeholder: "e.g. limestones, calcareous to carbonaceous pelites.",
    });
    customBox.appendChild(queryText);
    panel.appendChild(customBox);

    const modelBox = el("div", { class: "mode-model hidden" });
    const typeSelect = el("select", { id: "deposit-type" });
    const charSelect = el("select", { id: "characteristic" });
    const charText = el("textarea", { id: "characteristic-text" });
    const saveEdit = el("button", {}, "Save edited model");
    modelBox.append(typeSelect, charSelect, charText, saveEdit);
    panel.appendChild(modelBox);

    modeSelect.addEventListener("change", () => {
      const custom = modeSelect.value === "custom";
      customBox.classList.toggle("hidden", !custom);
      modelBox.classList.toggle("hidden", custom);
      if (!custom && typeSelect.options.length === 0) void loadTypes();
    });

    const loadTypes = async () => {
      const { deposit_types } = await this.api.listDepositModels();
      typeSelect.replaceChildren(...deposit_types.map((t) => new Option(t, t)));
      await loadCharacteristics();
    };

    const loadCharacteristics = async () => {
      if (!typeSelect.value) return;
      const model = await this.api.getDepositModel(typeSelect.value);
      const headings = Object.keys(model.characteristics);
      charSelect.replaceChildren(...headings.map((h) => new Option(h, h)));
      charText.value = model.characteristics[charSelect.value] ?? "";
    };

    typeSelect.addEventListener("change", () => void loadCharacteristics());
    charSelect.addEventListener("change", async () => {
      const model = await this.api.getDepositModel(typeSelect.value);
      charText.value = model.characteristics[charSelect.value] ?? "";
    });
    saveEdit.addEventListener("click", async () => {
      try {
        const model = await this.api.getDepositModel(typeSelect.value);
        const characteristics = { ...model.characteristics, [charSelect.value]: charText.value };
        await this.api.putDepositModel(typeSelect.value, characteristics);
        this.say(`saved edits to ${typeSelect.value}`);
      } catch (err) {
        this.say(String(err), true);
      }
    });

    const percentile = el("input", {
      id: "percentile",
      type: "number",
      min: "0",
      max: "99",
      value: "80",
      title: "percentile cutoff p; kept fraction is 1 - p/100",
    });
    const rampSelect = el("select", { id: "ramp" });
    rampSelect.append(new Option("blue (host)", "host-blue"), new Option("red (source)", "source-red"));
    const runButton = el("button", { class: "primary" }, "Run query");
    panel.append(
      el("label", { for: "percentile" }, "Percentile cutoff"),
      percentile,
      el("label", { for: "ramp" }, "Color ramp"),
      rampSelect,
      runButton,
    );

    runButton.addEventListener("click", async () => {
      try {
        this.say("scoring...");
        const body =
          modeSelect.value === "custom"
            ? { query: queryText.value }
            : { deposit_type: typeSelect.value, characteristic: charSelect.value };
        const result = await this.api.runQuery(this.state.projectId, {
          dataset_id: this.state.datasetId,
          percentile: Number(percentile.value),
          focus_area: this.state.focusArea,
          ...body,
        });
        await this.addLayer(result.layer_id, rampSelect.value as RampId);
        this.say(
          `layer ${result.layer_id}: ${result.selected_count}/${result.eligible_count} polygons`,
        );
      } catch (err) {
        this.say(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err), true);
      }
    });
  }

  // -- layer control ------------------------------------------------------

  async addLayer(layerId: string, rampId: RampId): Promise<void> {
    const collection = await this.api.layerGeojson(layerId);
    const view = createLayerView(layerId, collection.features, rampId);
    this.state.views.set(layerId, view);
    this.mapView.refreshLayer(view);
    this.mapView.fitToLayer(layerId);
    this.renderLayerEntry(view);
  }

  private updateView(view: LayerViewState): void {
    this.state.views.set(view.layerId, view);
    this.mapView.refreshLayer(view);
  }

  private renderLayerEntry(view: LayerViewState): void {
    const entry = el("div", { class: "layer-entry", "data-layer": view.layerId });
    const header = el("div", { class: "layer-header" });
    const toggle = el("input", { type: "checkbox" }) as HTMLInputElement;
    toggle.checked = true;
    header.append(toggle, el("code", {}, view.layerId));
    entry.appendChild(header);

    const [lo, hi] = scoreRange(view.features);
    const minSlider = el("input", {
      type: "range", min: String(lo), max: String(hi), step: "any", value: String(lo),
    }) as HTMLInputElement;
    const maxSlider = el("input", {
      type: "range", min: String(lo), max: String(hi), step: "any", value: String(hi),
    }) as HTMLInputElement;
    const readout = el("span", { class: "bounds" }, `[${lo.toFixed(3)}, ${hi.toFixed(3)}]`);
    entry.append(
      el("label", {}, "min"), minSlider,
      el("label", {}, "max"), maxSlider,
      readout,
    );

    // Slider moves re-filter locally; no server call here.
    const onSlide = () => {
      const current = this.state.views.get(view.layerId);
      if (!current) return;
      const next = withScoreBounds(current, Number(minSlider.value), Number(maxSlider.value));
      this.updateView(next);
      readout.textContent =
        `[${next.scoreMin.toFixed(3)}, ${next.scoreMax.toFixed(3)}] ` +
        `${applyClientFilter(next).length} shown`;
    };
    minSlider.addEventListener("input", onSlide);
    maxSlider.addEventListener("input", onSlide);

    toggle.addEventListener("change", () => {
      const current = this.state.views.get(view.layerId);
      if (!current) return;
      this.updateView(withVisibility(current, toggle.checked));
    });

    const meta = el("button", {}, "Metadata");
    meta.addEventListener("click", async () => {
      const manifest = await this.api.layerManifest(view.layerId);
      const { histogram } = await this.api.layerHistogram(view.layerId);
      const win = el("div", { class: "metadata-window" });
      win.appendChild(el("h4", {}, `Layer ${view.layerId}`));
      win.appendChild(el("p", {}, `Query: ${manifest.query ?? "(derived layer)"}`));
      win.appendChild(histogramSvg(histogram));
      const close = el("button", {}, "Close");
      close.addEventListener("click", () => win.remove());
      win.appendChild(close);
      document.body.appendChild(win);
    });

    // Export passes the server bytes through verbatim.
    const exportButton = el("button", {}, "Export GeoJSON");
    exportButton.addEventListener("click", async () => {
      const current = this.state.views.get(view.layerId);
      const raw = await this.api.exportLayerRaw(
        view.layerId, current?.scoreMin, current?.scoreMax,
      );
      downloadText(`${view.layerId}.geojson`, raw);
    });

    entry.append(meta, exportButton);
    this.layerList.appendChild(entry);
  }

  // -- find contact ---------------------------------------------------------

  private buildContactPanel(): void {
    const panel = el("section", { class: "panel" });
    panel.appendChild(el("h3", {}, "Find contact"));
    const r1 = el("input", { type: "number", value: "500", id: "r1" }) as HTMLInputElement;
    const r2 = el("input", { type: "number", value: "500", id: "r2" }) as HTMLInputElement;
    const button = el("button", {}, "Derive contact layer");
    panel.append(
      el("p", { class: "hint" }, "Intersects the buffered visible evidence layers, in creation order."),
      el("label", { for: "r1" }, "r1 (m)"), r1,
      el("label", { for: "r2" }, "r2 (m)"), r2,
      button,
    );
    button.addEventListener("click", async () => {
      const layerIds = [...this.state.views.values()]
        .filter((v) => v.visible && v.features.some((f) => "score" in f.properties))
        .map((v) => v.layerId);
      if (layerIds.length < 2) {
        this.say("need at least two visible evidence layers", true);
        return;
      }
      try {
        const result = await this.api.findContact(
          this.state.projectId, layerIds, Number(r1.value), Number(r2.value),
        );
        await this.addLayer(result.layer_id, "source-red");
        this.say(`contact layer ${result.layer_id}: ${(result.area_m2 / 1e6).toFixed(2)} km²`);
      } catch (err) {
        this.say(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err), true);
      }
    });
    this.root.appendChild(panel);
  }

  // -- focus areas -----------------------------------------------------------

  private buildFocusPanel(): void {
    const panel = el("section", { class: "panel" });
    panel.appendChild(el("h3", {}, "Focus areas"));
    const nameInput = el("input", { type: "text", placeholder: "area name" }) as HTMLInputElement;
    const drawButton = el("button", {}, "Draw on map");
    panel.append(nameInput, drawButton, this.focusList);
    this.root.appendChild(panel);
    void this.refreshFocusList();

    drawButton.addEventListener("click", () => {
      if (this.mapView.drawing) {
        this.mapView.cancelDraw();
        drawButton.textContent = "Draw on map";
        return;
      }
      drawButton.textContent = "Double-click to finish";
      this.say("click vertices on the map; double-click to finish");
      this.mapView.startDraw(async (vertices: LonLat[]) => {
        drawButton.textContent = "Draw on map";
        const outcome = await drawFocusArea(
          this.api, this.state.projectId, nameInput.value || "drawn area", vertices,
        );
        if (!outcome.posted) {
          this.say(outcome.error ?? "invalid polygon", true);
          return;
        }
        this.say(`saved focus area ${outcome.name}`);
        await this.refreshFocusList();
      });
    });
  }

  private async refreshFocusList(): Promise<void> {
    const areas = await this.api.listFocusAreas(this.state.projectId);
    this.focusList.replaceChildren(
      ...areas.map((area) => {
        const item = el("li", {});
        const pick = el("button", { class: "link" }, area.name);
        pick.addEventListener("click", () => {
          // Selected area pre-fills subsequent query requests.
          this.state.focusArea = this.state.focusArea === area.name ? undefined : area.name;
          this.say(
            this.state.focusArea
              ? `queries will clip to ${area.name}`
              : "queries run unclipped",
          );
        });
        item.appendChild(pick);
        return item;
      }),
    );
  }
}
