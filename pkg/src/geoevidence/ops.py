"""Shared orchestration between the HTTP service and the CLI.

Each function takes a :class:`~geoevidence.store.ProjectStore` plus plain
parameters and returns a JSON-ready dict, so the two surfaces stay
behaviorally identical. Jobs, locks, and request-id idempotency remain the
service's concern; exit codes and printing remain the CLI's.
"""

import json
import logging
from dataclasses import replace
from pathlib import Path

from . import evaluate as ev
from . import evidence
from . import geometry as geo
from .contact import ContactParams, find_contact
from .embed import DEFAULT_REFERENCE_DIMS, EmbeddingCache, ReferenceProvider, RemoteProvider
from .errors import InputError, NotFoundError
from .geodata import (
    GeoDataset,
    IngestConfig,
    clip_to_focus,
    dissolve,
    load_dataset,
    load_sites,
    project_dataset,
)
from .projection import GEOGRAPHIC_CRS, PROJECTED_CRS, project_geometry
from .store import ProjectStore

logger = logging.getLogger(__name__)


def resolve_provider(
    provider_id: str | None,
    *,
    default_provider: str = "reference",
    reference_dims: int = DEFAULT_REFERENCE_DIMS,
    remote_endpoint: str = "",
    remote_model: str = "",
    remote_dims: int = 0,
):
    wanted = provider_id or default_provider
    reference = ReferenceProvider(dims=reference_dims)
    if wanted in ("reference", reference.provider_id):
        return reference
    if remote_endpoint:
        remote = RemoteProvider(endpoint=remote_endpoint, model_name=remote_model, dims=remote_dims)
        if wanted in ("remote", remote.provider_id):
            return remote
    raise InputError(f"unknown embedding provider {wanted!r}")


def ingest(
    store: ProjectStore,
    project_id: str,
    dataset_id: str,
    attributes_path: str | None,
    geometry_path: str,
    config: IngestConfig,
    *,
    dissolve_after: bool = False,
) -> dict:
    dataset = load_dataset(attributes_path, geometry_path, config, dataset_id=dataset_id)
    if dissolve_after:
        dataset = dissolve(dataset)
    store.save_dataset(project_id, dataset)
    return {"dataset_id": dataset_id, "count": dataset.count, "crs": dataset.crs}


def transform_dataset(
    store: ProjectStore,
    project_id: str,
    dataset_id: str,
    output_id: str,
    *,
    kind: str,
    focus_name: str | None = None,
) -> dict:
    """Apply dissolve/project/clip to a stored dataset, saving a new one."""
    dataset = store.load_dataset(project_id, dataset_id)
    if kind == "dissolve":
        out = dissolve(dataset)
    elif kind == "project":
        out = project_dataset(dataset, store.albers_params)
    elif kind == "clip":
        focus = store.load_focus_area(project_id, focus_name)
        out = clip_to_focus(dataset, focus)
    else:
        raise InputError(f"unknown transformation {kind!r}")
    out = replace(out, dataset_id=output_id)
    store.save_dataset(project_id, out)
    return {"dataset_id": output_id, "count": out.count, "crs": out.crs}


def run_query(
    store: ProjectStore,
    project_id: str,
    *,
    dataset_id: str,
    provider,
    query: str | None = None,
    deposit_type: str | None = None,
    characteristic: str | None = None,
    tau: float | None = None,
    percentile: float | None = None,
    default_tau: float = 0.2,
    focus_area: str | None = None,
    bins: int = 20,
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
):
    """Score + threshold + histogram; persists the layer. Returns (payload, layer)."""
    if (query is None) == (deposit_type is None and characteristic is None):
        raise InputError("supply exactly one of 'query' or 'deposit_type'+'characteristic'")
    if deposit_type is not None:
        if not characteristic:
            raise InputError("deposit-model mode needs a 'characteristic'")
        model = store.get_deposit_model(deposit_type)
        text = model.get(characteristic)
        if text is None:
            raise NotFoundError(
                f"model {deposit_type!r} has no characteristic {characteristic!r}"
            )
        query_text = text
    else:
        query_text = query

    if tau is not None and percentile is not None:
        raise InputError("supply either tau or percentile, not both")
    if percentile is not None:
        tau = evidence.tau_from_percentile(percentile)
    if tau is None:
        tau = default_tau

    dataset = store.load_dataset(project_id, dataset_id)
    focus_tag = ""
    if focus_area:
        focus = store.load_focus_area(project_id, focus_area)
        dataset = clip_to_focus(dataset, focus)
        if dataset.count == 0:
            raise InputError(f"focus area {focus_area!r} excludes every record")
        focus_tag = focus_area

    # Layer ids are content hashes; scope them by project and (when
    # clipped) focus area so equal dataset names never collide.
    tag = f"{project_id}/{dataset_id}"
    if focus_tag:
        tag += f"@{focus_tag}"
    scoring_view = replace(dataset, dataset_id=tag)
    scored = evidence.score_dataset(scoring_view, query_text, provider, cache, batch_size)
    scored = replace(scored, dataset_id=dataset_id)
    layer = evidence.select_top(scored, tau, dataset)
    histogram = evidence.layer_histogram(scored, bins)

    if not store.has_layer(layer.layer_id):
        store.save_evidence_layer(project_id, scored, layer, dataset, focus_area=focus_tag)
    payload = {
        "layer_id": layer.layer_id,
        "histogram": [{"low": lo, "high": hi, "count": n} for lo, hi, n in histogram],
        "excluded_count": scored.excluded_count,
        "selected_count": len(layer.selected),
        "eligible_count": scored.eligible_count,
        "tau": tau,
    }
    return payload, layer


def derive_contact(
    store: ProjectStore,
    project_id: str,
    layer_ids: list[str],
    r1: float,
    r2: float,
    arc_segments: int = 16,
) -> dict:
    if len(layer_ids) < 2:
        raise InputError("contact derivation needs at least 2 layers")
    geometries = []
    for lid in layer_ids:
        geom, crs = store.layer_geometry(lid)
        if crs == GEOGRAPHIC_CRS:
            geom = project_geometry(geom, store.albers_params)
        geometries.append(geom)
    params = ContactParams(r1=r1, r2=r2, arc_segments=arc_segments)
    derived = find_contact(geometries, params, crs=PROJECTED_CRS, input_layer_ids=tuple(layer_ids))
    if not store.has_layer(derived.layer_id):
        store.save_derived_layer(project_id, derived)
    return {
        "layer_id": derived.layer_id,
        "kind": derived.kind,
        "area_m2": geo.geometry_area(derived.geometry),
        "r1": params.r1,
        "r2": params.r2,
    }


def _evaluation_dataset(store: ProjectStore, project_id: str, layer_ids: list[str]) -> GeoDataset:
    """The projected dataset the given layers were scored over.

    Layers scored on a focus-clipped dataset are re-evaluated on the same
    clip, never on the full extents. All layers must share one dataset and
    one focus area.
    """
    manifests = [store.layer_manifest(lid) for lid in layer_ids]
    sources = {(m["dataset_id"], m.get("focus_area", "")) for m in manifests}
    if len(sources) != 1:
        raise InputError("all layers must come from the same dataset and focus area")
    dataset_id, focus_area = sources.pop()
    dataset = store.load_dataset(project_id, dataset_id)
    if focus_area:
        dataset = clip_to_focus(dataset, store.load_focus_area(project_id, focus_area))
    if dataset.crs == GEOGRAPHIC_CRS:
        dataset = project_dataset(dataset, store.albers_params)
    return dataset


def evaluate_sites(
    store: ProjectStore,
    project_id: str,
    layer_ids: list[str],
    sites_path: str,
    buffer_m: float = 0.0,
    trials: int = 10,
    seed: int = 0,
    include_baselines: bool = True,
) -> dict:
    if not layer_ids:
        raise InputError("need at least one layer id")
    sites = load_sites(sites_path)
    dataset = _evaluation_dataset(store, project_id, layer_ids)
    rankings = [store.scored_layer(lid).ranking() for lid in layer_ids]
    params = store.albers_params
    result = {
        "per_layer": {
            lid: ev.curve_rows(ev.recall_curve(r, dataset, sites, buffer_m, params=params))
            for lid, r in zip(layer_ids, rankings)
        },
        "buffer_m": buffer_m,
        "site_count": sites.count,
    }
    if len(rankings) > 1:
        result["union"] = ev.curve_rows(
            ev.union_recall_curve(rankings, dataset, sites, buffer_m, params)
        )
    if include_baselines:
        baselines = ev.baseline_curves(dataset, sites, trials, seed, buffer_m, params)
        result["random"] = ev.curve_rows(baselines["random_mean"], baselines["random_std"])
        result["oracle"] = ev.curve_rows(baselines["oracle"])
    return result


def load_truth_geometry(store: ProjectStore, truth_path: str | None, truth_layer_id: str | None):
    """Truth tracts as projected geometry, from a GeoJSON file or a stored layer."""
    if (truth_path is None) == (truth_layer_id is None):
        raise InputError("supply exactly one of truth_path or truth_layer_id")
    if truth_path:
        path = Path(truth_path)
        if not path.exists():
            raise NotFoundError(f"truth file {truth_path!r} does not exist")
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("type") == "FeatureCollection":
            truth = geo.union_all(geo.from_geojson_geometry(f["geometry"]) for f in doc["features"])
        else:
            truth = geo.from_geojson_geometry(doc)
        return project_geometry(truth, store.albers_params), truth_path
    geom, crs = store.layer_geometry(truth_layer_id)
    if crs == GEOGRAPHIC_CRS:
        geom = project_geometry(geom, store.albers_params)
    return geom, truth_layer_id


def evaluate_tracts(
    store: ProjectStore,
    project_id: str,
    pred_layer_id: str,
    truth_path: str | None = None,
    truth_layer_id: str | None = None,
) -> dict:
    pred_geom, pred_crs = store.layer_geometry(pred_layer_id)
    if pred_crs == GEOGRAPHIC_CRS:
        pred_geom = project_geometry(pred_geom, store.albers_params)
    truth_geom, truth_ref = load_truth_geometry(store, truth_path, truth_layer_id)
    metrics = ev.area_metrics(
        pred_geom,
        truth_geom,
        pred_layer_id=pred_layer_id,
        truth_layer_id=str(truth_ref),
        pred_crs=PROJECTED_CRS,
        truth_crs=PROJECTED_CRS,
    )
    out = metrics.as_dict()
    out["empty_prediction"] = metrics.empty_prediction
    return out


def run_gridsearch(
    store: ProjectStore,
    project_id: str,
    layer_ids: list[str],
    truth_path: str,
    taus: list[list[float]],
    r1_values: list[float],
    r2_values: list[float],
    arc_segments: int = 16,
) -> dict:
    dataset = _evaluation_dataset(store, project_id, layer_ids)
    scored = [store.scored_layer(lid) for lid in layer_ids]
    truth, _ = load_truth_geometry(store, truth_path, None)
    grid = ev.GridSpec(
        taus=tuple(tuple(axis) for axis in taus),
        r1_values=tuple(r1_values),
        r2_values=tuple(r2_values),
    )
    result = ev.grid_search(dataset, scored, truth, grid, arc_segments)
    return {
        "best_config": list(result.best_config) if result.best_config else None,
        "best_f1": result.best_f1,
        "surface": [
            {
                "taus": list(cell.taus),
                "r1": cell.r1,
                "r2": cell.r2,
                "selected_area": cell.selected_area,
                "error": cell.error,
                **(cell.metrics.as_dict() if cell.metrics else {}),
            }
            for cell in result.surface
        ],
    }
