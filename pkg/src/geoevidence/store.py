"""File-backed persistence for projects, datasets, layers, and models.

Everything is plain files under one data directory, so every artifact is
directly readable by GIS tools and the whole state survives restarts:

    data_dir/
      projects/<project_id>/project.json
      projects/<project_id>/datasets/<dataset_id>/{attributes.csv,
          geometry.geojson, meta.json}
      projects/<project_id>/focus_areas/<name>.geojson
      projects/<project_id>/requests/<request_id>.json   (idempotency)
      layers/<layer_id>/{manifest.json, scores.csv, layer.geojson}
      deposit_models/<slug>.json (+ <slug>.v<N>.json history)
      embeddings/<provider_id>/<model>/<sha256>           (vector cache)
      jobs/<job_id>.json
      gridsearch/<result_id>.json

Writes go to a temp file in the same directory followed by an atomic
rename, so concurrent readers never observe partial artifacts.
"""

import csv
import io
import json
import logging
import re
import threading
from dataclasses import replace
from pathlib import Path

from . import geometry as geo
from .contact import DerivedLayer
from .depositmodel import DepositModel, bundled_models, model_from_dict, save_model
from .errors import NotFoundError, StateError
from .evidence import EvidenceLayer, ScoredLayer
from .geodata import FocusArea, GeoDataset, IngestConfig, load_dataset
from .projection import (
    DEFAULT_PARAMS,
    GEOGRAPHIC_CRS,
    PROJECTED_CRS,
    AlbersParams,
    unproject_geometry,
)

logger = logging.getLogger(__name__)


def _slug(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    if not slug:
        raise NotFoundError(f"cannot derive a file name from {name!r}")
    return slug


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def _write_text(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    tmp.replace(path)


def _read_json(path: Path):
    if not path.exists():
        raise NotFoundError(f"{path} does not exist")
    return json.loads(path.read_text(encoding="utf-8"))


class ProjectStore:
    """All on-disk state for one data directory."""

    def __init__(
        self,
        data_dir: str | Path,
        *,
        seed_models: bool = True,
        albers_params: AlbersParams = DEFAULT_PARAMS,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.albers_params = albers_params
        self._ingest_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        if seed_models:
            self._seed_bundled_models()

    # -- projects ---------------------------------------------------------

    def _project_dir(self, project_id: str) -> Path:
        return self.data_dir / "projects" / project_id

    def create_project(self, project_id: str, config: dict | None = None) -> dict:
        pdir = self._project_dir(project_id)
        meta_path = pdir / "project.json"
        if meta_path.exists():
            return _read_json(meta_path)
        meta = {"project_id": project_id, "config": config or {}, "datasets": [], "layers": []}
        _write_json(meta_path, meta)
        return meta

    def get_project(self, project_id: str) -> dict:
        meta_path = self._project_dir(project_id) / "project.json"
        if not meta_path.exists():
            raise NotFoundError(f"project {project_id!r} does not exist")
        return _read_json(meta_path)

    def list_projects(self) -> list[str]:
        root = self.data_dir / "projects"
        if not root.exists():
            return []
        return sorted(p.name for p in root.iterdir() if (p / "project.json").exists())

    def _append_project_ref(self, project_id: str, kind: str, ref: str) -> None:
        meta = self.get_project(project_id)
        if ref not in meta[kind]:
            meta[kind].append(ref)  # manifest grows append-only
            _write_json(self._project_dir(project_id) / "project.json", meta)

    # -- datasets ---------------------------------------------------------

    def ingest_lock(self, project_id: str, dataset_id: str) -> threading.Lock:
        """Single-flight lock for one dataset ingest."""
        key = f"{project_id}/{dataset_id}"
        with self._locks_guard:
            if key not in self._ingest_locks:
                self._ingest_locks[key] = threading.Lock()
            return self._ingest_locks[key]

    def _dataset_dir(self, project_id: str, dataset_id: str) -> Path:
        return self._project_dir(project_id) / "datasets" / dataset_id

    def save_dataset(self, project_id: str, dataset: GeoDataset) -> None:
        self.get_project(project_id)
        ddir = self._dataset_dir(project_id, dataset.dataset_id)
        ddir.mkdir(parents=True, exist_ok=True)

        headings = [h for h, _ in dataset.records[0].attributes] if dataset.records else []
        rows = []
        features = []
        for rec in dataset.records:
            values = dict(rec.attributes)
            rows.append([rec.record_id, *(values.get(h, "") for h in headings)])
            features.append(
                {
                    "type": "Feature",
                    "properties": {"__record_id": str(rec.record_id)},
                    "geometry": geo.to_geojson_geometry(rec.geometry),
                }
            )
        sio = io.StringIO()
        writer = csv.writer(sio)
        writer.writerow(["__record_id", *headings])
        writer.writerows(rows)
        _write_text(ddir / "attributes.csv", sio.getvalue())
        _write_text(ddir / "geometry.geojson", json.dumps({"type": "FeatureCollection", "features": features}))
        _write_json(
            ddir / "meta.json",
            {
                "dataset_id": dataset.dataset_id,
                "crs": dataset.crs,
                "count": dataset.count,
                "signature_columns": list(dataset.signature_columns),
                "key_columns": list(dataset.key_columns),
                "provenance": dataset.provenance,
                "dissolved": dataset.dissolved,
            },
        )
        self._append_project_ref(project_id, "datasets", dataset.dataset_id)

    def load_dataset(self, project_id: str, dataset_id: str) -> GeoDataset:
        ddir = self._dataset_dir(project_id, dataset_id)
        meta_path = ddir / "meta.json"
        if not meta_path.exists():
            raise NotFoundError(f"dataset {dataset_id!r} not in project {project_id!r}")
        meta = _read_json(meta_path)
        config = IngestConfig(
            signature_columns=tuple(meta["signature_columns"]),
            key_columns=tuple(meta["key_columns"]),
            join_column="__record_id",
            min_desc_length=0,
        )
        dataset = load_dataset(
            ddir / "attributes.csv", ddir / "geometry.geojson", config, dataset_id=dataset_id
        )
        # Restore the original record ids (clipping can leave them sparse)
        # and drop the synthetic join column so a re-save stays clean. The
        # on-disk CRS/provenance is authoritative, not the re-ingest's.
        records = tuple(
            replace(
                rec,
                record_id=int(rec.attribute("__record_id")),
                attributes=tuple((h, d) for h, d in rec.attributes if h != "__record_id"),
            )
            for rec in dataset.records
        )
        return replace(
            dataset,
            records=records,
            crs=meta["crs"],
            provenance=meta["provenance"],
            dissolved=meta.get("dissolved", False),
        )

    def list_datasets(self, project_id: str) -> list[dict]:
        root = self._project_dir(project_id) / "datasets"
        if not root.exists():
            self.get_project(project_id)
            return []
        out = []
        for ddir in sorted(root.iterdir()):
            meta = ddir / "meta.json"
            if meta.exists():
                out.append(_read_json(meta))
        return out

    def has_dataset(self, project_id: str, dataset_id: str) -> bool:
        return (self._dataset_dir(project_id, dataset_id) / "meta.json").exists()

    # -- layers -----------------------------------------------------------

    def _layer_dir(self, layer_id: str) -> Path:
        return self.data_dir / "layers" / layer_id

    def save_evidence_layer(
        self,
        project_id: str,
        scored: ScoredLayer,
        layer: EvidenceLayer,
        dataset: GeoDataset,
        focus_area: str = "",
    ) -> None:
        """Persist manifest + scores sidecar + selected-features GeoJSON."""
        ldir = self._layer_dir(layer.layer_id)
        ldir.mkdir(parents=True, exist_ok=True)

        lines = ["record_id,score"]
        lines += [f"{rid},{score!r}" for rid, score in scored.scores]
        _write_text(ldir / "scores.csv", "\n".join(lines) + "\n")

        score_of = dict(scored.scores)
        record_map = dataset.record_map()
        features = []
        for rank, rid in enumerate(layer.selected, start=1):
            rec = record_map[rid]
            props = {h: d for h, d in rec.attributes}
            props.update(
                {
                    "__record_id": str(rid),
                    "score": score_of[rid],
                    "rank": rank,
                    "layer_id": layer.layer_id,
                }
            )
            features.append(
                {
                    "type": "Feature",
                    "properties": props,
                    "geometry": geo.to_geojson_geometry(rec.geometry),
                }
            )
        _write_text(
            ldir / "layer.geojson", json.dumps({"type": "FeatureCollection", "features": features})
        )
        _write_json(
            ldir / "manifest.json",
            {
                "layer_id": layer.layer_id,
                "kind": "evidence",
                "query": scored.query,
                "provider_id": scored.provider_id,
                "tau": layer.tau,
                "excluded_count": scored.excluded_count,
                "created_at": scored.created_at,
                "dataset_id": layer.dataset_id,
                "focus_area": focus_area,
                "project_id": project_id,
                "source_scored_layer_id": layer.source_scored_layer_id,
                "selected": list(layer.selected),
                "crs": layer.crs,
            },
        )
        self._append_project_ref(project_id, "layers", layer.layer_id)

    def save_derived_layer(self, project_id: str, layer: DerivedLayer) -> None:
        ldir = self._layer_dir(layer.layer_id)
        ldir.mkdir(parents=True, exist_ok=True)
        feature = {
            "type": "Feature",
            "properties": {"layer_id": layer.layer_id, "kind": layer.kind},
            "geometry": geo.to_geojson_geometry(layer.geometry),
        }
        _write_text(
            ldir / "layer.geojson", json.dumps({"type": "FeatureCollection", "features": [feature]})
        )
        _write_json(
            ldir / "manifest.json",
            {
                "layer_id": layer.layer_id,
                "kind": layer.kind,
                "input_layer_ids": list(layer.input_layer_ids),
                "r1": layer.params.r1,
                "r2": layer.params.r2,
                "arc_segments": layer.params.arc_segments,
                "project_id": project_id,
                "crs": layer.crs,
            },
        )
        self._append_project_ref(project_id, "layers", layer.layer_id)

    def has_layer(self, layer_id: str) -> bool:
        return (self._layer_dir(layer_id) / "manifest.json").exists()

    def layer_manifest(self, layer_id: str) -> dict:
        path = self._layer_dir(layer_id) / "manifest.json"
        if not path.exists():
            raise NotFoundError(f"layer {layer_id!r} does not exist")
        return _read_json(path)

    def layer_geojson(self, layer_id: str) -> dict:
        path = self._layer_dir(layer_id) / "layer.geojson"
        if not path.exists():
            raise NotFoundError(f"layer {layer_id!r} does not exist")
        return json.loads(path.read_text(encoding="utf-8"))

    def layer_scores(self, layer_id: str) -> list[tuple[int, float]]:
        path = self._layer_dir(layer_id) / "scores.csv"
        if not path.exists():
            raise NotFoundError(f"layer {layer_id!r} has no scores sidecar")
        out = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                out.append((int(row["record_id"]), float(row["score"])))
        return out

    def scored_layer(self, layer_id: str) -> ScoredLayer:
        manifest = self.layer_manifest(layer_id)
        if manifest.get("kind") != "evidence":
            raise StateError(f"layer {layer_id!r} is {manifest.get('kind')}, not an evidence layer")
        return ScoredLayer(
            layer_id=manifest["source_scored_layer_id"],
            dataset_id=manifest["dataset_id"],
            query=manifest["query"],
            provider_id=manifest["provider_id"],
            scores=tuple(self.layer_scores(layer_id)),
            excluded_count=manifest["excluded_count"],
            created_at=manifest["created_at"],
        )

    def layer_geometry(self, layer_id: str):
        """Union of the layer's stored feature geometries, plus its CRS."""
        manifest = self.layer_manifest(layer_id)
        doc = self.layer_geojson(layer_id)
        geoms = [geo.from_geojson_geometry(f["geometry"]) for f in doc["features"]]
        return geo.union_all(geoms), manifest.get("crs", GEOGRAPHIC_CRS)

    def export_layer_geojson(
        self, layer_id: str, score_min: float | None = None, score_max: float | None = None
    ) -> dict:
        """Score-filtered FeatureCollection, coordinates always WGS84."""
        manifest = self.layer_manifest(layer_id)
        doc = self.layer_geojson(layer_id)
        features = []
        for feature in doc["features"]:
            score = (feature.get("properties") or {}).get("score")
            if score is not None:
                if score_min is not None and score < score_min:
                    continue
                if score_max is not None and score > score_max:
                    continue
            if manifest.get("crs") == PROJECTED_CRS:
                g = geo.from_geojson_geometry(feature["geometry"])
                feature = dict(feature)
                feature["geometry"] = geo.to_geojson_geometry(
                    unproject_geometry(g, self.albers_params)
                )
            features.append(feature)
        return {"type": "FeatureCollection", "features": features}

    # -- focus areas ------------------------------------------------------

    def save_focus_area(self, project_id: str, focus: FocusArea) -> None:
        self.get_project(project_id)
        focus.shape()  # validate before persisting
        path = self._project_dir(project_id) / "focus_areas" / f"{_slug(focus.name)}.geojson"
        _write_json(
            path,
            {
                "type": "Feature",
                "properties": {"name": focus.name, "crs": focus.crs},
                "geometry": {"type": "Polygon", "coordinates": [[list(p) for p in focus.polygon]]},
            },
        )

    def load_focus_area(self, project_id: str, name: str) -> FocusArea:
        path = self._project_dir(project_id) / "focus_areas" / f"{_slug(name)}.geojson"
        if not path.exists():
            raise NotFoundError(f"focus area {name!r} not in project {project_id!r}")
        doc = _read_json(path)
        ring = tuple((float(x), float(y)) for x, y in doc["geometry"]["coordinates"][0])
        return FocusArea(
            name=doc["properties"]["name"],
            polygon=ring,
            crs=doc["properties"].get("crs", GEOGRAPHIC_CRS),
        )

    def list_focus_areas(self, project_id: str) -> list[dict]:
        root = self._project_dir(project_id) / "focus_areas"
        if not root.exists():
            self.get_project(project_id)
            return []
        return [_read_json(p)["properties"] | {"file": p.name} for p in sorted(root.iterdir())]

    # -- deposit models ---------------------------------------------------

    def _models_dir(self) -> Path:
        return self.data_dir / "deposit_models"

    def _seed_bundled_models(self) -> None:
        mdir = self._models_dir()
        for model in bundled_models():
            path = mdir / f"{_slug(model.deposit_type)}.json"
            if not path.exists():
                save_model(model, path)

    def get_deposit_model(self, deposit_type: str) -> DepositModel:
        path = self._models_dir() / f"{_slug(deposit_type)}.json"
        if not path.exists():
            raise NotFoundError(f"deposit model {deposit_type!r} does not exist")
        return model_from_dict(_read_json(path), source=str(path))

    def put_deposit_model(self, model: DepositModel) -> DepositModel:
        """Store an edited model, preserving the previous version as a sidecar."""
        path = self._models_dir() / f"{_slug(model.deposit_type)}.json"
        if path.exists():
            version = 1
            while (sidecar := path.with_name(f"{path.stem}.v{version}.json")).exists():
                version += 1
            sidecar.write_bytes(path.read_bytes())
            model = replace(model, edited=True)
        save_model(model, path)
        return model

    def list_deposit_models(self) -> list[str]:
        mdir = self._models_dir()
        if not mdir.exists():
            return []
        out = []
        for path in sorted(mdir.glob("*.json")):
            if re.match(r".*\.v\d+$", path.stem):
                continue
            out.append(_read_json(path)["deposit_type"])
        return out

    # -- idempotency + jobs + gridsearch artifacts --------------------------

    def _request_path(self, project_id: str | None, request_id: str) -> Path:
        # Global-scope mutations (e.g. deposit models) use project_id=None.
        base = self._project_dir(project_id) if project_id else self.data_dir
        return base / "requests" / f"{_slug(request_id)}.json"

    def remembered_response(self, project_id: str | None, request_id: str) -> dict | None:
        path = self._request_path(project_id, request_id)
        return _read_json(path) if path.exists() else None

    def remember_response(self, project_id: str | None, request_id: str, response: dict) -> None:
        _write_json(self._request_path(project_id, request_id), response)

    def save_job(self, job: dict) -> None:
        _write_json(self.data_dir / "jobs" / f"{job['job_id']}.json", job)

    def load_job(self, job_id: str) -> dict:
        path = self.data_dir / "jobs" / f"{job_id}.json"
        if not path.exists():
            raise NotFoundError(f"job {job_id!r} does not exist")
        return _read_json(path)

    def save_gridsearch(self, result_id: str, payload: dict) -> None:
        _write_json(self.data_dir / "gridsearch" / f"{result_id}.json", payload)

    def load_gridsearch(self, result_id: str) -> dict:
        path = self.data_dir / "gridsearch" / f"{result_id}.json"
        if not path.exists():
            raise NotFoundError(f"grid search result {result_id!r} does not exist")
        return _read_json(path)

    def embedding_cache_dir(self) -> Path:
        return self.data_dir / "embeddings"
