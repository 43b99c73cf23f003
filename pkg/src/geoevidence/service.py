"""HTTP API over the evidence-layer pipeline.

All state lives in a file-backed :class:`~geoevidence.store.ProjectStore`,
so any layer is retrievable by id after a restart and every export is a
plain GIS-readable file. Mutation endpoints accept a client-supplied
``request_id`` and replay the stored response on repeats. Long operations
(dataset ingest, grid search) run as background jobs polled via
``GET /jobs/{id}``.
"""

import hashlib
import logging
import os
import tempfile
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests as _requests
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import evidence, ops
from .depositmodel import model_from_dict, validate_model
from .embed import DEFAULT_REFERENCE_DIMS, EmbeddingCache
from .errors import GeoEvidenceError, IngestError, InputError, StateError
from .geodata import FocusArea, IngestConfig, dissolve, load_dataset
from .projection import AlbersParams
from .store import ProjectStore

logger = logging.getLogger(__name__)

ENV_PREFIX = "GEOEVIDENCE_"

CONFIG_KEYS = (
    "data_dir",
    "default_provider",
    "embed_batch_size",
    "crs_lat_1",
    "crs_lat_2",
    "crs_lat_0",
    "crs_lon_0",
    "default_tau",
    "default_r1",
    "default_r2",
    "bind_address",
    "port",
    "reference_dims",
    "remote_endpoint",
    "remote_model",
    "remote_dims",
)


@dataclass
class ServiceConfig:
    data_dir: str = "geoevidence-data"
    default_provider: str = "reference"
    embed_batch_size: int = 64
    crs_lat_1: float = 29.5
    crs_lat_2: float = 45.5
    crs_lat_0: float = 40.0
    crs_lon_0: float = -96.0
    default_tau: float = 0.2
    default_r1: float = 500.0
    default_r2: float = 500.0
    bind_address: str = "127.0.0.1"
    port: int = 8319
    reference_dims: int = DEFAULT_REFERENCE_DIMS
    remote_endpoint: str = ""
    remote_model: str = ""
    remote_dims: int = 0


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """Config from a key=value file, overridden by GEOEVIDENCE_* env vars."""
    values: dict[str, str] = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    env = os.environ if env is None else env
    for key in CONFIG_KEYS:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = env[env_key]

    config = ServiceConfig()
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise InputError(f"unknown config key {key!r}")
        caster = type(getattr(config, key))
        try:
            setattr(config, key, caster(value))
        except ValueError as exc:
            raise InputError(f"config key {key!r}: {exc}") from exc
    return config


def _provider_for(config: ServiceConfig, provider_id: str | None):
    return ops.resolve_provider(
        provider_id,
        default_provider=config.default_provider,
        reference_dims=config.reference_dims,
        remote_endpoint=config.remote_endpoint,
        remote_model=config.remote_model,
        remote_dims=config.remote_dims,
    )


# -- request bodies ----------------------------------------------------------


class ProjectBody(BaseModel):
    project_id: str | None = None


class IngestBody(BaseModel):
    dataset_id: str
    attributes_path: str | None = None
    geometry_path: str | None = None
    attributes_url: str | None = None
    geometry_url: str | None = None
    attributes_sha256: str | None = None
    geometry_sha256: str | None = None
    signature_columns: list[str] | None = None
    key_columns: list[str] | None = None
    join_column: str | None = None
    min_desc_length: int | None = None
    dissolve: bool = False
    request_id: str | None = None


class QueryBody(BaseModel):
    dataset_id: str
    query: str | None = None
    deposit_type: str | None = None
    characteristic: str | None = None
    tau: float | None = None
    percentile: float | None = None
    provider_id: str | None = None
    focus_area: str | None = None
    bins: int = 20
    request_id: str | None = None


class ContactBody(BaseModel):
    layer_ids: list[str]
    r1: float | None = None
    r2: float | None = None
    arc_segments: int = 16
    request_id: str | None = None


class SitesEvalBody(BaseModel):
    layer_ids: list[str]
    sites_path: str
    buffer_m: float = 0.0
    trials: int = 10
    seed: int = 0
    include_baselines: bool = True


class TractsEvalBody(BaseModel):
    pred_layer_id: str
    truth_path: str | None = None
    truth_layer_id: str | None = None


class GridSearchBody(BaseModel):
    layer_ids: list[str]
    truth_path: str
    taus: list[list[float]]
    r1_values: list[float]
    r2_values: list[float]
    arc_segments: int = 16
    request_id: str | None = None


class FocusAreaBody(BaseModel):
    name: str
    polygon: list[list[float]]
    request_id: str | None = None


class DepositModelBody(BaseModel):
    characteristics: dict[str, str]
    source_docs: list[str] = []
    request_id: str | None = None


_STATUS_BY_CODE = {
    "input": 400,
    "shape": 400,
    "undefined_similarity": 400,
    "config": 400,
    "parse": 400,
    "ingest": 400,
    "geometry": 400,
    "completion_parse": 422,
    "state": 409,
    "not_found": 404,
    "provider": 502,
    "cache": 500,
}


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fetch_url(url: str, dest: Path, expected_sha256: str | None) -> Path:
    try:
        resp = _requests.get(url, timeout=120)
    except _requests.RequestException as exc:
        raise IngestError(f"fetching {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise IngestError(f"fetching {url} returned HTTP {resp.status_code}")
    dest.write_bytes(resp.content)
    if expected_sha256:
        actual = _sha256_file(dest)
        if actual != expected_sha256.lower():
            raise IngestError(
                f"checksum mismatch for {url}: expected {expected_sha256}, got {actual}"
            )
    return dest


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    params = AlbersParams(
        lat_1=config.crs_lat_1,
        lat_2=config.crs_lat_2,
        lat_0=config.crs_lat_0,
        lon_0=config.crs_lon_0,
    )
    store = ProjectStore(config.data_dir, albers_params=params)
    cache = EmbeddingCache(store.embedding_cache_dir())
    executor = ThreadPoolExecutor(max_workers=2)
    project_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    app = FastAPI(title="geoevidence", version="0.1.0")
    app.state.store = store
    app.state.config = config

    def project_lock(project_id: str) -> threading.Lock:
        with locks_guard:
            if project_id not in project_locks:
                project_locks[project_id] = threading.Lock()
            return project_locks[project_id]

    @app.exception_handler(GeoEvidenceError)
    async def _handle_domain_error(_request: Request, exc: GeoEvidenceError):
        status = _STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse(
            status_code=status, content={"error": {"code": exc.code, "message": str(exc)}}
        )

    # -- jobs -----------------------------------------------------------------

    def start_job(kind: str, runner) -> dict:
        job = {
            "job_id": uuid.uuid4().hex[:12],
            "kind": kind,
            "status": "queued",
            "progress": 0.0,
            "result_ref": None,
            "error": None,
        }
        store.save_job(job)

        def run():
            job["status"] = "running"
            store.save_job(job)
            try:
                job["result_ref"] = runner(job)
                job["status"] = "done"
                job["progress"] = 1.0
            except Exception as exc:
                logger.exception("job %s failed", job["job_id"])
                job["status"] = "failed"
                job["error"] = str(exc)
            store.save_job(job)

        executor.submit(run)
        return job

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return store.load_job(job_id)

    # -- projects ---------------------------------------------------------------

    @app.post("/projects")
    def create_project(body: ProjectBody):
        project_id = body.project_id or uuid.uuid4().hex[:8]
        return store.create_project(project_id)

    @app.get("/projects/{project_id}/datasets")
    def list_datasets(project_id: str):
        return store.list_datasets(project_id)

    @app.post("/projects/{project_id}/datasets")
    def ingest_dataset(project_id: str, body: IngestBody):
        store.get_project(project_id)
        if body.request_id:
            remembered = store.remembered_response(project_id, body.request_id)
            if remembered is not None:
                return remembered

        def run(job):
            with store.ingest_lock(project_id, body.dataset_id):
                if store.has_dataset(project_id, body.dataset_id):
                    raise StateError(
                        f"dataset {body.dataset_id!r} already exists in project {project_id!r}"
                    )
                attrs_path = body.attributes_path
                geom_path = body.geometry_path
                with tempfile.TemporaryDirectory() as tmp:
                    if body.attributes_url:
                        attrs_path = _fetch_url(
                            body.attributes_url,
                            Path(tmp) / "attributes.csv",
                            body.attributes_sha256,
                        )
                    if body.geometry_url:
                        geom_path = _fetch_url(
                            body.geometry_url,
                            Path(tmp) / "geometry.geojson",
                            body.geometry_sha256,
                        )
                    if geom_path is None:
                        raise InputError("ingest needs geometry_path or geometry_url")
                    ingest_config = IngestConfig(
                        signature_columns=tuple(body.signature_columns)
                        if body.signature_columns
                        else IngestConfig.signature_columns,
                        key_columns=tuple(body.key_columns)
                        if body.key_columns
                        else IngestConfig.key_columns,
                        join_column=body.join_column or IngestConfig.join_column,
                        min_desc_length=body.min_desc_length
                        if body.min_desc_length is not None
                        else IngestConfig.min_desc_length,
                    )
                    job["progress"] = 0.3
                    store.save_job(job)
                    dataset = load_dataset(
                        attrs_path, geom_path, ingest_config, dataset_id=body.dataset_id
                    )
                if body.dissolve:
                    dataset = dissolve(dataset)
                job["progress"] = 0.8
                store.save_job(job)
                with project_lock(project_id):
                    store.save_dataset(project_id, dataset)
            return body.dataset_id

        job = start_job("ingest", run)
        response = {"job_id": job["job_id"]}
        if body.request_id:
            store.remember_response(project_id, body.request_id, response)
        return response

    # -- queries ------------------------------------------------------------------

    @app.post("/projects/{project_id}/queries")
    def run_query(project_id: str, body: QueryBody):
        store.get_project(project_id)
        if body.request_id:
            remembered = store.remembered_response(project_id, body.request_id)
            if remembered is not None:
                return remembered
        provider = _provider_for(config, body.provider_id)
        with project_lock(project_id):
            payload, _layer = ops.run_query(
                store,
                project_id,
                dataset_id=body.dataset_id,
                provider=provider,
                query=body.query,
                deposit_type=body.deposit_type,
                characteristic=body.characteristic,
                tau=body.tau,
                percentile=body.percentile,
                default_tau=config.default_tau,
                focus_area=body.focus_area,
                bins=body.bins,
                cache=cache,
                batch_size=config.embed_batch_size,
            )
        if body.request_id:
            store.remember_response(project_id, body.request_id, payload)
        return payload

    # -- layers ---------------------------------------------------------------------

    @app.get("/layers/{layer_id}")
    def get_layer(layer_id: str):
        return store.layer_manifest(layer_id)

    @app.get("/layers/{layer_id}/geojson")
    def get_layer_geojson(layer_id: str):
        return store.layer_geojson(layer_id)

    @app.get("/layers/{layer_id}/histogram")
    def get_layer_histogram(layer_id: str, bins: int = 20):
        manifest = store.layer_manifest(layer_id)
        scored = store.scored_layer(layer_id)
        histogram = evidence.layer_histogram(scored, bins)
        return {
            "layer_id": layer_id,
            "query": manifest.get("query"),
            "histogram": [{"low": lo, "high": hi, "count": n} for lo, hi, n in histogram],
        }

    @app.get("/layers/{layer_id}/export")
    def export_layer(
        layer_id: str,
        format: str = Query("geojson"),
        score_min: float | None = None,
        score_max: float | None = None,
    ):
        if format != "geojson":
            raise InputError(f"unsupported export format {format!r}")
        return store.export_layer_geojson(layer_id, score_min, score_max)

    # -- contact ---------------------------------------------------------------------

    @app.post("/projects/{project_id}/contact")
    def derive_contact(project_id: str, body: ContactBody):
        store.get_project(project_id)
        if body.request_id:
            remembered = store.remembered_response(project_id, body.request_id)
            if remembered is not None:
                return remembered
        with project_lock(project_id):
            response = ops.derive_contact(
                store,
                project_id,
                body.layer_ids,
                r1=body.r1 if body.r1 is not None else config.default_r1,
                r2=body.r2 if body.r2 is not None else config.default_r2,
                arc_segments=body.arc_segments,
            )
        if body.request_id:
            store.remember_response(project_id, body.request_id, response)
        return response

    # -- evaluation -------------------------------------------------------------------

    @app.post("/projects/{project_id}/evaluate/sites")
    def evaluate_sites(project_id: str, body: SitesEvalBody):
        store.get_project(project_id)
        return ops.evaluate_sites(
            store,
            project_id,
            body.layer_ids,
            body.sites_path,
            buffer_m=body.buffer_m,
            trials=body.trials,
            seed=body.seed,
            include_baselines=body.include_baselines,
        )

    @app.post("/projects/{project_id}/evaluate/tracts")
    def evaluate_tracts(project_id: str, body: TractsEvalBody):
        store.get_project(project_id)
        return ops.evaluate_tracts(
            store, project_id, body.pred_layer_id, body.truth_path, body.truth_layer_id
        )

    @app.post("/projects/{project_id}/gridsearch")
    def run_gridsearch(project_id: str, body: GridSearchBody):
        store.get_project(project_id)
        if body.request_id:
            remembered = store.remembered_response(project_id, body.request_id)
            if remembered is not None:
                return remembered

        def run(job):
            payload = ops.run_gridsearch(
                store,
                project_id,
                body.layer_ids,
                body.truth_path,
                body.taus,
                body.r1_values,
                body.r2_values,
                body.arc_segments,
            )
            result_id = uuid.uuid4().hex[:12]
            store.save_gridsearch(result_id, payload)
            return f"gridsearch/{result_id}"

        job = start_job("gridsearch", run)
        response = {"job_id": job["job_id"]}
        if body.request_id:
            store.remember_response(project_id, body.request_id, response)
        return response

    @app.get("/gridsearch/{result_id}")
    def get_gridsearch(result_id: str):
        return store.load_gridsearch(result_id)

    # -- deposit models ------------------------------------------------------------------

    @app.get("/deposit-models")
    def list_models():
        return {"deposit_types": store.list_deposit_models()}

    @app.get("/deposit-models/{deposit_type}")
    def get_model(deposit_type: str):
        return store.get_deposit_model(deposit_type).as_dict()

    @app.put("/deposit-models/{deposit_type}")
    def put_model(deposit_type: str, body: DepositModelBody):
        if body.request_id:
            remembered = store.remembered_response(None, body.request_id)
            if remembered is not None:
                return remembered
        model = model_from_dict(
            {
                "deposit_type": deposit_type,
                "characteristics": body.characteristics,
                "source_docs": body.source_docs,
            },
            source="PUT /deposit-models",
        )
        stored = store.put_deposit_model(model)
        diags = validate_model(stored)
        out = stored.as_dict()
        out["diagnostics"] = [
            {"severity": d.severity, "heading": d.heading, "message": d.message} for d in diags
        ]
        if body.request_id:
            store.remember_response(None, body.request_id, out)
        return out

    # -- focus areas -----------------------------------------------------------------------

    @app.get("/projects/{project_id}/focus-areas")
    def list_focus_areas(project_id: str):
        return store.list_focus_areas(project_id)

    @app.post("/projects/{project_id}/focus-areas")
    def post_focus_area(project_id: str, body: FocusAreaBody):
        if body.request_id:
            remembered = store.remembered_response(project_id, body.request_id)
            if remembered is not None:
                return remembered
        if len(body.polygon) < 3:
            raise InputError("focus area needs at least 3 vertices")
        focus = FocusArea(name=body.name, polygon=tuple((p[0], p[1]) for p in body.polygon))
        closed = focus.shape()  # validates closure + self-intersection
        focus = FocusArea(name=focus.name, polygon=tuple((x, y) for x, y in closed.exterior.coords))
        with project_lock(project_id):
            store.save_focus_area(project_id, focus)
        response = {"name": focus.name, "vertex_count": len(focus.polygon)}
        if body.request_id:
            store.remember_response(project_id, body.request_id, response)
        return response

    return app


def main() -> None:
    """Entry point used by `geoevidence serve`."""
    import uvicorn

    config = load_config(os.environ.get(ENV_PREFIX + "CONFIG"))
    uvicorn.run(create_app(config), host=config.bind_address, port=config.port)


if __name__ == "__main__":
    main()
