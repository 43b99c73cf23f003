"""Batch command-line surface mirroring the HTTP service.

Every service capability except `serve` itself is reachable here, so
whole studies can be scripted and reproduced: ingest + dissolve + project
+ clip, queries, contact derivation, site/tract evaluation, grid search,
deposit-model management, and GeoJSON export. `--json` switches stdout to
machine-readable JSON; identical inputs (and `--seed`) produce
byte-identical output.

Exit codes: 0 success, 2 usage, 3 input/config/geometry, 4 parse/ingest,
5 provider, 6 state, 7 not found, 1 anything else.
"""

import argparse
import json
import sys

from . import ops
from .depositmodel import (
    LLMProvider,
    load_model_file,
    summarize_document,
    validate_model,
)
from .embed import EmbeddingCache
from .errors import GeoEvidenceError
from .geodata import FocusArea, IngestConfig
from .projection import AlbersParams
from .service import ServiceConfig, create_app, load_config
from .store import ProjectStore

EXIT_CODES = {
    "input": 3,
    "shape": 3,
    "undefined_similarity": 3,
    "config": 3,
    "geometry": 3,
    "parse": 4,
    "ingest": 4,
    "provider": 5,
    "state": 6,
    "not_found": 7,
}


def _emit(args, payload: dict, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human if human is not None else json.dumps(payload, indent=2, sort_keys=True))


def _store(args) -> ProjectStore:
    config = args.service_config
    params = AlbersParams(
        lat_1=config.crs_lat_1,
        lat_2=config.crs_lat_2,
        lat_0=config.crs_lat_0,
        lon_0=config.crs_lon_0,
    )
    store = ProjectStore(args.data_dir, albers_params=params)
    store.create_project(args.project)
    return store


def _service_config(args) -> ServiceConfig:
    # Parsed once in main(); explicit flags already merged over it.
    return args.service_config


def _provider(args, config: ServiceConfig):
    return ops.resolve_provider(
        getattr(args, "provider", None),
        default_provider=config.default_provider,
        reference_dims=config.reference_dims,
        remote_endpoint=config.remote_endpoint,
        remote_model=config.remote_model,
        remote_dims=config.remote_dims,
    )


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_ingest(args) -> None:
    store = _store(args)
    config = IngestConfig(
        signature_columns=tuple(args.signature_columns.split(","))
        if args.signature_columns
        else IngestConfig.signature_columns,
        key_columns=tuple(args.key_columns.split(","))
        if args.key_columns
        else IngestConfig.key_columns,
        join_column=args.join_column or IngestConfig.join_column,
        min_desc_length=args.min_desc_length,
    )
    result = ops.ingest(
        store,
        args.project,
        args.dataset_id,
        args.attributes,
        args.geometry,
        config,
        dissolve_after=args.dissolve,
    )
    _emit(args, result, f"ingested {result['dataset_id']}: {result['count']} records")


def cmd_datasets(args) -> None:
    store = _store(args)
    metas = store.list_datasets(args.project)
    human = "\n".join(f"{m['dataset_id']}\t{m['count']} records\t{m['crs']}" for m in metas)
    _emit(args, {"datasets": metas}, human or "(no datasets)")


def _transform(args, kind: str) -> None:
    store = _store(args)
    result = ops.transform_dataset(
        store,
        args.project,
        args.dataset,
        args.output,
        kind=kind,
        focus_name=getattr(args, "focus", None),
    )
    _emit(args, result, f"{kind} -> {result['dataset_id']}: {result['count']} records")


def cmd_dissolve(args) -> None:
    _transform(args, "dissolve")


def cmd_project(args) -> None:
    _transform(args, "project")


def cmd_clip(args) -> None:
    _transform(args, "clip")


def cmd_query(args) -> None:
    store = _store(args)
    config = _service_config(args)
    provider = _provider(args, config)
    cache = EmbeddingCache(store.embedding_cache_dir())
    payload, _layer = ops.run_query(
        store,
        args.project,
        dataset_id=args.dataset,
        provider=provider,
        query=args.text,
        deposit_type=args.deposit_type,
        characteristic=args.characteristic,
        tau=args.tau,
        percentile=args.percentile,
        default_tau=config.default_tau,
        focus_area=args.focus,
        bins=args.bins,
        cache=cache,
        batch_size=config.embed_batch_size,
    )
    _emit(
        args,
        payload,
        f"layer {payload['layer_id']}: {payload['selected_count']}/{payload['eligible_count']}"
        f" records selected (tau={payload['tau']}, excluded={payload['excluded_count']})",
    )


def cmd_show_layer(args) -> None:
    store = _store(args)
    _emit(args, store.layer_manifest(args.layer))


def cmd_histogram(args) -> None:
    store = _store(args)
    from .evidence import layer_histogram

    scored = store.scored_layer(args.layer)
    histogram = layer_histogram(scored, args.bins)
    payload = {
        "layer_id": args.layer,
        "histogram": [{"low": lo, "high": hi, "count": n} for lo, hi, n in histogram],
    }
    human = "\n".join(f"[{lo:.4f}, {hi:.4f}]  {n}" for lo, hi, n in histogram)
    _emit(args, payload, human)


def cmd_contact(args) -> None:
    store = _store(args)
    config = _service_config(args)
    result = ops.derive_contact(
        store,
        args.project,
        args.layers.split(","),
        r1=args.r1 if args.r1 is not None else config.default_r1,
        r2=args.r2 if args.r2 is not None else config.default_r2,
        arc_segments=args.arc_segments,
    )
    _emit(
        args,
        result,
        f"contact layer {result['layer_id']}: area {result['area_m2']:.1f} m^2",
    )


def cmd_eval_sites(args) -> None:
    store = _store(args)
    result = ops.evaluate_sites(
        store,
        args.project,
        args.layers.split(","),
        args.sites,
        buffer_m=args.buffer_m,
        trials=args.trials,
        seed=args.seed,
        include_baselines=not args.no_baselines,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, sort_keys=True)
    summary = ", ".join(
        f"{lid}: recall@p80={rows[79]['recall']:.3f}" for lid, rows in result["per_layer"].items()
    )
    _emit(args, result, f"evaluated {result['site_count']} sites ({summary})")


def cmd_eval_tracts(args) -> None:
    store = _store(args)
    result = ops.evaluate_tracts(
        store, args.project, args.pred, truth_path=args.truth, truth_layer_id=args.truth_layer
    )
    human = (
        f"precision={result['precision']:.4f} recall={result['recall']:.4f} "
        f"f1={result['f1']:.4f} iou={result['iou']:.4f}"
    )
    _emit(args, result, human)


def cmd_gridsearch(args) -> None:
    store = _store(args)
    taus = [_floats(axis) for axis in args.taus.split(";")]
    result = ops.run_gridsearch(
        store,
        args.project,
        args.layers.split(","),
        args.truth,
        taus,
        _floats(args.r1),
        _floats(args.r2),
        arc_segments=args.arc_segments,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, sort_keys=True)
    _emit(
        args,
        result if args.json else {"best_config": result["best_config"], "best_f1": result["best_f1"]},
        f"best config {result['best_config']} with F1 {result['best_f1']:.4f} "
        f"({len(result['surface'])} cells)",
    )


def cmd_export(args) -> None:
    store = _store(args)
    doc = store.export_layer_geojson(args.layer, args.score_min, args.score_max)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        _emit(
            args,
            {"layer_id": args.layer, "features": len(doc["features"]), "out": args.out},
            f"wrote {len(doc['features'])} features to {args.out}",
        )
    else:
        print(json.dumps(doc))


def cmd_focus(args) -> None:
    store = _store(args)
    if args.focus_command == "add":
        ring = tuple(tuple(float(v) for v in pt.split(",")) for pt in args.ring.split())
        focus = FocusArea(name=args.name, polygon=ring)
        closed = focus.shape()
        focus = FocusArea(name=args.name, polygon=tuple((x, y) for x, y in closed.exterior.coords))
        store.save_focus_area(args.project, focus)
        _emit(args, {"name": args.name, "vertex_count": len(focus.polygon)}, f"saved focus area {args.name!r}")
    else:
        areas = store.list_focus_areas(args.project)
        _emit(args, {"focus_areas": areas}, "\n".join(a["name"] for a in areas) or "(none)")


def cmd_models(args) -> None:
    store = _store(args)
    if args.models_command == "list":
        types = store.list_deposit_models()
        _emit(args, {"deposit_types": types}, "\n".join(types) or "(none)")
    elif args.models_command == "show":
        model = store.get_deposit_model(args.deposit_type)
        human = "\n".join(f"{h}: {d}" for h, d in model.characteristics)
        _emit(args, model.as_dict(), human)
    elif args.models_command == "put":
        model = load_model_file(args.path)
        stored = store.put_deposit_model(model)
        _emit(args, stored.as_dict(), f"stored model {stored.deposit_type!r}")
    elif args.models_command == "validate":
        model = load_model_file(args.path)
        diags = validate_model(model)
        payload = {
            "deposit_type": model.deposit_type,
            "diagnostics": [
                {"severity": d.severity, "heading": d.heading, "message": d.message} for d in diags
            ],
        }
        human = "\n".join(f"{d.severity}: {d.heading}: {d.message}" for d in diags) or "ok"
        _emit(args, payload, human)
    elif args.models_command == "summarize":
        with open(args.document, encoding="utf-8") as fh:
            text = fh.read()
        template = None
        if args.template:
            with open(args.template, encoding="utf-8") as fh:
                template = fh.read()
        llm = LLMProvider(endpoint=args.endpoint)
        model = summarize_document(
            text, args.deposit_type, llm, template, source_doc=args.document
        )
        if args.save:
            stored = store.put_deposit_model(model)
            _emit(args, stored.as_dict(), f"summarized and stored {stored.deposit_type!r}")
        else:
            _emit(args, model.as_dict(), "\n".join(f"{h}: {d}" for h, d in model.characteristics))


def cmd_serve(args) -> None:
    import uvicorn

    config = _service_config(args)
    if args.host:
        config.bind_address = args.host
    if args.port:
        config.port = args.port
    uvicorn.run(create_app(config), host=config.bind_address, port=config.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoevidence",
        description="Natural-language evidence layers over geologic map data",
    )
    parser.add_argument(
        "--data-dir", default=None, help="artifact directory (default: config data_dir)"
    )
    parser.add_argument("--project", default="default", help="project id (created on demand)")
    parser.add_argument("--json", action="store_true", help="machine-readable stdout")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized operations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest CSV attributes + GeoJSON geometries")
    p.add_argument("--dataset-id", required=True)
    p.add_argument("--attributes", default=None, help="CSV attribute table (omit to read properties)")
    p.add_argument("--geometry", required=True, help="GeoJSON FeatureCollection")
    p.add_argument("--signature-columns", default=None, help="comma-separated")
    p.add_argument("--key-columns", default=None, help="comma-separated")
    p.add_argument("--join-column", default=None)
    p.add_argument("--min-desc-length", type=int, default=IngestConfig.min_desc_length)
    p.add_argument("--dissolve", action="store_true", help="dissolve after ingest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("datasets", help="list datasets in the project")
    p.set_defaults(func=cmd_datasets)

    p = sub.add_parser("dissolve", help="merge records sharing key columns")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_dissolve)

    p = sub.add_parser("project", help="project a dataset to planar meters")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("clip", help="clip a dataset to a saved focus area")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--focus", required=True, help="focus area name")
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("query", help="score polygons against a query and threshold")
    p.add_argument("--dataset", required=True)
    p.add_argument("--text", default=None, help="custom query text")
    p.add_argument("--deposit-type", default=None)
    p.add_argument("--characteristic", default=None)
    p.add_argument("--tau", type=float, default=None, help="fraction of records kept, (0, 1]")
    p.add_argument("--percentile", type=float, default=None, help="percentile cutoff, tau = 1 - p/100")
    p.add_argument("--provider", default=None)
    p.add_argument("--focus", default=None, help="clip to this saved focus area first")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("show-layer", help="print a layer manifest")
    p.add_argument("--layer", required=True)
    p.set_defaults(func=cmd_show_layer)

    p = sub.add_parser("histogram", help="score distribution of a layer")
    p.add_argument("--layer", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("contact", help="derive a contact layer from evidence layers")
    p.add_argument("--layers", required=True, help="comma-separated layer ids, fold order")
    p.add_argument("--r1", type=float, default=None, help="pre-intersection buffer, meters")
    p.add_argument("--r2", type=float, default=None, help="post-intersection buffer, meters")
    p.add_argument("--arc-segments", type=int, default=16)
    p.set_defaults(func=cmd_contact)

    p = sub.add_parser("eval-sites", help="recall curves against known point sites")
    p.add_argument("--layers", required=True, help="comma-separated layer ids")
    p.add_argument("--sites", required=True, help="sites CSV or GeoJSON")
    p.add_argument("--buffer-m", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=10, help="random-baseline shuffles")
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--out", default=None, help="write full curves JSON here")
    p.set_defaults(func=cmd_eval_sites)

    p = sub.add_parser("eval-tracts", help="area metrics against truth tracts")
    p.add_argument("--pred", required=True, help="prediction layer id")
    p.add_argument("--truth", default=None, help="truth GeoJSON path")
    p.add_argument("--truth-layer", default=None, help="truth layer id")
    p.set_defaults(func=cmd_eval_tracts)

    p = sub.add_parser("gridsearch", help="sweep tau/r1/r2 against truth tracts")
    p.add_argument("--layers", required=True, help="comma-separated evidence layer ids")
    p.add_argument("--truth", required=True, help="truth GeoJSON path")
    p.add_argument("--taus", required=True, help="per-layer comma lists joined by ';'")
    p.add_argument("--r1", required=True, help="comma-separated r1 values")
    p.add_argument("--r2", required=True, help="comma-separated r2 values")
    p.add_argument("--arc-segments", type=int, default=16)
    p.add_argument("--out", default=None, help="write the full surface JSON here")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("export", help="score-filtered GeoJSON export (WGS84)")
    p.add_argument("--layer", required=True)
    p.add_argument("--score-min", type=float, default=None)
    p.add_argument("--score-max", type=float, default=None)
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("focus", help="manage saved focus areas")
    focus_sub = p.add_subparsers(dest="focus_command", required=True)
    pa = focus_sub.add_parser("add")
    pa.add_argument("--name", required=True)
    pa.add_argument("--ring", required=True, help='vertices: "lon,lat lon,lat lon,lat ..."')
    focus_sub.add_parser("list")
    p.set_defaults(func=cmd_focus)

    p = sub.add_parser("models", help="descriptive deposit models")
    models_sub = p.add_subparsers(dest="models_command", required=True)
    models_sub.add_parser("list")
    pm = models_sub.add_parser("show")
    pm.add_argument("--deposit-type", required=True)
    pm = models_sub.add_parser("put")
    pm.add_argument("--path", required=True, help="model JSON file")
    pm = models_sub.add_parser("validate")
    pm.add_argument("--path", required=True, help="model JSON file")
    pm = models_sub.add_parser("summarize")
    pm.add_argument("--document", required=True, help="plain-text source document")
    pm.add_argument("--deposit-type", required=True)
    pm.add_argument("--endpoint", required=True, help="LLM provider base URL")
    pm.add_argument("--template", default=None, help="prompt template (default: bundled)")
    pm.add_argument("--save", action="store_true", help="store the summarized model")
    p.set_defaults(func=cmd_models)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else ServiceConfig()
        if args.data_dir is None:
            args.data_dir = config.data_dir
        else:
            config.data_dir = args.data_dir
        args.service_config = config
        args.func(args)
    except GeoEvidenceError as exc:
        print(f"error ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
