"""HTTP surface: endpoints, jobs, idempotency, persistence, exports."""

import hashlib
import json
import threading
import time
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import pytest
from fastapi.testclient import TestClient

from geoevidence.service import ServiceConfig, create_app, load_config

from conftest import polygon_feature, square_ring, write_csv, write_feature_collection


@pytest.fixture
def workspace(tmp_path):
    """Data dir + a small ingestable CSV/GeoJSON pair in lon/lat."""
    data_dir = tmp_path / "data"
    header = ["UNIT_LINK", "UNIT_NAME", "STATE"]
    rows = [
        ["U0", "granite granodiorite pluton", "NV"],
        ["U1", "limestone dolostone marble", "NV"],
        ["U2", "alluvium and basin fill", "NV"],
        ["U3", "granite and quartz monzonite", "CA"],
    ]
    csv_path = write_csv(tmp_path / "attrs.csv", header, rows)
    features = [
        polygon_feature(square_ring(-120.0 + i * 0.5, 38.0, 0.2), {"UNIT_LINK": f"U{i}"})
        for i in range(4)
    ]
    geo_path = write_feature_collection(tmp_path / "geom.geojson", features)
    return {
        "data_dir": data_dir,
        "csv": csv_path,
        "geojson": geo_path,
        "tmp": tmp_path,
    }


@pytest.fixture
def client(workspace):
    config = ServiceConfig(data_dir=str(workspace["data_dir"]))
    app = create_app(config)
    with TestClient(app) as c:
        yield c


def wait_job(client, job_id, timeout=20.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] in ("done", "failed"):
            return job
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


def ingest(client, workspace, dataset_id="d1", **overrides):
    body = {
        "dataset_id": dataset_id,
        "attributes_path": str(workspace["csv"]),
        "geometry_path": str(workspace["geojson"]),
        "signature_columns": ["UNIT_NAME"],
        "key_columns": ["UNIT_LINK", "STATE"],
        "min_desc_length": 0,
    }
    body.update(overrides)
    resp = client.post("/projects/p1/datasets", json=body)
    assert resp.status_code == 200, resp.text
    job = wait_job(client, resp.json()["job_id"])
    assert job["status"] == "done", job
    return job["result_ref"]


def make_project(client, project_id="p1"):
    resp = client.post("/projects", json={"project_id": project_id})
    assert resp.status_code == 200
    return resp.json()["project_id"]


def run_query(client, dataset_id="d1", **overrides):
    body = {"dataset_id": dataset_id, "query": "granite", "tau": 0.5}
    body.update(overrides)
    resp = client.post("/projects/p1/queries", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_project_and_ingest_flow(client, workspace):
    make_project(client)
    dataset_id = ingest(client, workspace)
    assert dataset_id == "d1"
    listed = client.get("/projects/p1/datasets").json()
    assert [d["dataset_id"] for d in listed] == ["d1"]
    assert listed[0]["count"] == 4


def test_ingest_conflict_on_existing_dataset(client, workspace):
    make_project(client)
    ingest(client, workspace)
    resp = client.post(
        "/projects/p1/datasets",
        json={
            "dataset_id": "d1",
            "attributes_path": str(workspace["csv"]),
            "geometry_path": str(workspace["geojson"]),
        },
    )
    job = wait_job(client, resp.json()["job_id"])
    assert job["status"] == "failed"
    assert "already exists" in job["error"]


def test_query_custom_mode(client, workspace):
    make_project(client)
    ingest(client, workspace)
    result = run_query(client)
    assert result["layer_id"]
    assert result["excluded_count"] == 0
    assert result["selected_count"] == 2  # ceil(0.5 * 4)
    assert sum(b["count"] for b in result["histogram"]) == 4

    manifest = client.get(f"/layers/{result['layer_id']}").json()
    assert manifest["query"] == "granite"
    assert manifest["provider_id"] == "reference-256"


def test_query_deposit_model_mode(client, workspace):
    make_project(client)
    ingest(client, workspace)
    resp = client.post(
        "/projects/p1/queries",
        json={
            "dataset_id": "d1",
            "deposit_type": "tungsten skarn",
            "characteristic": "Rock types",
            "tau": 0.5,
        },
    )
    assert resp.status_code == 200
    manifest = client.get(f"/layers/{resp.json()['layer_id']}").json()
    assert manifest["query"].startswith("Pure and impure limestones")


def test_query_mode_exclusivity(client, workspace):
    make_project(client)
    ingest(client, workspace)
    resp = client.post(
        "/projects/p1/queries",
        json={
            "dataset_id": "d1",
            "query": "granite",
            "deposit_type": "tungsten skarn",
            "characteristic": "Rock types",
        },
    )
    assert resp.status_code == 400
    assert resp.json()["error"]["code"] == "input"


def test_query_unknown_deposit_type_404(client, workspace):
    make_project(client)
    ingest(client, workspace)
    resp = client.post(
        "/projects/p1/queries",
        json={"dataset_id": "d1", "deposit_type": "unobtainium", "characteristic": "Rock types"},
    )
    assert resp.status_code == 404


def test_query_invalid_tau_400(client, workspace):
    make_project(client)
    ingest(client, workspace)
    resp = client.post(
        "/projects/p1/queries", json={"dataset_id": "d1", "query": "granite", "tau": 1.5}
    )
    assert resp.status_code == 400


def test_idempotent_replay_returns_original(client, workspace):
    make_project(client)
    ingest(client, workspace)
    first = run_query(client, request_id="req-1")
    again = run_query(client, request_id="req-1")
    assert again == first
    # Same parameters without the request id also land on the same layer
    # (content-addressed ids).
    third = run_query(client)
    assert third["layer_id"] == first["layer_id"]


def test_layers_survive_restart(workspace):
    config = ServiceConfig(data_dir=str(workspace["data_dir"]))
    with TestClient(create_app(config)) as client:
        make_project(client)
        ingest(client, workspace)
        layer_id = run_query(client)["layer_id"]

    with TestClient(create_app(config)) as fresh:
        manifest = fresh.get(f"/layers/{layer_id}")
        assert manifest.status_code == 200
        geojson = fresh.get(f"/layers/{layer_id}/geojson")
        assert len(geojson.json()["features"]) == 2


def test_histogram_endpoint(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer_id = run_query(client)["layer_id"]
    resp = client.get(f"/layers/{layer_id}/histogram", params={"bins": 4})
    assert resp.status_code == 200
    body = resp.json()
    assert body["query"] == "granite"
    assert sum(b["count"] for b in body["histogram"]) == 4


def test_export_filter_and_empty(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer_id = run_query(client, tau=1.0)["layer_id"]
    full = client.get(f"/layers/{layer_id}/export", params={"format": "geojson"}).json()
    assert len(full["features"]) == 4
    scores = sorted(f["properties"]["score"] for f in full["features"])
    cut = (scores[-1] + scores[-2]) / 2  # keep only the top feature
    high = client.get(
        f"/layers/{layer_id}/export", params={"score_min": cut, "score_max": 1.0}
    ).json()
    assert len(high["features"]) == 1
    empty = client.get(f"/layers/{layer_id}/export", params={"score_min": 2.0}).json()
    assert empty == {"type": "FeatureCollection", "features": []}
    bad = client.get(f"/layers/{layer_id}/export", params={"format": "shapefile"})
    assert bad.status_code == 400


def test_export_reingest_round_trip(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer_id = run_query(client, tau=1.0)["layer_id"]
    exported = client.get(f"/layers/{layer_id}/export").json()
    export_path = workspace["tmp"] / "layer_export.geojson"
    export_path.write_text(json.dumps(exported))

    resp = client.post(
        "/projects/p1/datasets",
        json={
            "dataset_id": "reimported",
            "geometry_path": str(export_path),
            "signature_columns": ["UNIT_NAME"],
            "key_columns": ["UNIT_LINK"],
            "join_column": "UNIT_LINK",
            "min_desc_length": 0,
        },
    )
    job = wait_job(client, resp.json()["job_id"])
    assert job["status"] == "done", job

    from geoevidence.store import ProjectStore
    from geoevidence import geometry as geo

    store = ProjectStore(workspace["data_dir"])
    original = store.load_dataset("p1", "d1")
    reimported = store.load_dataset("p1", "reimported")
    area_a = geo.union_all(r.geometry for r in original.records).area
    area_b = geo.union_all(r.geometry for r in reimported.records).area
    assert area_b == pytest.approx(area_a, rel=1e-9)


def test_contact_endpoint(client, workspace):
    make_project(client)
    ingest(client, workspace)
    host = run_query(client, query="limestone dolostone marble", tau=0.25)["layer_id"]
    source = run_query(client, query="granite granodiorite pluton", tau=0.25)["layer_id"]
    resp = client.post(
        "/projects/p1/contact",
        json={"layer_ids": [host, source], "r1": 30000.0, "r2": 100.0},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["kind"] == "contact"
    assert body["area_m2"] > 0
    manifest = client.get(f"/layers/{body['layer_id']}").json()
    assert manifest["input_layer_ids"] == [host, source]
    assert manifest["r1"] == 30000.0
    # Contact layers export back to WGS84 coordinates.
    exported = client.get(f"/layers/{body['layer_id']}/export").json()
    coords = exported["features"][0]["geometry"]["coordinates"][0][0]
    assert all(-180 <= x <= 180 and -90 <= y <= 90 for x, y in coords)


def test_contact_needs_two_layers(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer = run_query(client)["layer_id"]
    resp = client.post("/projects/p1/contact", json={"layer_ids": [layer]})
    assert resp.status_code == 400


def test_evaluate_sites_endpoint(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer_id = run_query(client, tau=1.0)["layer_id"]
    sites_path = workspace["tmp"] / "sites.csv"
    write_csv(
        sites_path,
        ["site_id", "name", "longitude", "latitude"],
        [["S0", "a", -119.9, 38.1], ["S1", "b", -119.4, 38.1], ["S2", "c", -110.0, 30.0]],
    )
    resp = client.post(
        "/projects/p1/evaluate/sites",
        json={
            "layer_ids": [layer_id],
            "sites_path": str(sites_path),
            "buffer_m": 0.0,
            "trials": 3,
            "seed": 7,
        },
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    rows = body["per_layer"][layer_id]
    assert len(rows) == 100
    assert rows[-1]["cutoff"] == 100
    assert body["oracle"][0]["recall"] >= rows[0]["recall"]
    assert "std" in body["random"][0]


def test_evaluate_tracts_endpoint(client, workspace):
    make_project(client)
    ingest(client, workspace)
    layer_id = run_query(client, query="limestone dolostone marble", tau=0.25)["layer_id"]
    # Truth = that layer's own export: perfect scores.
    exported = client.get(f"/layers/{layer_id}/export").json()
    truth_path = workspace["tmp"] / "truth.geojson"
    truth_path.write_text(json.dumps(exported))
    resp = client.post(
        "/projects/p1/evaluate/tracts",
        json={"pred_layer_id": layer_id, "truth_path": str(truth_path)},
    )
    assert resp.status_code == 200, resp.text
    metrics = resp.json()
    for key in ("precision", "recall", "f1", "iou"):
        assert metrics[key] == pytest.approx(1.0, abs=1e-6)


def test_gridsearch_job(client, workspace):
    make_project(client)
    ingest(client, workspace)
    host = run_query(client, query="limestone dolostone marble", tau=0.25)["layer_id"]
    source = run_query(client, query="granite granodiorite pluton", tau=0.25)["layer_id"]
    contact = client.post(
        "/projects/p1/contact", json={"layer_ids": [host, source], "r1": 30000.0, "r2": 0.0}
    ).json()
    truth_path = workspace["tmp"] / "truth.geojson"
    truth_path.write_text(json.dumps(client.get(f"/layers/{contact['layer_id']}/export").json()))

    resp = client.post(
        "/projects/p1/gridsearch",
        json={
            "layer_ids": [host, source],
            "truth_path": str(truth_path),
            "taus": [[0.25, 0.5], [0.25]],
            "r1_values": [30000.0],
            "r2_values": [0.0],
        },
    )
    job = wait_job(client, resp.json()["job_id"])
    assert job["status"] == "done", job
    result = client.get(f"/{job['result_ref']}").json()
    assert result["best_config"] == [0.25, 0.25, 30000.0, 0.0]
    assert result["best_f1"] == pytest.approx(1.0, abs=1e-6)
    assert len(result["surface"]) == 2


def test_deposit_model_endpoints(client):
    listed = client.get("/deposit-models").json()
    assert "tungsten skarn" in listed["deposit_types"]
    model = client.get("/deposit-models/tungsten skarn").json()
    assert model["characteristics"]["Rock types"].startswith("Pure and impure")

    model["characteristics"]["Rock types"] = "edited rock types"
    resp = client.put(
        "/deposit-models/tungsten skarn",
        json={"characteristics": model["characteristics"]},
    )
    assert resp.status_code == 200
    assert resp.json()["edited"] is True
    again = client.get("/deposit-models/tungsten skarn").json()
    assert again["characteristics"]["Rock types"] == "edited rock types"

    missing = client.get("/deposit-models/unobtainium")
    assert missing.status_code == 404
    assert missing.json()["error"]["code"] == "not_found"


def test_focus_area_endpoints(client, workspace):
    make_project(client)
    ring = [[-120.0, 36.0], [-116.0, 36.0], [-116.0, 42.0], [-120.0, 42.0]]
    resp = client.post("/projects/p1/focus-areas", json={"name": "great basin", "polygon": ring})
    assert resp.status_code == 200
    assert resp.json()["vertex_count"] == 5  # closed ring
    listed = client.get("/projects/p1/focus-areas").json()
    assert [a["name"] for a in listed] == ["great basin"]

    bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]
    bad = client.post("/projects/p1/focus-areas", json={"name": "bow", "polygon": bowtie})
    assert bad.status_code == 400
    too_few = client.post("/projects/p1/focus-areas", json={"name": "pt", "polygon": [[0, 0], [1, 1]]})
    assert too_few.status_code == 400


def test_query_with_focus_area(client, workspace):
    make_project(client)
    ingest(client, workspace)
    ring = [[-120.1, 37.9], [-119.3, 37.9], [-119.3, 38.4], [-120.1, 38.4]]
    client.post("/projects/p1/focus-areas", json={"name": "west half", "polygon": ring})
    full = run_query(client, tau=1.0)
    clipped = run_query(client, tau=1.0, focus_area="west half")
    assert clipped["eligible_count"] == 2
    assert clipped["layer_id"] != full["layer_id"]


def test_focus_clipped_layers_evaluate_on_clipped_geometry(client, workspace):
    # A site inside a record's full polygon but outside the focus clip must
    # not count as covered when evaluating a focus-scoped layer.
    make_project(client)
    ingest(client, workspace)
    # Clip covers only the western sliver of record U0's square.
    ring = [[-120.05, 37.95], [-119.95, 37.95], [-119.95, 38.25], [-120.05, 38.25]]
    client.post("/projects/p1/focus-areas", json={"name": "sliver", "polygon": ring})
    layer_id = run_query(client, tau=1.0, focus_area="sliver")["layer_id"]
    manifest = client.get(f"/layers/{layer_id}").json()
    assert manifest["focus_area"] == "sliver"

    sites_path = workspace["tmp"] / "east-site.csv"
    write_csv(
        sites_path,
        ["site_id", "name", "longitude", "latitude"],
        # Inside U0's square (-120.0..-119.8) but east of the clip edge.
        [["S0", "east", -119.85, 38.1]],
    )
    resp = client.post(
        "/projects/p1/evaluate/sites",
        json={
            "layer_ids": [layer_id],
            "sites_path": str(sites_path),
            "buffer_m": 0.0,
            "include_baselines": False,
        },
    )
    assert resp.status_code == 200, resp.text
    rows = resp.json()["per_layer"][layer_id]
    assert all(row["recall"] == 0.0 for row in rows)


def test_unknown_layer_404(client):
    resp = client.get("/layers/doesnotexist")
    assert resp.status_code == 404
    assert resp.json()["error"]["code"] == "not_found"


def test_url_ingest_with_checksum(client, workspace):
    make_project(client)
    serve_dir = workspace["tmp"]
    handler = partial(SimpleHTTPRequestHandler, directory=str(serve_dir))
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_port}"
    try:
        digest = hashlib.sha256(workspace["geojson"].read_bytes()).hexdigest()
        resp = client.post(
            "/projects/p1/datasets",
            json={
                "dataset_id": "from-url",
                "attributes_url": f"{base}/attrs.csv",
                "geometry_url": f"{base}/geom.geojson",
                "geometry_sha256": digest,
                "signature_columns": ["UNIT_NAME"],
                "key_columns": ["UNIT_LINK"],
                "min_desc_length": 0,
            },
        )
        job = wait_job(client, resp.json()["job_id"])
        assert job["status"] == "done", job

        bad = client.post(
            "/projects/p1/datasets",
            json={
                "dataset_id": "bad-checksum",
                "attributes_url": f"{base}/attrs.csv",
                "geometry_url": f"{base}/geom.geojson",
                "geometry_sha256": "0" * 64,
                "min_desc_length": 0,
            },
        )
        job = wait_job(client, bad.json()["job_id"])
        assert job["status"] == "failed"
        assert "checksum" in job["error"]
    finally:
        server.shutdown()


def test_same_dataset_name_in_two_projects_gets_distinct_layers(client, workspace):
    # Same dataset id, same query, different projects: the layers must not
    # collide (layer ids are content-addressed per project).
    make_project(client)
    ingest(client, workspace)
    a = run_query(client)["layer_id"]

    client.post("/projects", json={"project_id": "p2"})
    # p2's "d1" has different content: only half the rows.
    header = ["UNIT_LINK", "UNIT_NAME", "STATE"]
    rows = [["U0", "granite granodiorite pluton", "NV"], ["U1", "limestone dolostone marble", "NV"]]
    csv_path = write_csv(workspace["tmp"] / "attrs-p2.csv", header, rows)
    features = [
        polygon_feature(square_ring(-120.0 + i * 0.5, 38.0, 0.2), {"UNIT_LINK": f"U{i}"})
        for i in range(2)
    ]
    geo_path = write_feature_collection(workspace["tmp"] / "geom-p2.geojson", features)
    resp = client.post(
        "/projects/p2/datasets",
        json={
            "dataset_id": "d1",
            "attributes_path": str(csv_path),
            "geometry_path": str(geo_path),
            "signature_columns": ["UNIT_NAME"],
            "key_columns": ["UNIT_LINK"],
            "min_desc_length": 0,
        },
    )
    assert wait_job(client, resp.json()["job_id"])["status"] == "done"
    b = client.post(
        "/projects/p2/queries", json={"dataset_id": "d1", "query": "granite", "tau": 0.5}
    ).json()["layer_id"]
    assert a != b
    assert client.get(f"/layers/{b}").json()["project_id"] == "p2"


def test_model_put_and_focus_post_idempotent(client):
    make_project(client)
    model = client.get("/deposit-models/tungsten skarn").json()
    body = {"characteristics": model["characteristics"], "request_id": "edit-1"}
    first = client.put("/deposit-models/tungsten skarn", json=body).json()
    replay = client.put("/deposit-models/tungsten skarn", json=body).json()
    assert replay == first
    # The replay wrote no second version sidecar.
    versions = [
        t for t in client.get("/deposit-models").json()["deposit_types"]
    ]
    assert versions == ["tungsten skarn"]

    ring = [[-120.0, 36.0], [-116.0, 36.0], [-116.0, 42.0], [-120.0, 42.0]]
    fbody = {"name": "basin", "polygon": ring, "request_id": "focus-1"}
    f1 = client.post("/projects/p1/focus-areas", json=fbody).json()
    f2 = client.post("/projects/p1/focus-areas", json=fbody).json()
    assert f1 == f2


def test_custom_conic_parameters_flow_through(workspace):
    # A non-default conic must be used consistently for projection and the
    # inverse on export, so contact coordinates land back near the inputs.
    config = ServiceConfig(
        data_dir=str(workspace["data_dir"]),
        crs_lat_1=30.0,
        crs_lat_2=50.0,
        crs_lat_0=38.0,
        crs_lon_0=-119.0,
    )
    with TestClient(create_app(config)) as client:
        make_project(client)
        ingest(client, workspace)
        host = run_query(client, query="limestone dolostone marble", tau=0.25)["layer_id"]
        source = run_query(client, query="granite granodiorite pluton", tau=0.25)["layer_id"]
        contact = client.post(
            "/projects/p1/contact",
            json={"layer_ids": [host, source], "r1": 30000.0, "r2": 0.0},
        ).json()
        exported = client.get(f"/layers/{contact['layer_id']}/export").json()
        xs = [
            x
            for f in exported["features"]
            for ring in f["geometry"]["coordinates"]
            for poly in ring
            for x, _ in poly
        ]
        # Source data spans lon -120..-118.3; the round trip through the
        # custom conic must come back to that neighborhood.
        assert all(-121.0 < x < -117.5 for x in xs)


def test_load_config_file_and_env(tmp_path):
    cfg = tmp_path / "service.conf"
    cfg.write_text("default_tau = 0.3\nport = 9000\n# comment\n")
    config = load_config(cfg, env={})
    assert config.default_tau == 0.3
    assert config.port == 9000
    overridden = load_config(cfg, env={"GEOEVIDENCE_PORT": "9111", "GEOEVIDENCE_DEFAULT_R1": "250"})
    assert overridden.port == 9111
    assert overridden.default_r1 == 250.0
