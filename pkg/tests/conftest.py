"""Shared fixture helpers: synthetic datasets, squares, and file builders."""

import csv
import json
from pathlib import Path

import pytest
from shapely.geometry import MultiPolygon, Polygon

from geoevidence.geodata import GeoDataset, PolygonRecord
from geoevidence.projection import PROJECTED_CRS


def square_ring(x0: float, y0: float, size: float = 1.0) -> list[tuple[float, float]]:
    return [(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size), (x0, y0)]


def square(x0: float, y0: float, size: float = 1.0) -> MultiPolygon:
    return MultiPolygon([Polygon(square_ring(x0, y0, size))])


def make_record(record_id: int, geometry, desc: str = "granite", key=None) -> PolygonRecord:
    return PolygonRecord(
        record_id=record_id,
        key=key if key is not None else (f"K{record_id}",),
        attributes=(("UNIT_NAME", desc),),
        geometry=geometry,
        full_desc=desc,
    )


def make_dataset(records, crs: str = PROJECTED_CRS, dataset_id: str = "test") -> GeoDataset:
    return GeoDataset(
        dataset_id=dataset_id,
        records=tuple(records),
        crs=crs,
        signature_columns=("UNIT_NAME",),
        key_columns=("UNIT_NAME",),
    )


def write_feature_collection(path: Path, features: list[dict]) -> Path:
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return path


def polygon_feature(ring, properties) -> dict:
    return {
        "type": "Feature",
        "properties": properties,
        "geometry": {"type": "Polygon", "coordinates": [[list(p) for p in ring]]},
    }


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def sgmc_like(tmp_path):
    """A small SGMC-shaped CSV + GeoJSON pair on a lon/lat grid.

    12 rows; rows 3 and 7 lack UNITDESC (and most other columns) so their
    descriptions are assembled from the remaining fields.
    """
    header = [
        "STATE", "ORIG_LABEL", "SGMC_LABEL", "UNIT_LINK",
        "UNIT_NAME", "MAJOR1", "MAJOR2", "MAJOR3",
        "MINOR1", "MINOR2", "MINOR3", "MINOR4", "MINOR5",
        "GENERALIZE", "UNITDESC",
    ]
    rows = []
    features = []
    for i in range(12):
        unit_link = f"NV{i:03d}"
        row = {
            "STATE": "NV",
            "ORIG_LABEL": f"L{i}",
            "SGMC_LABEL": f"S{i}",
            "UNIT_LINK": unit_link,
            "UNIT_NAME": f"Unit {i} formation",
            "MAJOR1": "granite" if i % 2 else "limestone",
            "MAJOR2": "", "MAJOR3": "",
            "MINOR1": "", "MINOR2": "", "MINOR3": "", "MINOR4": "", "MINOR5": "",
            "GENERALIZE": "Igneous" if i % 2 else "Sedimentary",
            "UNITDESC": f"A long enough unit description number {i}.",
        }
        if i in (3, 7):
            row["UNITDESC"] = ""
        rows.append([row[h] for h in header])
        x0, y0 = -120.0 + (i % 4) * 0.2, 38.0 + (i // 4) * 0.2
        features.append(
            polygon_feature(square_ring(x0, y0, 0.1), {"UNIT_LINK": unit_link})
        )
    csv_path = write_csv(tmp_path / "attrs.csv", header, rows)
    geo_path = write_feature_collection(tmp_path / "geom.geojson", features)
    return csv_path, geo_path, header, rows
