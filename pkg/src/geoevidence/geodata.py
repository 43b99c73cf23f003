"""Geologic map ingest and dataset transformations.

A dataset is an immutable snapshot of polygon records joined from a CSV
attribute table and a GeoJSON geometry file. Each record carries its raw
attribute pairs plus a built, cleaned description assembled from the
configured signature columns. Transformations (dissolve, project, clip)
return new datasets and never mutate their input.
"""

import csv
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path

from shapely.geometry import MultiPolygon, Point

from . import geometry as geo
from .errors import (
    ConfigError,
    GeometryError,
    IngestError,
    InputError,
    ParseError,
    StateError,
)
from .projection import (
    DEFAULT_PARAMS,
    GEOGRAPHIC_CRS,
    PROJECTED_CRS,
    AlbersParams,
    albers_forward,
    project_geometry,
)

logger = logging.getLogger(__name__)

# Default SGMC-style signature: the eleven columns concatenated into the
# record description, and the four key columns that identify a map unit.
DEFAULT_SIGNATURE_COLUMNS = (
    "UNIT_NAME",
    "MAJOR1",
    "MAJOR2",
    "MAJOR3",
    "MINOR1",
    "MINOR2",
    "MINOR3",
    "MINOR4",
    "MINOR5",
    "GENERALIZE",
    "UNITDESC",
)
DEFAULT_KEY_COLUMNS = ("STATE", "ORIG_LABEL", "SGMC_LABEL", "UNIT_LINK")
DEFAULT_JOIN_COLUMN = "UNIT_LINK"
DEFAULT_MIN_DESC_LENGTH = 20


@dataclass(frozen=True)
class IngestConfig:
    signature_columns: tuple[str, ...] = DEFAULT_SIGNATURE_COLUMNS
    key_columns: tuple[str, ...] = DEFAULT_KEY_COLUMNS
    join_column: str = DEFAULT_JOIN_COLUMN
    min_desc_length: int = DEFAULT_MIN_DESC_LENGTH


@dataclass(frozen=True)
class PolygonRecord:
    record_id: int
    key: tuple[str, ...]
    attributes: tuple[tuple[str, str], ...]
    geometry: MultiPolygon
    full_desc: str

    def attribute(self, heading: str) -> str:
        for h, d in self.attributes:
            if h == heading:
                return d
        return ""


@dataclass(frozen=True)
class GeoDataset:
    dataset_id: str
    records: tuple[PolygonRecord, ...]
    crs: str = GEOGRAPHIC_CRS
    signature_columns: tuple[str, ...] = DEFAULT_SIGNATURE_COLUMNS
    key_columns: tuple[str, ...] = DEFAULT_KEY_COLUMNS
    provenance: str = ""
    dissolved: bool = False

    @property
    def count(self) -> int:
        return len(self.records)

    def record(self, record_id: int) -> PolygonRecord:
        for r in self.records:
            if r.record_id == record_id:
                return r
        raise InputError(f"record {record_id} not in dataset {self.dataset_id!r}")

    def record_map(self) -> dict[int, PolygonRecord]:
        return {r.record_id: r for r in self.records}


@dataclass(frozen=True)
class Site:
    site_id: str
    name: str
    x: float
    y: float


@dataclass(frozen=True)
class SiteSet:
    sites: tuple[Site, ...]

    @property
    def count(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class FocusArea:
    name: str
    polygon: tuple[tuple[float, float], ...]
    crs: str = GEOGRAPHIC_CRS

    def shape(self):
        ring = [tuple(p) for p in self.polygon]
        try:
            return geo.ring_to_polygon(ring, context=f" in focus area {self.name!r}")
        except GeometryError:
            raise
        except Exception as exc:
            raise GeometryError(f"invalid focus area {self.name!r}: {exc}") from exc


def build_description(
    attributes: list[tuple[str, str]] | tuple[tuple[str, str], ...],
    signature_columns=DEFAULT_SIGNATURE_COLUMNS,
) -> str:
    """Join the non-empty signature values, in column order, with '. '."""
    values = dict(attributes)
    parts = []
    for col in signature_columns:
        v = values.get(col, "").strip()
        if v:
            parts.append(v)
    return ". ".join(parts)


def clean_description(text: str) -> str:
    """Normalize whitespace and fold/remove non-ASCII characters.

    Latin letters with diacritics fold to their base letter; any other
    non-ASCII character is dropped. Idempotent, never longer than input.
    """
    out = []
    for ch in text:
        if ord(ch) < 128:
            out.append(ch)
            continue
        decomposed = unicodedata.normalize("NFKD", ch)
        base = [c for c in decomposed if not unicodedata.combining(c)]
        if len(base) == 1 and ord(base[0]) < 128:
            out.append(base[0])
    return re.sub(r"\s+", " ", "".join(out)).strip()


def _read_attribute_table(path: Path, config: IngestConfig) -> tuple[list[str], dict[str, dict]]:
    """Read the CSV table and index rows by join-column value (first wins)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ParseError(f"{path}: empty CSV, no header row", line=1)
            header = list(reader.fieldnames)
            _check_columns(header, config, source=str(path))
            by_join: dict[str, dict] = {}
            for row in reader:
                if None in row:
                    raise ParseError(
                        f"{path}: row has more fields than the header", line=reader.line_num
                    )
                join_val = (row.get(config.join_column) or "").strip()
                if not join_val:
                    logger.warning("%s: row %d has empty %s, skipped", path, reader.line_num, config.join_column)
                    continue
                if join_val in by_join:
                    logger.warning(
                        "%s: duplicate %s=%r at row %d, first occurrence wins",
                        path, config.join_column, join_val, reader.line_num,
                    )
                    continue
                by_join[join_val] = {k: (v or "") for k, v in row.items()}
    except csv.Error as exc:
        raise ParseError(f"{path}: malformed CSV: {exc}") from exc
    return header, by_join


def _check_columns(header: list[str], config: IngestConfig, *, source: str) -> None:
    have = set(header)
    for col in (*config.signature_columns, *config.key_columns, config.join_column):
        if col not in have:
            raise ConfigError(f"{source}: configured column {col!r} not in table header")


def _load_feature_collection(path: Path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed GeoJSON: {exc.msg}", line=exc.lineno, offset=exc.pos) from exc
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise ParseError(f"{path}: expected a GeoJSON FeatureCollection")
    return doc["features"]


def load_dataset(
    attribute_table_path: str | Path | None,
    geometry_path: str | Path,
    config: IngestConfig = IngestConfig(),
    *,
    dataset_id: str | None = None,
) -> GeoDataset:
    """Join the attribute table with the geometry file into a dataset.

    With ``attribute_table_path=None`` the attributes are taken directly
    from the GeoJSON feature properties (the shape our own exports have),
    so exported layers round-trip as datasets.

    Records whose cleaned description is shorter than
    ``config.min_desc_length`` are dropped; the drop count is logged and
    recorded in the dataset provenance.
    """
    geometry_path = Path(geometry_path)
    features = _load_feature_collection(geometry_path)

    by_join: dict[str, dict] | None = None
    if attribute_table_path is not None:
        _, by_join = _read_attribute_table(Path(attribute_table_path), config)

    records: list[PolygonRecord] = []
    dropped = 0
    record_id = 0
    for index, feature in enumerate(features):
        props = feature.get("properties") or {}
        if by_join is not None:
            join_val = str(props.get(config.join_column, "") or "").strip()
            if not join_val:
                raise IngestError(
                    f"feature {index} is missing join id property {config.join_column!r}"
                )
            row = by_join.get(join_val)
            if row is None:
                raise IngestError(
                    f"feature {index}: join id {config.join_column}={join_val!r} not in attribute table"
                )
        else:
            row = {k: ("" if v is None else str(v)) for k, v in props.items()}
            _check_columns(list(row.keys()), config, source=f"feature {index} properties")

        geom_obj = feature.get("geometry")
        if not geom_obj:
            raise IngestError(f"feature {index} has no geometry")
        geom = geo.from_geojson_geometry(geom_obj, context=f" (feature {index})")

        attributes = tuple((h, row.get(h, "")) for h in row.keys())
        full_desc = clean_description(build_description(attributes, config.signature_columns))
        if len(full_desc) < config.min_desc_length:
            dropped += 1
            continue
        key = tuple(row.get(col, "") for col in config.key_columns)
        records.append(
            PolygonRecord(
                record_id=record_id,
                key=key,
                attributes=attributes,
                geometry=geom,
                full_desc=full_desc,
            )
        )
        record_id += 1

    if dropped:
        logger.info(
            "%s: dropped %d record(s) below min_desc_length=%d",
            geometry_path, dropped, config.min_desc_length,
        )
    provenance = f"ingested from {geometry_path.name}"
    if attribute_table_path is not None:
        provenance += f" + {Path(attribute_table_path).name}"
    if dropped:
        provenance += f"; dropped {dropped} short-description record(s)"

    return GeoDataset(
        dataset_id=dataset_id or geometry_path.stem,
        records=tuple(records),
        crs=GEOGRAPHIC_CRS,
        signature_columns=tuple(config.signature_columns),
        key_columns=tuple(config.key_columns),
        provenance=provenance,
    )


def dissolve(dataset: GeoDataset) -> GeoDataset:
    """Merge records sharing the same key tuple into one multipolygon each.

    Attributes and description come from the group's lowest record_id;
    differing descriptions within a group get a warning. Output record ids
    are reassigned densely from 0 in order of first appearance.
    """
    groups: dict[tuple[str, ...], list[PolygonRecord]] = {}
    order: list[tuple[str, ...]] = []
    for rec in sorted(dataset.records, key=lambda r: r.record_id):
        if rec.key not in groups:
            groups[rec.key] = []
            order.append(rec.key)
        groups[rec.key].append(rec)

    out: list[PolygonRecord] = []
    for new_id, key in enumerate(order):
        members = groups[key]
        first = members[0]
        if any(m.full_desc != first.full_desc for m in members[1:]):
            logger.warning(
                "dissolve: key %r has %d members with differing descriptions; keeping record %d's",
                key, len(members), first.record_id,
            )
        merged = geo.union_all(m.geometry for m in members)
        out.append(
            PolygonRecord(
                record_id=new_id,
                key=key,
                attributes=first.attributes,
                geometry=merged,
                full_desc=first.full_desc,
            )
        )
    return replace(
        dataset,
        records=tuple(out),
        dissolved=True,
        provenance=f"{dataset.provenance}; dissolved {dataset.count} -> {len(out)}".lstrip("; "),
    )


def project_dataset(dataset: GeoDataset, params: AlbersParams = DEFAULT_PARAMS) -> GeoDataset:
    """Project a geographic dataset into planar meters (Albers conic)."""
    if dataset.crs == PROJECTED_CRS:
        raise StateError(f"dataset {dataset.dataset_id!r} is already projected")
    out = tuple(
        replace(rec, geometry=geo.as_multipolygon(project_geometry(rec.geometry, params)))
        for rec in dataset.records
    )
    return replace(dataset, records=out, crs=PROJECTED_CRS)


def clip_to_focus(dataset: GeoDataset, focus: FocusArea) -> GeoDataset:
    """Intersect every record with the focus polygon; drop emptied records.

    Record ids are preserved so existing score lists remain valid.
    """
    if focus.crs != dataset.crs:
        raise StateError(
            f"focus area {focus.name!r} is in {focus.crs}, dataset is in {dataset.crs}"
        )
    focus_shape = focus.shape()
    out = []
    for rec in dataset.records:
        clipped = geo.intersection(rec.geometry, focus_shape)
        if clipped.is_empty:
            continue
        out.append(replace(rec, geometry=clipped))
    return replace(
        dataset,
        records=tuple(out),
        provenance=f"{dataset.provenance}; clipped to {focus.name!r}".lstrip("; "),
    )


def project_focus(focus: FocusArea, params: AlbersParams = DEFAULT_PARAMS) -> FocusArea:
    if focus.crs == PROJECTED_CRS:
        raise StateError(f"focus area {focus.name!r} is already projected")
    xs, ys = albers_forward([p[0] for p in focus.polygon], [p[1] for p in focus.polygon], params)
    return FocusArea(
        name=focus.name,
        polygon=tuple(zip((float(x) for x in xs), (float(y) for y in ys))),
        crs=PROJECTED_CRS,
    )


def load_sites(path: str | Path) -> SiteSet:
    """Load point sites from CSV (site_id,name,longitude,latitude) or GeoJSON.

    Invalid rows/features are skipped with a logged line/feature number;
    zero valid sites is an ingest error.
    """
    path = Path(path)
    if path.suffix.lower() in (".json", ".geojson"):
        sites = _sites_from_geojson(path)
    else:
        sites = _sites_from_csv(path)
    if not sites:
        raise IngestError(f"{path}: no valid sites")
    seen = set()
    unique = []
    for s in sites:
        if s.site_id in seen:
            logger.warning("%s: duplicate site_id %r skipped", path, s.site_id)
            continue
        seen.add(s.site_id)
        unique.append(s)
    return SiteSet(sites=tuple(unique))


def _valid_lon_lat(x: float, y: float) -> bool:
    return -180.0 <= x <= 180.0 and -90.0 <= y <= 90.0


def _sites_from_csv(path: Path) -> list[Site]:
    sites = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ParseError(f"{path}: empty CSV", line=1)
            required = {"site_id", "longitude", "latitude"}
            if not required.issubset(reader.fieldnames):
                raise ConfigError(f"{path}: sites CSV needs columns site_id,longitude,latitude")
            for row in reader:
                try:
                    x = float(row["longitude"])
                    y = float(row["latitude"])
                except (TypeError, ValueError):
                    logger.warning("%s: line %d: non-numeric coordinates, skipped", path, reader.line_num)
                    continue
                if not _valid_lon_lat(x, y):
                    logger.warning("%s: line %d: coordinates out of range, skipped", path, reader.line_num)
                    continue
                sites.append(Site(site_id=row["site_id"], name=row.get("name", "") or "", x=x, y=y))
    except csv.Error as exc:
        raise ParseError(f"{path}: malformed CSV: {exc}") from exc
    return sites


def _sites_from_geojson(path: Path) -> list[Site]:
    features = _load_feature_collection(path)
    sites = []
    for index, feature in enumerate(features):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Point":
            logger.warning("%s: feature %d is %s, not Point, skipped", path, index, geom.get("type"))
            continue
        try:
            x, y = (float(c) for c in geom["coordinates"][:2])
        except (TypeError, ValueError, KeyError):
            logger.warning("%s: feature %d has malformed coordinates, skipped", path, index)
            continue
        if not _valid_lon_lat(x, y):
            logger.warning("%s: feature %d coordinates out of range, skipped", path, index)
            continue
        props = feature.get("properties") or {}
        site_id = str(props.get("site_id", index))
        sites.append(Site(site_id=site_id, name=str(props.get("name", "") or ""), x=x, y=y))
    return sites


def site_points(sites: SiteSet, crs: str, params: AlbersParams = DEFAULT_PARAMS) -> list[Point]:
    """Site coordinates as shapely Points in the requested CRS."""
    if crs == GEOGRAPHIC_CRS:
        return [Point(s.x, s.y) for s in sites.sites]
    xs, ys = albers_forward([s.x for s in sites.sites], [s.y for s in sites.sites], params)
    return [Point(float(x), float(y)) for x, y in zip(xs, ys)]


RECORD_JOIN_COLUMN = "__record_id"


def export_dataset(dataset: GeoDataset, csv_path: str | Path, geojson_path: str | Path) -> None:
    """Write the dataset back to a CSV + GeoJSON pair that re-ingests cleanly.

    A synthetic __record_id column is used as the join id: the configured
    join column is not guaranteed unique after a dissolve.
    """
    headings = [h for h, _ in dataset.records[0].attributes] if dataset.records else []
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([RECORD_JOIN_COLUMN, *headings])
        for rec in dataset.records:
            values = dict(rec.attributes)
            writer.writerow([rec.record_id, *(values.get(h, "") for h in headings)])

    features = []
    for rec in dataset.records:
        features.append(
            {
                "type": "Feature",
                "properties": {RECORD_JOIN_COLUMN: str(rec.record_id)},
                "geometry": geo.to_geojson_geometry(rec.geometry),
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    with open(geojson_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def reingest_config(config: IngestConfig) -> IngestConfig:
    """Config for re-ingesting an export produced by :func:`export_dataset`."""
    return replace(config, join_column=RECORD_JOIN_COLUMN)
