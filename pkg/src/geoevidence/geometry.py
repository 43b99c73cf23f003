"""Thin geometry layer over shapely.

Keeps ring-list <-> shapely conversion, validity policy (auto-close open
rings with a warning, reject self-intersections), and the handful of set
operations the pipeline needs in one place. Everything downstream works
with shapely geometries and converts to/from GeoJSON-style ring lists only
at the ingest/export boundary.
"""

import logging

from shapely.geometry import MultiPolygon, Polygon, mapping
from shapely.geometry.base import BaseGeometry
from shapely.ops import unary_union

from .errors import GeometryError, InputError

logger = logging.getLogger(__name__)

Ring = list[tuple[float, float]]

EMPTY = MultiPolygon([])


def close_ring(ring: Ring, *, context: str = "") -> Ring:
    """Return a closed copy of ``ring``; warn if it had to be closed."""
    if len(ring) < 3:
        raise GeometryError(f"ring has fewer than 3 distinct points{context}")
    if tuple(ring[0]) != tuple(ring[-1]):
        logger.warning("auto-closing open ring%s", context)
        ring = list(ring) + [ring[0]]
    if len(ring) < 4:
        raise GeometryError(f"closed ring has fewer than 4 points{context}")
    return ring


def ring_to_polygon(ring: Ring, *, context: str = "") -> Polygon:
    """Build a shapely Polygon from one exterior ring, enforcing validity."""
    poly = Polygon(close_ring(ring, context=context))
    if not poly.is_valid:
        raise GeometryError(f"self-intersecting ring rejected{context}")
    return poly


def rings_to_geometry(rings: list[Ring], *, context: str = "") -> BaseGeometry:
    """Union a flat list of exterior rings into one (multi)polygon."""
    if not rings:
        return EMPTY
    return unary_union([ring_to_polygon(r, context=context) for r in rings])


def as_multipolygon(geom: BaseGeometry) -> MultiPolygon:
    """Normalize any polygonal result to a MultiPolygon, dropping slivers.

    Set operations can emit Polygons, GeometryCollections with stray lines
    or points, or empties; only the areal parts are meaningful here.
    """
    if geom is None or geom.is_empty:
        return EMPTY
    if isinstance(geom, MultiPolygon):
        return geom
    if isinstance(geom, Polygon):
        return MultiPolygon([geom])
    if geom.geom_type == "GeometryCollection":
        polys = [g for g in geom.geoms if isinstance(g, Polygon)]
        polys += [p for g in geom.geoms if isinstance(g, MultiPolygon) for p in g.geoms]
        return MultiPolygon(polys) if polys else EMPTY
    # Lines / points have zero area and are discarded.
    return EMPTY


def union_all(geoms) -> MultiPolygon:
    geoms = [g for g in geoms if g is not None and not g.is_empty]
    if not geoms:
        return EMPTY
    return as_multipolygon(unary_union(geoms))


def intersection(a: BaseGeometry, b: BaseGeometry) -> MultiPolygon:
    if a.is_empty or b.is_empty:
        return EMPTY
    return as_multipolygon(a.intersection(b))


def buffer_outward(geom: BaseGeometry, r: float, arc_segments: int = 16) -> BaseGeometry:
    """Expand ``geom`` outward by ``r`` with round joins.

    ``arc_segments`` is the number of segments approximating a quarter
    circle. ``r == 0`` returns the input unchanged; inward buffering is out
    of scope and rejected.
    """
    if r < 0:
        raise InputError("negative (inward) buffer distances are not supported")
    if arc_segments < 4:
        raise InputError("arc_segments must be >= 4")
    if r == 0:
        return geom
    return as_multipolygon(geom.buffer(r, quad_segs=arc_segments))


def geometry_area(geom: BaseGeometry) -> float:
    return 0.0 if geom is None or geom.is_empty else geom.area


def geometry_rings(geom: BaseGeometry) -> list[Ring]:
    """Flatten a (multi)polygon to its rings (exteriors then holes, per part)."""
    rings: list[Ring] = []
    for part in as_multipolygon(geom).geoms:
        rings.append([(x, y) for x, y in part.exterior.coords])
        for hole in part.interiors:
            rings.append([(x, y) for x, y in hole.coords])
    return rings


def to_geojson_geometry(geom: BaseGeometry) -> dict:
    """GeoJSON geometry dict (always a MultiPolygon for areal inputs)."""
    mp = as_multipolygon(geom)
    return {
        "type": "MultiPolygon",
        "coordinates": [
            [[list(pt) for pt in ring.coords] for ring in ([part.exterior] + list(part.interiors))]
            for part in mp.geoms
        ],
    }


def from_geojson_geometry(obj: dict, *, context: str = "") -> MultiPolygon:
    """Parse a GeoJSON Polygon/MultiPolygon into a validated MultiPolygon.

    Open rings are closed with a warning; self-intersecting rings are a
    hard error (topology repair is out of scope).
    """
    gtype = obj.get("type")
    if gtype == "Polygon":
        return as_multipolygon(_polygon_from_rings(obj["coordinates"], context=context))
    if gtype == "MultiPolygon":
        parts = [_polygon_from_rings(rings, context=context) for rings in obj["coordinates"]]
        geom = MultiPolygon(parts)
        if not geom.is_valid:
            # Valid parts can still overlap each other; normalize by union.
            geom = unary_union(parts)
        return as_multipolygon(geom)
    raise GeometryError(f"expected Polygon or MultiPolygon, got {gtype!r}{context}")


def _polygon_from_rings(rings: list, *, context: str = "") -> Polygon:
    closed = [close_ring([tuple(pt) for pt in r], context=context) for r in rings]
    poly = Polygon(closed[0], holes=closed[1:])
    if not poly.is_valid:
        raise GeometryError(f"self-intersecting ring rejected{context}")
    return poly


__all__ = [
    "Ring",
    "EMPTY",
    "close_ring",
    "ring_to_polygon",
    "rings_to_geometry",
    "as_multipolygon",
    "union_all",
    "intersection",
    "buffer_outward",
    "geometry_area",
    "geometry_rings",
    "to_geojson_geometry",
    "from_geojson_geometry",
    "mapping",
]
