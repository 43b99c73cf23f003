"""Contact-layer derivation: buffer, intersect, re-buffer.

Adjacent geologic bodies are mapped as touching rather than overlapping
polygons, so the shared-contact zone between (say) carbonate host rocks
and felsic source rocks is derived by buffering each evidence layer
outward by r1, intersecting the buffered layers in order, and buffering
the result by r2 to compensate for the narrow bands intersection leaves.
"""

import hashlib
import logging
from dataclasses import dataclass
from functools import reduce

from shapely.geometry import MultiPolygon
from shapely.geometry.base import BaseGeometry

from . import geometry as geo
from .errors import InputError, StateError
from .projection import GEOGRAPHIC_CRS, PROJECTED_CRS

logger = logging.getLogger(__name__)

DEFAULT_R1_M = 500.0
DEFAULT_R2_M = 500.0
DEFAULT_ARC_SEGMENTS = 16

LAYER_KINDS = ("buffered", "intersected", "contact")


@dataclass(frozen=True)
class ContactParams:
    r1: float = DEFAULT_R1_M
    r2: float = DEFAULT_R2_M
    arc_segments: int = DEFAULT_ARC_SEGMENTS

    def __post_init__(self):
        if self.r1 < 0 or self.r2 < 0:
            raise InputError("buffer distances must be >= 0")
        if self.arc_segments < 4:
            raise InputError("arc_segments must be >= 4")


@dataclass(frozen=True)
class DerivedLayer:
    layer_id: str
    input_layer_ids: tuple[str, ...]
    params: ContactParams
    geometry: MultiPolygon
    kind: str  # one of LAYER_KINDS
    crs: str = PROJECTED_CRS


def _require_projected(crs: str, op: str) -> None:
    if crs == GEOGRAPHIC_CRS:
        raise StateError(f"{op} needs planar meters; project first")


def buffer_layer(
    geom: BaseGeometry,
    r: float,
    arc_segments: int = DEFAULT_ARC_SEGMENTS,
    crs: str = PROJECTED_CRS,
) -> BaseGeometry:
    """Outward buffer with round joins; r = 0 returns the input unchanged."""
    _require_projected(crs, "buffer")
    return geo.buffer_outward(geom, r, arc_segments)


def intersect_layers(
    a: BaseGeometry,
    b: BaseGeometry,
    crs_a: str = PROJECTED_CRS,
    crs_b: str = PROJECTED_CRS,
) -> MultiPolygon:
    """Overlap of two layers; an empty result is a valid empty multipolygon."""
    if crs_a != crs_b:
        raise StateError(f"CRS mismatch: {crs_a} vs {crs_b}")
    return geo.intersection(a, b)


def find_contact(
    layers: list[BaseGeometry],
    params: ContactParams = ContactParams(),
    crs: str = PROJECTED_CRS,
    input_layer_ids: tuple[str, ...] = (),
) -> DerivedLayer:
    """Derive the contact layer from two or more evidence-layer geometries.

    Stages (each logged): buffer every layer by r1, fold pairwise
    intersection left-to-right in the given order, buffer the result by r2.
    """
    if len(layers) < 2:
        raise InputError(f"find_contact needs at least 2 layers, got {len(layers)}")
    _require_projected(crs, "find_contact")

    buffered = [buffer_layer(g, params.r1, params.arc_segments, crs) for g in layers]
    for i, g in enumerate(buffered):
        logger.debug("contact stage buffer(r1=%g) layer %d: area %.6g", params.r1, i, geo.geometry_area(g))

    intersected = reduce(lambda acc, g: intersect_layers(acc, g, crs, crs), buffered)
    logger.debug("contact stage intersect: area %.6g", geo.geometry_area(intersected))

    result = geo.as_multipolygon(buffer_layer(intersected, params.r2, params.arc_segments, crs))
    logger.debug("contact stage buffer(r2=%g): area %.6g", params.r2, geo.geometry_area(result))

    digest = hashlib.sha256(
        "|".join(
            ["contact", *input_layer_ids, repr(params.r1), repr(params.r2), str(params.arc_segments)]
        ).encode("utf-8")
    ).hexdigest()
    return DerivedLayer(
        layer_id=digest[:16],
        input_layer_ids=tuple(input_layer_ids),
        params=params,
        geometry=result,
        kind="contact",
        crs=crs,
    )
