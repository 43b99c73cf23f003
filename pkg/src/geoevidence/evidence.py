"""Query scoring and evidence-layer construction.

A scored layer holds one cosine similarity per eligible record; an
evidence layer is the ceil(tau * N) top-scoring subset with its unioned
geometry. Scores are stored with the layer so re-thresholding is a pure
local operation (this is what makes interactive sliders cheap).
"""

import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timezone

from shapely.geometry import MultiPolygon

from . import geometry as geo
from .embed import EmbeddingCache, cosine, embed_with_cache
from .errors import InputError
from .geodata import GeoDataset, clean_description

# UI/CLI surfaces expose a percentile cutoff p; the kept fraction is tau.
def tau_from_percentile(percentile: float) -> float:
    if not 0 <= percentile < 100:
        raise InputError(f"percentile cutoff must be in [0, 100), got {percentile}")
    return 1.0 - percentile / 100.0


@dataclass(frozen=True)
class ScoredLayer:
    layer_id: str
    dataset_id: str
    query: str
    provider_id: str
    scores: tuple[tuple[int, float], ...]  # (record_id, score), ascending record_id
    excluded_count: int = 0
    created_at: str = ""

    @property
    def eligible_count(self) -> int:
        return len(self.scores)

    def ranking(self) -> list[int]:
        """Record ids best-first (descending score, ties by ascending id)."""
        return [rid for rid, _ in sorted(self.scores, key=lambda rs: (-rs[1], rs[0]))]


@dataclass(frozen=True)
class EvidenceLayer:
    layer_id: str
    source_scored_layer_id: str
    dataset_id: str
    tau: float
    selected: tuple[int, ...]  # record ids in rank order
    geometry: MultiPolygon
    crs: str


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _layer_id(*parts) -> str:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).hexdigest()
    return digest[:16]


def score_dataset(
    dataset: GeoDataset,
    query: str,
    provider,
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
) -> ScoredLayer:
    """Score every record's description against the query.

    The query is cleaned the same way descriptions were; records whose
    description embeds to the empty vector are excluded and counted.
    """
    if dataset.count == 0:
        raise InputError("cannot score an empty dataset")
    cleaned = clean_description(query)
    if not cleaned:
        raise InputError("query is empty after cleaning")

    (query_vec,) = embed_with_cache(provider, [cleaned], cache, batch_size)
    if query_vec.empty:
        raise InputError(f"query {query!r} produced an empty embedding")

    records = sorted(dataset.records, key=lambda r: r.record_id)
    desc_vecs = embed_with_cache(provider, [r.full_desc for r in records], cache, batch_size)

    scores = []
    excluded = 0
    for rec, vec in zip(records, desc_vecs):
        if vec.empty:
            excluded += 1
            continue
        scores.append((rec.record_id, cosine(query_vec, vec)))

    return ScoredLayer(
        layer_id=_layer_id("scored", dataset.dataset_id, provider.provider_id, cleaned),
        dataset_id=dataset.dataset_id,
        query=cleaned,
        provider_id=provider.provider_id,
        scores=tuple(scores),
        excluded_count=excluded,
        created_at=_now(),
    )


def select_top(scored: ScoredLayer, tau: float, dataset: GeoDataset) -> EvidenceLayer:
    """Keep the top ceil(tau * N) records and union their geometry.

    Ties at equal score break by ascending record_id, so layers are
    deterministic and nested across tau values.
    """
    if not 0 < tau <= 1:
        raise InputError(f"tau must be in (0, 1], got {tau}")
    if scored.dataset_id != dataset.dataset_id:
        raise InputError(
            f"scored layer belongs to dataset {scored.dataset_id!r}, not {dataset.dataset_id!r}"
        )
    n = scored.eligible_count
    if n == 0:
        raise InputError("scored layer has no eligible records")
    k = math.ceil(tau * n)
    selected = scored.ranking()[:k]
    record_map = dataset.record_map()
    try:
        geometry = geo.union_all(record_map[rid].geometry for rid in selected)
    except KeyError as exc:
        raise InputError(f"record {exc.args[0]} not present in dataset") from exc
    return EvidenceLayer(
        layer_id=_layer_id("evidence", scored.layer_id, repr(tau)),
        source_scored_layer_id=scored.layer_id,
        dataset_id=dataset.dataset_id,
        tau=tau,
        selected=tuple(selected),
        geometry=geometry,
        crs=dataset.crs,
    )


def layer_histogram(scored: ScoredLayer, bins: int = 20) -> list[tuple[float, float, int]]:
    """Equal-width histogram of the scores as (bin_low, bin_high, count).

    Bins are right-closed (a score on an interior edge falls in the lower
    bin); a single-valued score range yields one bin. Counts always sum to
    the eligible record count.
    """
    if bins < 1:
        raise InputError(f"bins must be >= 1, got {bins}")
    if not scored.scores:
        raise InputError("cannot histogram an empty scored layer")
    values = [s for _, s in scored.scores]
    lo, hi = min(values), max(values)
    if lo == hi:
        return [(lo, hi, len(values))]
    width = (hi - lo) / bins
    counts = [0] * bins
    for s in values:
        idx = math.ceil((s - lo) / width) - 1
        counts[min(max(idx, 0), bins - 1)] += 1
    return [(lo + i * width, lo + (i + 1) * width, counts[i]) for i in range(bins)]
