"""geoevidence: natural-language evidence layers over geologic map data.

Pipeline: ingest polygon attribute tables + geometries, build cleaned
descriptions, dissolve duplicate signatures, score records against text
queries with sentence embeddings, threshold into evidence layers, derive
contact layers by buffer/intersect geometry, and evaluate against known
mineral sites and expert tracts. Ships with an HTTP service, a CLI, and a
deterministic reference embedder for offline use.
"""

from .contact import ContactParams, DerivedLayer, buffer_layer, find_contact, intersect_layers
from .depositmodel import (
    CANONICAL_HEADINGS,
    DepositModel,
    load_models,
    summarize_document,
    validate_model,
)
from .embed import (
    EmbeddingCache,
    EmbeddingVector,
    ReferenceProvider,
    RemoteProvider,
    cosine,
    embed_with_cache,
    reference_embed,
)
from .errors import GeoEvidenceError
from .evaluate import (
    AreaMetrics,
    GridSearchResult,
    GridSpec,
    RecallCurve,
    area_metrics,
    baseline_curves,
    grid_search,
    recall_curve,
)
from .evidence import (
    EvidenceLayer,
    ScoredLayer,
    layer_histogram,
    score_dataset,
    select_top,
    tau_from_percentile,
)
from .geodata import (
    FocusArea,
    GeoDataset,
    IngestConfig,
    PolygonRecord,
    SiteSet,
    build_description,
    clean_description,
    clip_to_focus,
    dissolve,
    load_dataset,
    load_sites,
    project_dataset,
)
from .projection import GEOGRAPHIC_CRS, PROJECTED_CRS, AlbersParams, albers_forward, albers_inverse
from .store import ProjectStore

__version__ = "0.1.0"
