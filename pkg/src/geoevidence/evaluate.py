"""Layer evaluation: recall curves against point sites, area metrics
against truth tracts, and hyperparameter grid search.

Site coverage uses exact distance semantics: a site counts as covered by
a selection buffered by r iff its distance to the selected geometry is
<= r (the limit of a polygonal buffer as arc resolution grows; boundary
contact is distance 0 and therefore covered). Precomputing the
record-by-site distance matrix turns each 100-cutoff sweep into a cheap
first-cover scan, which is what makes the seeded random baselines and
the grid sweeps fast.
"""

import itertools
import logging
import math
import random
import statistics
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry.base import BaseGeometry

from . import geometry as geo
from .contact import ContactParams, find_contact
from .errors import InputError, StateError
from .evidence import ScoredLayer, select_top
from .geodata import GeoDataset, SiteSet, site_points
from .projection import DEFAULT_PARAMS, GEOGRAPHIC_CRS, AlbersParams

logger = logging.getLogger(__name__)

CUTOFF_PERCENTILES = tuple(range(1, 101))

CURVE_VARIANTS = ("method", "random_mean", "random_std", "oracle")


@dataclass(frozen=True)
class RecallCurve:
    cutoff_percentiles: tuple[int, ...]
    recall: tuple[float, ...]
    buffer_m: float
    variant: str  # one of CURVE_VARIANTS


@dataclass(frozen=True)
class AreaMetrics:
    precision: float
    recall: float
    f1: float
    iou: float
    pred_layer_id: str = ""
    truth_layer_id: str = ""
    empty_prediction: bool = False

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "iou": self.iou,
        }


def coverage_distances(
    dataset: GeoDataset, sites: SiteSet, params: AlbersParams = DEFAULT_PARAMS
) -> tuple[list[int], np.ndarray]:
    """Record ids (ascending) and the records-by-sites distance matrix.

    Sites are lon/lat; when the dataset is projected they are projected
    with the same conic so distances come out in meters.
    """
    if sites.count == 0:
        raise InputError("site set is empty")
    records = sorted(dataset.records, key=lambda r: r.record_id)
    points = site_points(sites, dataset.crs, params)
    geoms = np.array([r.geometry for r in records], dtype=object)
    pts = np.array(points, dtype=object)
    dist = shapely.distance(geoms[:, None], pts[None, :])
    return [r.record_id for r in records], np.asarray(dist, dtype=np.float64)


def _first_cover_positions(
    ranking: list[int], record_ids: list[int], dist: np.ndarray, buffer_m: float
) -> np.ndarray:
    """Per site: the earliest position in ``ranking`` that covers it (else inf)."""
    index_of = {rid: i for i, rid in enumerate(record_ids)}
    try:
        rows = [index_of[rid] for rid in ranking]
    except KeyError as exc:
        raise InputError(f"ranking contains unknown record id {exc.args[0]}") from exc
    covered = dist[rows, :] <= buffer_m  # (len(ranking), n_sites)
    n_sites = dist.shape[1]
    first = np.full(n_sites, np.inf)
    any_cover = covered.any(axis=0)
    first[any_cover] = covered[:, any_cover].argmax(axis=0)
    return first


def _curve_from_first_cover(first: np.ndarray, n_ranked: int) -> list[float]:
    n_sites = first.shape[0]
    recalls = []
    for p in CUTOFF_PERCENTILES:
        k = max(1, math.ceil(n_ranked * (100 - p) / 100))
        recalls.append(float(np.count_nonzero(first < k)) / n_sites)
    return recalls


def _check_buffer_crs(dataset: GeoDataset, buffer_m: float) -> None:
    if buffer_m > 0 and dataset.crs == GEOGRAPHIC_CRS:
        raise StateError("buffered recall needs planar meters; project first")
    if buffer_m < 0:
        raise InputError("buffer_m must be >= 0")


def recall_curve(
    ranking: list[int],
    dataset: GeoDataset,
    sites: SiteSet,
    buffer_m: float = 0.0,
    *,
    variant: str = "method",
    params: AlbersParams = DEFAULT_PARAMS,
    _distances: tuple[list[int], np.ndarray] | None = None,
) -> RecallCurve:
    """Recall of covered sites at every cutoff percentile, best-first ranking.

    At cutoff p the top (100-p)% of the ranking (at least one record) is
    selected, buffered by ``buffer_m``, and the fraction of distinct sites
    covered is recorded.
    """
    _check_buffer_crs(dataset, buffer_m)
    if not ranking:
        raise InputError("ranking is empty")
    record_ids, dist = (
        _distances if _distances is not None else coverage_distances(dataset, sites, params)
    )
    first = _first_cover_positions(ranking, record_ids, dist, buffer_m)
    return RecallCurve(
        cutoff_percentiles=CUTOFF_PERCENTILES,
        recall=tuple(_curve_from_first_cover(first, len(ranking))),
        buffer_m=buffer_m,
        variant=variant,
    )


def union_recall_curve(
    rankings: list[list[int]],
    dataset: GeoDataset,
    sites: SiteSet,
    buffer_m: float = 0.0,
    params: AlbersParams = DEFAULT_PARAMS,
) -> RecallCurve:
    """Recall when, at each cutoff, the per-ranking selections are unioned."""
    _check_buffer_crs(dataset, buffer_m)
    if not rankings or any(not r for r in rankings):
        raise InputError("need at least one non-empty ranking")
    record_ids, dist = coverage_distances(dataset, sites, params)
    firsts = [_first_cover_positions(r, record_ids, dist, buffer_m) for r in rankings]
    n_sites = dist.shape[1]
    recalls = []
    for p in CUTOFF_PERCENTILES:
        covered = np.zeros(n_sites, dtype=bool)
        for ranking, first in zip(rankings, firsts):
            k = max(1, math.ceil(len(ranking) * (100 - p) / 100))
            covered |= first < k
        recalls.append(float(np.count_nonzero(covered)) / n_sites)
    return RecallCurve(
        cutoff_percentiles=CUTOFF_PERCENTILES,
        recall=tuple(recalls),
        buffer_m=buffer_m,
        variant="method",
    )


def oracle_ranking(
    dataset: GeoDataset,
    sites: SiteSet,
    buffer_m: float = 0.0,
    *,
    greedy_marginal: bool = False,
    params: AlbersParams = DEFAULT_PARAMS,
    _distances: tuple[list[int], np.ndarray] | None = None,
) -> list[int]:
    """Rank records by the number of sites each covers (within buffer_m).

    ``greedy_marginal=True`` switches to greedy marginal-new-coverage
    ordering; the default static count ranks each record independently.
    Ties break by ascending record id.
    """
    record_ids, dist = (
        _distances if _distances is not None else coverage_distances(dataset, sites, params)
    )
    covered = dist <= buffer_m  # (records, sites)
    if not greedy_marginal:
        counts = covered.sum(axis=1)
        order = sorted(range(len(record_ids)), key=lambda i: (-int(counts[i]), record_ids[i]))
        return [record_ids[i] for i in order]

    remaining = np.ones(covered.shape[1], dtype=bool)
    chosen: list[int] = []
    available = list(range(len(record_ids)))
    while available:
        gains = [(int((covered[i] & remaining).sum()), record_ids[i], i) for i in available]
        gains.sort(key=lambda g: (-g[0], g[1]))
        _, _, best = gains[0]
        chosen.append(best)
        remaining &= ~covered[best]
        available.remove(best)
    return [record_ids[i] for i in chosen]


def baseline_curves(
    dataset: GeoDataset,
    sites: SiteSet,
    trials: int = 10,
    seed: int = 0,
    buffer_m: float = 0.0,
    params: AlbersParams = DEFAULT_PARAMS,
) -> dict[str, RecallCurve]:
    """Random-ranking mean/std curves plus the oracle curve.

    Random curves shuffle the record ids ``trials`` times with a seeded
    RNG; the mean and sample standard deviation are reported per cutoff
    (std is identically 0 for a single trial). Fixed seed => bitwise
    identical output.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    _check_buffer_crs(dataset, buffer_m)
    distances = coverage_distances(dataset, sites, params)
    record_ids, _ = distances

    rng = random.Random(seed)
    per_trial: list[tuple[float, ...]] = []
    for _ in range(trials):
        shuffled = list(record_ids)
        rng.shuffle(shuffled)
        per_trial.append(
            recall_curve(
                shuffled, dataset, sites, buffer_m, variant="method", _distances=distances
            ).recall
        )

    means, stds = [], []
    for i in range(len(CUTOFF_PERCENTILES)):
        column = [t[i] for t in per_trial]
        means.append(sum(column) / trials)
        stds.append(statistics.stdev(column) if trials > 1 else 0.0)

    oracle = recall_curve(
        oracle_ranking(dataset, sites, buffer_m, _distances=distances),
        dataset,
        sites,
        buffer_m,
        variant="oracle",
        _distances=distances,
    )
    return {
        "random_mean": RecallCurve(CUTOFF_PERCENTILES, tuple(means), buffer_m, "random_mean"),
        "random_std": RecallCurve(CUTOFF_PERCENTILES, tuple(stds), buffer_m, "random_std"),
        "oracle": oracle,
    }


def area_metrics(
    pred: BaseGeometry,
    truth: BaseGeometry,
    *,
    pred_layer_id: str = "",
    truth_layer_id: str = "",
    pred_crs: str | None = None,
    truth_crs: str | None = None,
) -> AreaMetrics:
    """Area precision/recall/F1/IoU of a prediction against truth tracts."""
    if pred_crs is not None and truth_crs is not None and pred_crs != truth_crs:
        raise StateError(f"CRS mismatch: prediction in {pred_crs}, truth in {truth_crs}")
    truth_area = geo.geometry_area(truth)
    if truth_area == 0:
        raise InputError("truth geometry is empty")
    pred_area = geo.geometry_area(pred)
    inter = geo.geometry_area(geo.intersection(pred, truth)) if pred_area else 0.0
    empty_pred = pred_area == 0
    precision = 0.0 if empty_pred else inter / pred_area
    recall = inter / truth_area
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    union = pred_area + truth_area - inter
    iou = inter / union if union > 0 else 0.0
    return AreaMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        pred_layer_id=pred_layer_id,
        truth_layer_id=truth_layer_id,
        empty_prediction=empty_pred,
    )


@dataclass(frozen=True)
class GridSpec:
    """Axes of a contact-layer hyperparameter sweep.

    ``taus`` holds one tau list per scored input layer, in layer order.
    """

    taus: tuple[tuple[float, ...], ...]
    r1_values: tuple[float, ...]
    r2_values: tuple[float, ...]

    def __post_init__(self):
        if not self.taus or any(not axis for axis in self.taus):
            raise InputError("grid needs at least one tau per layer")
        if not self.r1_values or not self.r2_values:
            raise InputError("grid needs at least one r1 and one r2 value")


@dataclass(frozen=True)
class GridCell:
    taus: tuple[float, ...]
    r1: float
    r2: float
    metrics: AreaMetrics | None = None
    selected_area: float = 0.0
    error: str = ""

    @property
    def config(self) -> tuple:
        return (*self.taus, self.r1, self.r2)


@dataclass(frozen=True)
class GridSearchResult:
    grid: GridSpec
    surface: tuple[GridCell, ...]
    best_config: tuple | None
    best_f1: float

    def best_cell(self) -> GridCell | None:
        for cell in self.surface:
            if cell.metrics is not None and cell.config == self.best_config:
                return cell
        return None


def grid_search(
    dataset: GeoDataset,
    scored_layers: list[ScoredLayer],
    truth: BaseGeometry,
    grid: GridSpec,
    arc_segments: int = 16,
) -> GridSearchResult:
    """Sweep (tau per layer) x r1 x r2, deriving a contact layer per cell.

    Per-cell failures are recorded on the cell without aborting the sweep.
    Best cell: highest F1, ties by smaller total selected evidence area,
    then lexicographically smaller config.
    """
    if len(scored_layers) != len(grid.taus):
        raise InputError(
            f"grid has tau axes for {len(grid.taus)} layers, got {len(scored_layers)} scored layers"
        )
    if geo.geometry_area(truth) == 0:
        raise InputError("truth geometry is empty")

    # Evidence geometry depends only on (layer, tau); buffered geometry on
    # (layer, tau, r1). Memoize both across cells.
    evidence_cache: dict[tuple[int, float], object] = {}

    def evidence_for(idx: int, tau: float):
        key = (idx, tau)
        if key not in evidence_cache:
            evidence_cache[key] = select_top(scored_layers[idx], tau, dataset)
        return evidence_cache[key]

    cells: list[GridCell] = []
    for combo in itertools.product(*grid.taus, grid.r1_values, grid.r2_values):
        taus, r1, r2 = combo[: len(grid.taus)], combo[-2], combo[-1]
        try:
            layers = [evidence_for(i, tau) for i, tau in enumerate(taus)]
            derived = find_contact(
                [layer.geometry for layer in layers],
                ContactParams(r1=r1, r2=r2, arc_segments=arc_segments),
                crs=dataset.crs,
                input_layer_ids=tuple(layer.layer_id for layer in layers),
            )
            metrics = area_metrics(derived.geometry, truth, pred_layer_id=derived.layer_id)
            selected_area = sum(geo.geometry_area(layer.geometry) for layer in layers)
            cells.append(GridCell(taus=taus, r1=r1, r2=r2, metrics=metrics, selected_area=selected_area))
        except Exception as exc:  # per-cell isolation
            logger.warning("grid cell %s failed: %s", combo, exc)
            cells.append(GridCell(taus=taus, r1=r1, r2=r2, error=str(exc)))

    best: GridCell | None = None
    for cell in cells:
        if cell.metrics is None:
            continue
        if best is None:
            best = cell
            continue
        key = (-cell.metrics.f1, cell.selected_area, cell.config)
        best_key = (-best.metrics.f1, best.selected_area, best.config)
        if key < best_key:
            best = cell
    return GridSearchResult(
        grid=grid,
        surface=tuple(cells),
        best_config=best.config if best else None,
        best_f1=best.metrics.f1 if best else 0.0,
    )


def curve_rows(curve: RecallCurve, std: RecallCurve | None = None) -> list[dict]:
    """Row dicts for CSV/JSON emission (cutoff, recall[, std])."""
    rows = []
    for i, p in enumerate(curve.cutoff_percentiles):
        row = {"cutoff": p, "recall": curve.recall[i]}
        if std is not None:
            row["std"] = std.recall[i]
        rows.append(row)
    return rows
