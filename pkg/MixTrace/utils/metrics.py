"""Utility and privacy measurements of an anonymized dataset.

Output points are attributed to the physical trace they came from through an
ownership timeline (see replay_ownership); without one, labels are taken to
be their own sources.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

import config
from MixTrace.attacks.linkage import linkage_attack
from MixTrace.attacks.staypoints import AttackParams, Poi, match_count, extract_dataset_pois
from MixTrace.core.geo import cumulative_arclengths, locate_many
from MixTrace.core.trace import Dataset, Trace
from MixTrace.logging import LOGGER
from MixTrace.mechanisms.mixzone import MixZone, OwnershipTimeline, SwapEvent
from MixTrace.utils.exceptions import ConsistencyError, ValidationError

# arc lengths closer than this count as the same place on the path
ARC_TOL_M = 1e-6


@dataclass(frozen=True)
class UtilityReport:
    spatial_max_m: float
    spatial_mean_m: float
    temporal_mean_abs_s: float
    temporal_max_abs_s: float
    suppression_rate: float
    n_traces_in: int
    n_traces_out: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PrivacyReport:
    poi_recall_before: float
    poi_recall_after: float
    poi_precision_before: float
    poi_precision_after: float
    n_truth_pois: int
    # None when no zone was applied
    linkage_accuracy: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _attributed(
    original: Dataset, anonymized: Dataset, ownership: Optional[OwnershipTimeline]
) -> Iterator[Tuple[Trace, np.ndarray, Trace]]:
    """Yield (anonymized trace, row indices, source trace) groups."""
    known = set(ownership.labels) if ownership is not None else None
    for trace in anonymized:
        if ownership is None:
            sources = np.full(len(trace), trace.label, dtype=object)
        elif trace.label not in known:
            raise ConsistencyError(f"Output trace {trace.label!r} is not covered by the ownership audit")
        else:
            sources = ownership.sources(trace.label, trace.t)
        for src in dict.fromkeys(sources.tolist()):
            if src not in original:
                raise ConsistencyError(f"Points of {trace.label!r} attributed to unknown trace {src!r}")
            yield trace, np.flatnonzero(sources == src), original[src]


def spatial_distortion(
    original: Dataset, anonymized: Dataset, ownership: Optional[OwnershipTimeline] = None
) -> Tuple[float, float]:
    parts = []
    for trace, rows, src in _attributed(original, anonymized, ownership):
        dist, _ = locate_many(trace.lat[rows], trace.lon[rows], src)
        parts.append(dist)
    if not parts:
        return 0.0, 0.0
    dist = np.concatenate(parts)
    return float(dist.max()), math.fsum(dist) / len(dist)


def _time_windows(src: Trace, arc: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Original times [lo, hi] at which src was at arc length arc."""
    cum = cumulative_arclengths(src)
    first = np.searchsorted(cum, arc - ARC_TOL_M, side="left")
    last = np.searchsorted(cum, arc + ARC_TOL_M, side="right") - 1
    on_vertex = last >= first

    # strictly inside segment k
    k = np.clip(last, 0, len(cum) - 2)
    seglen = cum[k + 1] - cum[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(seglen > 0, (arc - cum[k]) / seglen, 0.0)
    inside = src.t[k] + np.clip(frac, 0.0, 1.0) * (src.t[k + 1] - src.t[k])

    first = np.clip(first, 0, len(cum) - 1)
    last = np.clip(last, 0, len(cum) - 1)
    lo = np.where(on_vertex, src.t[first], inside)
    hi = np.where(on_vertex, src.t[last], inside)
    return lo, hi


def temporal_distortion(
    original: Dataset, anonymized: Dataset, ownership: Optional[OwnershipTimeline] = None
) -> Tuple[float, float]:
    """Time shift of every output point against the moment its owner was there.

    Stationary spans make that moment an interval; being anywhere inside it
    counts as no shift.
    """
    parts = []
    for trace, rows, src in _attributed(original, anonymized, ownership):
        _, arc = locate_many(trace.lat[rows], trace.lon[rows], src)
        lo, hi = _time_windows(src, arc)
        t = trace.t[rows]
        parts.append(np.maximum(0.0, np.maximum(lo - t, t - hi)))
    if not parts:
        return 0.0, 0.0
    shift = np.concatenate(parts)
    return math.fsum(shift) / len(shift), float(shift.max())


def suppression_rate(before: Dataset, after: Dataset) -> float:
    n_before = before.n_points
    if n_before == 0:
        raise ValidationError("Cannot compute a suppression rate over an empty dataset.")
    return min(1.0, max(0.0, 1.0 - after.n_points / n_before))


def utility_report(
    original: Dataset,
    anonymized: Dataset,
    ownership: Optional[OwnershipTimeline] = None,
    reference: Optional[Dataset] = None,
) -> UtilityReport:
    """reference is the dataset zones were applied to; defaults to original."""
    spatial_max, spatial_mean = spatial_distortion(original, anonymized, ownership)
    temporal_mean, temporal_max = temporal_distortion(original, anonymized, ownership)
    return UtilityReport(
        spatial_max_m=spatial_max,
        spatial_mean_m=spatial_mean,
        temporal_mean_abs_s=temporal_mean,
        temporal_max_abs_s=temporal_max,
        suppression_rate=suppression_rate(reference if reference is not None else original, anonymized),
        n_traces_in=len(original),
        n_traces_out=len(anonymized),
    )


def _by_label(pois: List[Poi]) -> Dict[str, List[Poi]]:
    out: Dict[str, List[Poi]] = {}
    for poi in pois:
        out.setdefault(poi.label, []).append(poi)
    return out


def _score(found: Dict[str, List[Poi]], truth: Dict[str, List[Poi]], radius: float) -> Tuple[float, float]:
    matched = sum(match_count(found.get(label, []), pois, radius) for label, pois in truth.items())
    n_truth = sum(len(p) for p in truth.values())
    n_found = sum(len(p) for p in found.values())
    recall = matched / n_truth if n_truth else 1.0
    precision = matched / n_found if n_found else 1.0
    return recall, precision


def privacy_report(
    original: Dataset,
    anonymized: Dataset,
    params: Optional[AttackParams] = None,
    zones: Optional[List[MixZone]] = None,
    events: Optional[List[SwapEvent]] = None,
    truth: Optional[List[Poi]] = None,
    seed: int = config.SEED,
    assignment: str = "greedy",
) -> PrivacyReport:
    """POI recall of the stay-point attacker before and after anonymization,
    plus linkage accuracy over the applied zones.

    A POI only counts when found under the label that truly owns it. Without
    ground truth, the POIs found in original stand in for it.
    """
    params = params or AttackParams()
    found_before = extract_dataset_pois(original, params)
    found_after = extract_dataset_pois(anonymized, params)
    if truth is None:
        truth_by_label = {label: pois for label, pois in found_before.items() if pois}
    else:
        truth_by_label = _by_label(truth)

    recall_before, precision_before = _score(found_before, truth_by_label, params.match_radius_m)
    recall_after, precision_after = _score(found_after, truth_by_label, params.match_radius_m)

    accuracy = None
    if zones:
        accuracy = linkage_attack(anonymized, zones, events or [], seed=seed, assignment=assignment).accuracy

    LOGGER(__name__).info(f"POI recall {recall_before:.3f} before, {recall_after:.3f} after.")
    return PrivacyReport(
        poi_recall_before=recall_before,
        poi_recall_after=recall_after,
        poi_precision_before=precision_before,
        poi_precision_after=precision_after,
        n_truth_pois=sum(len(p) for p in truth_by_label.values()),
        linkage_accuracy=accuracy,
    )
