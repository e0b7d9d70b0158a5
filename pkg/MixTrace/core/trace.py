from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from MixTrace.core.geo import GeoPoint, TemporalPoint
from MixTrace.logging import LOGGER
from MixTrace.utils.exceptions import EmptyDataset


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


class Trace:
    """One user's time-ordered points, stored column-wise.

    Traces coming out of validate() are sorted strictly by time and hold at
    least two points; the constructor itself only checks shapes.
    """

    __slots__ = ("label", "t", "lat", "lon")

    def __init__(self, label: str, t, lat, lon):
        self.label = str(label)
        self.t = _frozen(t)
        self.lat = _frozen(lat)
        self.lon = _frozen(lon)
        if not (self.t.shape == self.lat.shape == self.lon.shape) or self.t.ndim != 1:
            raise ValueError(f"Trace {label!r} has ragged columns")

    @classmethod
    def from_points(cls, label: str, points: Iterable[TemporalPoint]) -> "Trace":
        points = list(points)
        return cls(
            label,
            [p.t_s for p in points],
            [p.lat_deg for p in points],
            [p.lon_deg for p in points],
        )

    @property
    def points(self) -> Tuple[TemporalPoint, ...]:
        return tuple(
            TemporalPoint(GeoPoint(float(la), float(lo)), float(t))
            for t, la, lo in zip(self.t, self.lat, self.lon)
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> TemporalPoint:
        return TemporalPoint(GeoPoint(float(self.lat[i]), float(self.lon[i])), float(self.t[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
        )

    def __repr__(self) -> str:
        return f"Trace({self.label!r}, {len(self)} points)"

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0])

    def replace(self, label: Optional[str] = None, t=None, lat=None, lon=None) -> "Trace":
        return Trace(
            self.label if label is None else label,
            self.t if t is None else t,
            self.lat if lat is None else lat,
            self.lon if lon is None else lon,
        )


@dataclass
class Dataset:
    traces: Dict[str, Trace]
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for label, trace in self.traces.items():
            if label != trace.label:
                raise ValueError(f"Trace keyed {label!r} is labelled {trace.label!r}")

    @classmethod
    def from_traces(cls, traces: Iterable[Trace], meta: Optional[Dict[str, str]] = None) -> "Dataset":
        out = {}
        for trace in traces:
            if trace.label in out:
                raise ValueError(f"Duplicate label {trace.label!r}")
            out[trace.label] = trace
        return cls(dict(sorted(out.items())), dict(meta or {}))

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces.values())

    def __len__(self) -> int:
        return len(self.traces)

    def __getitem__(self, label: str) -> Trace:
        return self.traces[label]

    def __contains__(self, label: str) -> bool:
        return label in self.traces

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return list(self.traces) == list(other.traces) and all(
            self.traces[k] == other.traces[k] for k in self.traces
        )

    @property
    def labels(self) -> List[str]:
        return list(self.traces)

    @property
    def n_points(self) -> int:
        return sum(len(tr) for tr in self.traces.values())

    def with_meta(self, **tags) -> "Dataset":
        meta = dict(self.meta)
        meta.update({k: str(v) for k, v in tags.items()})
        return Dataset(dict(self.traces), meta)


@dataclass
class ValidationReport:
    rejected: int = 0
    reasons: List[Tuple[int, str]] = field(default_factory=list)
    duplicates: int = 0
    dropped_labels: List[str] = field(default_factory=list)

    def reject(self, line: int, reason: str):
        self.rejected += 1
        self.reasons.append((line, reason))

    def summary(self) -> str:
        return (
            f"{self.rejected} rejected records, {self.duplicates} duplicate timestamps, "
            f"{len(self.dropped_labels)} dropped traces"
        )


RawPoint = Tuple[float, float, float]
RawInput = Union[Dataset, Mapping[str, Iterable[RawPoint]]]


def _iter_raw(raw: RawInput):
    if isinstance(raw, Dataset):
        for trace in raw:
            yield trace.label, zip(trace.t.tolist(), trace.lat.tolist(), trace.lon.tolist())
    else:
        for label, rows in raw.items():
            yield str(label), rows


def validate(raw: RawInput, report: Optional[ValidationReport] = None) -> Dataset:
    """Sort, dedupe and range-check raw points into a Dataset.

    raw maps a label to (t_s, lat_deg, lon_deg) records, or is already a
    Dataset. Records are numbered in input order for the report.
    """
    if report is None:
        report = ValidationReport()
    traces = []
    record = 0
    for label, rows in _iter_raw(raw):
        kept = []
        for row in rows:
            record += 1
            try:
                t, lat, lon = (float(v) for v in row)
            except (TypeError, ValueError):
                report.reject(record, f"malformed record for {label!r}")
                continue
            if not (math.isfinite(t) and math.isfinite(lat) and math.isfinite(lon)):
                report.reject(record, f"non-finite value for {label!r}")
                continue
            if not -90.0 <= lat <= 90.0:
                report.reject(record, f"latitude {lat} out of range")
                continue
            if not -180.0 <= lon <= 180.0:
                report.reject(record, f"longitude {lon} out of range")
                continue
            kept.append((t, lat, -180.0 if lon == 180.0 else lon))
        if not kept:
            report.dropped_labels.append(label)
            continue
        arr = np.array(kept, dtype=float)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        first = np.ones(len(arr), dtype=bool)
        first[1:] = arr[1:, 0] != arr[:-1, 0]
        report.duplicates += int((~first).sum())
        arr = arr[first]
        if len(arr) < 2:
            report.dropped_labels.append(label)
            continue
        traces.append(Trace(label, arr[:, 0], arr[:, 1], arr[:, 2]))
    if report.dropped_labels:
        LOGGER(__name__).warning(f"Dropped traces with fewer than 2 points: {report.dropped_labels}")
    if not traces:
        raise EmptyDataset(f"No valid trace left after validation ({report.summary()}).")
    meta = dict(raw.meta) if isinstance(raw, Dataset) else {}
    return Dataset.from_traces(traces, meta)
