"""Dataset CSV, audit JSONL, report JSON and plot-data files."""

from __future__ import annotations

import io
import json
import os
import re
from typing import List, Optional, Tuple

import aiofiles
import numpy as np
import pandas as pd

import config
from MixTrace.attacks.staypoints import Poi
from MixTrace.core.geo import GeoPoint
from MixTrace.core.trace import Dataset, ValidationReport, validate
from MixTrace.logging import LOGGER
from MixTrace.mechanisms.mixzone import MixZone, SwapEvent, zones_from_audit
from MixTrace.utils.exceptions import ConsistencyError, MissingStage, ValidationError

COLUMNS = ["user_id", "timestamp_s", "lat_deg", "lon_deg"]
PLOT_COLUMNS = ["trace_label", "order", "lat_deg", "lon_deg", "t_s"]


def track_output(path: str) -> str:
    """Register a file for removal if the running command fails."""
    if path not in config.autoclean:
        config.autoclean.append(path)
    return path


def read_dataset(path: str, report: Optional[ValidationReport] = None) -> Dataset:
    """Read and validate a dataset CSV.

    Bad rows are rejected into report with their physical line number in
    the file, blank lines are skipped, and a file that cannot be parsed at
    all is fatal.
    """
    if report is None:
        report = ValidationReport()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise ValidationError(f"Cannot read dataset {path}: {e}")
    if not lines:
        raise ValidationError(f"Cannot read dataset {path}: no header")

    header = [name.strip() for name in lines[0].split(",")]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise ValidationError(f"Dataset {path} lacks columns {missing}")

    # indexed by line number, the header being line 1
    body = pd.Series(lines[1:], index=pd.RangeIndex(2, len(lines) + 1), dtype=object)
    blank = body.str.strip() == ""
    n_fields = body.str.count(",") + 1
    ragged = ~blank & (n_fields != len(header))
    for line, count in n_fields[ragged].items():
        report.reject(int(line), f"row with {count} fields, expected {len(header)}")
    rows = body[~blank & ~ragged]

    if rows.empty:
        frame = pd.DataFrame(columns=header, dtype=str)
    else:
        try:
            frame = pd.read_csv(
                io.StringIO("\n".join(rows)),
                header=None,
                names=header,
                dtype=str,
                keep_default_na=False,
                skip_blank_lines=False,
            )
        except pd.errors.ParserError as e:
            raise ValidationError(f"Cannot read dataset {path}: {e}")
        if len(frame) != len(rows):
            raise ValidationError(f"Cannot read dataset {path}: quoted line breaks are not supported")
    frame = frame[COLUMNS].set_axis(rows.index)

    labels = frame["user_id"].str.strip()
    numeric = frame[COLUMNS[1:]].apply(pd.to_numeric, errors="coerce")
    t = numeric["timestamp_s"].to_numpy(dtype=float)
    lat = numeric["lat_deg"].to_numpy(dtype=float)
    lon = numeric["lon_deg"].to_numpy(dtype=float)

    with np.errstate(invalid="ignore"):
        malformed = (labels == "").to_numpy() | numeric.isna().any(axis=1).to_numpy()
        non_finite = ~malformed & ~(np.isfinite(t) & np.isfinite(lat) & np.isfinite(lon))
        bad_lat = ~malformed & ~non_finite & ((lat < -90.0) | (lat > 90.0))
        bad_lon = ~malformed & ~non_finite & ~bad_lat & ((lon < -180.0) | (lon > 180.0))
    for mask, reason in (
        (malformed, "malformed row"),
        (non_finite, "non-finite value"),
        (bad_lat, "latitude out of range"),
        (bad_lon, "longitude out of range"),
    ):
        for line in frame.index[mask]:
            report.reject(int(line), reason)

    keep = ~(malformed | non_finite | bad_lat | bad_lon)
    kept = pd.DataFrame({"user_id": labels[keep].to_numpy(), "t": t[keep], "lat": lat[keep], "lon": lon[keep]})
    raw = {
        str(label): zip(group["t"].tolist(), group["lat"].tolist(), group["lon"].tolist())
        for label, group in kept.groupby("user_id", sort=False)
    }
    dataset = validate(raw, report)
    if report.rejected:
        LOGGER(__name__).warning(f"{path}: {report.summary()}")
    return dataset


def read_stage(path: str, stage: str) -> Dataset:
    if not os.path.exists(path):
        raise MissingStage(stage, path)
    return read_dataset(path)


def _frame(dataset: Dataset) -> pd.DataFrame:
    traces = list(dataset)
    if not traces:
        return pd.DataFrame(columns=COLUMNS)
    return pd.DataFrame(
        {
            "user_id": np.concatenate([np.full(len(tr), tr.label, dtype=object) for tr in traces]),
            "timestamp_s": np.char.mod("%.3f", np.concatenate([tr.t for tr in traces])),
            "lat_deg": np.char.mod("%.7f", np.concatenate([tr.lat for tr in traces])),
            "lon_deg": np.char.mod("%.7f", np.concatenate([tr.lon for tr in traces])),
        },
        columns=COLUMNS,
    )


def write_dataset(dataset: Dataset, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    track_output(path)
    _frame(dataset).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


async def write_json(path: str, payload: dict) -> str:
    track_output(path)
    async with aiofiles.open(path, mode="w", encoding="utf-8") as f:
        await f.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


async def write_jsonl(path: str, records: List[dict]) -> str:
    track_output(path)
    async with aiofiles.open(path, mode="w", encoding="utf-8") as f:
        for record in records:
            await f.write(json.dumps(record, separators=(",", ":")) + "\n")
    return path


def read_audit(path: str) -> Tuple[List[MixZone], List[SwapEvent]]:
    if not os.path.exists(path):
        raise MissingStage("audit", path)
    records = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConsistencyError(f"{path}:{n} is not a JSON record: {e}")
    try:
        return zones_from_audit(records)
    except (KeyError, TypeError, ValueError) as e:
        raise ConsistencyError(f"{path} holds an invalid audit record: {e}")


def read_truth_pois(path: str) -> List[Poi]:
    if not os.path.exists(path):
        raise MissingStage("truth", path)
    frame = pd.read_csv(path, dtype={"user_id": str})
    return [
        Poi(row.user_id, GeoPoint(row.lat_deg, row.lon_deg), row.t_start_s, row.t_end_s, int(row.n_points))
        for row in frame.itertuples(index=False)
    ]


def _safe_name(label: str) -> str:
    return re.sub(r"[^\w.-]", "_", label) or "_"


def write_plot_stage(dataset: Dataset, directory: str) -> List[str]:
    """One CSV of ordered vertices per trace."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for trace in dataset:
        path = track_output(os.path.join(directory, f"{_safe_name(trace.label)}.csv"))
        pd.DataFrame(
            {
                "trace_label": trace.label,
                "order": np.arange(len(trace)),
                "lat_deg": np.char.mod("%.7f", trace.lat),
                "lon_deg": np.char.mod("%.7f", trace.lon),
                "t_s": np.char.mod("%.3f", trace.t),
            },
            columns=PLOT_COLUMNS,
        ).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        paths.append(path)
    return paths
