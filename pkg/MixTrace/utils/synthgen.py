"""Seeded synthetic mobility with ground truth.

Users dwell at waypoints and travel between them in straight lines. A planted
meeting pairs two users whose whole itineraries are point reflections of each
other through the meeting point, so they reach it together both in the raw
data and after constant-speed smoothing. Every keyframe of an itinerary falls
on the user's sampling grid.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from MixTrace.attacks.staypoints import Poi
from MixTrace.core.geo import EARTH_RADIUS_M, GeoPoint, haversine_m
from MixTrace.core.io import track_output
from MixTrace.core.trace import Dataset, Trace
from MixTrace.logging import LOGGER
from MixTrace.utils.exceptions import ConfigError, InfeasibleSchedule

DEG_M = math.pi * EARTH_RADIUS_M / 180.0
MAX_DRAWS = 1000


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 20
    # (lat_min, lat_max, lon_min, lon_max)
    area: Tuple[float, float, float, float] = (48.80, 49.00, 2.20, 2.50)
    n_pois_per_user: int = 3
    dwell_s: float = 1400.0
    travel_speed_mps: float = 8.0
    sample_period_s: float = 60.0
    jitter_m: float = 5.0
    n_planted_meetings: int = 0
    seed: int = config.SEED
    start_s: float = 0.0
    start_spread_s: float = 0.0
    meeting_s: float = 300.0
    dwell_radius_m: float = 30.0
    # shortest allowed straight leg between consecutive stops
    min_leg_m: float = 2000.0
    d_max_m: float = config.D_MAX_M
    t_min_s: float = config.T_MIN_S

    def __post_init__(self):
        for name in ("n_users", "n_pois_per_user", "dwell_s", "travel_speed_mps", "sample_period_s", "meeting_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"synth.{name.replace('_', '-')} must be > 0, got {getattr(self, name)}")
        for name in ("jitter_m", "n_planted_meetings", "start_spread_s", "dwell_radius_m", "min_leg_m"):
            if getattr(self, name) < 0:
                raise ConfigError(f"synth.{name.replace('_', '-')} must be >= 0, got {getattr(self, name)}")
        lat_min, lat_max, lon_min, lon_max = self.area
        if not (-90.0 <= lat_min < lat_max <= 90.0 and -180.0 <= lon_min < lon_max < 180.0):
            raise ConfigError(f"synth.area {self.area} is degenerate or out of range")


@dataclass(frozen=True)
class PlantedMeeting:
    center: GeoPoint
    t_enter_s: float
    t_exit_s: float
    participants: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "center_lat": self.center.lat_deg,
            "center_lon": self.center.lon_deg,
            "t_enter_s": self.t_enter_s,
            "t_exit_s": self.t_exit_s,
            "participants": list(self.participants),
        }


@dataclass
class _Box:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def shrink(self, margin_m: float) -> "_Box":
        dlat = margin_m / DEG_M
        dlon = dlat / math.cos(math.radians(max(abs(self.lat_min), abs(self.lat_max))))
        return _Box(self.lat_min + dlat, self.lat_max - dlat, self.lon_min + dlon, self.lon_max - dlon)

    def mirrored(self, lat: float, lon: float) -> "_Box":
        """Intersection with the reflection of this box through (lat, lon)."""
        return _Box(
            max(self.lat_min, 2 * lat - self.lat_max),
            min(self.lat_max, 2 * lat - self.lat_min),
            max(self.lon_min, 2 * lon - self.lon_max),
            min(self.lon_max, 2 * lon - self.lon_min),
        )

    @property
    def empty(self) -> bool:
        return not (self.lat_min < self.lat_max and self.lon_min < self.lon_max)

    def draw(self, rng: np.random.Generator) -> Tuple[float, float]:
        return float(rng.uniform(self.lat_min, self.lat_max)), float(rng.uniform(self.lon_min, self.lon_max))


@dataclass
class _Stop:
    lat: float
    lon: float
    # dwell length, a whole number of sample periods
    stay_s: float
    is_poi: bool
    arrive_s: float = 0.0


@dataclass
class _User:
    label: str
    t0: float
    stops: List[_Stop] = field(default_factory=list)


def check_feasible(cfg: SynthConfig) -> None:
    if 2 * cfg.n_planted_meetings > cfg.n_users:
        raise InfeasibleSchedule(
            f"2 * n_planted_meetings ({2 * cfg.n_planted_meetings}) exceeds n_users ({cfg.n_users}): "
            "a user joins at most one planted meeting"
        )
    if not cfg.travel_speed_mps * cfg.t_min_s > cfg.d_max_m:
        raise InfeasibleSchedule(
            f"travel_speed_mps * t_min_s ({cfg.travel_speed_mps * cfg.t_min_s:.1f} m) must exceed "
            f"d_max_m ({cfg.d_max_m} m) for travel to look like movement"
        )
    if cfg.dwell_s * 0.9 < cfg.sample_period_s:
        raise InfeasibleSchedule(
            f"dwell_s ({cfg.dwell_s}) is too short to hold two samples every {cfg.sample_period_s} s"
        )
    box = _Box(*cfg.area).shrink(cfg.dwell_radius_m)
    if box.empty:
        raise InfeasibleSchedule(f"area {cfg.area} is smaller than dwell_radius_m ({cfg.dwell_radius_m} m)")


def _grid(value: float, period: float) -> float:
    return max(1, math.ceil(value / period - 1e-9)) * period


def _draw_route(
    rng: np.random.Generator, box: _Box, n: int, cfg: SynthConfig, first: Optional[Tuple[float, float]] = None
) -> List[Tuple[float, float]]:
    """n waypoints inside box, consecutive ones at least min_leg_m apart."""
    route = []
    prev = first
    for _ in range(n):
        for _ in range(MAX_DRAWS):
            lat, lon = box.draw(rng)
            if prev is None or haversine_m(prev[0], prev[1], lat, lon) >= cfg.min_leg_m:
                break
        else:
            raise InfeasibleSchedule(
                f"min_leg_m ({cfg.min_leg_m} m) cannot be met between waypoints inside area {cfg.area}"
            )
        route.append((lat, lon))
        prev = (lat, lon)
    return route


def _plan(user: _User, rng: np.random.Generator, cfg: SynthConfig, box: _Box, meeting=None) -> None:
    n = cfg.n_pois_per_user
    if meeting is None:
        route = _draw_route(rng, box, n, cfg)
        kinds = [True] * n
    else:
        # meeting stop sits after the first half of the waypoints
        half = (n + 1) // 2
        region = box.mirrored(*meeting)
        # drawn backwards from the meeting point
        head = _draw_route(rng, region, half, cfg, first=meeting)[::-1]
        tail = _draw_route(rng, region, n - half, cfg, first=meeting)
        route = head + [meeting] + tail
        kinds = [True] * half + [False] + [True] * (n - half)

    for (lat, lon), is_poi in zip(route, kinds):
        if is_poi:
            stay = _grid(cfg.dwell_s * rng.uniform(0.9, 1.1), cfg.sample_period_s)
        else:
            stay = _grid(cfg.meeting_s, cfg.sample_period_s)
        user.stops.append(_Stop(lat, lon, stay, is_poi))

    t = user.t0
    for k, stop in enumerate(user.stops):
        if k:
            prev = user.stops[k - 1]
            leg = float(haversine_m(prev.lat, prev.lon, stop.lat, stop.lon))
            t += _grid(leg / cfg.travel_speed_mps, cfg.sample_period_s)
        stop.arrive_s = t
        t += stop.stay_s


def _anchor(rng: np.random.Generator, stop: _Stop, radius_m: float) -> Tuple[float, float]:
    """Where the user actually waits, uniform in a disk around the stop."""
    if not stop.is_poi or radius_m == 0:
        return stop.lat, stop.lon
    r = radius_m * math.sqrt(rng.uniform())
    theta = rng.uniform(0.0, 2 * math.pi)
    return (
        stop.lat + r * math.sin(theta) / DEG_M,
        stop.lon + r * math.cos(theta) / (DEG_M * math.cos(math.radians(stop.lat))),
    )


def _sample(user: _User, rng: np.random.Generator, cfg: SynthConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    key_t, key_lat, key_lon = [], [], []
    for stop in user.stops:
        lat, lon = _anchor(rng, stop, cfg.dwell_radius_m)
        key_t += [stop.arrive_s, stop.arrive_s + stop.stay_s]
        key_lat += [lat, lat]
        key_lon += [lon, lon]
    n = int(round((key_t[-1] - user.t0) / cfg.sample_period_s)) + 1
    t = user.t0 + cfg.sample_period_s * np.arange(n)
    lat = np.interp(t, key_t, key_lat)
    lon = np.interp(t, key_t, key_lon)
    if cfg.jitter_m > 0:
        noise = np.clip(rng.normal(0.0, cfg.jitter_m, size=(n, 2)), -3 * cfg.jitter_m, 3 * cfg.jitter_m)
        lat = lat + noise[:, 0] / DEG_M
        lon = lon + noise[:, 1] / (DEG_M * np.cos(np.radians(lat)))
    return t, lat, lon


def _truth(user: _User, t: np.ndarray, mirror=None) -> List[Poi]:
    out = []
    for stop in user.stops:
        if not stop.is_poi:
            continue
        lat, lon = stop.lat, stop.lon
        if mirror is not None:
            lat, lon = 2 * mirror[0] - lat, 2 * mirror[1] - lon
        t_end = stop.arrive_s + stop.stay_s
        n_points = int(((t >= stop.arrive_s - 1e-6) & (t <= t_end + 1e-6)).sum())
        out.append(Poi(user.label, GeoPoint(lat, lon), stop.arrive_s, t_end, n_points))
    return out


def generate(cfg: SynthConfig) -> Tuple[Dataset, List[Poi], List[PlantedMeeting]]:
    check_feasible(cfg)
    rng = np.random.default_rng(cfg.seed)
    box = _Box(*cfg.area).shrink(cfg.dwell_radius_m)
    width = len(str(cfg.n_users - 1))
    labels = [f"user_{i:0{width}d}" for i in range(cfg.n_users)]

    # meeting points stay in the central half so the mirrored region is never thin
    core = _Box(
        box.lat_min + (box.lat_max - box.lat_min) / 4,
        box.lat_max - (box.lat_max - box.lat_min) / 4,
        box.lon_min + (box.lon_max - box.lon_min) / 4,
        box.lon_max - (box.lon_max - box.lon_min) / 4,
    )
    meeting_points = [core.draw(rng) for _ in range(cfg.n_planted_meetings)]

    traces, truth, meetings = [], [], []
    for i, label in enumerate(labels):
        pair = i // 2 if i < 2 * cfg.n_planted_meetings else None
        if pair is not None and i % 2 == 1:
            continue
        t0 = round(cfg.start_s + float(rng.uniform(0.0, cfg.start_spread_s)), 3)
        user = _User(label, t0)
        meeting = meeting_points[pair] if pair is not None else None
        _plan(user, rng, cfg, box, meeting)
        t, lat, lon = _sample(user, rng, cfg)
        traces.append(Trace(label, t, np.round(lat, 7), np.round(lon, 7)))
        truth += _truth(user, t)
        if meeting is None:
            continue

        partner = labels[i + 1]
        traces.append(
            Trace(partner, t, np.round(2 * meeting[0] - lat, 7), np.round(2 * meeting[1] - lon, 7))
        )
        twin = _User(partner, t0, user.stops)
        truth += _truth(twin, t, mirror=meeting)
        stop = next(s for s in user.stops if not s.is_poi)
        meetings.append(
            PlantedMeeting(GeoPoint(*meeting), stop.arrive_s, stop.arrive_s + stop.stay_s, (label, partner))
        )

    dataset = Dataset.from_traces(traces, {"stage": "generated", "seed": str(cfg.seed)})
    truth.sort(key=lambda p: (p.label, p.t_start_s))
    LOGGER(__name__).info(
        f"Generated {len(dataset)} users, {dataset.n_points} points, {len(truth)} POIs, {len(meetings)} meetings."
    )
    return dataset, truth, meetings


def write_truth(truth: List[Poi], meetings: List[PlantedMeeting], directory: str) -> Tuple[str, str]:
    os.makedirs(directory, exist_ok=True)
    pois_path = os.path.join(directory, "truth_pois.csv")
    meetings_path = os.path.join(directory, "truth_meetings.jsonl")
    track_output(pois_path)
    track_output(meetings_path)
    frame = pd.DataFrame(
        {
            "user_id": [p.label for p in truth],
            "lat_deg": [p.centroid.lat_deg for p in truth],
            "lon_deg": [p.centroid.lon_deg for p in truth],
            "t_start_s": [p.t_start_s for p in truth],
            "t_end_s": [p.t_end_s for p in truth],
            "n_points": [p.n_points for p in truth],
        },
        columns=["user_id", "lat_deg", "lon_deg", "t_start_s", "t_end_s", "n_points"],
    )
    frame.to_csv(pois_path, index=False, float_format="%.7f")
    with open(meetings_path, "w", encoding="utf-8") as f:
        for meeting in meetings:
            f.write(json.dumps(meeting.to_dict(), sort_keys=True) + "\n")
    return pois_path, meetings_path
