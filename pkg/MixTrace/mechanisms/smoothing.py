"""Constant-speed rewriting of traces.

Consecutive output points are the same great-circle distance apart and the
same time apart, so a trace no longer slows down where its owner stopped.
Positions stay on the input polyline; only timestamps move.

Points are placed by walking the polyline from both ends with one common
chord, searching for the chord at which the two walks meet, and finishing
with Newton steps on the exact haversine distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import spsolve

import config
from MixTrace.core.geo import (
    EARTH_RADIUS_M,
    cumulative_arclengths,
    haversine_m,
    interpolate_arrays,
    wrap_delta_lon,
)
from MixTrace.core.trace import Dataset, Trace
from MixTrace.logging import LOGGER
from MixTrace.utils.exceptions import ConfigError, ZeroLengthPath

OUTPUT_MODES = ("preserve_count", "fixed_count", "fixed_interval")
ZERO_LENGTH_POLICIES = ("drop", "error")

# meters per degree of latitude
DEG_M = math.pi * EARTH_RADIUS_M / 180.0
# meeting points tried before falling back to path-length spacing
MAX_SPLITS = 24
REFINE_STEPS = 30
# relative chord mismatch: good enough to start refining, and final
SEARCH_TOL = 1e-6
CHORD_TOL = 1e-10


@dataclass(frozen=True)
class SmoothingParams:
    output_mode: str = config.OUTPUT_MODE
    # used by fixed_count
    n: int = config.OUTPUT_COUNT
    # used by fixed_interval
    interval_s: float = config.OUTPUT_INTERVAL_S
    zero_length_policy: str = config.ZERO_LENGTH_POLICY

    def __post_init__(self):
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(f"smoothing.output-mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")
        if self.zero_length_policy not in ZERO_LENGTH_POLICIES:
            raise ConfigError(
                f"smoothing.zero-length-policy must be one of {ZERO_LENGTH_POLICIES}, got {self.zero_length_policy!r}"
            )
        if self.output_mode == "fixed_count" and int(self.n) < 2:
            raise ConfigError(f"smoothing.n must be >= 2, got {self.n}")
        if self.output_mode == "fixed_interval" and not self.interval_s > 0:
            raise ConfigError(f"smoothing.interval-s must be > 0, got {self.interval_s}")

    def output_count(self, trace: Trace) -> int:
        if self.output_mode == "preserve_count":
            return len(trace)
        if self.output_mode == "fixed_count":
            return int(self.n)
        return max(2, 1 + int(round(trace.duration_s / self.interval_s)))


class _Path:
    """Polyline without repeated vertices, walked in a flat frame local to each point."""

    __slots__ = ("lat", "lon", "dlat", "dlon", "m")

    def __init__(self, lat: np.ndarray, lon: np.ndarray):
        dlon = wrap_delta_lon(np.diff(lon))
        self.lat = lat.tolist()
        # unwrapped, so walking never needs to wrap
        self.lon = np.concatenate([lon[:1], lon[0] + np.cumsum(dlon)]).tolist()
        self.dlat = np.diff(lat).tolist()
        self.dlon = dlon.tolist()
        self.m = len(self.dlat)

    def at(self, k: int, f: float) -> Tuple[float, float]:
        return self.lat[k] + f * self.dlat[k], self.lon[k] + f * self.dlon[k]

    def walk(self, c: float, steps: int, out: Optional[List[float]] = None) -> Optional[Tuple[int, float]]:
        """Take `steps` chords of length c from the first vertex.

        Each chord ends where the path first leaves the circle of radius c
        around the previous point. Returns the final (segment, fraction), or
        None when the path ends inside a circle. Positions are appended to
        `out` as segment + fraction.
        """
        lat, lon, dlat, dlon, m = self.lat, self.lon, self.dlat, self.dlon, self.m
        c2 = c * c
        k, f = 0, 0.0
        for _ in range(steps):
            plat = lat[k] + f * dlat[k]
            plon = lon[k] + f * dlon[k]
            sx = DEG_M * math.cos(math.radians(plat))
            j = k
            while True:
                bx = (lon[j + 1] - plon) * sx
                by = (lat[j + 1] - plat) * DEG_M
                if bx * bx + by * by >= c2:
                    break
                j += 1
                if j == m:
                    return None
            if j == k:
                ax = ay = 0.0
                dx = (1.0 - f) * dlon[j] * sx
                dy = (1.0 - f) * dlat[j] * DEG_M
            else:
                ax = (lon[j] - plon) * sx
                ay = (lat[j] - plat) * DEG_M
                dx = dlon[j] * sx
                dy = dlat[j] * DEG_M
            a = dx * dx + dy * dy
            b = ax * dx + ay * dy
            t = (-b + math.sqrt(max(b * b - a * (ax * ax + ay * ay - c2), 0.0))) / a
            t = min(t, 1.0)
            f = f + t * (1.0 - f) if j == k else t
            k = j
            if out is not None:
                out.append(k + f)
        return k, f


def _gap(fwd: _Path, bwd: _Path, c: float, ahead: int, behind: int) -> float:
    """Distance left between the two walks, minus one chord.

    Negative infinity when a walk runs off the path.
    """
    f_end = fwd.walk(c, ahead)
    b_end = bwd.walk(c, behind)
    if f_end is None or b_end is None:
        return -math.inf
    flat, flon = fwd.at(*f_end)
    blat, blon = bwd.at(*b_end)
    dx = ((blon - flon + 180.0) % 360.0 - 180.0) * DEG_M * math.cos(math.radians(flat))
    dy = (blat - flat) * DEG_M
    d = math.hypot(dx, dy)
    crossed = f_end[0] + f_end[1] > fwd.m - (b_end[0] + b_end[1])
    return (-d if crossed else d) - c


def _search_chord(fwd: _Path, bwd: _Path, ahead: int, behind: int, c0: float) -> Optional[float]:
    """Chord at which the walks meet, or the closest chord beside a jump in the gap.

    The gap shrinks as the chord grows but jumps wherever a walk switches
    to a later stretch of path.
    """
    steps = ahead + behind + 1
    tol = SEARCH_TOL * c0

    def gap(c: float) -> float:
        return _gap(fwd, bwd, c, ahead, behind)

    hi, g_hi = c0, gap(c0)
    if abs(g_hi) <= tol:
        return hi
    if g_hi > 0:
        lo, g_lo = hi, g_hi
        push = 1.0
        for _ in range(60):
            hi = lo + push * g_lo / steps
            g_hi = gap(hi)
            if abs(g_hi) <= tol:
                return hi
            if g_hi < 0:
                break
            lo, g_lo = hi, g_hi
            push *= 2.0
        else:
            return None
    else:
        push = 1.0
        for _ in range(60):
            lo = 0.5 * hi if math.isinf(g_hi) else max(hi + push * g_hi / steps, 0.5 * hi)
            g_lo = gap(lo)
            if abs(g_lo) <= tol:
                return lo
            if g_lo > 0:
                break
            hi, g_hi = lo, g_lo
            push *= 2.0
        else:
            return None

    # Illinois regula falsi; w_lo and w_hi are the weighted gaps
    w_lo, w_hi = g_lo, g_hi
    side = 0
    for _ in range(100):
        if math.isinf(w_hi):
            c = 0.5 * (lo + hi)
        else:
            c = (lo * w_hi - hi * w_lo) / (w_hi - w_lo)
            if not lo < c < hi:
                c = 0.5 * (lo + hi)
        g = gap(c)
        if abs(g) <= tol:
            return c
        if g > 0:
            lo, g_lo, w_lo = c, g, g
            if side > 0 and not math.isinf(w_hi):
                w_hi *= 0.5
            side = 1
        else:
            hi, g_hi, w_hi = c, g, g
            if side < 0:
                w_lo *= 0.5
            side = -1
        if math.isinf(g_hi):
            continue
        # a continuous gap cannot fall this steeply, so the bracket holds a jump
        if g_lo - g_hi > 50.0 * steps * (hi - lo) or hi - lo <= 1e-12 * hi:
            break
    if math.isinf(g_hi):
        return lo
    return lo if g_lo <= -g_hi else hi


def _chord_gradient(lat1, lon1, lat2, lon2):
    """Derivatives of haversine_m with respect to both endpoints, per radian."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(wrap_delta_lon(lon2 - lon1))
    s2 = np.sin(dl / 2) ** 2
    cc = np.cos(p1) * np.cos(p2)
    h = np.clip(np.sin(dp / 2) ** 2 + cc * s2, 1e-300, 1.0 - 1e-16)
    scale = EARTH_RADIUS_M / np.sqrt(h * (1.0 - h))
    g1lat = scale * (-0.5 * np.sin(dp) - np.sin(p1) * np.cos(p2) * s2)
    g2lat = scale * (0.5 * np.sin(dp) - np.cos(p1) * np.sin(p2) * s2)
    g2lon = scale * 0.5 * cc * np.sin(dl)
    return g1lat, -g2lon, g2lat, g2lon


def _positions(lat_v: np.ndarray, lon_v: np.ndarray, u: np.ndarray):
    k = np.clip(np.floor(u).astype(int), 0, len(lat_v) - 2)
    lat, lon = interpolate_arrays(lat_v[k], lon_v[k], lat_v[k + 1], lon_v[k + 1], u - k)
    lat[0], lon[0] = lat_v[0], lon_v[0]
    lat[-1], lon[-1] = lat_v[-1], lon_v[-1]
    return k, lat, lon


def _refine(lat_v: np.ndarray, lon_v: np.ndarray, u: np.ndarray, c: float) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Newton on the exact chords.

    Unknowns are the interior path positions u[1:-1] and the common chord c;
    returns the placed points once every chord matches c.
    """
    m = len(lat_v) - 1
    n = len(u)
    tlat = np.radians(np.diff(lat_v))
    tlon = np.radians(wrap_delta_lon(np.diff(lon_v)))
    rows = np.concatenate([np.arange(1, n - 1), np.arange(n - 2), np.arange(n - 1)])
    cols = np.concatenate([np.arange(n - 2), np.arange(n - 2), np.full(n - 1, n - 2)])

    def residual(u, c):
        k, lat, lon = _positions(lat_v, lon_v, u)
        return k, lat, lon, haversine_m(lat[:-1], lon[:-1], lat[1:], lon[1:]) - c

    k, lat, lon, res = residual(u, c)
    worst = np.abs(res).max()
    for _ in range(REFINE_STEPS):
        if worst <= CHORD_TOL * c:
            return lat, lon
        g1lat, g1lon, g2lat, g2lon = _chord_gradient(lat[:-1], lon[:-1], lat[1:], lon[1:])
        a = g1lat * tlat[k[:-1]] + g1lon * tlon[k[:-1]]
        b = g2lat * tlat[k[1:]] + g2lon * tlon[k[1:]]
        data = np.concatenate([a[1:], b[:-1], np.full(n - 1, -1.0)])
        delta = spsolve(csc_matrix((data, (rows, cols)), shape=(n - 1, n - 1)), -res)
        if not np.all(np.isfinite(delta)):
            return None
        # halve the step until the worst chord error drops
        scale = 1.0
        for _ in range(8):
            u_try = u.copy()
            u_try[1:-1] = np.clip(u[1:-1] + scale * delta[:-1], 0.0, m)
            c_try = c + scale * delta[-1]
            if c_try > 0:
                trial = residual(u_try, c_try)
                if np.abs(trial[3]).max() < worst:
                    break
            scale *= 0.5
        else:
            # stuck at rounding noise
            return (lat, lon) if worst <= 4 * CHORD_TOL * c else None
        u, c = u_try, c_try
        k, lat, lon, res = trial
        worst = np.abs(res).max()
    return (lat, lon) if worst <= CHORD_TOL * c else None


def _splits(last: int) -> Iterator[int]:
    """Forward step counts to try: each end alone, then meeting points spread along the trace."""
    order = [last, 0] + [round(last * i / 8) for i in (4, 2, 6, 1, 3, 5, 7)]
    order += range(1, last, max(1, last // MAX_SPLITS))
    seen = set()
    for ahead in order:
        if ahead in seen:
            continue
        seen.add(ahead)
        yield ahead
        if len(seen) == MAX_SPLITS:
            return


def _equal_chords(trace: Trace, n: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    keep = np.ones(len(trace), dtype=bool)
    keep[1:] = (np.diff(trace.lat) != 0) | (np.diff(trace.lon) != 0)
    lat_v, lon_v = trace.lat[keep], trace.lon[keep]
    fwd = _Path(lat_v, lon_v)
    bwd = _Path(lat_v[::-1], lon_v[::-1])
    c0 = float(haversine_m(lat_v[:-1], lon_v[:-1], lat_v[1:], lon_v[1:]).sum()) / (n - 1)
    for ahead in _splits(n - 2):
        behind = n - 2 - ahead
        c = _search_chord(fwd, bwd, ahead, behind, c0)
        if c is None:
            continue
        u_fwd: List[float] = []
        u_bwd: List[float] = []
        if fwd.walk(c, ahead, u_fwd) is None or bwd.walk(c, behind, u_bwd) is None:
            continue
        u = np.array([0.0] + u_fwd + [fwd.m - x for x in reversed(u_bwd)] + [float(fwd.m)])
        placed = _refine(lat_v, lon_v, u, c)
        if placed is not None:
            return placed
    return None


def _arc_placement(trace: Trace, cum: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    total = cum[-1]
    targets = np.arange(n) * (total / (n - 1))
    # segment k holds cum[k] <= s < cum[k + 1], so zero-length segments are never picked
    k = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(cum) - 2)
    seglen = cum[k + 1] - cum[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(seglen > 0, (targets - cum[k]) / seglen, 0.0)
    return interpolate_arrays(trace.lat[k], trace.lon[k], trace.lat[k + 1], trace.lon[k + 1], np.clip(frac, 0.0, 1.0))


def smooth_constant_speed(trace: Trace, params: Optional[SmoothingParams] = None) -> Optional[Trace]:
    """Resample trace at constant speed between its own endpoints.

    Returns None when the trace never moves and the policy is drop; raises
    ZeroLengthPath when the policy is error.
    """
    params = params or SmoothingParams()
    cum = cumulative_arclengths(trace)
    if not cum[-1] > 0:
        if params.zero_length_policy == "error":
            raise ZeroLengthPath(trace.label)
        return None

    n = params.output_count(trace)
    t0, t1 = trace.t[0], trace.t[-1]
    times = t0 + np.arange(n) * ((t1 - t0) / (n - 1))
    if n == 2:
        lat = np.array([trace.lat[0], trace.lat[-1]])
        lon = np.array([trace.lon[0], trace.lon[-1]])
    else:
        placed = _equal_chords(trace, n)
        if placed is None:
            LOGGER(__name__).warning(f"{trace.label}: no equal-chord placement found, spacing by path length")
            placed = _arc_placement(trace, cum, n)
        lat, lon = placed

    times[0], times[-1] = t0, t1
    lat[0], lon[0] = trace.lat[0], trace.lon[0]
    lat[-1], lon[-1] = trace.lat[-1], trace.lon[-1]
    return Trace(trace.label, times, lat, lon)


def speed_profile(trace: Trace) -> np.ndarray:
    dist = haversine_m(trace.lat[:-1], trace.lon[:-1], trace.lat[1:], trace.lon[1:])
    return dist / np.diff(trace.t)


def smooth_dataset(dataset: Dataset, params: Optional[SmoothingParams] = None) -> Tuple[Dataset, List[str]]:
    params = params or SmoothingParams()
    out, dropped = [], []
    for trace in dataset:
        smoothed = smooth_constant_speed(trace, params)
        if smoothed is None:
            dropped.append(trace.label)
        else:
            out.append(smoothed)
    return assemble_smoothed(dataset, out, dropped, params)


def assemble_smoothed(dataset: Dataset, smoothed: List[Trace], dropped: List[str], params: SmoothingParams):
    if dropped:
        LOGGER(__name__).warning(f"Dropped {len(dropped)} stationary traces: {dropped}")
    meta = dict(dataset.meta)
    meta.update(stage="smoothed", output_mode=params.output_mode)
    return Dataset.from_traces(smoothed, meta), dropped
