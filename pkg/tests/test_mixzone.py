import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from MixTrace.core.geo import GeoPoint, great_circle_distance, haversine_m
from MixTrace.core.trace import Dataset, Trace
from MixTrace.mechanisms.mixzone import (
    MixZone,
    MixZoneParams,
    OwnershipTimeline,
    SwapEvent,
    apply_mix_zones,
    detect_meetings,
    replay_ownership,
    zone_audit,
    zones_from_audit,
)
from MixTrace.utils.exceptions import ConfigError, ConsistencyError, DomainError

from conftest import DEG_M, line_trace

STEP = 10.0


@pytest.fixture
def sparse_crossing():
    return Dataset.from_traces(
        [
            line_trace("A", (0.0, 0.0), (0.0, 0.02), 0.0, 2000.0, 2),
            line_trace("B", (-0.01, 0.01), (0.01, 0.01), 0.0, 2000.0, 2),
        ]
    )


@pytest.fixture
def three_way():
    return Dataset.from_traces(
        [
            line_trace("A", (0.0, 0.0), (0.0, 0.02), 0.0, 2000.0, 2),
            line_trace("B", (-0.01, 0.01), (0.01, 0.01), 0.0, 2000.0, 2),
            line_trace("C", (-0.01, 0.0), (0.01, 0.02), 0.0, 2000.0, 2),
        ]
    )


def _points(dataset):
    return Counter((float(t), float(la), float(lo)) for tr in dataset for t, la, lo in zip(tr.t, tr.lat, tr.lon))


class TestDetection:
    def test_two_crossing_users_make_one_zone(self, crossing):
        zones = detect_meetings(crossing)
        assert len(zones) == 1
        zone = zones[0]
        assert zone.zone_id == 1
        assert zone.participants == ("A", "B")
        assert great_circle_distance(zone.center, GeoPoint(0.0, 0.01)) < 5.0
        # close from 940 s to 1060 s, padded by half a step
        assert zone.t_enter_s == pytest.approx(935.0)
        assert zone.t_exit_s == pytest.approx(1065.0)

    def test_three_users_meeting_at_once_make_one_zone(self, three_way):
        zones = detect_meetings(three_way)
        assert len(zones) == 1
        assert zones[0].participants == ("A", "B", "C")

    def test_far_apart_users_make_no_zone(self):
        ds = Dataset.from_traces(
            [
                line_trace("A", (0.0, 0.0), (0.0, 0.02), 0.0, 2000.0, 2),
                line_trace("B", (1.0, 0.0), (1.0, 0.02), 0.0, 2000.0, 2),
            ]
        )
        assert detect_meetings(ds) == []

    def test_users_at_the_same_place_at_different_times_do_not_meet(self):
        ds = Dataset.from_traces(
            [
                line_trace("A", (0.0, 0.0), (0.0, 0.02), 0.0, 2000.0, 2),
                line_trace("B", (-0.01, 0.01), (0.01, 0.01), 5000.0, 7000.0, 2),
            ]
        )
        assert detect_meetings(ds) == []

    def test_min_copresence_filters_short_meetings(self, crossing):
        assert detect_meetings(crossing, MixZoneParams(min_copresence_s=600)) == []

    def test_detection_is_deterministic(self, three_way):
        assert detect_meetings(three_way) == detect_meetings(three_way)

    @pytest.mark.parametrize(
        "kwargs",
        [{"proximity_m": 0}, {"radius_m": -1}, {"proximity_m": 300, "radius_m": 250}, {"sample_step_s": 0}],
    )
    def test_bad_params(self, kwargs):
        with pytest.raises(ConfigError):
            MixZoneParams(**kwargs)

    def test_zone_needs_two_participants_and_an_interval(self):
        with pytest.raises(DomainError):
            MixZone(1, GeoPoint(0, 0), 250.0, 10.0, 10.0, ("A", "B"))
        with pytest.raises(DomainError):
            MixZone(1, GeoPoint(0, 0), 250.0, 0.0, 10.0, ("A", "A"))


def _random_crossings(seed):
    """Pairs of straight walkers crossing in cells 10 km apart, never near anyone else."""
    rng = np.random.default_rng(seed)
    n_users = int(rng.integers(2, 11))
    traces, truth = [], []
    for u in range(n_users):
        pair = u // 2
        lat_p = 10.0 + 0.1 * pair
        lon_p = 20.0 + (0.0 if u < n_users - n_users % 2 else 0.5)
        if u % 2 == 0:
            t_c = float(rng.uniform(500, 1500))
            theta = float(rng.uniform(0, 2 * math.pi))
        else:
            theta += float(rng.uniform(math.pi / 6, 5 * math.pi / 6)) * rng.choice([-1, 1])
            truth.append((f"u{u - 1}", f"u{u}"))
        speed = float(rng.uniform(0.5, 2.0))
        n = int(rng.integers(20, 201))
        t = np.sort(np.concatenate(([0.0, 2000.0], rng.uniform(0, 2000, n - 2))))
        along = speed * (t - t_c)
        lat = lat_p + along * math.sin(theta) / DEG_M
        lon = lon_p + along * math.cos(theta) / (DEG_M * math.cos(math.radians(lat_p)))
        traces.append(Trace(f"u{u}", t, lat, lon))
    return Dataset.from_traces(traces), truth


def _oracle_run(a, b, proximity):
    t = np.arange(0.0, 2001.0, 1.0)
    d = haversine_m(np.interp(t, a.t, a.lat), np.interp(t, a.t, a.lon), np.interp(t, b.t, b.lat), np.interp(t, b.t, b.lon))
    close = np.flatnonzero(d <= proximity)
    return t[close[0]], t[close[-1]]


@pytest.mark.parametrize("seed", range(50))
def test_detection_matches_one_second_oracle(seed):
    dataset, truth = _random_crossings(seed)
    params = MixZoneParams(sample_step_s=STEP)
    zones = detect_meetings(dataset, params)
    assert sorted(z.participants for z in zones) == sorted(truth)
    for zone in zones:
        a, b = (dataset[label] for label in zone.participants)
        enter, exit_ = _oracle_run(a, b, params.proximity_m)
        assert abs(zone.t_enter_s - enter) <= STEP
        assert abs(zone.t_exit_s - exit_) <= STEP


def _walker(label, rng, center, heading, lateral, t_c):
    """Straight walk through center + lateral offset, passing it at t_c."""
    speed = float(rng.uniform(0.5, 2.0))
    n = int(rng.integers(20, 201))
    t = np.sort(np.concatenate(([0.0, 2000.0], rng.uniform(0, 2000, n - 2))))
    along = speed * (t - t_c)
    north = along * math.sin(heading) + lateral * math.cos(heading)
    east = along * math.cos(heading) - lateral * math.sin(heading)
    lat = center[0] + north / DEG_M
    lon = center[1] + east / (DEG_M * math.cos(math.radians(center[0])))
    return Trace(label, t, lat, lon)


def _random_encounters(seed, proximity):
    """Cells 10 km apart, each holding a pair or a triple crossing one point
    together, a near miss passing 1.5 to 3 proximities apart, or a loner."""
    rng = np.random.default_rng(seed)
    traces = []
    for cell in range(5):
        kind = str(rng.choice(["pair", "triple", "miss", "alone"]))
        size = {"pair": 2, "triple": 3, "miss": 2, "alone": 1}[kind]
        if len(traces) + size > 10:
            break
        center = (10.0 + 0.1 * cell, 20.0)
        t_c = float(rng.uniform(500, 1500))
        base = float(rng.uniform(0, 2 * math.pi))
        if kind == "miss":
            gap = float(rng.uniform(1.5, 3.0)) * proximity
            plan = [(base, 0.0), (base + math.pi, gap)]
        else:
            plan = [(base + i * 2 * math.pi / size + float(rng.uniform(-0.3, 0.3)), 0.0) for i in range(size)]
        for heading, lateral in plan:
            traces.append(_walker(f"u{len(traces)}", rng, center, heading, lateral, t_c))
    return Dataset.from_traces(traces)


def _brute_force_zones(dataset, proximity, radius):
    """Every pair at 1 s resolution; close runs joined when they overlap in
    time and their centers are within two radii."""
    t = np.arange(0.0, 2001.0, 1.0)
    pos = {tr.label: (np.interp(t, tr.t, tr.lat), np.interp(t, tr.t, tr.lon)) for tr in dataset}
    runs = []
    labels = dataset.labels
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            close = np.flatnonzero(haversine_m(*pos[a], *pos[b]) <= proximity)
            if len(close) == 0:
                continue
            for run in np.split(close, np.flatnonzero(np.diff(close) > 1) + 1):
                lat = (pos[a][0][run] + pos[b][0][run]).mean() / 2
                lon = (pos[a][1][run] + pos[b][1][run]).mean() / 2
                runs.append(({a, b}, t[run[0]], t[run[-1]], lat, lon))

    group = list(range(len(runs)))
    for i, (_, enter_i, exit_i, lat_i, lon_i) in enumerate(runs):
        for j, (_, enter_j, exit_j, lat_j, lon_j) in enumerate(runs[:i]):
            overlap = enter_i <= exit_j and enter_j <= exit_i
            if overlap and haversine_m(lat_i, lon_i, lat_j, lon_j) <= 2 * radius:
                old, new = group[i], group[j]
                group = [new if g == old else g for g in group]
    zones = []
    for g in sorted(set(group)):
        members = [runs[i] for i in range(len(runs)) if group[i] == g]
        people = tuple(sorted(set().union(*(m[0] for m in members))))
        zones.append((people, min(m[1] for m in members), max(m[2] for m in members)))
    return sorted(zones)


@pytest.mark.parametrize("seed", range(50))
def test_detection_matches_brute_force_zones(seed):
    params = MixZoneParams(sample_step_s=STEP)
    dataset = _random_encounters(seed, params.proximity_m)
    expected = _brute_force_zones(dataset, params.proximity_m, params.radius_m)
    zones = sorted(detect_meetings(dataset, params), key=lambda z: z.participants)
    assert [z.participants for z in zones] == [people for people, _, _ in expected]
    for zone, (_, enter, exit_) in zip(zones, expected):
        assert abs(zone.t_enter_s - enter) <= STEP
        assert abs(zone.t_exit_s - exit_) <= STEP



class TestSwapping:
    def test_points_inside_the_active_zone_are_suppressed(self, crossing):
        zones = detect_meetings(crossing)
        out, events = apply_mix_zones(crossing, zones)
        # 940..1060 s, 13 samples each
        assert events[0].points_suppressed == 26
        assert out.n_points == crossing.n_points - 26
        assert sorted(out.labels) == ["A", "B"]

    def test_output_points_are_input_points_minus_suppressed(self, meeting_fixture):
        dataset, _, _ = meeting_fixture
        zones = detect_meetings(dataset)
        assert zones
        out, events = apply_mix_zones(dataset, zones)
        before, after = _points(dataset), _points(out)
        assert not (after - before)
        assert sum((before - after).values()) == sum(e.points_suppressed for e in events)
        assert len(out) == len(dataset)
        for tr in out:
            assert np.all(np.diff(tr.t) > 0)

    def test_swapping_is_deterministic_per_seed(self, three_way):
        zones = detect_meetings(three_way)
        a = apply_mix_zones(three_way, zones, MixZoneParams(seed=5))
        b = apply_mix_zones(three_way, zones, MixZoneParams(seed=5))
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_no_zones_leaves_the_data_alone(self, crossing):
        out, events = apply_mix_zones(crossing, [])
        assert events == []
        assert out == crossing

    def test_two_participants_swap_about_half_the_time(self, sparse_crossing):
        zones = detect_meetings(sparse_crossing)
        swapped = sum(
            apply_mix_zones(sparse_crossing, zones, MixZoneParams(seed=s))[1][0].swapped for s in range(1000)
        )
        assert 455 <= swapped <= 545

    def test_three_participants_draw_every_permutation_alike(self, three_way):
        zones = detect_meetings(three_way)
        counts = Counter()
        for s in range(1000):
            event = apply_mix_zones(three_way, zones, MixZoneParams(seed=s))[1][0]
            counts[tuple(event.permutation[l] for l in ("A", "B", "C"))] += 1
        assert len(counts) == 6
        assert stats.chisquare(list(counts.values())).pvalue > 0.01

    def test_unknown_participant_is_inconsistent(self, crossing):
        zone = MixZone(1, GeoPoint(0.0, 0.01), 250.0, 900.0, 1100.0, ("A", "Z"))
        with pytest.raises(ConsistencyError):
            apply_mix_zones(crossing, [zone])

    def test_swapped_suffix_carries_the_other_trace(self, crossing):
        zones = detect_meetings(crossing)
        for seed in range(50):
            out, events = apply_mix_zones(crossing, zones, MixZoneParams(seed=seed))
            if events[0].swapped:
                break
        tail = out["A"].t > zones[0].t_exit_s
        np.testing.assert_array_equal(out["A"].lon[tail], np.full(tail.sum(), 0.01))
        head = out["A"].t < zones[0].t_enter_s
        assert np.all(out["A"].lat[head] == 0.0)


class TestOwnership:
    def test_permute_keeps_a_bijection(self):
        tl = OwnershipTimeline(["A", "B", "C"])
        tl.permute(10.0, {"A": "B", "B": "C", "C": "A"})
        tl.permute(20.0, {"A": "B", "B": "A"})
        for t in (5.0, 10.0, 15.0, 25.0):
            assert sorted(tl.labels_at(t)) == ["A", "B", "C"]
        assert tl.owner("B", 15.0) == "A"
        assert tl.owner("B", 10.0) == "B"
        # after 20 s label A holds what label B held, which is physical A
        assert tl.owner("A", 25.0) == "A"
        assert tl.owner("B", 25.0) == "C"

    def test_replay_reproduces_the_sources(self, three_way):
        zones = detect_meetings(three_way)
        out, events = apply_mix_zones(three_way, zones, MixZoneParams(seed=3))
        timeline = replay_ownership(three_way.labels, zones, events)
        for tr in out:
            for t, src in zip(tr.t, timeline.sources(tr.label, tr.t)):
                assert t in set(three_way[src].t.tolist())


class TestAudit:
    def test_audit_records(self, crossing):
        zones = detect_meetings(crossing)
        _, events = apply_mix_zones(crossing, zones)
        records = zone_audit(zones, events)
        assert set(records[0]) == {
            "zone_id",
            "center_lat",
            "center_lon",
            "radius_m",
            "t_enter_s",
            "t_exit_s",
            "participants",
            "permutation",
            "points_suppressed",
            "swapped",
        }
        assert records[0]["points_suppressed"] == 26
        back_zones, back_events = zones_from_audit(records)
        assert back_zones == zones
        assert back_events == events

    def test_mismatched_audit_is_inconsistent(self, crossing):
        zones = detect_meetings(crossing)
        with pytest.raises(ConsistencyError):
            zone_audit(zones, [])
        with pytest.raises(ConsistencyError):
            zone_audit(zones, [SwapEvent(9, {"A": "A", "B": "B"}, 0)])

    def test_swap_event_must_be_a_bijection(self):
        with pytest.raises(DomainError):
            SwapEvent(1, {"A": "B", "B": "B"}, 0)
