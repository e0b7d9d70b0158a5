import asyncio
import json

import numpy as np
import pytest

import config
from MixTrace.core.io import (
    read_audit,
    read_dataset,
    read_stage,
    read_truth_pois,
    write_dataset,
    write_json,
    write_jsonl,
    write_plot_stage,
)
from MixTrace.core.trace import Dataset, Trace, ValidationReport
from MixTrace.mechanisms.mixzone import apply_mix_zones, detect_meetings, zone_audit
from MixTrace.utils.exceptions import ConsistencyError, EmptyDataset, MissingStage, ValidationError
from MixTrace.utils.synthgen import write_truth

HEADER = "user_id,timestamp_s,lat_deg,lon_deg\n"


def _csv(tmp_path, body, name="data.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body, encoding="utf-8")
    return str(path)


class TestReadDataset:
    def test_header_only_is_empty(self, tmp_path):
        with pytest.raises(EmptyDataset):
            read_dataset(_csv(tmp_path, ""))

    def test_missing_file_is_invalid(self, tmp_path):
        with pytest.raises(ValidationError):
            read_dataset(str(tmp_path / "nope.csv"))

    def test_missing_columns_are_invalid(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("user_id,t,lat,lon\nu,0,0,0\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            read_dataset(str(path))

    def test_bad_rows_are_rejected_with_line_numbers(self, tmp_path):
        report = ValidationReport()
        body = "u,0,0.0,0.0\nu,10,91.0,0.0\nu,20,0.0,0.001\nu,abc,0.0,0.0\nu,30,0.0,inf\n"
        dataset = read_dataset(_csv(tmp_path, body), report)
        assert len(dataset["u"]) == 2
        assert report.rejected == 3
        assert sorted(line for line, _ in report.reasons) == [3, 5, 6]

    def test_ragged_rows_and_blank_lines_keep_true_line_numbers(self, tmp_path):
        report = ValidationReport()
        body = "u,0,0.0,0.0\nu,5,0.0,0.0005,extra\nu,10,0.0,0.001\n\nu,20,91.0,0.0\nu,30,0.0,0.002\n"
        dataset = read_dataset(_csv(tmp_path, body), report)
        np.testing.assert_array_equal(dataset["u"].t, [0, 10, 30])
        assert [line for line, _ in report.reasons] == [3, 6]
        assert "5 fields" in report.reasons[0][1]

    def test_unsorted_rows_with_duplicates(self, tmp_path):
        report = ValidationReport()
        body = "b,5,1.0,1.0\na,10,0.0,0.1\na,0,0.0,0.0\na,10,0.0,0.2\nb,0,1.0,1.1\n"
        dataset = read_dataset(_csv(tmp_path, body), report)
        assert dataset.labels == ["a", "b"]
        np.testing.assert_array_equal(dataset["a"].t, [0, 10])
        assert dataset["a"].lon[1] == 0.1
        assert report.duplicates == 1

    def test_round_trip(self, tmp_path, meeting_fixture):
        dataset, _, _ = meeting_fixture
        path = write_dataset(dataset, str(tmp_path / "out" / "d.csv"))
        back = read_dataset(path)
        assert back.labels == dataset.labels
        for label in dataset.labels:
            np.testing.assert_allclose(back[label].t, dataset[label].t, atol=1e-3)
            np.testing.assert_allclose(back[label].lat, dataset[label].lat, atol=1e-7)
            np.testing.assert_allclose(back[label].lon, dataset[label].lon, atol=1e-7)

    def test_written_format(self, tmp_path):
        ds = Dataset.from_traces([Trace("u", [0, 1.5], [1.0, 2.0], [3.0, -4.0])])
        path = write_dataset(ds, str(tmp_path / "d.csv"))
        with open(path, encoding="utf-8") as f:
            assert f.read() == HEADER + "u,0.000,1.0000000,3.0000000\nu,1.500,2.0000000,-4.0000000\n"
        assert path in config.autoclean

    def test_missing_stage(self, tmp_path):
        with pytest.raises(MissingStage) as info:
            read_stage(str(tmp_path / "smoothed.csv"), "smoothed")
        assert "smoothed" in str(info.value)


class TestAuditFiles:
    def test_audit_round_trip(self, tmp_path, crossing):
        zones = detect_meetings(crossing)
        _, events = apply_mix_zones(crossing, zones)
        path = str(tmp_path / "audit.jsonl")
        asyncio.run(write_jsonl(path, zone_audit(zones, events)))
        back_zones, back_events = read_audit(path)
        assert back_zones == zones
        assert back_events == events

    def test_empty_audit(self, tmp_path):
        path = str(tmp_path / "audit.jsonl")
        asyncio.run(write_jsonl(path, []))
        assert read_audit(path) == ([], [])

    def test_missing_audit(self, tmp_path):
        with pytest.raises(MissingStage):
            read_audit(str(tmp_path / "audit.jsonl"))

    def test_corrupt_audit(self, tmp_path):
        path = tmp_path / "audit.jsonl"
        path.write_text('{"zone_id": 1}\nnot json\n', encoding="utf-8")
        with pytest.raises(ConsistencyError):
            read_audit(str(path))
        path.write_text('{"zone_id": 1}\n', encoding="utf-8")
        with pytest.raises(ConsistencyError):
            read_audit(str(path))

    def test_json_report_is_sorted_and_indented(self, tmp_path):
        path = str(tmp_path / "r.json")
        asyncio.run(write_json(path, {"b": 1, "a": None}))
        with open(path, encoding="utf-8") as f:
            text = f.read()
        assert text == '{\n  "a": null,\n  "b": 1\n}\n'
        assert json.loads(text) == {"a": None, "b": 1}


def test_truth_pois_read_back(tmp_path, meeting_fixture):
    _, truth, meetings = meeting_fixture
    pois_path, _ = write_truth(truth, meetings, str(tmp_path))
    back = read_truth_pois(pois_path)
    assert [p.label for p in back] == [p.label for p in truth]
    for a, b in zip(back, truth):
        assert a.centroid.lat_deg == pytest.approx(b.centroid.lat_deg, abs=1e-7)
        assert a.n_points == b.n_points


def test_truth_files_are_cleaned_up_on_failure(tmp_path, meeting_fixture):
    _, truth, meetings = meeting_fixture
    paths = write_truth(truth, meetings, str(tmp_path))
    assert all(path in config.autoclean for path in paths)


def test_plot_stage_files(tmp_path):
    ds = Dataset.from_traces([Trace("u/1", [0, 1], [1.0, 2.0], [3.0, 4.0]), Trace("v", [0, 1], [0, 0], [0, 1])])
    paths = write_plot_stage(ds, str(tmp_path / "plot" / "a_original"))
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["u_1.csv", "v.csv"]
    with open(paths[0], encoding="utf-8") as f:
        assert f.readline() == "trace_label,order,lat_deg,lon_deg,t_s\n"
        assert f.readline() == "u/1,0,1.0000000,3.0000000,0.000\n"
