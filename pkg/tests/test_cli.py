import json
import os

import pytest

from MixTrace.__main__ import main

SMALL = ["--synth.n-users", "6", "--synth.n-planted-meetings", "2", "--seed", "11"]


def _read(path):
    with open(path, "rb") as f:
        return f.read()


@pytest.fixture
def generated(tmp_path):
    out = str(tmp_path / "gen")
    assert main(["generate", "--output-dir", out, *SMALL]) == 0
    return out


def _anonymize(source, out, *extra):
    return main(["anonymize", "--input", os.path.join(source, "generated.csv"), "--output-dir", out, *extra])


def test_generate_writes_dataset_and_truth(generated):
    for name in ("generated.csv", "truth_pois.csv", "truth_meetings.jsonl"):
        assert os.path.exists(os.path.join(generated, name))
    with open(os.path.join(generated, "truth_meetings.jsonl"), encoding="utf-8") as f:
        assert len(f.readlines()) == 2


def test_full_pipeline(generated):
    assert _anonymize(generated, generated) == 0
    for name in ("validated.csv", "smoothed.csv", "anonymized.csv", "audit.jsonl", "utility.json"):
        assert os.path.exists(os.path.join(generated, name))

    assert main(["attack", "--output-dir", generated]) == 0
    with open(os.path.join(generated, "privacy.json"), encoding="utf-8") as f:
        privacy = json.load(f)
    assert privacy["n_truth_pois"] == 18
    assert privacy["poi_recall_before"] >= 0.9
    assert privacy["poi_recall_after"] == 0.0
    assert privacy["linkage_accuracy"] is not None

    assert main(["evaluate", "--output-dir", generated]) == 0
    with open(os.path.join(generated, "evaluation.json"), encoding="utf-8") as f:
        evaluation = json.load(f)
    assert set(evaluation) == {"utility", "privacy", "n_zones"}
    assert evaluation["n_zones"] >= 2
    assert evaluation["utility"]["suppression_rate"] < 0.05

    assert main(["plotdata", "--output-dir", generated]) == 0
    for stage in ("a_original", "b_smoothed", "c_swapped"):
        assert len(os.listdir(os.path.join(generated, "plot", stage))) == 6


def test_reruns_are_byte_identical(generated, tmp_path):
    one, two = str(tmp_path / "one"), str(tmp_path / "two")
    assert _anonymize(generated, one) == 0
    assert _anonymize(generated, two, "--workers", "1") == 0
    for name in ("smoothed.csv", "anonymized.csv", "audit.jsonl", "utility.json"):
        assert _read(os.path.join(one, name)) == _read(os.path.join(two, name))


def test_no_swap_leaves_an_empty_audit(generated, tmp_path):
    out = str(tmp_path / "noswap")
    assert _anonymize(generated, out, "--no-swap") == 0
    assert _read(os.path.join(out, "audit.jsonl")) == b""
    assert _read(os.path.join(out, "anonymized.csv")) == _read(os.path.join(out, "smoothed.csv"))


def test_no_smooth_keeps_the_validated_points(generated, tmp_path):
    out = str(tmp_path / "nosmooth")
    assert _anonymize(generated, out, "--no-smooth", "--no-swap") == 0
    assert _read(os.path.join(out, "smoothed.csv")) == _read(os.path.join(out, "validated.csv"))


def test_plotdata_needs_every_stage(tmp_path):
    out = str(tmp_path / "empty")
    os.makedirs(out)
    assert main(["plotdata", "--output-dir", out]) == 2
    assert not os.path.exists(os.path.join(out, "plot", "a_original"))


def test_invalid_input_exits_1(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("user_id,timestamp_s,lat_deg,lon_deg\nu,0,95,0\nu,1,95,0\n", encoding="utf-8")
    assert main(["anonymize", "--input", str(path), "--output-dir", str(tmp_path / "o")]) == 1


def test_failure_removes_partial_outputs(tmp_path):
    path = tmp_path / "still.csv"
    path.write_text("user_id,timestamp_s,lat_deg,lon_deg\nu,0,1,1\nu,60,1,1\n", encoding="utf-8")
    out = str(tmp_path / "o")
    code = main(["anonymize", "--input", str(path), "--output-dir", out, "--smoothing.zero-length-policy", "error"])
    assert code == 2
    assert not os.path.exists(os.path.join(out, "validated.csv"))


@pytest.mark.parametrize(
    "argv",
    [
        ["anonymize", "--smoothing.output-mode", "bogus", "--input", "x.csv"],
        ["anonymize", "--no-such-flag", "1"],
        ["frobnicate"],
        ["anonymize", "--output-dir", "unused"],
    ],
)
def test_bad_configuration_exits_3(argv, tmp_path):
    assert main(argv) == 3


def test_config_file_is_read(generated, tmp_path):
    conf = tmp_path / "run.yml"
    conf.write_text(f"input: {os.path.join(generated, 'generated.csv')}\nswap: false\n", encoding="utf-8")
    out = str(tmp_path / "fromfile")
    assert main(["anonymize", "--config", str(conf), "--output-dir", out]) == 0
    assert _read(os.path.join(out, "audit.jsonl")) == b""


def test_logging_setup_only_quiets_asyncio():
    import logging

    from MixTrace.logging import LOGGER

    assert logging.getLogger("asyncio").level == logging.ERROR
    assert logging.getLogger("numexpr").level == logging.NOTSET
    assert LOGGER("MixTrace.cli") is logging.getLogger("MixTrace.cli")
