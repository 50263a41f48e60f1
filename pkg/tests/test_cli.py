import json

import numpy as np
import pytest

from vibdamage import formats
from vibdamage.cli import main

from cli_config import SMALL

STAGES = ["simulate", "preprocess", "noise", "regularize", "sacom", "enkf", "report"]


def _pipeline(tmp_path, name, threads, extra=()):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    out = tmp_path / name
    for stage in STAGES:
        args = [stage, "--config", str(cfg), "--out", str(out), "--threads", str(threads)]
        if stage == "sacom":
            args += ["--event", "w=0,0.1", *extra]
        assert main(args) == 0, stage
    return out


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    return _pipeline(base, "one", 1), _pipeline(base, "three", 3)


def _files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*")
                  if p.is_file() and p.name != "manifest.json")


def test_pipeline_writes_every_output(runs):
    out = runs[0]
    names = {str(p) for p in _files(out)}
    for expected in ["measurements/case1_set2.csv", "modal/case0_set1.csv", "noise.csv",
                     "regularize/case1_stats.csv", "enkf/case1_set1.csv",
                     "sacom/case1_marginal_pos_A.csv", "sacom/events.csv",
                     "report/summary.csv", "report/regularize_case1.png"]:
        assert expected in names
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["stages"]) == set(STAGES)
    assert manifest["seeds"]["sacom"] == 11
    d, meta = formats.read_damage(out / "regularize" / "case1_set1.csv", 10)
    assert meta["case"] == 1 and np.all(d >= 0)


def test_outputs_do_not_depend_on_thread_count(runs):
    one, three = runs
    assert _files(one) == _files(three)
    for rel in _files(one):
        if rel.suffix == ".png":
            continue
        assert (one / rel).read_bytes() == (three / rel).read_bytes(), rel


def test_report_with_nothing(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path / "empty")]) == 0
    assert "nothing to report" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("beam:\n  elementz: 3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"),
                 "--out", str(tmp_path)]) == 3
    assert main(["preprocess", "--out", str(tmp_path / "nothing")]) == 3
    assert main(["simulate", "--threads", "0", "--out", str(tmp_path)]) == 1


def test_bad_event_is_a_validation_error(runs, tmp_path):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    args = ["sacom", "--config", str(cfg), "--out", str(tmp_path / "x"),
            "--input", str(runs[0] / "modal"), "--noise", str(runs[0] / "noise.csv")]
    assert main(args + ["--event", "q=0,1"]) == 1
    assert main(args + ["--event", "w=0"]) == 1
