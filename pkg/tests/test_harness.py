import csv
import io
import json
import xml.etree.ElementTree as ET

import pytest

from wignerlab.harness import cli
from wignerlab.harness.config import HYPOTHESIS_WARNING, ConfigError, config_from_dict, load_config
from wignerlab.harness.emit import CSV_HEADER, trials_csv
from wignerlab.harness.runner import RECORDS, load_results, read_records, run
from wignerlab.harness.validate import run_suite

SEMI = {"experiment": "semicircle", "N_list": [200], "trials": 1}
LOC = {"experiment": "outlier_location", "N_list": [60], "trials": 4, "deformation": {"spikes": [{"theta": 2}]}}


def _write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_minimal_config_valid(tmp_path):
    cfg = load_config(_write(tmp_path, SEMI))
    assert cfg.experiment == "semicircle" and cfg.master_seed == 0 and cfg.beta == 1
    assert cfg.config_hash() == config_from_dict(dict(SEMI)).config_hash()
    assert cfg.with_seed(3).config_hash() != cfg.config_hash()


@pytest.mark.parametrize(
    "d, path",
    [
        ({**LOC, "deformation": {"spikes": [{"theta": 0}]}}, "deformation.spikes[0].theta"),
        ({**SEMI, "N_list": [0]}, "N_list[0]"),
        ({**SEMI, "trials": -1}, "trials"),
        ({**SEMI, "experiment": "nope"}, "experiment"),
        ({**SEMI, "ensemble": {"beta": 3}}, "ensemble.beta"),
        ({**LOC, "deformation": {"spikes": [{"theta": 2}, {"theta": 3}]}}, "deformation.spikes[1].theta"),
        ({"experiment": "tightness", "N_list": [50], "trials": 2, "deformation": {"spikes": [{"theta": 2}]}}, "N_list"),
    ],
)
def test_config_errors_name_the_field(d, path):
    with pytest.raises(ConfigError) as ei:
        config_from_dict(d)
    assert ei.value.path == path


def test_parse_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_case_b_warns_on_wide_span():
    cfg = config_from_dict(
        {"experiment": "caseB_law", "N_list": [4], "trials": 1, "deformation": {"spikes": [{"theta": 2, "multiplicity": 3}]}}
    )
    assert any(HYPOTHESIS_WARNING in w for w in cfg.warnings)


def test_det_experiment_passes(tmp_path):
    d = {
        "experiment": "det_characterization",
        "N_list": [16],
        "trials": 5,
        "deformation": {"spikes": [{"theta": 3}, {"theta": 1.5}, {"theta": -2}], "mode": {"kind": "delocalized"}},
    }
    b = run(config_from_dict(d), tmp_path / "out")
    assert b.passed and b.manifest["failure_count"] == 0


def test_zero_trials_skipped(tmp_path):
    b = run(config_from_dict({**SEMI, "trials": 0}), tmp_path / "z")
    assert [v["status"] for v in b.verdicts] == ["SKIPPED"]
    assert sorted(p.name for p in (tmp_path / "z").iterdir()) == ["config.json", "manifest.json", RECORDS]
    assert b.passed


def test_csv_and_svg_outputs(tmp_path):
    out = tmp_path / "loc"
    run(config_from_dict(LOC), out)
    rows = list(csv.DictReader(io.StringIO((out / "trials.csv").read_text())))
    assert list(rows[0]) == CSV_HEADER
    assert len(rows) == 4 and all(float(r["rho"]) == 2.5 for r in rows)
    svgs = list((out / "plots").glob("*.svg"))
    assert svgs
    for s in svgs:
        ET.parse(s)
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] and "numpy" in man["versions"]


def test_rerun_byte_identical(tmp_path):
    run(config_from_dict(LOC), tmp_path / "a")
    run(config_from_dict(LOC), tmp_path / "b")
    for name in ("trials.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for p in (tmp_path / "a" / "plots").glob("*.svg"):
        assert p.read_bytes() == (tmp_path / "b" / "plots" / p.name).read_bytes()


def test_parallel_equals_serial():
    cfg = config_from_dict(LOC)
    a = run(cfg, threads=1)
    b = run(cfg, threads=3)
    assert trials_csv(a.records) == trials_csv(b.records)


def test_resume_after_interruption(tmp_path):
    out = tmp_path / "r"
    cfg = config_from_dict(LOC)
    full = run(cfg, out)
    path = out / RECORDS
    lines = path.read_text().splitlines()
    # keep two trials and a torn third line
    path.write_text("\n".join(lines[:2]) + "\n" + lines[2][:10])
    assert len(read_records(path)) == 2
    again = run(cfg, out)
    assert trials_csv(again.records) == trials_csv(full.records)


def test_output_dir_of_other_config_rejected(tmp_path):
    run(config_from_dict(LOC), tmp_path / "x")
    with pytest.raises(RuntimeError):
        run(config_from_dict({**LOC, "master_seed": 9}), tmp_path / "x")


def test_load_results_recomputes(tmp_path):
    b = run(config_from_dict(LOC), tmp_path / "l")
    again = load_results(tmp_path / "l")
    assert again.verdicts == b.verdicts


def test_validate_suites_pass():
    checks = run_suite("appendix") + run_suite("blocks")
    assert checks and all(c["ok"] for c in checks)


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", _write(tmp_path, SEMI), "--out", str(tmp_path / "s")]) == 0
    assert "PASS" in capsys.readouterr().out
    bad = _write(tmp_path, {**LOC, "deformation": {"spikes": [{"theta": 0}]}}, "bad.json")
    assert cli.main(["run", bad]) == 2
    assert "deformation.spikes[0].theta" in capsys.readouterr().err
    assert cli.main(["validate", "--suite", "blocks"]) == 0


def test_cli_report(tmp_path, capsys):
    out = tmp_path / "rep"
    assert cli.main(["run", _write(tmp_path, LOC), "--out", str(out)]) == 0
    (out / "trials.csv").unlink()
    assert cli.main(["report", str(out), "--format", "csv"]) == 0
    assert (out / "trials.csv").exists()
    assert cli.main(["report", str(tmp_path / "missing")]) == 2


def test_cli_seed_override(tmp_path):
    cfg = _write(tmp_path, LOC)
    cli.main(["run", cfg, "--out", str(tmp_path / "s1"), "--seed", "1"])
    cli.main(["run", cfg, "--out", str(tmp_path / "s2"), "--seed", "2"])
    assert (tmp_path / "s1" / "trials.csv").read_text() != (tmp_path / "s2" / "trials.csv").read_text()
