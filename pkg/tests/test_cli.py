import csv
import json
import os
import subprocess
import sys

import pytest

from faslab.cli import EXIT_IO, EXIT_SPEC, main
from faslab.experiments import ExperimentSpec, SpecError, fmt, recipe

SMALL = {
    "schema_version": 1,
    "name": "t",
    "config": {"M": 16, "K": 16},
    "sweep": {"L": [4], "snr_db": [10], "n_r": [6], "n_p": [8], "aperture_wavelengths": [4]},
    "trials": 2,
    "seed": 3,
    "output_dir": "unused",
    "options": {"gamma": 2, "n_iter": 10, "bb_node_budget": 2000, "symbols_per_point": 1000,
                "ber_snr_db": [0, 5]},
}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fig3_schema_and_determinism(spec_file, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--fig", "3", "--spec", spec_file, "--out", str(a)]) == 0
    assert main(["sweep", "--fig", "3", "--spec", spec_file, "--out", str(b)]) == 0
    assert "dc-gomp" in capsys.readouterr().out
    rows = read_csv(a / "fig3.csv")
    assert {"method", "trial", "relative_error", "seed", "experiment"} <= rows[0].keys()
    assert {r["method"] for r in rows} == {"dc-gomp", "omp", "gomp", "ls"}
    assert len(rows) == 4 * 2
    assert (a / "fig3.csv").read_bytes() == (b / "fig3.csv").read_bytes()
    for r in rows:
        assert 0 <= float(r["relative_error"]) <= 2


def test_every_command_is_reproducible(spec_file, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("synth", "estimate", "equalize", "ber", "diagnose"):
            assert main([cmd, "--spec", spec_file, "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    for name in names:
        if name == "timing.csv":
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_rows_carry_trial_seed(spec_file, tmp_path):
    for cmd in ("synth", "estimate", "equalize", "ber"):
        assert main([cmd, "--spec", spec_file, "--out", str(tmp_path)]) == 0
    for name in ("synth.csv", "estimate.csv", "equalize.csv", "ber.csv"):
        rows = read_csv(tmp_path / name)
        assert rows and all(r["seed"] and r["trial"] and r["experiment"] == "t" for r in rows)
        seeds = {r["trial"]: r["seed"] for r in rows}
        assert len(set(seeds.values())) == 2


def test_equalize_timing_table(spec_file, tmp_path):
    args = ["equalize", "--spec", spec_file, "--out", str(tmp_path),
            "--method", "bb", "--method", "grsip", "--method", "random:100"]
    assert main(args) == 0
    rows = read_csv(tmp_path / "timing.csv")
    assert [r["method"] for r in rows] == ["bb", "grsip", "random:100"]
    assert all(float(r["Average time(s)"]) >= 0 and r["runs"] == "2" for r in rows)
    eq = read_csv(tmp_path / "equalize.csv")
    by = {}
    for r in eq:
        by.setdefault(r["trial"], {})[r["method"]] = float(r["t"])
    for t in by.values():
        assert t["bb"] >= t["grsip"] and t["bb"] >= t["random:100"]


def test_ber_output(spec_file, tmp_path):
    assert main(["ber", "--spec", spec_file, "--out", str(tmp_path), "--method", "equal", "--method", "bb"]) == 0
    rows = read_csv(tmp_path / "ber.csv")
    assert {"snr_db", "ber", "method", "aperture_wavelengths", "seed"} <= rows[0].keys()
    meta = json.loads((tmp_path / "ber_meta.json").read_text())
    assert meta["modulation"] == "qpsk" and "convention" in meta


def test_diagnose(spec_file, tmp_path):
    assert main(["diagnose", "--spec", spec_file, "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "diagnose.json").read_text())
    assert d["leakage"]["gamma_tau"] > 0 and d["leakage"]["lemma1_bound"] > 0
    assert 0 <= d["coherence"]["mu"] <= 1 + 1e-12
    assert {"C0", "C1", "c", "feasible"} <= d["error_bound"].keys()


def test_bad_method_error_json(spec_file, tmp_path, capsys):
    code = main(["estimate", "--spec", spec_file, "--out", str(tmp_path), "--method", "magic"])
    assert code == EXIT_SPEC
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "invalid_spec" and "magic" in err["message"]


def test_bad_spec_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "trials": 0}))
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path)]) == EXIT_SPEC
    json.loads(capsys.readouterr().err.strip())
    bad.write_text(json.dumps({**SMALL, "bogus": 1}))
    assert main(["synth", "--spec", str(bad)]) == EXIT_SPEC
    bad.write_text(json.dumps({**SMALL, "sweep": {**SMALL["sweep"], "L": []}}))
    assert main(["synth", "--spec", str(bad)]) == EXIT_SPEC


def test_missing_spec_file_is_io_error(tmp_path, capsys):
    assert main(["synth", "--spec", str(tmp_path / "nope.json")]) == EXIT_IO
    assert json.loads(capsys.readouterr().err.strip())["error"] == "io_error"


def test_unknown_flag(capsys):
    assert main(["synth", "--frobnicate"]) == EXIT_SPEC
    assert main(["synth", "--seed", "-1"]) == EXIT_SPEC


def test_env_overrides(spec_file, tmp_path, monkeypatch):
    monkeypatch.setenv("FASLAB_SPEC", spec_file)
    monkeypatch.setenv("FASLAB_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("FASLAB_SEED", "99")
    assert main(["synth"]) == 0
    env_rows = read_csv(tmp_path / "env" / "synth.csv")
    assert main(["synth", "--seed", "3", "--out", str(tmp_path / "flag")]) == 0
    flag_rows = read_csv(tmp_path / "flag" / "synth.csv")
    assert env_rows[0]["seed"] != flag_rows[0]["seed"]
    assert main(["synth", "--seed", "3", "--spec", spec_file, "--out", str(tmp_path / "ref")]) == 0
    monkeypatch.delenv("FASLAB_SEED")
    assert main(["synth", "--out", str(tmp_path / "spec")]) == 0
    assert (tmp_path / "ref" / "synth.csv").read_bytes() == (tmp_path / "spec" / "synth.csv").read_bytes()


def test_workers_match_serial(spec_file, tmp_path):
    assert main(["estimate", "--spec", spec_file, "--out", str(tmp_path / "one")]) == 0
    assert main(["estimate", "--spec", spec_file, "--out", str(tmp_path / "two"), "--workers", "2"]) == 0
    assert (tmp_path / "one" / "estimate.csv").read_bytes() == (tmp_path / "two" / "estimate.csv").read_bytes()


def test_console_script_entry(spec_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "faslab.cli", "diagnose", "--spec", spec_file,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


class TestSpec:
    def test_roundtrip(self):
        spec = ExperimentSpec.from_dict(SMALL)
        assert ExperimentSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()

    def test_defaults_and_paper_scale(self):
        spec = ExperimentSpec()
        assert spec.config.M == 64 and spec.config.K == 64
        assert spec.with_size(128).config.M == 128

    def test_schema_version(self):
        with pytest.raises(SpecError):
            ExperimentSpec.from_dict({**SMALL, "schema_version": 2})

    def test_recipes(self):
        spec = ExperimentSpec()
        for fig in range(3, 11):
            recipe(spec, fig)
        with pytest.raises(SpecError):
            recipe(spec, 2)

    def test_fmt(self):
        assert fmt(0.1) == "0.1"
        assert fmt(True) == "true"
        assert fmt(3) == "3"
