import csv
import json
from pathlib import Path

import pytest
import tomli_w

from transport.cli import FIELDS, main

ROOT = Path(__file__).resolve().parents[1]
CFG = ROOT / "configs" / "free_particle.toml"
FAST = ["--override", "estimator.K=256", "--override", "estimator.T=5.0", "--override", "estimator.T_corr=5.0"]


def rows(out):
    with open(out / "results.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_scan_emits_rows_and_fit(tmp_path):
    out = tmp_path / "scan"
    assert main(["scan", "--config", str(CFG), "--out", str(out)]) == 0
    r = rows(out)
    assert [x["method"] for x in r] == ["nemd"] * 3 + ["nemd_scan"]
    assert [x["eta_or_r"] for x in r[:3]] == ["0.1", "0.2", "0.4"]
    fit = r[-1]
    assert abs(float(fit["value"]) - 1.0) <= 3 * float(fit["stderr"])
    raw = (out / "results.csv").read_bytes()
    assert b"\r" not in raw and raw.splitlines()[0].decode() == ",".join(FIELDS)
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 2024 and man["failed_replicas"] == 0 and "numpy" in man["versions"]


def test_determinism_and_manifest_reproduces(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out, w in ((a, "1"), (b, "2")):
        assert main(["gk", "--config", str(CFG), "--out", str(out), "--workers", w] + FAST) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "curves" / "gk.csv").exists()
    # the manifest's config echo alone reproduces the run
    man = json.loads((a / "manifest.json").read_text())
    cfg = tmp_path / "again.toml"
    cfg.write_text(tomli_w.dumps(man["config"]))
    assert main(["gk", "--config", str(cfg), "--out", str(c)]) == 0
    assert (a / "results.csv").read_bytes() == (c / "results.csv").read_bytes()


def test_single_replica_many_workers(tmp_path):
    outs = []
    for w in ("1", "8"):
        out = tmp_path / w
        assert main(["nemd", "--config", str(CFG), "--out", str(out), "--workers", w,
                     "--override", "estimator.K=1", "--override", "estimator.T=5.0"]) == 0
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("cmd,methods", [("einstein", {"einstein_Bartlett", "msd_mobility"}),
                                         ("ttcf", {"ttcf"}),
                                         ("transient", {"transient", "transient_subtraction"}),
                                         ("norton", {"norton_lambda", "norton"})])
def test_other_commands(tmp_path, cmd, methods):
    out = tmp_path / cmd
    assert main([cmd, "--config", str(CFG), "--out", str(out)] + FAST) == 0
    assert {r["method"] for r in rows(out)} == methods


def test_sample_bias_study(tmp_path):
    out = tmp_path / "s"
    cfg = tmp_path / "ou.toml"
    cfg.write_text('seed = 1\n[model]\nkind = "Harmonic"\n[scheme]\nkind = "EulerMaruyama"\ndt = 0.1\n'
                   '[estimator]\nK = 256\nT = 50.0\ndts = [0.05, 0.1, 0.2]\nreference = 0.5\n')
    assert main(["sample", "--config", str(cfg), "--out", str(out)]) == 0
    r = rows(out)
    assert [x["method"] for x in r] == ["sample_V"] * 3 + ["bias_slope"]


def test_report(tmp_path, capsys):
    out = tmp_path / "n"
    assert main(["norton", "--config", str(CFG), "--out", str(out)] + FAST) == 0
    assert main(["report", str(out), "--out", str(tmp_path / "rep")]) == 0
    assert "norton" in capsys.readouterr().out
    with open(tmp_path / "rep" / "report.csv", newline="") as fh:
        rep = list(csv.DictReader(fh))
    assert len(rep) == 4 and rep[0]["run"] == str(out)
    assert main(["report", str(tmp_path / "missing"), "--out", str(tmp_path / "rep2")]) != 0


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\nkind = "FreeParticel"\n[scheme]\nkind = "BAOAB"\n')
    assert main(["gk", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "FreeParticle" in err and "dt" in err
    assert main(["scan", "--config", str(CFG), "--override", "forcing.eta=[]", "--out", str(tmp_path / "x")]) == 2
