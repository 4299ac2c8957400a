import csv
import json
import os
import subprocess
import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

from infdyn.cli import COMMANDS, THETA_HEADER, main, manifest_hash, theta_scan
from infdyn.staircase import WidthSequence

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    return lines[0].split(": ")[1], list(csv.reader(lines[1:]))


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_boxes_matches_closed_form(tmp_path):
    assert main(["boxes", "--config", str(CONFIGS / "boxes.json"), "--out", str(tmp_path)]) == 0
    digest, rows = read_csv(tmp_path / "boxes.csv")
    assert rows[0] == ["m", "size", "escape", "closed_form"]
    for m, size, esc, closed in rows[1:]:
        assert F(esc) == F(2, int(m) + 2) == F(closed)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["certified_from_m"] == 198 and summary["manifest"] == digest
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["hash"] == digest and set(manifest["files"]) == {"boxes.csv", "summary.json"}


def test_hopf_regression_fixture(tmp_path):
    fixture = json.loads((FIXTURES / "hopf_final_row.json").read_text())
    code = main(["hopf", "--config", str(ROOT / fixture["config"]), "--out", str(tmp_path),
                 "--backend", fixture["backend"]])
    assert code == 0
    _, rows = read_csv(tmp_path / "hopf.csv")
    final = dict(zip(rows[0], rows[-1]))
    assert final["ell"] == fixture["final_row"]["ell"]
    for key in ("numerator", "denominator", "ratio", "target", "deviation"):
        assert abs(float(final[key]) - float(fixture["final_row"][key])) <= 1e-12 * max(1.0, abs(float(final[key])))


@pytest.mark.parametrize("bad", [
    '{"w": {"constant": "1/0"}, "m_values": [1]}',
    '{"w": {"constant": 0.5}, "m_values": [1]}',
    '{"w": {"constant": "1/2"}, "m_values": [1], "epsilon": NaN}',
    '{"w": {"decay": "something_else"}, "m_values": [1]}',
    '{"schema": 7, "w": {"constant": "1/2"}, "m_values": [1]}',
    '[1, 2]',
    '{not json',
])
def test_bad_configs_exit_two(tmp_path, capsys, bad):
    code = main(["boxes", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert set(err) >= {"error", "message"}


def test_malformed_rational_subprocess(tmp_path):
    cfg = write_cfg(tmp_path, {"w": {"constant": "1/0"}, "m_values": [1]})
    proc = subprocess.run([sys.executable, "-m", "infdyn.cli", "boxes", "--config", cfg, "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "InvalidScalar"


def test_nonconvergence_exit_two(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"w": {"constant": "1/3"}, "direction": "2/7", "a": "3/10",
                               "cells": 64, "tol": "1/1000000000000000", "max_iter": 3})
    assert main(["maharam", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NonConvergence" and len(err["residuals"]) == 3


# ---------------------------------------------------------------- theta scan


RING1 = WidthSequence.ringed_at(1, [F(1, 2)])


def test_theta_scan_flags_vertical():
    rows = theta_scan(RING1, 1, 10, [F(0), F(2469134, 2000003)])
    assert rows[0][0] == 0 and rows[0][1] is True
    assert rows[1][1] is False and rows[1][2] > 0 and rows[1][3] > 0


def test_theta_scan_budget_monotone():
    slopes = [F(k, 29) for k in range(58)]
    free = [sum(not r[1] for r in theta_scan(RING1, 1, ell, slopes)) for ell in (40, 10, 1)]
    assert free[0] < free[1] < free[2]


def test_theta_scan_empty_grid(tmp_path):
    cfg = write_cfg(tmp_path, {"w": {"ringed": {"N": 1, "inner": ["1/2"]}}, "N": 1, "ell": 5, "slopes": []})
    assert main(["theta-scan", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    _, rows = read_csv(tmp_path / "o" / "theta_scan.csv")
    assert rows == [THETA_HEADER]


def test_theta_scan_threads_agree():
    slopes = [F(k, 17) for k in range(1, 20)]
    assert theta_scan(RING1, 1, 8, slopes, threads=3) == theta_scan(RING1, 1, 8, slopes)


# ---------------------------------------------------------------- every subcommand, twice


@pytest.mark.parametrize("kind", sorted(COMMANDS))
def test_subcommands_are_deterministic(tmp_path, kind):
    cfg = CONFIGS / f"{kind}.json"
    backend = "float64" if kind == "hopf" else "rational"
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main([kind, "--config", str(cfg), "--out", str(out), "--backend", backend]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
    assert files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        text = (outs[0] / name).read_text()
        assert "\r" not in text
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["hash"] == manifest_hash(kind, json.loads(cfg.read_text()))
    for name in files:
        assert manifest["hash"] in (outs[0] / name).read_text()


def test_orbit_backends_agree(tmp_path):
    for backend in ("rational", "float64"):
        assert main(["orbit", "--config", str(CONFIGS / "orbit.json"), "--out", str(tmp_path / backend),
                     "--backend", backend]) == 0
    _, a = read_csv(tmp_path / "rational" / "orbit.csv")
    _, b = read_csv(tmp_path / "float64" / "orbit.csv")
    assert a == b and len(a) == 201


def test_theta_scan_saddle_radius():
    slopes = [F(0), F(1, 100), F(3, 200), F(2469134, 2000003)]
    near = {r[0]: r[-1] for r in theta_scan(RING1, 1, 10, slopes, saddle_radius=F(1, 100))}
    assert near == {F(0): True, F(1, 100): True, F(3, 200): near[F(3, 200)], F(2469134, 2000003): False}
    flagged = {r[0] for r in theta_scan(RING1, 1, 10, slopes) if r[1]}
    assert near[F(3, 200)] == (F(3, 200) in flagged or any(abs(F(3, 200) - b) <= F(1, 100) for b in flagged))
    assert [r[-1] for r in theta_scan(RING1, 1, 10, slopes)] == [r[1] for r in theta_scan(RING1, 1, 10, slopes)]
    with pytest.raises(ValueError):
        theta_scan(RING1, 1, 10, slopes, saddle_radius=-1)
