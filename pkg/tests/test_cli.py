import json

import numpy as np
import pytest

from cauchytime.cli import EXIT_CHECK, EXIT_INPUT, EXIT_OK, EXIT_SYNTH, main

MINK = """
[model]
family = "Minkowski2d"
resolution = [31, 31]
t_range = [-2.0, 2.0]
x_range = [-2.0, 2.0]

[geroch]
foliation_levels = [0.0]
cauchy_threshold = 2.0
"""

CYL = """
[model]
family = "CylinderProduct"
resolution = [61, 40]
t_range = [-3.0, 3.0]
circumference = 4.0

[group]
rotation = 4

[surfaces]
minus = -1.0
plus = 1.0
levels = [{ u = 0.0, value = 0.0 }]
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(tmp_path, *argv, out="out"):
    return main([*argv, "--out", str(tmp_path / out)])


def test_build_and_geroch(tmp_path, capsys):
    cfg = write(tmp_path, MINK + "\n[export]\nedge_list = true\n")
    assert run(tmp_path, "build", "--config", str(cfg)) == EXIT_OK
    assert (tmp_path / "out" / "edges.txt").exists()
    assert run(tmp_path, "geroch", "--config", str(cfg)) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["passed"]
    assert (tmp_path / "out" / "geroch.csv").exists()
    assert "status: PASS" in capsys.readouterr().out


def test_input_errors(tmp_path):
    assert run(tmp_path, "build", "--config", str(tmp_path / "missing.toml")) == EXIT_INPUT
    bad = write(tmp_path, MINK + "\n[graph]\nradiuss = 2\n", "bad.toml")
    assert run(tmp_path, "build", "--config", str(bad)) == EXIT_INPUT
    cfg = write(tmp_path, MINK)
    assert run(tmp_path, "build", "--config", str(cfg), "--threads", "0") == EXIT_INPUT
    assert run(tmp_path, "verify", "--config", str(cfg)) == EXIT_INPUT
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", str(cfg)])


def test_expect_noncauchy(tmp_path):
    carved = write(tmp_path, """
[model]
family = "CarvedMinkowski"
resolution = [61, 61]
t_range = [-1.0, 1.0]

[geroch]
chains = [-0.1, -0.6]
""", "carved.toml")
    assert run(tmp_path, "geroch", "--config", str(carved), "--expect-noncauchy", "tplus") == EXIT_OK
    flat = write(tmp_path, MINK + "chains = [-0.1, -0.6]\n", "flat.toml")
    assert run(tmp_path, "geroch", "--config", str(flat), "--expect-noncauchy", "tplus") == EXIT_CHECK


def test_verify_roundtrip(tmp_path):
    cfg = write(tmp_path, MINK)
    assert run(tmp_path, "export", "--config", str(cfg), out="ex") == EXIT_OK
    field = tmp_path / "ex" / "geroch.csv"
    assert run(tmp_path, "verify", "--config", str(cfg), "--field", str(field), "--seed", "3") == EXIT_OK
    # a reversed field fails monotonicity
    lines = field.read_text().splitlines()
    header, rows = lines[0], [ln.split(",") for ln in lines[1:]]
    flipped = [",".join(r[:-1] + [repr(-float(r[-1])) if r[-1] not in ("", "nan") else r[-1]]) for r in rows]
    bad = tmp_path / "flipped.csv"
    bad.write_text("\n".join([header] + flipped) + "\n")
    assert run(tmp_path, "verify", "--config", str(cfg), "--field", str(bad)) == EXIT_CHECK


def test_synthesis_failure_exit_code(tmp_path):
    cfg = write(tmp_path, MINK + "\n[steep]\ncap = 1.0\n")
    assert run(tmp_path, "steep", "--config", str(cfg)) == EXIT_SYNTH
    assert (tmp_path / "out" / "trace.txt").read_text().strip()


def test_invariant_is_deterministic_across_threads(tmp_path):
    cfg = write(tmp_path, CYL)
    assert run(tmp_path, "invariant", "--config", str(cfg), "--threads", "1", out="a") == EXIT_OK
    assert run(tmp_path, "invariant", "--config", str(cfg), "--threads", "8", out="b") == EXIT_OK
    for name in ("report.txt", "summary.json", "invariant.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    f = np.genfromtxt(tmp_path / "a" / "invariant.csv", delimiter=",", names=True)
    assert np.isfinite(f[f.dtype.names[-1]]).all()
