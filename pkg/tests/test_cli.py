import json

import pandas as pd
import pytest

from caplab.runner.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, build_parser, main

ANNULUS = """
name = "{name}"

[geometry]
fixture = "annulus-log"

[solver]
correct_boundary = true

[grid]
n = {n}

[[analyses]]
kind = "oracle"
tolerance = {tolerance}
"""

CAPACITOR = """
name = "capacitor"

[geometry]
fixture = "capacitor-example"

[grid]
n = 65
"""


@pytest.fixture
def write_config(tmp_path):
    def write(name: str = "annulus", n: int = 65, tolerance: float = 0.05):
        path = tmp_path / f"{name}.toml"
        path.write_text(
            ANNULUS.format(name=name, n=n, tolerance=tolerance), encoding="utf-8"
        )
        return path

    return write


def test_fixtures_command(capsys):
    assert main(["fixtures", "-q"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("annulus-log", "capacitor-example", "cassini", "rkc-disk"):
        assert name in out


def test_run_passes(write_config, tmp_path, capsys):
    config = write_config()
    out_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(out_dir), "-q"]) == EXIT_OK
    assert "annulus: PASS" in capsys.readouterr().out
    assert (out_dir / "annulus" / "report.json").is_file()


def test_run_reports_failure(write_config, tmp_path, capsys):
    config = write_config(name="strict", tolerance=1e-12)
    code = main(["run", str(config), "--out", str(tmp_path / "out"), "-q"])
    assert code == EXIT_FAILED
    assert "strict: FAIL" in capsys.readouterr().out


def test_config_errors_exit_with_two(write_config, tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml"), "-q"]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    config = write_config(name="even", n=32)
    assert main(["run", str(config), "-q"]) == EXIT_CONFIG


def test_dump_field(write_config, tmp_path):
    out = tmp_path / "dump" / "field.csv"
    assert main(["dump-field", str(write_config()), "--out", str(out), "-q"]) == 0
    frame = pd.read_csv(out)
    assert set(frame["kind"]) == {"interior", "outer", "hole0"}


def test_trace_closed_level_curve(write_config, tmp_path):
    out = tmp_path / "contours.json"
    argv = ["trace", str(write_config()), "--seed", "1.5", "0", "--out", str(out)]
    assert main(argv + ["-q"]) == EXIT_OK
    (document,) = json.loads(out.read_text(encoding="utf-8"))
    assert document["seed"] == [1.5, 0.0]
    assert len(document["arcs"]) == 1
    assert document["terminals"] == []


def test_trace_projects_a_complex_field(tmp_path):
    config = tmp_path / "capacitor.toml"
    config.write_text(CAPACITOR, encoding="utf-8")
    out = tmp_path / "contours.json"
    argv = ["trace", str(config), "--seed", "2", "0", "--standoff", "6"]
    assert main(argv + ["--out", str(out), "-q"]) in (EXIT_OK, EXIT_FAILED)
    (document,) = json.loads(out.read_text(encoding="utf-8"))
    # the projection vanishes at the seed; Re H(2) alone would be about -0.23
    assert abs(document["level"]) < 1e-9
    assert document["seed"] == [2.0, 0.0]
    assert document["arcs"]


def test_parser_defaults():
    args = build_parser().parse_args(["run", "a.toml"])
    assert args.out == "out"
    assert args.grid is None
    assert args.jobs == 1
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
