import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from caplab.geometry.curves import dump_capacitor_spec
from caplab.runner.fixtures import annulus_log
from caplab.runner.pipeline import ScenarioRunner
from caplab.runner.scenario import ConfigError, load_scenario, parse_scenario

CONFIG_DIR = Path(__file__).parents[1] / "configs"
CORRECTED = {"kind": "harmonic", "correct_boundary": True}


@pytest.fixture
def scenario_for():
    def build(fixture: str, analyses: list[dict], n: int = 65, **extra):
        document = {
            "name": extra.pop("name", fixture),
            "geometry": {"fixture": fixture, "params": extra.pop("params", {})},
            "grid": {"n": n},
            "analyses": analyses,
            **extra,
        }
        return parse_scenario(document)

    return build


def test_annulus_run_writes_results(scenario_for, tmp_path):
    scenario = scenario_for(
        "annulus-log",
        [
            {"kind": "oracle", "tolerance": 0.02},
            {"kind": "critical", "rank_zero": 0},
            {"kind": "verify-nonvanishing", "margin": 2, "oracle_fraction": 0.7},
            {"kind": "energy", "expected": np.pi / np.log(2.0), "rel_tol": 0.05},
            {"kind": "max-principle"},
        ],
        solver=CORRECTED,
    )
    report = ScenarioRunner(tmp_path)(scenario)
    assert report.passed, report.failures
    names = [check.name for check in report.checks]
    assert names[0] == "solver-converged"
    assert {"oracle-error", "rank-zero-count", "nonvanishing", "energy"} <= set(names)
    assert report.extras["oracle_max_error"] < 0.02

    target = tmp_path / "annulus-log"
    for name in ("field.csv", "critical.json", "contours.json", "report.json"):
        assert (target / name).is_file()
    document = json.loads((target / "report.json").read_text(encoding="utf-8"))
    assert document["passed"] is True
    assert document["provenance"]["config"]["grid"]["n"] == 65
    assert json.loads((target / "critical.json").read_text(encoding="utf-8")) == []
    frame = pd.read_csv(target / "field.csv")
    assert list(frame.columns) == ["x", "y", "kind", "re", "im"]


def test_failed_check_fails_report(scenario_for):
    scenario = scenario_for("annulus-log", [{"kind": "oracle", "tolerance": 1e-12}])
    report = ScenarioRunner()(scenario)
    assert report.solve_report.converged
    assert not report.passed
    assert [check.name for check in report.failures] == ["oracle-error"]


def test_grid_override(scenario_for):
    scenario = scenario_for("annulus-log", [{"kind": "max-principle"}], n=129)
    runner = ScenarioRunner(grid=33)
    assert runner.grid == 33
    context = runner.solve(scenario)
    assert context.mask.grid.n == 33
    assert context.scenario.n == 33


def test_capacitor_example_run(scenario_for):
    scenario = scenario_for(
        "capacitor-example",
        [
            {"kind": "oracle", "tolerance": 0.05},
            {"kind": "starlike", "expect": True},
            {"kind": "monotone", "expect": True},
            {"kind": "verify-nonvanishing", "margin": 4},
            {"kind": "gradient-identity"},
        ],
        n=129,
        solver=CORRECTED,
    )
    report = ScenarioRunner()(scenario)
    assert report.passed, report.failures
    identity = report.extras["gradient_identity"]
    assert identity["rhs_at_one"] == pytest.approx(0.125)
    assert identity["claim_exceeds_one"] == "unconfirmed"
    assert report.provenance["config"]["solver"]["kind"] == "harmonic"


def test_capacitor_dendrite_faces_contain_holes(scenario_for):
    # z = 2 sits on the circle where the Jacobian of the closed form vanishes
    scenario = scenario_for(
        "capacitor-example",
        [{"kind": "dendrite", "seed": [2.0, 0.0], "dendrone": False, "standoff": 6}],
        n=129,
        solver=CORRECTED,
    )
    report = ScenarioRunner()(scenario)
    checks = {check.name: check for check in report.checks}
    assert checks["dendrite:faces-contain-holes"].passed is True
    assert len(report.extras["projection"]) == 1


def test_report_is_reproducible(scenario_for, tmp_path):
    scenario = scenario_for(
        "annulus-log",
        [{"kind": "critical", "rank_zero": 0}, {"kind": "max-principle"}],
        n=33,
    )
    texts = []
    for run in ("first", "second"):
        ScenarioRunner(tmp_path / run)(scenario)
        texts.append((tmp_path / run / "annulus-log" / "report.json").read_bytes())
    assert texts[0] == texts[1]


@pytest.mark.parametrize(
    "fixture, kind",
    [("capacitor-example", "max-principle"), ("rkc-disk", "oracle")],
)
def test_analysis_mismatch_is_a_config_error(scenario_for, fixture, kind):
    scenario = scenario_for(fixture, [{"kind": kind}])
    with pytest.raises(ConfigError):
        ScenarioRunner()(scenario)


def test_pharmonic_run(scenario_for):
    scenario = scenario_for(
        "pharmonic-annulus",
        [
            {"kind": "oracle", "tolerance": 0.03},
            {"kind": "distortion", "slack": 0.2},
            {"kind": "max-principle"},
        ],
        params={"p": 3.0},
        solver={"kind": "p-harmonic", "p": 3.0, "correct_boundary": True},
    )
    report = ScenarioRunner()(scenario)
    assert report.passed, report.failures
    assert report.solve_report.outer_iterations >= 1
    assert report.extras["K"] == pytest.approx(2.0)


def test_geometry_file_scenario(tmp_path):
    dump_capacitor_spec(annulus_log().spec, tmp_path / "annulus.json")
    path = tmp_path / "from-file.toml"
    path.write_text(
        'name = "from-file"\n'
        '[geometry]\nfile = "annulus.json"\n'
        "[grid]\nn = 33\n"
        '[[analyses]]\nkind = "max-principle"\n',
        encoding="utf-8",
    )
    report = ScenarioRunner().run_file(path)
    assert report.passed


def test_missing_geometry_file(tmp_path):
    path = tmp_path / "missing.toml"
    path.write_text(
        'name = "missing"\n[geometry]\nfile = "nowhere.json"\n', encoding="utf-8"
    )
    with pytest.raises(ConfigError):
        ScenarioRunner().run_file(path)


@pytest.mark.slow
@pytest.mark.parametrize(
    "path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda path: path.stem
)
def test_repository_scenarios_pass(path, tmp_path):
    report = ScenarioRunner(tmp_path).run(load_scenario(path))
    assert report.passed, [check.to_dict() for check in report.failures]
