from pathlib import Path

import pytest

from caplab.geometry.curves import dump_capacitor_spec
from caplab.runner.fixtures import annulus_log
from caplab.runner.scenario import (
    ANALYSIS_PARAMETERS,
    Analysis,
    ConfigError,
    SolverConfig,
    load_scenario,
    parse_scenario,
)

CONFIG_DIR = Path(__file__).parents[1] / "configs"


@pytest.fixture
def document():
    return {
        "name": "annulus",
        "geometry": {"fixture": "annulus-log", "params": {"r": 1.0, "R": 2.0}},
        "grid": {"n": 65},
        "analyses": [
            {"kind": "oracle", "tolerance": 0.02},
            {"kind": "critical", "rank_zero": 0},
        ],
    }


def test_parse_valid_document(document):
    scenario = parse_scenario(document)
    assert scenario.name == "annulus"
    assert scenario.fixture == "annulus-log"
    assert scenario.n == 65
    assert scenario.solver == SolverConfig()
    assert [a.kind for a in scenario.analyses] == ["oracle", "critical"]
    # defaults are merged into every analysis
    critical = scenario.analyses[1]
    assert critical.params["standoff"] == 2
    assert critical.params["rank_zero"] == 0
    assert critical.params["zero_near"] is None


def test_to_dict_round_trips(document):
    scenario = parse_scenario(document)
    again = parse_scenario(scenario.to_dict())
    assert again.to_dict() == scenario.to_dict()


def test_with_grid(document):
    scenario = parse_scenario(document)
    assert scenario.with_grid(None) is scenario
    assert scenario.with_grid(33).n == 33
    with pytest.raises(ConfigError):
        scenario.with_grid(64)


@pytest.mark.parametrize(
    "change",
    [
        {"colour": "red"},
        {"analyses": [{"kind": "spectrum"}]},
        {"analyses": [{"kind": "oracle", "tol": 0.1}]},
        {"grid": {"n": 64}},
        {"grid": {"n": 9}},
        {"grid": {"n": 65, "bbox": [0.0, 1.0]}},
        {"geometry": {"fixture": "ellipse"}},
        {"geometry": {"fixture": "annulus-log", "params": {"sides": 4}}},
        {"geometry": {"fixture": "annulus-log", "file": "spec.json"}},
        {"geometry": {}},
        {"solver": {"kind": "harmonic", "p": 3.0}},
        {"solver": {"kind": "spectral"}},
        {"solver": {"kind": "p-harmonic", "p": 3.0}},
        {"solver": {"kind": "harmonic", "sweeps": 3}},
        {"solver": {"kind": "harmonic", "correct_boundary": "yes"}},
        {"analyses": {"kind": "oracle"}},
        {"name": ""},
    ],
)
def test_invalid_documents(document, change):
    with pytest.raises(ConfigError):
        parse_scenario({**document, **change})


def test_missing_geometry_table(document):
    del document["geometry"]
    with pytest.raises(ConfigError):
        parse_scenario(document)


def test_pharmonic_needs_matching_fixture_exponent():
    document = {
        "name": "p3",
        "geometry": {"fixture": "pharmonic-annulus", "params": {"p": 3.0}},
        "solver": {"kind": "p-harmonic", "p": 3.0},
    }
    assert parse_scenario(document).solver.pharmonic().p == 3.0
    document["solver"]["p"] = 1.5
    with pytest.raises(ConfigError):
        parse_scenario(document)


def test_pharmonic_rejects_jacobian_analysis():
    document = {
        "name": "p3",
        "geometry": {"fixture": "pharmonic-annulus"},
        "solver": {"kind": "p-harmonic", "p": 3.0},
        "analyses": [{"kind": "jacobian-positive"}],
    }
    with pytest.raises(ConfigError):
        parse_scenario(document)


def test_geometry_file_resolves_from_base(tmp_path):
    dump_capacitor_spec(annulus_log().spec, tmp_path / "annulus.json")
    (tmp_path / "scenario.toml").write_text(
        'name = "from-file"\n[geometry]\nfile = "annulus.json"\n', encoding="utf-8"
    )
    scenario = load_scenario(tmp_path / "scenario.toml")
    assert scenario.fixture is None
    assert scenario.geometry_file == tmp_path / "annulus.json"


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("name = \n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(broken)


def test_analysis_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        Analysis("spectrum")
    assert Analysis("max-principle").to_dict() == {"kind": "max-principle"}
    assert set(ANALYSIS_PARAMETERS["energy"]) == {"expected", "rel_tol"}


@pytest.mark.parametrize(
    "path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda path: path.stem
)
def test_repository_configs_load(path):
    scenario = load_scenario(path)
    assert scenario.name == path.stem
    assert scenario.analyses
