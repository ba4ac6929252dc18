import numpy as np
import pytest

from caplab.geometry.shape_checks import is_monotone
from caplab.runner.fixtures import (
    FIXTURE_MAP,
    cassini,
    fixture_factory,
    fixture_parameters,
    fixture_table,
    list_fixtures,
    rkc_disk,
)


@pytest.mark.parametrize("name", sorted(FIXTURE_MAP))
def test_every_fixture_builds(name):
    fixture = fixture_factory(name)
    assert fixture.name == name
    assert fixture.spec.outer.is_simple()
    assert len(fixture.spec.holes) == len(fixture.spec.hole_values)


def test_capacitor_data_matches_oracle(capacitor):
    spec, oracle = capacitor.spec, capacitor.oracle
    outer = spec.outer.as_complex
    t = np.arange(len(outer)) / len(outer)
    assert np.allclose(spec.outer_map(t), oracle(outer), atol=1e-9)
    hole = spec.holes[0].as_complex
    assert np.allclose(oracle(hole), 0.0, atol=1e-9)
    assert spec.hole_values == (0.0,)


def test_cassini_conductors_are_level_sets(cassini_fixture):
    spec, oracle = cassini_fixture.spec, cassini_fixture.oracle
    assert np.allclose(oracle(spec.outer.as_complex), np.log(2.0))
    for hole, value in zip(spec.holes, spec.hole_values):
        assert np.allclose(oracle(hole.as_complex), value)
    assert cassini_fixture.points == {"origin": 0j}


def test_rkc_disk_maps_onto_polygon():
    fixture = rkc_disk(sides=4, samples=64)
    values = fixture.spec.outer_map.values
    assert fixture.oracle is None
    assert is_monotone(fixture.spec.outer_map)
    # every image point lies on the square |x| + |y| = 1
    assert np.allclose(np.abs(values.real) + np.abs(values.imag), 1.0)


def test_pharmonic_annulus_carries_exponent():
    fixture = fixture_factory("pharmonic-annulus", {"p": 1.5})
    assert fixture.p == 1.5
    assert fixture.oracle.p == 1.5
    assert fixture.spec.hole_values == (1.0,)


def test_fixture_errors():
    with pytest.raises(KeyError):
        fixture_factory("ellipse")
    with pytest.raises(ValueError):
        fixture_factory("rkc-disk", {"sides": 2})
    with pytest.raises(ValueError):
        fixture_factory("annulus-log", {"foo": 1})
    with pytest.raises(ValueError):
        fixture_factory("capacitor-example", {"R_out": 1.0})
    with pytest.raises(ValueError):
        cassini(samples=510)
    with pytest.raises(ValueError):
        cassini(r=1.2)


def test_fixture_listing():
    rows = list_fixtures()
    assert [row[0] for row in rows] == list(FIXTURE_MAP)
    assert len(rows) == 5
    assert fixture_parameters("rkc-disk") == {"sides": 6, "samples": 360}
    table = fixture_table()
    for name in FIXTURE_MAP:
        assert name in table
