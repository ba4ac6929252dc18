from dataclasses import replace

import numpy as np
import pytest

from caplab.analysis.graph import (
    CheckReport,
    CheckResult,
    build_graph,
    hole_points,
    limit_sets,
    structure_checks,
)
from caplab.analysis.levelset import (
    LevelSetComponent,
    LevelSetTracer,
    Terminal,
    TerminalKind,
    trace_level,
)
from caplab.geometry.mask import NodeKind
from caplab.solver.fields import ScalarField


@pytest.fixture(scope="module")
def lemniscate(cassini_fixture, cassini_mask):
    """The level set of log|z^2 - 1| through its saddle at the origin."""
    z = cassini_mask.grid.z
    values = np.full(z.shape, np.nan)
    values[cassini_mask.active] = cassini_fixture.oracle(z[cassini_mask.active]).real
    field = ScalarField(cassini_mask, values)
    return LevelSetTracer()(field, 0.0, 0j, [0j])


def test_lemniscate_is_a_dendrone(lemniscate, cassini_mask):
    assert lemniscate.node_degrees == [4]
    assert lemniscate.node_critical == [True]
    assert lemniscate.terminals() == []
    graph = build_graph(lemniscate, cassini_mask)
    assert (graph.V, graph.E, graph.F) == (1, 2, 3)
    assert graph.connected
    assert sorted(face.holes for face in graph.bounded_faces) == [(0,), (1,)]
    checks = structure_checks(graph, lemniscate)
    assert checks.passed
    for name in ("handshake", "euler", "node-degrees", "bounded-faces"):
        assert checks[name].passed
    assert checks["faces-contain-holes"].passed
    assert checks["edge-bound"].passed and checks["face-bound"].passed


def test_lemniscate_faces_sit_around_the_holes(lemniscate, cassini_mask):
    graph = build_graph(lemniscate, cassini_mask)
    points = sorted((f.point for f in graph.bounded_faces), key=lambda p: p.real)
    assert points[0].real < 0.0 < points[1].real
    assert graph.domain_regions >= 3


def test_dropped_arc_breaks_handshake(lemniscate, cassini_mask):
    broken = replace(
        lemniscate, arcs=lemniscate.arcs[:1], arc_ends=lemniscate.arc_ends[:1]
    )
    graph = build_graph(broken, cassini_mask)
    checks = structure_checks(graph, broken)
    assert checks["handshake"].passed is False
    assert not checks.passed
    soft = structure_checks(graph, broken, soft=True)
    assert soft["handshake"].passed is False
    assert soft.passed


def test_hole_points_lie_inside_holes(cassini_mask):
    points = hole_points(cassini_mask)
    assert len(points) == 2
    z = cassini_mask.grid.z
    for j, i in points:
        assert cassini_mask.exterior[j, i]
        assert abs(z[j, i] ** 2 - 1.0) < 0.81


def test_limit_sets_of_a_chord_are_disjoint(disk_mask, sample):
    field = sample(None, disk_mask, func=lambda z: z.real)
    component = LevelSetTracer()(field, 0.1, 0.1 + 0j)
    sets, disjoint = limit_sets(component, disk_mask)
    assert len(sets) == 2
    assert disjoint
    assert all(s.kind == TerminalKind.OUTER_BOUNDARY and s.nodes for s in sets)


def test_overlapping_limit_sets_are_flagged(disk_mask):
    rows, cols = np.nonzero(disk_mask.labels == NodeKind.OUTER_BOUNDARY)
    end = complex(disk_mask.grid.z[rows[0], cols[0]])
    inward = end * 0.8
    node = Terminal(TerminalKind.INTERIOR_NODE, node=0)
    outer = Terminal(TerminalKind.OUTER_BOUNDARY)
    component = LevelSetComponent(
        level=0.0,
        seed=inward,
        h=disk_mask.h,
        arcs=[np.array([inward, end]), np.array([inward, end + 0.1 * disk_mask.h])],
        arc_ends=[(node, outer), (node, outer)],
        node_points=[inward],
        node_degrees=[2],
        node_critical=[False],
    )
    sets, disjoint = limit_sets(component, disk_mask)
    assert len(sets) == 2
    assert not disjoint


def test_check_report():
    report = CheckReport(
        [
            CheckResult("a", True),
            CheckResult("b", None),
            CheckResult("c", False, soft=True),
        ]
    )
    assert report.passed
    assert report["b"].skipped
    assert report.to_dict()["c"]["soft"] is True
    with pytest.raises(KeyError):
        report["missing"]
    failing = CheckReport([CheckResult("d", False, measured=1, threshold=0)])
    assert [result.name for result in failing.failures] == ["d"]


@pytest.mark.parametrize("level, components", [(0.3, 1), (-0.1, 2)])
def test_cassini_level_topology(cassini_fixture, cassini_mask, level, components):
    z = cassini_mask.grid.z
    values = np.full(z.shape, np.nan)
    values[cassini_mask.active] = cassini_fixture.oracle(z[cassini_mask.active]).real
    soup = trace_level(ScalarField(cassini_mask, values), level)
    assert soup.count_components() == components
