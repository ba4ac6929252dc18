import numpy as np
import pytest

from caplab.geometry.boundary import boundary_values
from caplab.geometry.curves import (
    BoundaryMap,
    CapacitorSpec,
    Curve,
    GeometryError,
    GridSpec,
    dump_capacitor_spec,
    load_capacitor_spec,
)
from caplab.geometry.mask import NodeKind, hole_label, rasterize


def test_curve_drops_repeated_closing_vertex():
    curve = Curve(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    assert len(curve.points) == 3
    assert curve.is_ccw()
    assert not curve.reversed().is_ccw()


def test_curve_rejects_repeated_points():
    with pytest.raises(GeometryError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(GeometryError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_circle_is_simple_and_positive():
    circle = Curve.circle(1j, 2.0, 128)
    assert circle.is_simple()
    assert circle.is_ccw()
    assert circle.diameter == pytest.approx(4.0)
    assert np.allclose(np.abs(circle.as_complex - 1j), 2.0)


def test_boundary_map_interpolates_circularly():
    identity = BoundaryMap.from_function(lambda t: t, 16)
    assert identity(1 / 32) == pytest.approx(1 / 32)
    # halfway between the last sample and the wrap-around to t = 0
    assert identity(31 / 32) == pytest.approx(15 / 32)


def test_boundary_map_reversed():
    forward = BoundaryMap.from_function(lambda t: np.exp(2j * np.pi * t), 32)
    backward = forward.reversed()
    assert backward(1 / 32) == pytest.approx(forward(31 / 32))
    assert backward(0.0) == pytest.approx(forward(0.0))


def test_boundary_map_validation():
    with pytest.raises(GeometryError):
        BoundaryMap.from_function(lambda t: t, 8)
    with pytest.raises(GeometryError):
        BoundaryMap(np.linspace(0.0, 1.0, 20), np.zeros(20))


def test_capacitor_spec_validation():
    outer = Curve.circle(0.0, 2.0)
    with pytest.raises(GeometryError):
        CapacitorSpec(outer.reversed())
    with pytest.raises(GeometryError):
        CapacitorSpec(outer, holes=(Curve.circle(3.0, 0.5),), hole_values=(1.0,))
    with pytest.raises(GeometryError):
        CapacitorSpec(outer, holes=(Curve.circle(0.0, 0.5),), hole_values=())
    with pytest.raises(GeometryError):
        CapacitorSpec(
            outer,
            holes=(Curve.circle(-0.3, 0.5), Curve.circle(0.3, 0.5)),
            hole_values=(0.0, 1.0),
        )


def test_capacitor_spec_is_real(annulus, capacitor):
    assert annulus.spec.is_real
    assert not capacitor.spec.is_real


def test_capacitor_spec_file(tmp_path, capacitor):
    path = tmp_path / "capacitor.json"
    dump_capacitor_spec(capacitor.spec, path)
    loaded = load_capacitor_spec(path)
    assert len(loaded.holes) == 1
    assert np.allclose(loaded.outer.points, capacitor.spec.outer.points)
    assert np.allclose(loaded.outer_map.values, capacitor.spec.outer_map.values)


def test_grid_spec():
    with pytest.raises(GeometryError):
        GridSpec((0.0, 0.0, 1.0, 1.0), 9)
    with pytest.raises(GeometryError):
        GridSpec((0.0, 0.0, 2.0, 1.0), 33)
    grid = GridSpec((-1.0, -1.0, 1.0, 1.0), 33)
    assert grid.h == pytest.approx(1 / 16)
    assert grid.nearest_node(0.26 - 0.01j) == (16, 20)
    assert grid.z[16, 20] == pytest.approx(0.25)


def test_grid_around_keeps_margin():
    circle = Curve.circle(0.5, 1.0)
    grid = GridSpec.around(circle, 65)
    assert grid.margin_to(circle) == pytest.approx(3.0 * grid.h)


def test_rasterize_annulus(annulus, annulus_mask):
    mask = annulus_mask
    h = mask.h
    modulus = np.abs(mask.grid.z)
    assert mask.n_holes == 1
    hole = mask.hole_boundary(0)
    outer = mask.outer_boundary
    assert hole.any() and outer.any()
    assert np.all(modulus[hole] > 1.0 - 1e-3)
    assert np.all(modulus[hole] <= 1.0 + h * (1 + 1e-9))
    assert np.all(modulus[outer] < 2.0)
    assert np.all(modulus[outer] >= 2.0 - h - 1e-3)
    assert mask.component_count(int(NodeKind.OUTER_BOUNDARY)) == 1
    assert mask.component_count(hole_label(0)) == 1


def test_mask_depth_and_cells(annulus_mask):
    depth = annulus_mask.depth()
    assert depth[annulus_mask.interior].min() == 1
    assert np.all(depth[~annulus_mask.interior] == 0)
    n = annulus_mask.grid.n
    cells = annulus_mask.complete_cells()
    assert cells.shape == (n - 1, n - 1)
    assert cells.sum() > annulus_mask.complete_cells(interior_only=True).sum()


def test_cell_fractions_cover_the_domain(annulus, annulus_mask):
    fractions = annulus_mask.cell_fractions()
    assert fractions.shape == (64, 64)
    assert fractions.min() >= 0.0 and fractions.max() <= 1.0
    full = annulus_mask.complete_cells(interior_only=True)
    assert np.all(fractions[full] == 1.0)
    area = fractions.sum() * annulus_mask.h**2
    assert area == pytest.approx(annulus.spec.domain.area, rel=1e-9)
    assert annulus.spec.domain.area == pytest.approx(3.0 * np.pi, rel=1e-3)


def test_rasterize_rejects_bad_grids(annulus):
    spec = annulus.spec
    with pytest.raises(GeometryError):
        rasterize(spec, GridSpec((-2.0, -2.0, 2.0, 2.0), 65))
    tiny = CapacitorSpec(
        outer=Curve.circle(0.0, 2.0),
        holes=(Curve.circle(0.0, 0.01),),
        hole_values=(1.0,),
    )
    with pytest.raises(GeometryError):
        rasterize(tiny, GridSpec.around(tiny.outer, 33))


def test_boundary_values(annulus, annulus_mask):
    boundary = boundary_values(annulus.spec, annulus_mask)
    values = boundary.values
    assert np.allclose(values[annulus_mask.hole_boundary(0)], 1.0)
    assert np.allclose(values[annulus_mask.outer_boundary], 0.0)
    assert np.all(np.isnan(values[annulus_mask.interior]))
    anchors = boundary.anchors
    assert np.all(anchors.offsets <= annulus_mask.h * (1 + 1e-9))
    assert np.allclose(np.abs(anchors.points[anchors.data == 1.0]), 1.0, atol=1e-4)


def test_boundary_values_follow_outer_map(capacitor, make_mask):
    mask = make_mask(capacitor.spec, 65)
    boundary = boundary_values(capacitor.spec, mask)
    anchors = boundary.anchors
    outer = mask.labels[anchors.rows, anchors.cols] == NodeKind.OUTER_BOUNDARY
    exact = capacitor.oracle(anchors.points[outer])
    assert np.abs(anchors.data[outer] - exact).max() < 1e-3
