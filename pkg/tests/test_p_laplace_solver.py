import numpy as np
import pytest

from caplab.analytic.fields import LogAnnulus, RadialPHarmonic
from caplab.geometry.boundary import boundary_values
from caplab.geometry.curves import GridSpec
from caplab.geometry.mask import rasterize
from caplab.solver.laplace_solver import DirichletSolver
from caplab.solver.p_laplace_solver import (
    PharmonicConfig,
    PLaplaceSolver,
    beltrami_distortion_estimate,
    edge_weights,
    min_interior_gradient,
    solve_p_dirichlet,
)


@pytest.fixture
def annulus_boundary(annulus, annulus_mask):
    return boundary_values(annulus.spec, annulus_mask).real


def test_config_validation():
    for p in (1.0, 0.5, np.inf):
        with pytest.raises(ValueError):
            PharmonicConfig(p=p)
    with pytest.raises(ValueError):
        PharmonicConfig(p=3.0, relaxation=2.0)
    with pytest.raises(ValueError):
        PharmonicConfig(p=3.0, max_outer=0)
    config = PharmonicConfig(p=3.0)
    assert config.theta == pytest.approx(2 / 3)
    assert config.K == pytest.approx(2.0)
    assert config.to_dict()["relaxation"] == pytest.approx(2 / 3)


def test_p2_delegates_to_laplace(annulus_boundary):
    field, report = PLaplaceSolver(PharmonicConfig(p=2.0))(annulus_boundary)
    reference, _ = DirichletSolver()(annulus_boundary)
    assert report.outer_iterations == 0
    assert np.allclose(field.values, reference.values, equal_nan=True)


def test_edge_weights_shapes_and_normalization(annulus, annulus_mask, sample):
    u = sample(annulus.oracle, annulus_mask)
    n = annulus_mask.grid.n
    weights_x, weights_y = edge_weights(u.values, annulus_mask, 3.0, 1e-8)
    assert weights_x.shape == (n, n - 1)
    assert weights_y.shape == (n - 1, n)
    both = np.concatenate([weights_x.ravel(), weights_y.ravel()])
    assert np.all(np.isfinite(both)) and np.all(both > 0.0)
    assert both.mean() == pytest.approx(1.0)
    flat_x, flat_y = edge_weights(u.values, annulus_mask, 2.0, 1e-8)
    assert np.allclose(flat_x, 1.0) and np.allclose(flat_y, 1.0)


@pytest.mark.parametrize("p", [3.0, 1.5])
def test_radial_solution(annulus_boundary, p):
    field, report = solve_p_dirichlet(
        annulus_boundary, PharmonicConfig(p=p), correct_boundary=True
    )
    assert report.converged
    assert 1 <= report.outer_iterations < 500
    active = field.mask.active
    exact = RadialPHarmonic(1.0, 2.0, p)(field.mask.grid.z[active]).real
    assert np.abs(field.values[active] - exact).max() < 3e-2
    interior = field.values[field.mask.interior]
    assert 0.0 < interior.min() and interior.max() < 1.0


def test_annulus_solution_has_quarter_turn_symmetry(annulus):
    # a bbox centered on the annulus with no node close to either circle
    mask = rasterize(annulus.spec, GridSpec((-2.3, -2.3, 2.3, 2.3), 65))
    assert np.array_equal(mask.labels, np.rot90(mask.labels))
    config = PharmonicConfig(p=3.0, tol_solve=1e-12)
    field, report = solve_p_dirichlet(boundary_values(annulus.spec, mask).real, config)
    assert report.converged
    active = mask.active
    turned = np.rot90(field.values)
    gap = np.abs(field.values[active] - turned[active]).max()
    assert gap <= 10.0 * config.tol_outer


def test_sweep_limit_is_reported(annulus_boundary):
    field, report = solve_p_dirichlet(
        annulus_boundary, PharmonicConfig(p=3.0, max_outer=2)
    )
    assert not report.converged
    assert report.outer_iterations == 2
    assert field.is_complete()


def test_min_interior_gradient(make_mask, annulus, sample):
    mask = make_mask(annulus.spec, 257)
    u = sample(annulus.oracle, mask)
    expected = 1.0 / (2.0 * np.log(2.0))
    assert min_interior_gradient(u, margin=2) == pytest.approx(expected, rel=0.05)
    assert min_interior_gradient(u, margin=4) == pytest.approx(expected, rel=0.1)
    with pytest.raises(ValueError):
        min_interior_gradient(u, margin=1)
    with pytest.raises(ValueError):
        min_interior_gradient(u, margin=10**4)


def test_beltrami_estimate_of_exact_fields(make_mask, annulus, sample):
    mask = make_mask(annulus.spec, 129)
    harmonic = sample(LogAnnulus(1.0, 2.0), mask)
    assert beltrami_distortion_estimate(harmonic) < 0.05
    for p in (3.0, 1.5):
        u = sample(RadialPHarmonic(1.0, 2.0, p), mask)
        # |mu| = |p - 2| / p = (K - 1) / (K + 1) for both exponents
        assert beltrami_distortion_estimate(u) == pytest.approx(1 / 3, abs=0.05)
