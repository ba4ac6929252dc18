import logging

import numpy as np
from scipy import ndimage

from caplab.analysis.field_analysis import cell_wirtinger
from caplab.geometry.curves import BoundaryMap
from caplab.solver.fields import ComplexField, ScalarField, SolveReport
from caplab.solver.stencil import BoundaryCorrection, InteriorSystem, conjugate_gradient
from caplab.utils import complex_diameter, data_range

logger = logging.getLogger(__name__)

OSCILLATION_CAVEAT = 50.0


def prepare_boundary(boundary: ScalarField) -> tuple[np.ndarray, float]:
    mask = boundary.mask
    if not mask.interior.any():
        raise ValueError("Dirichlet problem has an empty interior")
    values = np.array(boundary.values, dtype=float)
    data = values[mask.boundary]
    if not np.all(np.isfinite(data)):
        raise ValueError("Boundary data missing on some boundary-classified nodes")
    values[mask.interior] = np.nan
    spread = data_range(data)
    scale = spread if spread > 0.0 else max(float(np.abs(data).max()), 1.0)
    return values, scale


def residual_max(
    system: InteriorSystem, A, C, values: np.ndarray, interior: np.ndarray
) -> float:
    """Max-norm of the (weighted) 5-point residual over interior nodes."""
    residual = system.rhs(C, values) - A @ interior
    return float(np.abs(residual).max()) if residual.size else 0.0


class DirichletSolver:
    def __init__(
        self,
        tol_solve: float = 1e-10,
        max_iter: int | None = None,
        correct_boundary: bool = False,
        tol_boundary: float = 1e-9,
        max_corrections: int = 100,
    ):
        self._tol_solve = tol_solve
        self._max_iter = max_iter
        self._correct_boundary = correct_boundary
        self._tol_boundary = tol_boundary
        self._max_corrections = max_corrections

    @property
    def tol_solve(self) -> float:
        return self._tol_solve

    @property
    def correct_boundary(self) -> bool:
        return self._correct_boundary

    def max_iter(self, n: int) -> int:
        return self._max_iter if self._max_iter is not None else 50 * n

    def __call__(self, boundary: ScalarField) -> tuple[ScalarField, SolveReport]:
        return self.solve(boundary)

    def solve(self, boundary: ScalarField) -> tuple[ScalarField, SolveReport]:
        """
        5-point harmonic extension of the boundary data. When the data carries
        boundary anchors and correction is enabled, the boundary-layer values
        are refined to the offset-corrected fixed point.
        """
        mask = boundary.mask
        values, scale = prepare_boundary(boundary)
        system = InteriorSystem(mask)
        A, C = system.assemble()
        atol = self._tol_solve * scale
        max_iter = self.max_iter(mask.grid.n)
        x = np.full(system.size, float(np.mean(values[mask.boundary])))

        correction = None
        if self._correct_boundary and boundary.anchors is not None:
            correction = BoundaryCorrection(mask, boundary.anchors)
        anchors = boundary.anchors

        x, iterations, converged = conjugate_gradient(
            A, system.rhs(C, values), x, atol, max_iter
        )
        corrections = 0
        settled = True
        while correction is not None and anchors is not None:
            updated = correction.apply(system.scatter(values, x))
            change = float(np.abs(updated - values[anchors.rows, anchors.cols]).max())
            if change <= self._tol_boundary * scale:
                break
            if corrections >= self._max_corrections:
                settled = False
                break
            values[anchors.rows, anchors.cols] = updated
            corrections += 1
            x, more, ok = conjugate_gradient(
                A, system.rhs(C, values), x, atol, max_iter
            )
            iterations += more
            converged = converged and ok

        residual = residual_max(system, A, C, values, x) / scale
        report = SolveReport(
            iterations=iterations,
            final_residual=residual,
            converged=bool(converged and settled and residual <= self._tol_solve),
            corrections=corrections,
        )
        log = logger.info if report.converged else logger.warning
        log(
            "Dirichlet solve n=%d: %d CG iterations, %d boundary corrections, "
            "residual %.3g, converged=%s",
            mask.grid.n,
            iterations,
            corrections,
            residual,
            report.converged,
        )
        return ScalarField(mask, system.scatter(values, x), boundary.anchors), report


def solve_dirichlet(
    boundary: ScalarField, **options
) -> tuple[ScalarField, SolveReport]:
    return DirichletSolver(**options).solve(boundary)


def solve_complex(
    boundary: ComplexField, **options
) -> tuple[ComplexField, SolveReport]:
    """Real and imaginary parts solved independently; reports merged."""
    solver = DirichletSolver(**options)
    real, real_report = solver.solve(boundary.real)
    imag, imag_report = solver.solve(boundary.imag)
    return ComplexField.from_parts(real, imag), real_report.merge(imag_report)


def dirichlet_energy(field: ComplexField | ScalarField) -> float:
    """
    Cell quadrature of |H_z|^2 + |H_zbar|^2 with cell-centered derivatives.
    Each cell is weighted by the share of its area inside the domain; cells
    with an exterior corner take the density of the nearest complete cell.
    Without domain geometry only complete cells are summed.
    """
    mask = field.mask
    d_z, d_zbar = cell_wirtinger(field)
    density = np.abs(d_z) ** 2 + np.abs(d_zbar) ** 2
    complete = mask.complete_cells()
    fractions = mask.cell_fractions()
    if fractions is None or not complete.any():
        return float(np.sum(density[complete]) * field.h**2)
    nearest = ndimage.distance_transform_edt(
        ~complete, return_distances=False, return_indices=True
    )
    filled = density[nearest[0], nearest[1]]
    weighted = np.where(fractions > 0.0, fractions * filled, 0.0)
    return float(np.sum(weighted) * field.h**2)


def boundary_oscillation(outer_map: BoundaryMap) -> float:
    """Total variation of the outer data around the curve over its diameter."""
    values = outer_map.values
    diameter = complex_diameter(values)
    if diameter == 0.0:
        return 0.0
    return float(np.abs(np.diff(np.append(values, values[0]))).sum() / diameter)


def energy_caveat(
    outer_map: BoundaryMap, threshold: float = OSCILLATION_CAVEAT
) -> bool:
    """True when the data oscillate enough for the discrete energy to be unreliable."""
    return boundary_oscillation(outer_map) > threshold
