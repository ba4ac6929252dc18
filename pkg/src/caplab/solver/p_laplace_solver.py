import logging
from dataclasses import dataclass

import numpy as np

from caplab.analysis.field_analysis import (
    axis_derivative,
    cell_gradient,
    cell_wirtinger,
    wirtinger,
)
from caplab.analytic.fields import distortion_bound
from caplab.geometry.mask import Mask
from caplab.solver.fields import ScalarField, SolveReport
from caplab.solver.laplace_solver import (
    DirichletSolver,
    prepare_boundary,
    residual_max,
)
from caplab.solver.stencil import BoundaryCorrection, InteriorSystem, conjugate_gradient

logger = logging.getLogger(__name__)

BELTRAMI_PERCENTILE = 95.0


@dataclass(frozen=True)
class PharmonicConfig:
    """
    Settings of the lagged-diffusivity iteration. `eps_reg` defaults to
    1e-8 * (data range) / h and `relaxation` to 2/p.
    """

    p: float
    eps_reg: float | None = None
    tol_outer: float = 1e-8
    max_outer: int = 500
    tol_solve: float = 1e-10
    relaxation: float | None = None

    def __post_init__(self):
        if not 1.0 < self.p < np.inf:
            raise ValueError(
                f"p-Laplace exponent must satisfy 1 < p < inf, got {self.p}"
            )
        if self.eps_reg is not None and not self.eps_reg > 0.0:
            raise ValueError(f"eps_reg must be positive, got {self.eps_reg}")
        if not self.tol_outer > 0.0:
            raise ValueError(f"tol_outer must be positive, got {self.tol_outer}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be at least 1, got {self.max_outer}")
        if self.relaxation is not None and not 0.0 < self.relaxation < 2.0:
            raise ValueError(f"relaxation must lie in (0, 2), got {self.relaxation}")

    @property
    def K(self) -> float:
        return distortion_bound(self.p)

    @property
    def theta(self) -> float:
        return self.relaxation if self.relaxation is not None else 2.0 / self.p

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "eps_reg": self.eps_reg,
            "tol_outer": self.tol_outer,
            "max_outer": self.max_outer,
            "tol_solve": self.tol_solve,
            "relaxation": self.theta,
            "K": self.K,
        }


def edge_weights(
    values: np.ndarray, mask: Mask, p: float, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Diffusivities (|grad u|^2 + eps^2)^((p-2)/2) on grid edges: the mean of the
    adjacent complete cells, or the edge difference alone when no adjacent cell
    is complete. Normalized to mean 1.
    """
    h = mask.h
    exponent = (p - 2.0) / 2.0
    g_x, g_y = cell_gradient(values, h)
    cells = mask.complete_cells()
    omega = np.where(cells, (g_x**2 + g_y**2 + eps**2) ** exponent, 0.0)
    count = cells.astype(float)

    # x-edges (n, n-1) sit between cells (j-1, i) and (j, i)
    omega_rows = np.pad(omega, ((1, 1), (0, 0)))
    count_rows = np.pad(count, ((1, 1), (0, 0)))
    sum_x = omega_rows[:-1] + omega_rows[1:]
    count_x = count_rows[:-1] + count_rows[1:]
    # y-edges (n-1, n) sit between cells (j, i-1) and (j, i)
    omega_cols = np.pad(omega, ((0, 0), (1, 1)))
    count_cols = np.pad(count, ((0, 0), (1, 1)))
    sum_y = omega_cols[:, :-1] + omega_cols[:, 1:]
    count_y = count_cols[:, :-1] + count_cols[:, 1:]

    edge_x = (np.diff(values, axis=1) / h) ** 2
    edge_y = (np.diff(values, axis=0) / h) ** 2
    weights_x = np.where(
        count_x > 0, sum_x / np.maximum(count_x, 1.0), (edge_x + eps**2) ** exponent
    )
    weights_y = np.where(
        count_y > 0, sum_y / np.maximum(count_y, 1.0), (edge_y + eps**2) ** exponent
    )
    weights_x = np.where(np.isfinite(weights_x), weights_x, 1.0)
    weights_y = np.where(np.isfinite(weights_y), weights_y, 1.0)
    mean = float(np.concatenate([weights_x.ravel(), weights_y.ravel()]).mean())
    return weights_x / mean, weights_y / mean


class PLaplaceSolver:
    def __init__(self, config: PharmonicConfig, correct_boundary: bool = False):
        self._config = config
        self._correct_boundary = correct_boundary

    @property
    def config(self) -> PharmonicConfig:
        return self._config

    @property
    def correct_boundary(self) -> bool:
        return self._correct_boundary

    def __call__(self, boundary: ScalarField) -> tuple[ScalarField, SolveReport]:
        return self.solve(boundary)

    def _laplace(self) -> DirichletSolver:
        return DirichletSolver(
            tol_solve=self._config.tol_solve, correct_boundary=self._correct_boundary
        )

    def solve(self, boundary: ScalarField) -> tuple[ScalarField, SolveReport]:
        """
        Lagged diffusivity: starting from the harmonic extension, each sweep
        freezes the weights at the current field, solves the weighted linear
        problem and moves by `theta` towards its solution. Stops when the
        largest change relative to the data range drops below tol_outer.
        """
        cfg = self._config
        if cfg.p == 2.0:
            return self._laplace().solve(boundary)

        mask = boundary.mask
        _, scale = prepare_boundary(boundary)
        eps = cfg.eps_reg if cfg.eps_reg is not None else 1e-8 * scale / mask.h
        start, start_report = self._laplace().solve(boundary)
        current = np.array(start.values)
        iterations = start_report.iterations
        corrections = start_report.corrections

        system = InteriorSystem(mask)
        correction = None
        anchors = boundary.anchors
        if self._correct_boundary and anchors is not None:
            correction = BoundaryCorrection(mask, anchors)
        atol = cfg.tol_solve * scale
        max_iter = 50 * mask.grid.n
        active = mask.active
        theta = cfg.theta

        converged = False
        solves_ok = True
        outer = 0
        change = np.inf
        while outer < cfg.max_outer:
            outer += 1
            A, C = system.assemble(*edge_weights(current, mask, cfg.p, eps))
            x, more, ok = conjugate_gradient(
                A, system.rhs(C, current), system.gather(current), atol, max_iter
            )
            iterations += more
            solves_ok = solves_ok and ok
            proposal = system.scatter(current, x)
            updated = (1.0 - theta) * current + theta * proposal
            if correction is not None and anchors is not None:
                updated[anchors.rows, anchors.cols] = correction.apply(updated)
                corrections += 1
            change = float(np.abs(updated[active] - current[active]).max()) / scale
            current = updated
            logger.debug("p-Laplace sweep %d: relative change %.3g", outer, change)
            if change <= cfg.tol_outer:
                converged = True
                break

        A, C = system.assemble(*edge_weights(current, mask, cfg.p, eps))
        residual = residual_max(system, A, C, current, system.gather(current)) / scale
        report = SolveReport(
            iterations=iterations,
            final_residual=residual,
            converged=bool(converged and solves_ok),
            corrections=corrections,
            outer_iterations=outer,
        )
        log = logger.info if report.converged else logger.warning
        log(
            "p-Laplace solve p=%g n=%d: %d sweeps, %d CG iterations, last change %.3g, "
            "converged=%s",
            cfg.p,
            mask.grid.n,
            outer,
            iterations,
            change,
            report.converged,
        )
        return ScalarField(mask, current, boundary.anchors), report


def solve_p_dirichlet(
    boundary: ScalarField, cfg: PharmonicConfig, **options
) -> tuple[ScalarField, SolveReport]:
    return PLaplaceSolver(cfg, **options).solve(boundary)


def min_interior_gradient(field: ScalarField, margin: int = 2) -> float:
    """
    Smallest central-difference |grad u| over interior nodes whose chessboard
    distance to the boundary layer is at least `margin`.
    """
    if margin < 2:
        raise ValueError(f"margin must be at least 2, got {margin}")
    region = field.mask.depth() >= margin
    if not region.any():
        raise ValueError(f"No interior node has depth >= {margin}")
    gradient = wirtinger(field).gradient_norm[region]
    return float(np.nanmin(gradient))


def beltrami_distortion_estimate(field: ScalarField, margin: int = 2) -> float:
    """
    95th percentile of |f_zbar| / |f_z| for f = u_z sampled at cell centers.
    Only cells whose corners lie at depth >= margin count, and cells with
    |f_z| below 1e-3 of its median are dropped as noise.
    """
    depth = field.mask.depth()
    deep = depth >= margin
    cells = deep[:-1, :-1] & deep[1:, :-1] & deep[:-1, 1:] & deep[1:, 1:]
    f, _ = cell_wirtinger(field)
    f = np.where(cells, f, np.nan)
    h = field.h
    f_x = axis_derivative(f, cells, h, axis=1)
    f_y = axis_derivative(f, cells, h, axis=0)
    f_z = np.abs((f_x - 1j * f_y) / 2.0)
    f_zbar = np.abs((f_x + 1j * f_y) / 2.0)
    finite = cells & np.isfinite(f_z) & np.isfinite(f_zbar)
    if not finite.any():
        raise ValueError("No cells available for the distortion estimate")
    floor = 1e-3 * float(np.median(f_z[finite]))
    usable = finite & (f_z > floor)
    if not usable.any():
        raise ValueError("|f_z| is below the noise floor on every cell")
    mu = f_zbar[usable] / f_z[usable]
    return float(np.percentile(mu, BELTRAMI_PERCENTILE))
