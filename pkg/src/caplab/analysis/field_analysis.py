import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from caplab.geometry.mask import Mask
from caplab.solver.fields import ComplexField, ScalarField

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


class Rank(str, Enum):
    ZERO = "zero"
    ONE = "one"


class WirtingerField:
    """Per-node Wirtinger derivatives of a grid field (NaN where undefined)."""

    def __init__(
        self, mask: Mask, d_z: np.ndarray, d_zbar: np.ndarray, is_real: bool = False
    ):
        self._mask = mask
        self._d_z = d_z
        self._d_zbar = d_zbar
        self._is_real = is_real

    @property
    def mask(self) -> Mask:
        return self._mask

    @property
    def d_z(self) -> np.ndarray:
        return self._d_z

    @property
    def d_zbar(self) -> np.ndarray:
        return self._d_zbar

    @property
    def is_real(self) -> bool:
        return self._is_real

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return np.abs(self._d_z) ** 2 + np.abs(self._d_zbar) ** 2

    @property
    def jac(self) -> np.ndarray:
        return np.abs(self._d_z) ** 2 - np.abs(self._d_zbar) ** 2

    @property
    def gradient_norm(self) -> np.ndarray:
        """|grad u| for real fields, where |grad u|^2 = 2 grad_norm_sq."""
        return np.sqrt(2.0 * self.grad_norm_sq)


def axis_derivative(values: np.ndarray, defined: np.ndarray, h: float, axis: int):
    """
    Central differences where both neighbours are defined, otherwise second-order
    one-sided differences, otherwise first-order; NaN where nothing is available.
    """

    def shifted(array, offset, fill):
        out = np.full_like(array, fill)
        n = array.shape[axis]
        src = [slice(None)] * 2
        dst = [slice(None)] * 2
        src[axis] = slice(max(offset, 0), n + min(offset, 0))
        dst[axis] = slice(max(-offset, 0), n + min(-offset, 0))
        out[tuple(dst)] = array[tuple(src)]
        return out

    v = np.where(defined, values, 0)
    plus1, minus1 = shifted(v, 1, 0), shifted(v, -1, 0)
    plus2, minus2 = shifted(v, 2, 0), shifted(v, -2, 0)
    has_p1, has_m1 = shifted(defined, 1, False), shifted(defined, -1, False)
    has_p2, has_m2 = shifted(defined, 2, False), shifted(defined, -2, False)

    result = np.full(values.shape, np.nan, dtype=v.dtype)
    forward1 = defined & has_p1 & ~has_m1
    backward1 = defined & has_m1 & ~has_p1
    result[forward1] = ((plus1 - v) / h)[forward1]
    result[backward1] = ((v - minus1) / h)[backward1]
    forward2 = forward1 & has_p2
    backward2 = backward1 & has_m2
    result[forward2] = ((-3 * v + 4 * plus1 - plus2) / (2 * h))[forward2]
    result[backward2] = ((3 * v - 4 * minus1 + minus2) / (2 * h))[backward2]
    central = defined & has_p1 & has_m1
    result[central] = ((plus1 - minus1) / (2 * h))[central]
    return result


def wirtinger(field: ComplexField | ScalarField) -> WirtingerField:
    values = np.asarray(field.values, dtype=complex)
    defined = field.defined
    h = field.h
    # axis 0 is y (rows), axis 1 is x (columns)
    h_x = axis_derivative(values, defined, h, axis=1)
    h_y = axis_derivative(values, defined, h, axis=0)
    is_real = isinstance(field, ScalarField) or field.is_real()
    d_z = (h_x - 1j * h_y) / 2.0
    d_zbar = (h_x + 1j * h_y) / 2.0
    if is_real:
        d_zbar = np.conj(d_z)
    return WirtingerField(field.mask, d_z, d_zbar, is_real=is_real)


def cell_gradient(values: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """(H_x, H_y) at cell centers from the four corners; shape (n-1, n-1)."""
    v00, v01 = values[:-1, :-1], values[:-1, 1:]
    v10, v11 = values[1:, :-1], values[1:, 1:]
    h_x = ((v01 + v11) - (v00 + v10)) / (2.0 * h)
    h_y = ((v10 + v11) - (v00 + v01)) / (2.0 * h)
    return h_x, h_y


def cell_wirtinger(field: ComplexField | ScalarField) -> tuple[np.ndarray, np.ndarray]:
    h_x, h_y = cell_gradient(np.asarray(field.values, dtype=complex), field.h)
    return (h_x - 1j * h_y) / 2.0, (h_x + 1j * h_y) / 2.0


@dataclass(frozen=True)
class CriticalPoint:
    location: complex
    rank: Rank
    grad_norm_sq: float
    jac: float
    order_m: int = 1

    def to_dict(self) -> dict:
        return {
            "x": self.location.real,
            "y": self.location.imag,
            "rank": self.rank.value,
            "m": self.order_m,
            "grad_norm_sq": self.grad_norm_sq,
            "jac": self.jac,
        }


def default_thresholds(wf: WirtingerField, standoff: int = 2) -> tuple[float, float]:
    """(tau_zero, tau_jac) = (h, 10 h) times the median of grad_norm_sq."""
    region = _analysis_region(wf.mask, standoff)
    gns = wf.grad_norm_sq[region]
    gns = gns[np.isfinite(gns)]
    median = float(np.median(gns)) if gns.size else 0.0
    h = wf.mask.h
    return h * median, 10.0 * h * median


def _analysis_region(mask: Mask, standoff: int) -> np.ndarray:
    return mask.depth() > standoff


def _tile_labels(labels: np.ndarray, tile: int) -> np.ndarray:
    """Splits each labelled cluster into blocks of tile x tile nodes."""
    rows, cols = np.indices(labels.shape)
    blocks = (rows // tile) * (labels.shape[1] // tile + 1) + cols // tile
    combined = np.where(labels > 0, labels * (blocks.max() + 1) + blocks, 0)
    _, inverse = np.unique(combined, return_inverse=True)
    return inverse.reshape(labels.shape)


def classify_critical(
    wf: WirtingerField,
    tau_zero: float | None = None,
    tau_jac: float | None = None,
    standoff: int = 2,
    tile: int = 3,
) -> list[CriticalPoint]:
    """
    Rank-zero points: 8-connected clusters of nodes with grad_norm_sq <= tau_zero,
    one point per cluster. Rank-one points: nodes next to a sign change of the
    Jacobian with |jac| <= tau_jac, clustered and tiled into tile x tile blocks
    so that every point lies on the zero curve. Only nodes deeper than
    `standoff` cells inside the boundary layer are examined.
    """
    default_zero, default_jac = default_thresholds(wf, standoff)
    tau_zero = default_zero if tau_zero is None else tau_zero
    tau_jac = default_jac if tau_jac is None else tau_jac
    mask = wf.mask
    region = _analysis_region(mask, standoff)
    gns = np.where(region, wf.grad_norm_sq, np.inf)
    jac = np.where(region, wf.jac, np.nan)
    z = mask.grid.z

    points: list[CriticalPoint] = []
    zero_nodes = region & (gns <= tau_zero)
    labels, count = ndimage.label(zero_nodes, structure=EIGHT_CONNECTED)
    points.extend(_cluster_points(labels, count, z, gns, jac, Rank.ZERO))

    if not wf.is_real:
        crossing = np.zeros_like(region)
        for axis in (0, 1):
            for offset in (1, -1):
                other = np.roll(jac, offset, axis=axis)
                touching = (jac == 0) & np.isfinite(other) & (other != 0)
                change = (jac * other < 0) | touching
                closer = np.abs(jac) <= np.abs(other)
                crossing |= change & closer
        one_nodes = region & crossing & (np.abs(jac) <= tau_jac) & ~zero_nodes
        labels, _ = ndimage.label(one_nodes, structure=EIGHT_CONNECTED)
        tiled = _tile_labels(labels, tile)
        points.extend(_cluster_points(tiled, int(tiled.max()), z, gns, jac, Rank.ONE))
    logger.info(
        "Critical points: %d rank-zero, %d rank-one (tau_zero=%.3g, tau_jac=%.3g)",
        sum(p.rank == Rank.ZERO for p in points),
        sum(p.rank == Rank.ONE for p in points),
        tau_zero,
        tau_jac,
    )
    return points


def _cluster_points(labels, count, z, gns, jac, rank: Rank) -> list[CriticalPoint]:
    points = []
    for label in range(1, count + 1):
        members = labels == label
        if not members.any():
            continue
        weights = gns[members]
        if not np.sum(weights) > 0:
            weights = np.ones_like(weights)
        location = complex(np.sum(weights * z[members]) / np.sum(weights))
        points.append(
            CriticalPoint(
                location=location,
                rank=rank,
                grad_norm_sq=float(gns[members].min()),
                jac=float(np.abs(jac[members]).min()),
            )
        )
    return points


@dataclass(frozen=True)
class ProjectionCoefficients:
    alpha: float
    beta: float

    def __post_init__(self):
        if abs(self.alpha**2 + self.beta**2 - 1.0) > 1e-12:
            raise ValueError(
                f"Projection coefficients must be a unit vector, got "
                f"({self.alpha}, {self.beta})"
            )


def project_W(field: ComplexField, coeffs: ProjectionCoefficients) -> ScalarField:
    """W = alpha U + beta V."""
    values = coeffs.alpha * field.values.real + coeffs.beta * field.values.imag
    return ScalarField(field.mask, values)


def choose_coefficients(
    value_at_a: complex, center: complex = 0j, tol: float | None = None
) -> ProjectionCoefficients:
    """
    Unit vector orthogonal to value_at_a - center, with positive second component
    (positive first on a tie); (1, 0) when the difference vanishes.
    """
    offset = complex(value_at_a) - complex(center)
    if tol is None:
        tol = 1e-12 * max(1.0, abs(value_at_a), abs(center))
    if abs(offset) <= tol:
        return ProjectionCoefficients(1.0, 0.0)
    unit = offset / abs(offset)
    alpha, beta = -unit.imag, unit.real
    if beta < 0 or (beta == 0 and alpha < 0):
        alpha, beta = -alpha, -beta
    norm = np.hypot(alpha, beta)
    return ProjectionCoefficients(float(alpha / norm), float(beta / norm))

