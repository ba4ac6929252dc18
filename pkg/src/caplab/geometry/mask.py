import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import shapely
from scipy import ndimage

from caplab.geometry.curves import CapacitorSpec, GeometryError, GridSpec

logger = logging.getLogger(__name__)

FOUR_NEIGHBORS = ((0, 1), (0, -1), (1, 0), (-1, 0))


class NodeKind(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    OUTER_BOUNDARY = 2
    # hole k is labelled HOLE_BOUNDARY + k
    HOLE_BOUNDARY = 3


def hole_label(k: int) -> int:
    return int(NodeKind.HOLE_BOUNDARY) + k


class Mask:
    """Per-node classification of a grid, labels indexed [row = y, column = x]."""

    def __init__(
        self,
        grid: GridSpec,
        labels: np.ndarray,
        n_holes: int = 0,
        domain: shapely.Geometry | None = None,
    ):
        if labels.shape != (grid.n, grid.n):
            raise GeometryError(
                f"Mask labels {labels.shape} do not match grid n={grid.n}"
            )
        self._grid = grid
        self._labels = labels.astype(np.int16)
        self._labels.setflags(write=False)
        self._n_holes = n_holes
        self._domain = domain
        self._fractions: np.ndarray | None = None

    @property
    def grid(self) -> GridSpec:
        return self._grid

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def h(self) -> float:
        return self._grid.h

    @property
    def n_holes(self) -> int:
        return self._n_holes

    @property
    def domain(self) -> shapely.Geometry | None:
        """The continuous region between the curves, when known."""
        return self._domain

    @property
    def interior(self) -> np.ndarray:
        return self._labels == NodeKind.INTERIOR

    @property
    def exterior(self) -> np.ndarray:
        return self._labels == NodeKind.EXTERIOR

    @property
    def active(self) -> np.ndarray:
        """Nodes that carry a value: interior and boundary layers."""
        return self._labels != NodeKind.EXTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self._labels >= NodeKind.OUTER_BOUNDARY

    @property
    def outer_boundary(self) -> np.ndarray:
        return self._labels == NodeKind.OUTER_BOUNDARY

    def hole_boundary(self, k: int) -> np.ndarray:
        return self._labels == hole_label(k)

    def kind_name(self, label: int) -> str:
        if label == NodeKind.INTERIOR:
            return "interior"
        if label == NodeKind.OUTER_BOUNDARY:
            return "outer"
        if label >= NodeKind.HOLE_BOUNDARY:
            return f"hole{label - NodeKind.HOLE_BOUNDARY}"
        return "exterior"

    def depth(self) -> np.ndarray:
        """
        Chessboard distance of each interior node to the nearest non-interior
        node; nodes next to the boundary layer have depth 1, others 0.
        """
        return ndimage.distance_transform_cdt(self.interior, metric="chessboard")

    def complete_cells(self, interior_only: bool = False) -> np.ndarray:
        """(n-1, n-1) flags of cells whose four corners carry values."""
        nodes = self.interior if interior_only else self.active
        return nodes[:-1, :-1] & nodes[1:, :-1] & nodes[:-1, 1:] & nodes[1:, 1:]

    def cell_fractions(self) -> np.ndarray | None:
        """
        (n-1, n-1) share of each cell's area that lies in the domain. Cells with
        four interior corners count as full; cells near the boundary layer are
        clipped against the domain polygon. None without a domain.
        """
        if self._domain is None:
            return None
        if self._fractions is None:
            full = self.complete_cells(interior_only=True)
            corners = self.active
            touched = corners[:-1, :-1] | corners[1:, :-1]
            touched |= corners[:-1, 1:] | corners[1:, 1:]
            near = ndimage.binary_dilation(touched & ~full, iterations=1) & ~full
            rows, cols = np.nonzero(near)
            xs, ys, h = self._grid.xs, self._grid.ys, self.h
            clipped = np.array(
                [
                    shapely.clip_by_rect(self._domain, x0, y0, x1, y1)
                    for x0, y0, x1, y1 in zip(
                        xs[cols], ys[rows], xs[cols + 1], ys[rows + 1]
                    )
                ],
                dtype=object,
            )
            fractions = full.astype(float)
            fractions[rows, cols] = np.clip(shapely.area(clipped) / h**2, 0.0, 1.0)
            fractions.setflags(write=False)
            self._fractions = fractions
        return self._fractions

    def component_count(self, label: int) -> int:
        """Number of 8-connected components of nodes with a given label."""
        _, count = ndimage.label(self._labels == label, structure=np.ones((3, 3)))
        return int(count)


@dataclass(frozen=True, eq=False)
class BoundaryAnchors:
    """Nearest curve point and its distance for every boundary node."""

    rows: np.ndarray
    cols: np.ndarray
    points: np.ndarray
    offsets: np.ndarray
    data: np.ndarray


def _shift(array: np.ndarray, dj: int, di: int, fill=False) -> np.ndarray:
    """array[j + dj, i + di] aligned to [j, i], padded with `fill`."""
    out = np.full_like(array, fill)
    n_rows, n_cols = array.shape
    src_rows = slice(max(dj, 0), n_rows + min(dj, 0))
    dst_rows = slice(max(-dj, 0), n_rows + min(-dj, 0))
    src_cols = slice(max(di, 0), n_cols + min(di, 0))
    dst_cols = slice(max(-di, 0), n_cols + min(-di, 0))
    out[dst_rows, dst_cols] = array[src_rows, src_cols]
    return out


def rasterize(spec: CapacitorSpec, grid: GridSpec) -> Mask:
    h = grid.h
    if grid.margin_to(spec.outer) < 2.0 * h * (1.0 - 1e-9):
        raise GeometryError(
            f"Grid bbox must contain the outer curve with a margin of 2h = {2 * h:.4g}"
        )
    z = grid.z
    inside_outer = shapely.contains_xy(spec.outer.polygon, z.real, z.imag)
    inside_holes = []
    for k, hole in enumerate(spec.holes):
        if hole.diameter < 4.0 * h:
            raise GeometryError(
                f"Hole {k} has diameter {hole.diameter:.4g} < 4h = {4 * h:.4g}"
            )
        gap = spec.outer.line.distance(hole.polygon)
        if gap <= h:
            raise GeometryError(
                f"Hole {k} comes within {gap:.4g} <= h of the outer boundary"
            )
        for j in range(k):
            gap = spec.holes[j].polygon.distance(hole.polygon)
            if gap <= h:
                raise GeometryError(f"Holes {j} and {k} are {gap:.4g} <= h apart")
        inside_holes.append(shapely.intersects_xy(hole.polygon, z.real, z.imag))

    in_delta = inside_outer.copy()
    for inside in inside_holes:
        in_delta &= ~inside

    labels = np.where(in_delta, int(NodeKind.INTERIOR), int(NodeKind.EXTERIOR))
    touches_outer = np.zeros_like(in_delta)
    touches_hole = np.zeros((len(spec.holes),) + in_delta.shape, dtype=bool)
    for dj, di in FOUR_NEIGHBORS:
        touches_outer |= in_delta & ~_shift(inside_outer, dj, di)
        for k, inside in enumerate(inside_holes):
            touches_hole[k] |= in_delta & _shift(inside, dj, di)

    crossings = touches_outer.astype(int) + touches_hole.sum(axis=0)
    if np.any(crossings > 1):
        j, i = np.argwhere(crossings > 1)[0]
        raise GeometryError(
            f"Node ({grid.xs[i]:.4g}, {grid.ys[j]:.4g}) borders two boundary "
            "components within one cell"
        )
    labels[touches_outer] = NodeKind.OUTER_BOUNDARY
    for k in range(len(spec.holes)):
        if not touches_hole[k].any():
            raise GeometryError(f"Hole {k} produces no boundary nodes at n={grid.n}")
        labels[touches_hole[k]] = hole_label(k)

    interior = labels == NodeKind.INTERIOR
    _, count = ndimage.label(interior)
    if count != 1:
        raise GeometryError(
            f"Interior nodes form {count} 4-connected components, expected 1"
        )
    logger.debug(
        "Rasterized n=%d: %d interior, %d boundary nodes",
        grid.n,
        int(interior.sum()),
        int((labels >= NodeKind.OUTER_BOUNDARY).sum()),
    )
    return Mask(grid, labels, n_holes=len(spec.holes), domain=spec.domain)


def boundary_anchors(spec: CapacitorSpec, mask: Mask) -> BoundaryAnchors:
    """Nearest curve point, its distance and the Dirichlet datum per boundary node."""
    z = mask.grid.z
    rows, cols = np.nonzero(mask.boundary)
    labels = mask.labels[rows, cols]
    nodes = shapely.points(z.real[rows, cols], z.imag[rows, cols])
    points = np.empty(len(rows), dtype=complex)
    data = np.empty(len(rows), dtype=complex)

    selected = labels == NodeKind.OUTER_BOUNDARY
    ring = spec.outer.line
    t = shapely.line_locate_point(ring, nodes[selected], normalized=True)
    nearest = shapely.line_interpolate_point(ring, t, normalized=True)
    points[selected] = shapely.get_x(nearest) + 1j * shapely.get_y(nearest)
    data[selected] = spec.outer_map(t)

    for k, hole in enumerate(spec.holes):
        selected = labels == hole_label(k)
        ring = hole.line
        distance = shapely.line_locate_point(ring, nodes[selected])
        nearest = shapely.line_interpolate_point(ring, distance)
        points[selected] = shapely.get_x(nearest) + 1j * shapely.get_y(nearest)
        data[selected] = spec.hole_values[k]

    offsets = np.abs(points - z[rows, cols])
    return BoundaryAnchors(rows, cols, points, offsets, data)
