import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from caplab.geometry.mask import BoundaryAnchors, Mask


class InteriorSystem:
    """
    Weighted 5-point operator on the interior unknowns of a mask. Unknowns are
    numbered in row-major node order; boundary neighbours move to the right side.
    """

    def __init__(self, mask: Mask):
        self._mask = mask
        interior = mask.interior
        self._index = np.full(interior.shape, -1, dtype=np.int64)
        self._rows, self._cols = np.nonzero(interior)
        self._index[self._rows, self._cols] = np.arange(len(self._rows))

    @property
    def size(self) -> int:
        return len(self._rows)

    @property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self._rows, self._cols

    def assemble(
        self, weights_x: np.ndarray | None = None, weights_y: np.ndarray | None = None
    ) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """
        Returns (A, C): A acts on interior unknowns, C maps a full node vector to
        the boundary contributions of the right side. `weights_x[j, i]` weighs
        edge (j, i)-(j, i+1), `weights_y[j, i]` edge (j, i)-(j+1, i).
        """
        n = self._mask.grid.n
        if weights_x is None:
            weights_x = np.ones((n, n - 1))
        if weights_y is None:
            weights_y = np.ones((n - 1, n))
        rows, cols = self._rows, self._cols
        me = self._index[rows, cols]
        neighbours = (
            (rows, cols + 1, weights_x[rows, cols]),
            (rows, cols - 1, weights_x[rows, cols - 1]),
            (rows + 1, cols, weights_y[rows, cols]),
            (rows - 1, cols, weights_y[rows - 1, cols]),
        )
        diagonal = np.zeros(self.size)
        a_rows, a_cols, a_data = [me], [me], []
        c_rows, c_cols, c_data = [], [], []
        for nb_rows, nb_cols, weight in neighbours:
            diagonal += weight
            nb_index = self._index[nb_rows, nb_cols]
            inside = nb_index >= 0
            a_rows.append(me[inside])
            a_cols.append(nb_index[inside])
            a_data.append(-weight[inside])
            c_rows.append(me[~inside])
            c_cols.append(nb_rows[~inside] * n + nb_cols[~inside])
            c_data.append(weight[~inside])
        a_data.insert(0, diagonal)
        A = sp.csr_matrix(
            (np.concatenate(a_data), (np.concatenate(a_rows), np.concatenate(a_cols))),
            shape=(self.size, self.size),
        )
        C = sp.csr_matrix(
            (np.concatenate(c_data), (np.concatenate(c_rows), np.concatenate(c_cols))),
            shape=(self.size, n * n),
        )
        return A, C

    def rhs(self, C: sp.csr_matrix, values: np.ndarray) -> np.ndarray:
        return C @ np.nan_to_num(values.ravel())

    def scatter(self, values: np.ndarray, interior_values: np.ndarray) -> np.ndarray:
        full = values.copy()
        full[self._rows, self._cols] = interior_values
        return full

    def gather(self, values: np.ndarray) -> np.ndarray:
        return values[self._rows, self._cols]


def conjugate_gradient(
    A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, atol: float, max_iter: int
) -> tuple[np.ndarray, int, bool]:
    """CG to an absolute 2-norm residual; returns (x, iterations, converged)."""
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x, info = cg(A, b, x0=x0, rtol=0.0, atol=atol, maxiter=max_iter, callback=count)
    return x, iterations, info == 0


class BoundaryCorrection:
    """
    Refines Dirichlet values of boundary nodes that sit a distance delta inside
    their curve: u(p) = (h g(q) + delta u(p - h n)) / (delta + h), with q the
    nearest curve point, n = (q - p)/delta and u(p - h n) interpolated
    bilinearly. Each update contracts by delta/(delta + h) < 1/2.
    """

    def __init__(self, mask: Mask, anchors: BoundaryAnchors):
        h = mask.h
        grid = mask.grid
        self._anchors = anchors
        nodes = grid.xs[anchors.cols] + 1j * grid.ys[anchors.rows]
        offsets = anchors.offsets
        valid = offsets > 1e-9 * h
        safe = np.where(valid, offsets, 1.0)
        normals = np.where(valid, (anchors.points - nodes) / safe, 0)
        inward_points = nodes - h * normals
        fx = (inward_points.real - grid.bbox[0]) / h
        fy = (inward_points.imag - grid.bbox[1]) / h
        i0 = np.clip(np.floor(fx).astype(int), 0, grid.n - 2)
        j0 = np.clip(np.floor(fy).astype(int), 0, grid.n - 2)
        tx, ty = fx - i0, fy - j0
        self._corners = [
            (j0, i0, (1 - tx) * (1 - ty)),
            (j0, i0 + 1, tx * (1 - ty)),
            (j0 + 1, i0, (1 - tx) * ty),
            (j0 + 1, i0 + 1, tx * ty),
        ]
        for rows, cols, _ in self._corners:
            valid &= mask.active[rows, cols]
        self._valid = valid
        self._blend = np.where(valid, offsets / (offsets + h), 0.0)

    @property
    def anchors(self) -> BoundaryAnchors:
        return self._anchors

    @property
    def corrected_fraction(self) -> float:
        return float(self._valid.mean()) if self._valid.size else 0.0

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Updated Dirichlet values for the anchored nodes given the current field."""
        inward = np.zeros(len(self._blend))
        for rows, cols, weight in self._corners:
            corner = values[rows, cols]
            inward += weight * np.where(self._valid, corner, 0.0)
        return (1.0 - self._blend) * self._anchors.data + self._blend * inward
