import logging
from dataclasses import dataclass

import numpy as np

from caplab.geometry.curves import GridSpec

logger = logging.getLogger(__name__)

SPLIT_OFFSETS = (0, 1, -1, 2, -2)


class InconclusiveWindowError(ValueError):
    """The function comes too close to zero on a window border."""


@dataclass(frozen=True)
class Window:
    """Node rectangle [row0, row1] x [col0, col1], bounds inclusive."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if self.row1 <= self.row0 or self.col1 <= self.col0:
            raise ValueError(f"Degenerate window {self}")

    @classmethod
    def around(cls, grid: GridSpec, center: complex, half_width: int) -> "Window":
        row, col = grid.nearest_node(center)
        return cls(
            row - half_width, col - half_width, row + half_width, col + half_width
        )

    @property
    def height(self) -> int:
        return self.row1 - self.row0

    @property
    def width(self) -> int:
        return self.col1 - self.col0

    def border(self) -> tuple[np.ndarray, np.ndarray]:
        """Border nodes in counterclockwise order (rows grow with y)."""
        r0, c0, r1, c1 = self.row0, self.col0, self.row1, self.col1
        cols = np.arange(c0, c1)
        rows = np.arange(r0, r1)
        border_rows = np.concatenate(
            [np.full(len(cols), r0), rows, np.full(len(cols), r1), rows[::-1] + 1]
        )
        border_cols = np.concatenate(
            [cols, np.full(len(rows), c1), cols[::-1] + 1, np.full(len(rows), c0)]
        )
        return border_rows, border_cols

    def split(self, offset: int = 0) -> tuple["Window", "Window"] | None:
        """Two halves sharing the middle line, moved by `offset` nodes."""
        if self.width >= self.height:
            mid = (self.col0 + self.col1) // 2 + offset
            if not self.col0 < mid < self.col1:
                return None
            return (
                Window(self.row0, self.col0, self.row1, mid),
                Window(self.row0, mid, self.row1, self.col1),
            )
        mid = (self.row0 + self.row1) // 2 + offset
        if not self.row0 < mid < self.row1:
            return None
        return (
            Window(self.row0, self.col0, mid, self.col1),
            Window(mid, self.col0, self.row1, self.col1),
        )


def _quadrant(values: np.ndarray) -> np.ndarray:
    quadrant = np.zeros(values.shape, dtype=int)
    quadrant[(values.real <= 0) & (values.imag > 0)] = 1
    quadrant[(values.real < 0) & (values.imag <= 0)] = 2
    quadrant[(values.real >= 0) & (values.imag < 0)] = 3
    return quadrant


def winding_number(
    values: np.ndarray, window: Window, noise_floor: float | None = None
) -> int:
    """
    Winding of `values` around 0 along the window border, counted from
    quadrant transitions. A jump across two quadrants is resolved by the sign
    of the cross product of the two samples.
    """
    rows, cols = window.border()
    samples = values[rows, cols]
    modulus = np.abs(samples)
    if noise_floor is None:
        noise_floor = 1e-9 * float(np.nanmax(modulus)) if modulus.size else 0.0
    if not np.all(np.isfinite(samples)) or np.any(modulus <= noise_floor):
        raise InconclusiveWindowError(
            f"|f| at or below the noise floor {noise_floor:.3g} "
            f"on the border of {window}"
        )
    quadrant = _quadrant(samples)
    following = np.roll(samples, -1)
    steps = (np.roll(quadrant, -1) - quadrant) % 4
    turns = np.where(steps == 1, 1, 0) - np.where(steps == 3, 1, 0)
    jumps = steps == 2
    if jumps.any():
        cross = (np.conj(samples[jumps]) * following[jumps]).imag
        if np.any(cross == 0):
            raise InconclusiveWindowError(f"Border of {window} passes through zero")
        turns = turns.astype(int)
        turns[jumps] = np.where(cross > 0, 2, -2)
    total = int(turns.sum())
    if total % 4 != 0:
        raise InconclusiveWindowError(f"Non-integer winding on {window}")
    return total // 4


def argument_principle_zeros(
    values: np.ndarray,
    window: Window,
    grid: GridSpec,
    noise_floor: float | None = None,
) -> list[tuple[complex, int]]:
    """
    Zeros of a grid function inside a window with their multiplicities.
    Windows with nonzero winding are bisected until they span at most two
    cells; the zero is placed at the node of smallest |f| in the final window.
    """
    total = winding_number(values, window, noise_floor)
    if total == 0:
        return []
    return _localize(values, window, grid, total, noise_floor)


def _localize(
    values: np.ndarray,
    window: Window,
    grid: GridSpec,
    total: int,
    noise_floor: float | None,
) -> list[tuple[complex, int]]:
    if window.width <= 2 and window.height <= 2:
        return [(_smallest_node(values, window, grid), total)]
    for offset in SPLIT_OFFSETS:
        halves = window.split(offset)
        if halves is None:
            continue
        try:
            counts = [winding_number(values, half, noise_floor) for half in halves]
        except InconclusiveWindowError:
            continue
        zeros = []
        for half, count in zip(halves, counts):
            if count != 0:
                zeros.extend(_localize(values, half, grid, count, noise_floor))
        return zeros
    logger.debug("Could not bisect %s further; reporting it whole", window)
    return [(_smallest_node(values, window, grid), total)]


def _smallest_node(values: np.ndarray, window: Window, grid: GridSpec) -> complex:
    block = np.abs(values[window.row0 : window.row1 + 1, window.col0 : window.col1 + 1])
    row, col = np.unravel_index(int(np.nanargmin(block)), block.shape)
    return complex(grid.xs[window.col0 + col], grid.ys[window.row0 + row])
