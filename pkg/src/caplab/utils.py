import numpy as np
from scipy.spatial import ConvexHull, QhullError


def merge_intervals(intervals: list[tuple], tolerance: float = 0.0) -> list[tuple]:
    """
    Merge closed intervals whose gap is at most `tolerance`.
    Degenerate intervals (a, a) stand for single points.
    """
    if not intervals:
        return []
    ordered = sorted((min(a, b), max(a, b)) for a, b in intervals)
    merged = [ordered[0]]
    for start, end in ordered[1:]:
        last_start, last_end = merged[-1]
        if start - last_end <= tolerance:
            merged[-1] = (last_start, max(last_end, end))
        else:
            merged.append((start, end))
    return merged


def circular_block_count(flags: np.ndarray) -> int:
    """
    Number of maximal runs of True in a circular boolean sequence.
    An all-True sequence is one block.
    """
    flags = np.asarray(flags, dtype=bool)
    if not flags.any():
        return 0
    if flags.all():
        return 1
    # a run starts wherever a True follows a False, wrapping around
    return int(np.count_nonzero(flags & ~np.roll(flags, 1)))


def data_range(values: np.ndarray) -> float:
    """Spread of finite values; the diameter of the data for complex input."""
    values = np.asarray(values)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0
    if np.iscomplexobj(values):
        return complex_diameter(values)
    return float(values.max() - values.min())


def complex_diameter(values: np.ndarray) -> float:
    """Diameter of a finite complex point set."""
    points = np.asarray(values, dtype=complex).ravel()
    if points.size < 2:
        return 0.0
    hull = _convex_hull_points(points)
    diffs = hull[:, None] - hull[None, :]
    return float(np.abs(diffs).max())


def _convex_hull_points(points: np.ndarray) -> np.ndarray:
    unique = np.unique(points)
    if unique.size < 3:
        return unique
    try:
        hull = ConvexHull(np.column_stack([unique.real, unique.imag]))
    except QhullError:
        # collinear data: the extreme points along the spread direction suffice
        centered = unique - unique.mean()
        axis = centered[np.argmax(np.abs(centered))]
        projection = (centered * np.conj(axis)).real
        return unique[[int(np.argmin(projection)), int(np.argmax(projection))]]
    return unique[hull.vertices]


def farthest_pair(values: np.ndarray) -> tuple[complex, complex]:
    """Two points of a complex set realising its diameter."""
    points = np.asarray(values, dtype=complex).ravel()
    hull = _convex_hull_points(points)
    diffs = np.abs(hull[:, None] - hull[None, :])
    a, b = np.unravel_index(int(np.argmax(diffs)), diffs.shape)
    return complex(hull[a]), complex(hull[b])
