import logging
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import LineString, MultiLineString

from caplab.geometry.curves import BoundaryMap, CapacitorSpec, Curve, GeometryError
from caplab.utils import (
    circular_block_count,
    complex_diameter,
    farthest_pair,
    merge_intervals,
)

logger = logging.getLogger(__name__)

EQUALITY_SCALE = 1e-9


@dataclass(frozen=True)
class StarlikeReport:
    is_starlike: bool
    worst_direction: float
    worst_component_count: int


@dataclass(frozen=True)
class StarlikeShapingReport:
    single_hole: bool
    nonconstant: bool
    monotone: bool
    starlike: StarlikeReport | None

    @property
    def holds(self) -> bool:
        return bool(
            self.single_hole
            and self.nonconstant
            and self.monotone
            and self.starlike is not None
            and self.starlike.is_starlike
        )


def _continuum_geometry(continuum: list[Curve]) -> MultiLineString:
    lines = []
    for curve in continuum:
        coords = curve.points
        if curve.closed:
            coords = np.vstack([coords, coords[:1]])
        lines.append(LineString(coords))
    return MultiLineString(lines)


def is_starlike(
    continuum: list[Curve],
    center: complex,
    merge_tol: float,
    directions: int = 360,
) -> StarlikeReport:
    """
    Intersects `directions` equally spaced lines through `center` with the
    continuum and counts connected pieces of each intersection. Pieces whose
    gap along the line is at most `merge_tol` count as one. For a continuum
    sampled from a grid of spacing h, 2h is the natural choice.
    """
    if not continuum:
        raise GeometryError("Starlike test needs a nonempty continuum")
    if directions < 360:
        raise ValueError(
            f"Starlike test needs at least 360 directions, got {directions}"
        )
    if merge_tol <= 0.0:
        raise ValueError(f"merge_tol must be positive, got {merge_tol}")
    geometry = _continuum_geometry(continuum)
    points = np.vstack([curve.points for curve in continuum])
    c = np.array([center.real, center.imag])
    reach = float(np.sqrt(((points - c) ** 2).sum(axis=1)).max()) + 1.0

    worst_count, worst_angle = -1, 0.0
    for k in range(directions):
        angle = np.pi * k / directions
        d = np.array([np.cos(angle), np.sin(angle)])
        line = LineString([c - reach * d, c + reach * d])
        pieces = shapely.get_parts(line.intersection(geometry))
        intervals = []
        for piece in pieces:
            if piece.is_empty:
                continue
            s = (shapely.get_coordinates(piece) - c) @ d
            intervals.append((float(s.min()), float(s.max())))
        count = len(merge_intervals(intervals, merge_tol))
        if count > worst_count:
            worst_count, worst_angle = count, angle
    return StarlikeReport(worst_count <= 2, worst_angle, worst_count)


def _equality_tolerance(values: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        return tol
    return EQUALITY_SCALE * complex_diameter(values)


def is_monotone(boundary_map: BoundaryMap, tol: float | None = None) -> bool:
    """
    Discrete monotonicity: the sample indices whose values lie within `tol` of
    any given sample value form a single circular block.
    """
    values = boundary_map.values
    tol = _equality_tolerance(values, tol)
    tree = cKDTree(np.column_stack([values.real, values.imag]))
    preimages = tree.query_ball_point(np.column_stack([values.real, values.imag]), tol)
    seen: set[tuple[int, ...]] = set()
    for preimage in preimages:
        key = tuple(sorted(preimage))
        if key in seen:
            continue
        seen.add(key)
        flags = np.zeros(len(values), dtype=bool)
        flags[list(key)] = True
        if circular_block_count(flags) > 1:
            return False
    return True


def segment_image_check(boundary_map: BoundaryMap, tol: float | None = None) -> bool:
    """True iff the image samples are collinear within `tol`."""
    values = boundary_map.values
    tol = _equality_tolerance(values, tol)
    a, b = farthest_pair(values)
    if abs(b - a) == 0.0:
        return True
    distances = np.abs(((values - a) * np.conj(b - a)).imag) / abs(b - a)
    return bool(distances.max() <= tol)


def monotone_segment_contradiction(
    boundary_map: BoundaryMap, tol: float | None = None
) -> bool:
    """
    A monotone map of a closed curve onto a non-degenerate segment cannot
    exist; a True result flags inconsistent data or tolerances.
    """
    if complex_diameter(boundary_map.values) == 0.0:
        return False
    return is_monotone(boundary_map, tol) and segment_image_check(boundary_map, tol)


def image_continuum(boundary_map: BoundaryMap) -> list[Curve]:
    """The image of the outer boundary as a closed polyline; empty for a point."""
    values = boundary_map.values
    keep = np.abs(values - np.roll(values, 1)) > 0.0
    distinct = values[keep] if keep.any() else values[:1]
    if len(distinct) >= 3:
        return [Curve.from_complex(distinct, closed=True)]
    if len(distinct) == 2:
        return [Curve.from_complex(distinct, closed=False)]
    return []


def is_starlike_shaping(
    spec: CapacitorSpec, merge_tol: float, directions: int = 360
) -> StarlikeShapingReport:
    """
    Data constant on a single hole, mapping the outer boundary monotonically
    onto a continuum starlike about that constant.
    """
    single_hole = len(spec.holes) == 1
    nonconstant = complex_diameter(spec.outer_map.values) > 0.0
    monotone = is_monotone(spec.outer_map)
    starlike = None
    continuum = image_continuum(spec.outer_map)
    if single_hole and continuum:
        starlike = is_starlike(continuum, spec.hole_values[0], merge_tol, directions)
    elif single_hole:
        # a point meets every line in at most one piece
        starlike = StarlikeReport(True, 0.0, 1)
    report = StarlikeShapingReport(single_hole, nonconstant, monotone, starlike)
    logger.info(
        "Starlike-shaping: holds=%s (single_hole=%s, nonconstant=%s, monotone=%s)",
        report.holds,
        single_hole,
        nonconstant,
        monotone,
    )
    return report
