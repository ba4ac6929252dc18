import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from caplab.analysis.levelset import LevelSetComponent, TerminalKind
from caplab.geometry.mask import FOUR_NEIGHBORS, Mask, NodeKind, hole_label

logger = logging.getLogger(__name__)

SUPERSAMPLE = 2
MIN_REGION_PIXELS = 4
DENDRONE_CHECKS = ("bounded-faces", "faces-contain-holes", "edge-bound", "face-bound")


@dataclass(frozen=True)
class Face:
    point: complex
    holes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"x": self.point.real, "y": self.point.imag, "holes": list(self.holes)}


@dataclass(frozen=True, eq=False)
class PlanarGraph:
    """
    Graph of a traced component. V counts interior nodes; each boundary or
    open arc end is a degree-1 terminal, counted separately.
    """

    V: int
    E: int
    F: int
    degrees: list[int]
    terminals: int
    bounded_faces: list[Face]
    domain_regions: int
    connected: bool
    critical: list[bool] = field(default_factory=list)
    graph: nx.MultiGraph = field(default_factory=nx.MultiGraph)

    @property
    def degree_sum(self) -> int:
        return sum(self.degrees) + self.terminals

    def to_dict(self) -> dict:
        return {
            "V": self.V,
            "E": self.E,
            "F": self.F,
            "degrees": list(self.degrees),
            "terminals": self.terminals,
            "connected": self.connected,
            "domain_regions": self.domain_regions,
            "bounded_faces": [face.to_dict() for face in self.bounded_faces],
        }


def _pixel_grid(mask: Mask) -> tuple[float, float, float, int]:
    grid = mask.grid
    size = grid.h / SUPERSAMPLE
    return grid.bbox[0], grid.bbox[1], size, SUPERSAMPLE * (grid.n - 1)


def _rasterize_arcs(component: LevelSetComponent, mask: Mask) -> np.ndarray:
    xmin, ymin, size, pixels = _pixel_grid(mask)
    raster = np.zeros((pixels, pixels), dtype=bool)
    samples = [np.asarray(component.node_points, dtype=complex)]
    for arc in component.arcs:
        for start, end in zip(arc[:-1], arc[1:]):
            steps = max(int(np.ceil(abs(end - start) / (mask.h / 4.0))), 1)
            samples.append(start + (end - start) * np.linspace(0.0, 1.0, steps + 1))
    points = np.concatenate(samples)
    cols = np.clip(((points.real - xmin) / size).astype(int), 0, pixels - 1)
    rows = np.clip(((points.imag - ymin) / size).astype(int), 0, pixels - 1)
    raster[rows, cols] = True
    return raster


def _regions(free: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """4-connected labels of `free` and the labels large enough to count."""
    labels, count = ndimage.label(free)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    return labels, [k for k in range(1, count + 1) if sizes[k] >= MIN_REGION_PIXELS]


def hole_points(mask: Mask) -> list[tuple[int, int]]:
    """One exterior node inside each hole, next to that hole's boundary layer."""
    points = []
    exterior = mask.exterior
    n = mask.grid.n
    for k in range(mask.n_holes):
        rows, cols = np.nonzero(mask.hole_boundary(k))
        found = None
        for row, col in zip(rows.tolist(), cols.tolist()):
            for dj, di in FOUR_NEIGHBORS:
                j, i = row + dj, col + di
                if 0 <= j < n and 0 <= i < n and exterior[j, i]:
                    found = (j, i)
                    break
            if found is not None:
                break
        if found is None:
            raise ValueError(f"Hole {k} has no exterior node next to its boundary")
        points.append(found)
    return points


def build_graph(component: LevelSetComponent, mask: Mask) -> PlanarGraph:
    """
    Counts vertices, edges and faces of a traced component. Faces come from a
    flood fill of the supersampled complement over the whole bounding box;
    regions touching the box edge merge into the unbounded face.
    """
    graph = nx.MultiGraph()
    graph.add_nodes_from(("node", k) for k in range(len(component.node_points)))
    terminal_count = 0
    for a, (start, end) in enumerate(component.arc_ends):
        keys = []
        for terminal in (start, end):
            if terminal.kind == TerminalKind.INTERIOR_NODE:
                keys.append(("node", terminal.node))
            else:
                keys.append(("terminal", terminal_count))
                terminal_count += 1
        graph.add_edge(keys[0], keys[1], arc=a)

    raster = _rasterize_arcs(component, mask)
    labels, regions = _regions(~raster)
    border = np.unique(
        np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    )
    bounded = [k for k in regions if k not in border]

    xmin, ymin, size, _ = _pixel_grid(mask)
    distance = ndimage.distance_transform_edt(~raster)
    holes = [
        (SUPERSAMPLE * j, SUPERSAMPLE * i) for j, i in hole_points(mask)
    ]
    faces = []
    for k in bounded:
        inside = labels == k
        farthest = int(np.argmax(np.where(inside, distance, -1)))
        row, col = np.unravel_index(farthest, inside.shape)
        point = complex(xmin + (col + 0.5) * size, ymin + (row + 0.5) * size)
        contained = tuple(
            h for h, (j, i) in enumerate(holes) if _pixel_label(labels, j, i) == k
        )
        faces.append(Face(point, contained))

    traced = mask.complete_cells(interior_only=True)
    domain = np.repeat(np.repeat(traced, SUPERSAMPLE, axis=0), SUPERSAMPLE, axis=1)
    _, domain_regions = _regions(domain & ~raster)

    result = PlanarGraph(
        V=len(component.node_points),
        E=len(component.arcs),
        F=len(bounded) + 1,
        degrees=list(component.node_degrees),
        terminals=terminal_count,
        bounded_faces=faces,
        domain_regions=len(domain_regions) + 1,
        connected=graph.number_of_nodes() > 0 and nx.is_connected(graph),
        critical=list(component.node_critical),
        graph=graph,
    )
    logger.info(
        "Graph: V=%d E=%d F=%d terminals=%d domain regions=%d",
        result.V,
        result.E,
        result.F,
        result.terminals,
        result.domain_regions,
    )
    return result


def _pixel_label(labels: np.ndarray, row: int, col: int) -> int:
    """Label at a node's pixel, or of a neighbouring pixel when the node is inked."""
    pixels = labels.shape[0]
    for dj, di in ((0, 0), (-1, -1), (-1, 0), (0, -1)):
        j = min(max(row + dj, 0), pixels - 1)
        i = min(max(col + di, 0), pixels - 1)
        if labels[j, i] > 0:
            return int(labels[j, i])
    return 0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool | None
    measured: Any = None
    threshold: Any = None
    detail: str = ""
    # soft checks are reported and logged but never fail a run
    soft: bool = False

    @property
    def skipped(self) -> bool:
        return self.passed is None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "threshold": self.threshold,
            "detail": self.detail,
            "soft": self.soft,
        }


@dataclass(frozen=True)
class CheckReport:
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def failures(self) -> list[CheckResult]:
        return [
            result
            for result in self.results
            if result.passed is False and not result.soft
        ]

    def __getitem__(self, name: str) -> CheckResult:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {result.name: result.to_dict() for result in self.results}


def faces_contain_holes(graph: PlanarGraph) -> CheckResult:
    """Every bounded face holds a hole; vacuous when there is none."""
    empty = [k for k, face in enumerate(graph.bounded_faces) if not face.holes]
    return CheckResult(
        "faces-contain-holes",
        not empty,
        measured=empty,
        threshold=[],
        detail="bounded faces without a hole",
    )


def structure_checks(
    graph: PlanarGraph,
    component: LevelSetComponent,
    dendrone: bool = True,
    soft: bool = False,
    loops: bool = False,
) -> CheckReport:
    """
    Handshake, Euler and node-degree checks for every component. The face
    checks apply to a dendrone through a critical node of a capacitor field;
    set `dendrone=False` for fields without that structure. With `loops`,
    faces-contain-holes is evaluated even without a critical node. With
    `soft`, every entry is reported without failing the run.
    """
    results = []
    results.append(
        CheckResult(
            "handshake",
            graph.degree_sum == 2 * graph.E,
            measured=graph.degree_sum,
            threshold=2 * graph.E,
            detail="sum of degrees equals twice the number of arcs",
        )
    )
    vertices = graph.V + graph.terminals
    if graph.connected:
        expected = graph.E - vertices + 2
        results.append(
            CheckResult(
                "euler",
                graph.F == expected,
                measured=graph.F,
                threshold=expected,
                detail="F = E - V + 2 with terminals as vertices",
            )
        )
    else:
        results.append(CheckResult("euler", None, detail="component is not connected"))

    bad_degrees = [
        degree
        for degree, critical in zip(graph.degrees, graph.critical)
        if (critical and (degree < 4 or degree % 2)) or (not critical and degree != 2)
    ]
    results.append(
        CheckResult(
            "node-degrees",
            not bad_degrees,
            measured=bad_degrees,
            threshold="critical: even >= 4, regular: 2",
        )
    )

    has_critical = any(graph.critical)
    if not (dendrone and has_critical):
        reason = "no critical node" if not has_critical else "not a capacitor dendrone"
        for name in DENDRONE_CHECKS:
            if name == "faces-contain-holes" and loops:
                results.append(faces_contain_holes(graph))
            else:
                results.append(CheckResult(name, None, detail=reason))
        return _report(results, soft)

    bounded = len(graph.bounded_faces)
    results.append(
        CheckResult("bounded-faces", bounded >= 2, measured=bounded, threshold=2)
    )
    results.append(faces_contain_holes(graph))
    counting = all(graph.critical) and graph.terminals == 0 and not bad_degrees
    if counting:
        results.append(
            CheckResult(
                "edge-bound",
                graph.E >= 2 * graph.V,
                measured=graph.E,
                threshold=2 * graph.V,
            )
        )
        results.append(
            CheckResult(
                "face-bound",
                graph.F >= graph.V + 2,
                measured=graph.F,
                threshold=graph.V + 2,
            )
        )
    else:
        for name in ("edge-bound", "face-bound"):
            results.append(
                CheckResult(
                    name, None, detail="needs only critical nodes, no terminals"
                )
            )
    return _report(results, soft)


def _report(results: list[CheckResult], soft: bool) -> CheckReport:
    if soft:
        results = [replace(result, soft=True) for result in results]
    failed = [result.name for result in results if result.passed is False]
    if failed:
        log = logger.warning if soft else logger.info
        log("Structure checks failed: %s", ", ".join(failed))
    return CheckReport(results)


@dataclass(frozen=True)
class LimitSet:
    arc: int
    kind: TerminalKind
    hole: int | None
    nodes: frozenset[int]

    def to_dict(self) -> dict:
        return {
            "arc": self.arc,
            "kind": self.kind.value,
            "hole": self.hole,
            "nodes": sorted(self.nodes),
        }


def limit_sets(
    component: LevelSetComponent, mask: Mask
) -> tuple[list[LimitSet], bool]:
    """
    Boundary nodes within 2h of each boundary-terminating arc end, restricted
    to the boundary component the end was assigned to. The verdict is True iff
    these node sets are pairwise disjoint.
    """
    grid = mask.grid
    rows, cols = np.nonzero(mask.boundary)
    if len(rows) == 0:
        return [], True
    tree = cKDTree(np.column_stack([grid.xs[cols], grid.ys[rows]]))
    labels = mask.labels[rows, cols]
    flat = rows * grid.n + cols
    sets = []
    for arc, end, terminal in component.terminals():
        if terminal.kind == TerminalKind.OPEN_END:
            continue
        if terminal.kind == TerminalKind.OUTER_BOUNDARY:
            wanted = int(NodeKind.OUTER_BOUNDARY)
        else:
            wanted = hole_label(terminal.hole or 0)
        tail = component.arcs[arc][0 if end == 0 else -1]
        near = tree.query_ball_point([tail.real, tail.imag], 2.0 * mask.h * (1 + 1e-9))
        nodes = frozenset(int(flat[k]) for k in near if labels[k] == wanted)
        sets.append(LimitSet(arc, terminal.kind, terminal.hole, nodes))
    disjoint = all(not (a.nodes & b.nodes) for a, b in combinations(sets, 2))
    if not disjoint:
        logger.warning("Limit sets of %d arc ends are not pairwise disjoint", len(sets))
    return sets, disjoint
