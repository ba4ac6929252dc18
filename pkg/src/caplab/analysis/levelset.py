import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Sequence

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from caplab.analysis.field_analysis import CriticalPoint
from caplab.geometry.mask import Mask, NodeKind
from caplab.solver.fields import ScalarField

logger = logging.getLogger(__name__)

Key = Hashable


class TerminalKind(str, Enum):
    INTERIOR_NODE = "interior_node"
    OUTER_BOUNDARY = "outer_boundary"
    HOLE_BOUNDARY = "hole_boundary"
    OPEN_END = "open_end"


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    node: int | None = None
    hole: int | None = None

    def label(self) -> str:
        if self.kind == TerminalKind.HOLE_BOUNDARY:
            return f"hole{self.hole}"
        if self.kind == TerminalKind.INTERIOR_NODE:
            return f"node{self.node}"
        return self.kind.value


@dataclass(frozen=True)
class Segment:
    start: Key
    end: Key
    cell: tuple[int, int]


class SegmentSoup:
    """Marching-squares segments of one level, endpoints keyed by grid edge or node."""

    def __init__(
        self,
        mask: Mask,
        level: float,
        segments: list[Segment],
        points: dict[Key, complex],
    ):
        self._mask = mask
        self._level = level
        self._segments = segments
        self._points = points

    @property
    def mask(self) -> Mask:
        return self._mask

    @property
    def level(self) -> float:
        return self._level

    @property
    def segments(self) -> list[Segment]:
        return self._segments

    @property
    def points(self) -> dict[Key, complex]:
        return self._points

    def __len__(self) -> int:
        return len(self._segments)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.array(
            [self._points[s.start] for s in self._segments], dtype=complex
        )
        ends = np.array([self._points[s.end] for s in self._segments], dtype=complex)
        return starts, ends

    def as_graph(self) -> nx.Graph:
        graph = nx.Graph()
        for segment in self._segments:
            graph.add_edge(segment.start, segment.end)
        return graph

    def count_components(self) -> int:
        return nx.number_connected_components(self.as_graph()) if self._segments else 0


# corners c0..c3 = (j, i), (j, i+1), (j+1, i+1), (j+1, i); edges e0..e3 =
# bottom (c0-c1), right (c1-c2), top (c3-c2), left (c0-c3)
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
_CORNER_OFFSETS = ((0, 0), (0, 1), (1, 1), (1, 0))


def _edge_key(j: int, i: int, edge: int) -> tuple[tuple[int, int], tuple[int, int]]:
    a, b = _EDGE_CORNERS[edge]
    (da_j, da_i), (db_j, db_i) = _CORNER_OFFSETS[a], _CORNER_OFFSETS[b]
    return (j + da_j, i + da_i), (j + db_j, i + db_i)


def trace_level(
    field: ScalarField, level: float, interior_only: bool = True
) -> SegmentSoup:
    """
    Marching squares over complete cells; a node counts as above when its value
    is >= level. Saddle cells follow the sign of the cell-center average.
    With `interior_only`, cells touching the boundary layer are skipped and
    arcs end one cell inside it.
    """
    mask = field.mask
    values = field.values
    z = mask.grid.z
    cells = mask.complete_cells(interior_only=interior_only)
    above = np.where(np.isnan(values), False, values >= level)
    case = (
        above[:-1, :-1].astype(int)
        + 2 * above[:-1, 1:]
        + 4 * above[1:, 1:]
        + 8 * above[1:, :-1]
    )
    active = cells & (case != 0) & (case != 15)
    points: dict[Key, complex] = {}
    segments: list[Segment] = []

    def crossing(node_a: tuple[int, int], node_b: tuple[int, int]) -> Key:
        if node_b < node_a:
            node_a, node_b = node_b, node_a
        va, vb = values[node_a], values[node_b]
        t = (level - va) / (vb - va)
        if t == 0.0:
            key: Key = ("n",) + node_a
            points[key] = complex(z[node_a])
        elif t == 1.0:
            key = ("n",) + node_b
            points[key] = complex(z[node_b])
        else:
            key = ("e",) + node_a + node_b
            points[key] = complex(z[node_a] + t * (z[node_b] - z[node_a]))
        return key

    for j, i in np.argwhere(active).tolist():
        corner_above = [above[j + dj, i + di] for dj, di in _CORNER_OFFSETS]
        cut = [
            e
            for e, (a, b) in enumerate(_EDGE_CORNERS)
            if corner_above[a] != corner_above[b]
        ]
        if len(cut) == 2:
            pairs = [(cut[0], cut[1])]
        else:
            center = values[j : j + 2, i : i + 2].mean()
            if (center >= level) == corner_above[0]:
                # c0 and c2 connect through the center; c1 and c3 are cut off
                pairs = [(0, 1), (2, 3)]
            else:
                pairs = [(3, 0), (1, 2)]
        for first, second in pairs:
            start = crossing(*_edge_key(j, i, first))
            end = crossing(*_edge_key(j, i, second))
            if start != end:
                segments.append(Segment(start, end, (int(j), int(i))))
    logger.debug("Level %.6g: %d segments", level, len(segments))
    return SegmentSoup(mask, level, segments, points)


@dataclass(frozen=True, eq=False)
class LevelSetComponent:
    level: float
    seed: complex
    h: float
    arcs: list[np.ndarray]
    arc_ends: list[tuple[Terminal, Terminal]]
    node_points: list[complex]
    node_degrees: list[int]
    node_critical: list[bool]
    artificial_nodes: list[int] = field(default_factory=list)

    @property
    def touches_boundary(self) -> list[TerminalKind]:
        """Per arc: the boundary kind of a non-node end, INTERIOR_NODE otherwise."""
        flags = []
        for ends in self.arc_ends:
            kinds = [end.kind for end in ends if end.kind != TerminalKind.INTERIOR_NODE]
            flags.append(kinds[0] if kinds else TerminalKind.INTERIOR_NODE)
        return flags

    def terminals(self) -> list[tuple[int, int, Terminal]]:
        """(arc index, end index 0 or 1, terminal) for every non-node arc end."""
        return [
            (a, e, end)
            for a, ends in enumerate(self.arc_ends)
            for e, end in enumerate(ends)
            if end.kind != TerminalKind.INTERIOR_NODE
        ]

    def arc_directions(self, node: int, reach: float) -> list[float]:
        """
        Angles of the arcs leaving a node, measured at the first arc vertex at
        least `reach` away from it.
        """
        center = self.node_points[node]
        angles = []
        for arc, ends in zip(self.arcs, self.arc_ends):
            for e, end in enumerate(ends):
                if end.kind != TerminalKind.INTERIOR_NODE or end.node != node:
                    continue
                path = arc if e == 0 else arc[::-1]
                far = np.nonzero(np.abs(path - center) >= reach)[0]
                if far.size:
                    angles.append(float(np.angle(path[far[0]] - center)))
        return angles


def _nearest_segment(soup: SegmentSoup, seed: complex) -> tuple[int, float]:
    starts, ends = soup.endpoints()
    span = ends - starts
    length_sq = np.abs(span) ** 2
    t = np.clip(((seed - starts) * np.conj(span)).real / length_sq, 0.0, 1.0)
    distances = np.abs(starts + t * span - seed)
    index = int(np.argmin(distances))
    return index, float(distances[index])


def component_through(
    soup: SegmentSoup,
    seed: complex,
    critical_points: Sequence[CriticalPoint | complex] = (),
    node_radius: float = 2.0,
) -> LevelSetComponent:
    """
    Connected piece of the traced level set containing the segment nearest to
    `seed`. Soup vertices within node_radius * h of a critical point merge into
    one graph node; arcs run between nodes, boundary ends and open ends.
    """
    h = soup.mask.h
    if len(soup) == 0:
        raise ValueError(f"No level-set segments at level {soup.level:.6g}")
    index, distance = _nearest_segment(soup, seed)
    if distance > 2.0 * h:
        raise ValueError(
            f"No segment within 2h of seed {seed}: nearest is {distance:.3g} away"
        )

    locations = [
        cp.location if isinstance(cp, CriticalPoint) else complex(cp)
        for cp in critical_points
    ]
    representative: dict[Key, Key] = {}
    for key, point in soup.points.items():
        representative[key] = key
        for k, location in enumerate(locations):
            if abs(point - location) <= node_radius * h:
                representative[key] = ("crit", k)
                break

    graph = nx.MultiGraph()
    for segment in soup.as_graph().edges():
        a, b = representative[segment[0]], representative[segment[1]]
        if a == b:
            continue
        graph.add_edge(a, b)
    nearest = soup.segments[index]
    start = representative[nearest.start]
    if start not in graph:
        start = representative[nearest.end]
    if start not in graph:
        raise ValueError(f"Seed {seed} lies on a level-set piece swallowed by a node")
    component = graph.subgraph(nx.node_connected_component(graph, start)).copy()

    def position(key: Key) -> complex:
        if isinstance(key, tuple) and key[0] == "crit":
            return locations[key[1]]
        return soup.points[key]

    node_keys = [
        key
        for key in component.nodes
        if (isinstance(key, tuple) and key[0] == "crit") or component.degree(key) != 2
    ]
    nodes = [key for key in node_keys if component.degree(key) != 1]
    ends = [key for key in node_keys if component.degree(key) == 1]
    node_index = {key: k for k, key in enumerate(nodes)}
    terminal_of = _terminal_classifier(soup.mask)

    visited: set[tuple] = set()
    walks: list[list[Key]] = []
    for start_key in nodes + ends:
        for _, neighbour, edge_key in component.edges(start_key, keys=True):
            if _edge_id(start_key, neighbour, edge_key) in visited:
                continue
            walks.append(
                _walk(
                    component, start_key, neighbour, edge_key, set(node_keys), visited
                )
            )

    artificial = []
    for a, b, edge_key in component.edges(keys=True):
        if _edge_id(a, b, edge_key) in visited:
            continue
        # a loop of degree-2 vertices: subdivide it at one vertex
        node_index[a] = len(nodes)
        nodes.append(a)
        artificial.append(node_index[a])
        walks.append(_walk(component, a, b, edge_key, set(node_keys) | {a}, visited))

    def terminal(key: Key) -> Terminal:
        if key in node_index:
            return Terminal(TerminalKind.INTERIOR_NODE, node=node_index[key])
        return terminal_of(position(key))

    arcs = [np.array([position(key) for key in walk]) for walk in walks]
    arc_ends = [(terminal(walk[0]), terminal(walk[-1])) for walk in walks]
    node_degrees = [
        2 if node_index[key] in artificial else int(component.degree(key))
        for key in nodes
    ]
    result = LevelSetComponent(
        level=soup.level,
        seed=complex(seed),
        h=h,
        arcs=arcs,
        arc_ends=arc_ends,
        node_points=[position(key) for key in nodes],
        node_degrees=node_degrees,
        node_critical=[isinstance(key, tuple) and key[0] == "crit" for key in nodes],
        artificial_nodes=artificial,
    )
    logger.info(
        "Component at level %.6g: %d nodes, %d arcs, %d terminals",
        soup.level,
        len(nodes),
        len(arcs),
        len(result.terminals()),
    )
    return result


def _edge_id(a: Key, b: Key, key: int) -> tuple:
    return (frozenset((a, b)), key) if a != b else ((a,), key)


def _walk(
    graph: nx.MultiGraph,
    start: Key,
    first: Key,
    first_key: int,
    stops: set[Key],
    visited: set[tuple],
) -> list[Key]:
    path = [start, first]
    visited.add(_edge_id(start, first, first_key))
    previous, current = start, first
    previous_key = first_key
    while current not in stops:
        step = None
        for _, neighbour, edge_key in graph.edges(current, keys=True):
            if (neighbour, edge_key) == (previous, previous_key):
                continue
            if _edge_id(current, neighbour, edge_key) in visited:
                continue
            step = (neighbour, edge_key)
            break
        if step is None:
            break
        visited.add(_edge_id(current, step[0], step[1]))
        previous, previous_key = current, step[1]
        current = step[0]
        path.append(current)
    return path


def _terminal_classifier(mask: Mask):
    """Maps an arc end to the boundary component within 2h of it, if any."""
    rows, cols = np.nonzero(mask.boundary)
    labels = mask.labels[rows, cols]
    grid = mask.grid
    tree = None
    if len(rows):
        tree = cKDTree(np.column_stack([grid.xs[cols], grid.ys[rows]]))

    def classify(point: complex) -> Terminal:
        if tree is None:
            return Terminal(TerminalKind.OPEN_END)
        distance, index = tree.query([point.real, point.imag])
        if distance > 2.0 * mask.h:
            return Terminal(TerminalKind.OPEN_END)
        label = int(labels[index])
        if label == NodeKind.OUTER_BOUNDARY:
            return Terminal(TerminalKind.OUTER_BOUNDARY)
        hole = label - int(NodeKind.HOLE_BOUNDARY)
        return Terminal(TerminalKind.HOLE_BOUNDARY, hole=hole)

    return classify


class LevelSetTracer:
    """Traces a level of a field and extracts the component through a seed."""

    def __init__(self, interior_only: bool = True, node_radius: float = 2.0):
        if node_radius <= 0.0:
            raise ValueError(f"node_radius must be positive, got {node_radius}")
        self._interior_only = interior_only
        self._node_radius = node_radius

    @property
    def interior_only(self) -> bool:
        return self._interior_only

    @property
    def node_radius(self) -> float:
        return self._node_radius

    def trace(self, field: ScalarField, level: float) -> SegmentSoup:
        return trace_level(field, level, interior_only=self._interior_only)

    def component(
        self,
        field: ScalarField,
        level: float,
        seed: complex,
        critical_points: Sequence[CriticalPoint | complex] = (),
    ) -> LevelSetComponent:
        soup = self.trace(field, level)
        return component_through(soup, seed, critical_points, self._node_radius)

    def __call__(
        self,
        field: ScalarField,
        level: float,
        seed: complex,
        critical_points: Sequence[CriticalPoint | complex] = (),
    ) -> LevelSetComponent:
        return self.component(field, level, seed, critical_points)
