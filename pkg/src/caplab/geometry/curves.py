import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import shapely
from shapely.geometry import LinearRing, LineString, Polygon


class GeometryError(ValueError):
    """Invalid or degenerate capacitor geometry."""


@dataclass(frozen=True, eq=False)
class Curve:
    """Polyline in the plane; `points` is a (k, 2) array."""

    points: np.ndarray
    closed: bool = True

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise GeometryError(f"Curve points must be (k, 2), got {points.shape}")
        if self.closed and len(points) > 3 and np.allclose(points[0], points[-1]):
            # a repeated closing vertex is implied by `closed`
            points = points[:-1]
        if self.closed and len(points) < 3:
            raise GeometryError("A closed curve needs at least 3 points")
        if len(points) < 2:
            raise GeometryError("A curve needs at least 2 points")
        steps = np.diff(points, axis=0)
        if self.closed:
            steps = np.vstack([steps, points[0] - points[-1]])
        if np.any(np.all(steps == 0.0, axis=1)):
            raise GeometryError("Curve has repeated consecutive points")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_complex(cls, values: np.ndarray, closed: bool = True) -> "Curve":
        values = np.asarray(values, dtype=complex)
        return cls(np.column_stack([values.real, values.imag]), closed)

    @classmethod
    def circle(
        cls, center: complex = 0.0, radius: float = 1.0, samples: int = 512
    ) -> "Curve":
        """Regular polygon inscribed in a circle, first vertex at angle 0, CCW."""
        angles = 2.0 * np.pi * np.arange(samples) / samples
        return cls.from_complex(center + radius * np.exp(1j * angles))

    @property
    def as_complex(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    @property
    def line(self) -> LineString:
        if self.closed:
            return LinearRing(self.points)
        return LineString(self.points)

    @property
    def polygon(self) -> Polygon:
        if not self.closed:
            raise GeometryError("Only closed curves bound a region")
        return Polygon(self.points)

    @property
    def length(self) -> float:
        return float(self.line.length)

    @property
    def diameter(self) -> float:
        diffs = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt((diffs**2).sum(axis=-1)).max())

    def is_simple(self) -> bool:
        return bool(self.line.is_simple)

    def is_ccw(self) -> bool:
        return bool(shapely.is_ccw(LinearRing(self.points)))

    def reversed(self) -> "Curve":
        return Curve(self.points[::-1].copy(), self.closed)


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    """Samples (t, value) of a map from the outer boundary, t in [0, 1)."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if t.shape != values.shape or t.ndim != 1:
            raise GeometryError("BoundaryMap needs matching 1-D t and values")
        if len(t) < 16:
            raise GeometryError(f"BoundaryMap needs at least 16 samples, got {len(t)}")
        if np.any(np.diff(t) <= 0.0):
            raise GeometryError("BoundaryMap parameters must be strictly increasing")
        if t[0] < 0.0 or t[-1] >= 1.0:
            raise GeometryError("BoundaryMap parameters must lie in [0, 1)")
        t.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls, func: Callable[[np.ndarray], np.ndarray], samples: int = 512
    ) -> "BoundaryMap":
        t = np.arange(samples) / samples
        return cls(t, np.asarray(func(t), dtype=complex))

    @classmethod
    def constant(cls, value: complex, samples: int = 16) -> "BoundaryMap":
        return cls.from_function(
            lambda t: np.full(t.shape, value, dtype=complex), samples
        )

    def __len__(self) -> int:
        return len(self.t)

    def __call__(self, t: np.ndarray | float) -> np.ndarray:
        """Circular piecewise-linear interpolation of the samples."""
        return np.interp(np.mod(t, 1.0), self.t, self.values, period=1.0)

    def rotated(self, shift: int) -> "BoundaryMap":
        """The same map with the sample origin moved by `shift` indices."""
        order = np.roll(np.arange(len(self)), -shift)
        t = np.mod(self.t[order] - self.t[order[0]], 1.0)
        return BoundaryMap(t, self.values[order])

    def reversed(self) -> "BoundaryMap":
        """Orientation reversal: t -> 1 - t."""
        t = np.mod(1.0 - self.t, 1.0)
        order = np.argsort(t, kind="stable")
        return BoundaryMap(t[order], self.values[order])


@dataclass(frozen=True, eq=False)
class CapacitorSpec:
    outer: Curve
    holes: tuple[Curve, ...] = ()
    hole_values: tuple[complex, ...] = ()
    outer_map: BoundaryMap = field(default_factory=lambda: BoundaryMap.constant(0.0))

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        object.__setattr__(
            self, "hole_values", tuple(complex(v) for v in self.hole_values)
        )
        if not self.outer.closed or not self.outer.is_simple():
            raise GeometryError("Outer boundary must be a simple closed curve")
        if not self.outer.is_ccw():
            raise GeometryError("Outer boundary must be positively oriented")
        if len(self.holes) != len(self.hole_values):
            raise GeometryError(
                f"{len(self.holes)} holes but {len(self.hole_values)} hole values"
            )
        outer = self.outer.polygon
        for k, hole in enumerate(self.holes):
            if not hole.closed or not hole.is_simple():
                raise GeometryError(f"Hole {k} must be a simple closed curve")
            if not outer.contains(hole.polygon):
                raise GeometryError(f"Hole {k} is not strictly inside the outer curve")
            for j in range(k):
                if self.holes[j].polygon.intersects(hole.polygon):
                    raise GeometryError(f"Holes {j} and {k} intersect")

    @property
    def domain(self) -> Polygon:
        """Region inside the outer curve with the closed holes removed."""
        return Polygon(self.outer.points, [hole.points for hole in self.holes])

    @property
    def is_real(self) -> bool:
        return bool(
            np.all(np.imag(self.hole_values) == 0.0)
            and np.all(self.outer_map.values.imag == 0.0)
        )

    def to_dict(self) -> dict:
        return {
            "outer": self.outer.points.tolist(),
            "holes": [hole.points.tolist() for hole in self.holes],
            "hole_values": [[v.real, v.imag] for v in self.hole_values],
            "outer_map": [
                [float(t), float(v.real), float(v.imag)]
                for t, v in zip(self.outer_map.t, self.outer_map.values)
            ],
        }

    @classmethod
    def from_dict(cls, document: dict) -> "CapacitorSpec":
        try:
            outer = Curve(np.asarray(document["outer"], dtype=float))
            holes = tuple(Curve(np.asarray(h, dtype=float)) for h in document["holes"])
            hole_values = tuple(complex(re, im) for re, im in document["hole_values"])
            samples = np.asarray(document["outer_map"], dtype=float).reshape(-1, 3)
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"Malformed geometry document: {exc}") from exc
        outer_map = BoundaryMap(samples[:, 0], samples[:, 1] + 1j * samples[:, 2])
        return cls(outer, holes, hole_values, outer_map)


def load_capacitor_spec(path: str | Path) -> CapacitorSpec:
    with open(path, "r", encoding="utf-8") as f:
        return CapacitorSpec.from_dict(json.load(f))


def dump_capacitor_spec(spec: CapacitorSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec.to_dict(), f, indent=2)


@dataclass(frozen=True)
class GridSpec:
    bbox: tuple[float, float, float, float]
    n: int

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(v) for v in self.bbox)
        object.__setattr__(self, "bbox", (xmin, ymin, xmax, ymax))
        if self.n < 17:
            raise GeometryError(f"Grid needs n >= 17 nodes per side, got {self.n}")
        if xmax <= xmin or ymax <= ymin:
            raise GeometryError(f"Empty bounding box {self.bbox}")
        if not np.isclose(xmax - xmin, ymax - ymin, rtol=1e-9, atol=0.0):
            raise GeometryError("Grid spacing must be equal on both axes (square bbox)")

    @classmethod
    def around(cls, curve: Curve, n: int, margin_cells: float = 3.0) -> "GridSpec":
        """Square grid centered on the curve's bounds with a margin in cells."""
        xmin, ymin = curve.points.min(axis=0)
        xmax, ymax = curve.points.max(axis=0)
        center = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0)
        half = max(xmax - xmin, ymax - ymin) / 2.0
        # h = 2 * half_width / (n - 1) and half_width = half + margin_cells * h
        half_width = half / (1.0 - 2.0 * margin_cells / (n - 1))
        return cls(
            (
                center[0] - half_width,
                center[1] - half_width,
                center[0] + half_width,
                center[1] + half_width,
            ),
            n,
        )

    @property
    def h(self) -> float:
        return (self.bbox[2] - self.bbox[0]) / (self.n - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.bbox[0], self.bbox[2], self.n)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.bbox[1], self.bbox[3], self.n)

    @property
    def z(self) -> np.ndarray:
        """Node coordinates as complex numbers, indexed [row = y, column = x]."""
        x, y = np.meshgrid(self.xs, self.ys)
        return x + 1j * y

    def nearest_node(self, point: complex) -> tuple[int, int]:
        """(row, column) of the node closest to a point."""
        i = int(np.clip(round((point.real - self.bbox[0]) / self.h), 0, self.n - 1))
        j = int(np.clip(round((point.imag - self.bbox[1]) / self.h), 0, self.n - 1))
        return j, i

    def margin_to(self, curve: Curve) -> float:
        """Smallest distance from the curve to the bbox edges (negative if outside)."""
        xmin, ymin = curve.points.min(axis=0)
        xmax, ymax = curve.points.max(axis=0)
        return float(
            min(
                xmin - self.bbox[0],
                ymin - self.bbox[1],
                self.bbox[2] - xmax,
                self.bbox[3] - ymax,
            )
        )

    def to_dict(self) -> dict:
        return {"bbox": list(self.bbox), "n": self.n, "h": self.h}
