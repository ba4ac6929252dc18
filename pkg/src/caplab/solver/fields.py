from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from scipy.ndimage import map_coordinates

from caplab.geometry.mask import BoundaryAnchors, Mask
from caplab.utils import data_range


class _GridField:
    _dtype: type = float

    def __init__(
        self,
        mask: Mask,
        values: np.ndarray,
        anchors: BoundaryAnchors | None = None,
    ):
        values = np.array(values, dtype=self._dtype)
        if values.shape != mask.labels.shape:
            raise ValueError(
                f"Field shape {values.shape} does not match mask {mask.labels.shape}"
            )
        values[mask.exterior] = np.nan
        values.setflags(write=False)
        self._mask = mask
        self._values = values
        self._anchors = anchors

    @property
    def mask(self) -> Mask:
        return self._mask

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def anchors(self) -> BoundaryAnchors | None:
        return self._anchors

    @property
    def h(self) -> float:
        return self._mask.h

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self._values)

    def is_complete(self) -> bool:
        """True when every non-exterior node carries a finite value."""
        return bool(np.all(np.isfinite(self._values[self._mask.active])))

    def data_range(self) -> float:
        return data_range(self._values[self.defined])

    def boundary_values(self) -> np.ndarray:
        return self._values[self._mask.boundary]

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Bilinear interpolation at complex points."""
        points = np.asarray(points, dtype=complex)
        xmin, ymin = self._mask.grid.bbox[:2]
        coords = np.vstack(
            [
                ((points.imag - ymin) / self.h).ravel(),
                ((points.real - xmin) / self.h).ravel(),
            ]
        )
        parts = [self._values.real] + (
            [self._values.imag] if np.iscomplexobj(self._values) else []
        )
        sampled = [
            map_coordinates(part, coords, order=1, mode="nearest") for part in parts
        ]
        result = sampled[0] if len(sampled) == 1 else sampled[0] + 1j * sampled[1]
        return result.reshape(points.shape)


class ScalarField(_GridField):
    """Real values on the non-exterior nodes of a mask (NaN elsewhere)."""

    _dtype = float

    def __neg__(self) -> "ScalarField":
        return ScalarField(self._mask, -self._values, self._anchors)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self._mask, values, self._anchors)

    def to_complex(self) -> "ComplexField":
        return ComplexField(self._mask, self._values.astype(complex), self._anchors)


class ComplexField(_GridField):
    _dtype = complex

    @classmethod
    def sample(
        cls, mask: Mask, func: Callable[[np.ndarray], np.ndarray]
    ) -> "ComplexField":
        """Evaluates `func` on all non-exterior nodes."""
        values = np.full(mask.labels.shape, np.nan, dtype=complex)
        z = mask.grid.z
        values[mask.active] = func(z[mask.active])
        return cls(mask, values)

    @property
    def real(self) -> ScalarField:
        return ScalarField(self._mask, self._values.real, self._real_anchors())

    @property
    def imag(self) -> ScalarField:
        return ScalarField(self._mask, self._values.imag, self._imag_anchors())

    def is_real(self) -> bool:
        imag = self._values.imag[self.defined]
        return bool(np.all(imag == 0.0))

    def conj(self) -> "ComplexField":
        anchors = self._anchors
        if anchors is not None:
            anchors = BoundaryAnchors(
                anchors.rows,
                anchors.cols,
                anchors.points,
                anchors.offsets,
                np.conj(anchors.data),
            )
        return ComplexField(self._mask, np.conj(self._values), anchors)

    def _real_anchors(self) -> BoundaryAnchors | None:
        return _anchor_part(self._anchors, np.real)

    def _imag_anchors(self) -> BoundaryAnchors | None:
        return _anchor_part(self._anchors, np.imag)

    @classmethod
    def from_parts(cls, real: ScalarField, imag: ScalarField) -> "ComplexField":
        anchors = None
        if real.anchors is not None and imag.anchors is not None:
            anchors = BoundaryAnchors(
                real.anchors.rows,
                real.anchors.cols,
                real.anchors.points,
                real.anchors.offsets,
                real.anchors.data + 1j * imag.anchors.data,
            )
        return cls(real.mask, real.values + 1j * imag.values, anchors)


def _anchor_part(anchors: BoundaryAnchors | None, part) -> BoundaryAnchors | None:
    if anchors is None:
        return None
    return BoundaryAnchors(
        anchors.rows,
        anchors.cols,
        anchors.points,
        anchors.offsets,
        part(anchors.data).astype(float),
    )


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    corrections: int = 0
    outer_iterations: int = 0

    def merge(self, other: "SolveReport") -> "SolveReport":
        return SolveReport(
            iterations=max(self.iterations, other.iterations),
            final_residual=max(self.final_residual, other.final_residual),
            converged=self.converged and other.converged,
            corrections=max(self.corrections, other.corrections),
            outer_iterations=max(self.outer_iterations, other.outer_iterations),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def field_frame(field: ScalarField | ComplexField) -> pd.DataFrame:
    """One row per non-exterior node: x, y, kind, re, im."""
    mask = field.mask
    rows, cols = np.nonzero(mask.active)
    values = field.values[rows, cols]
    kinds = [mask.kind_name(label) for label in mask.labels[rows, cols]]
    return pd.DataFrame(
        {
            "x": mask.grid.xs[cols],
            "y": mask.grid.ys[rows],
            "kind": kinds,
            "re": np.real(values),
            "im": np.imag(values) if np.iscomplexobj(values) else 0.0,
        }
    )


def dump_field_csv(field: ScalarField | ComplexField, path: str | Path) -> None:
    field_frame(field).to_csv(path, index=False, float_format="%.12g")
