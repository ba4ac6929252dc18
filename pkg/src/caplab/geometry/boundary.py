import numpy as np

from caplab.geometry.curves import CapacitorSpec
from caplab.geometry.mask import Mask, boundary_anchors
from caplab.solver.fields import ComplexField


def boundary_values(spec: CapacitorSpec, mask: Mask) -> ComplexField:
    """
    Dirichlet data on the boundary layer: hole constants on hole-boundary nodes,
    the outer map at the nearest outer-curve parameter on outer-boundary nodes,
    NaN on every other node.
    """
    anchors = boundary_anchors(spec, mask)
    values = np.full(mask.labels.shape, np.nan, dtype=complex)
    values[anchors.rows, anchors.cols] = anchors.data
    return ComplexField(mask, values, anchors)
