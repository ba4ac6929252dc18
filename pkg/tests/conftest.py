import numpy as np
import pytest

from caplab.analytic.fields import AnalyticField
from caplab.geometry.curves import CapacitorSpec, Curve, GridSpec
from caplab.geometry.mask import Mask, rasterize
from caplab.runner.fixtures import annulus_log, capacitor_example, cassini
from caplab.solver.fields import ScalarField


@pytest.fixture
def make_mask():
    """Rasterizes a capacitor on the default square grid around its outer curve."""

    def build(spec: CapacitorSpec, n: int) -> Mask:
        return rasterize(spec, GridSpec.around(spec.outer, n))

    return build


@pytest.fixture
def sample():
    """Exact values of a closed form on the non-exterior nodes of a mask."""

    def build(oracle: AnalyticField | None, mask: Mask, func=None) -> ScalarField:
        z = mask.grid.z
        values = np.full(z.shape, np.nan)
        evaluate = func if func is not None else oracle
        values[mask.active] = np.real(evaluate(z[mask.active]))
        return ScalarField(mask, values)

    return build


@pytest.fixture
def disk_spec():
    return CapacitorSpec(outer=Curve.circle(0.0, 1.0, 256))


@pytest.fixture
def disk_mask(disk_spec, make_mask):
    return make_mask(disk_spec, 65)


@pytest.fixture
def annulus():
    return annulus_log()


@pytest.fixture
def annulus_mask(annulus, make_mask):
    return make_mask(annulus.spec, 65)


@pytest.fixture
def capacitor():
    return capacitor_example()


@pytest.fixture(scope="session")
def cassini_fixture():
    return cassini()


@pytest.fixture(scope="session")
def cassini_mask(cassini_fixture):
    spec = cassini_fixture.spec
    return rasterize(spec, GridSpec.around(spec.outer, 257))
