import inspect
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from tabulate import tabulate

from caplab.analytic.fields import (
    AnalyticField,
    CapacitorExample,
    Cassini,
    LogAnnulus,
    RadialPHarmonic,
)
from caplab.geometry.curves import BoundaryMap, CapacitorSpec, Curve


@dataclass(frozen=True, eq=False)
class Fixture:
    """A named capacitor with its closed-form field when one is known."""

    name: str
    spec: CapacitorSpec
    oracle: AnalyticField | None = None
    p: float = 2.0
    params: dict = field(default_factory=dict)
    points: dict[str, complex] = field(default_factory=dict)


def annulus_log(r: float = 1.0, R: float = 2.0, samples: int = 512) -> Fixture:
    """Annulus r < |z| < R, 1 on the hole, 0 outside; oracle log(|z|/R)/log(r/R)."""
    spec = CapacitorSpec(
        outer=Curve.circle(0.0, R, samples),
        holes=(Curve.circle(0.0, r, samples),),
        hole_values=(1.0,),
        outer_map=BoundaryMap.constant(0.0),
    )
    return Fixture("annulus-log", spec, LogAnnulus(r, R), params={"r": r, "R": R})


def capacitor_example(
    a: float = 2.0, R_out: float = 3.0, samples: int = 512
) -> Fixture:
    """
    Closed unit disk as hole, |z| = R_out outside, data from the explicit field
    -lam log|z|^2 + z - 1/conj(z); its Jacobian vanishes on |z - lam| = rho.
    """
    oracle = CapacitorExample(a)
    if R_out <= 1.0:
        raise ValueError(f"capacitor-example needs R_out > 1, got {R_out}")
    outer_map = BoundaryMap.from_function(
        lambda t: oracle(R_out * np.exp(2j * np.pi * t)), samples
    )
    spec = CapacitorSpec(
        outer=Curve.circle(0.0, R_out, samples),
        holes=(Curve.circle(0.0, 1.0, samples),),
        hole_values=(0.0,),
        outer_map=outer_map,
    )
    return Fixture(
        "capacitor-example",
        spec,
        oracle,
        params={"a": a, "R_out": R_out},
    )


def rkc_disk(sides: int = 6, samples: int = 360) -> Fixture:
    """Unit disk mapped piecewise linearly and monotonically onto a regular polygon."""
    if sides < 3:
        raise ValueError(f"rkc-disk needs at least 3 polygon sides, got {sides}")
    vertices = np.exp(2j * np.pi * np.arange(sides + 1) / sides)

    def to_polygon(t: np.ndarray) -> np.ndarray:
        position = t * sides
        k = np.minimum(np.floor(position).astype(int), sides - 1)
        s = position - k
        return (1.0 - s) * vertices[k] + s * vertices[k + 1]

    spec = CapacitorSpec(
        outer=Curve.circle(0.0, 1.0, samples),
        outer_map=BoundaryMap.from_function(to_polygon, samples),
    )
    return Fixture("rkc-disk", spec, params={"sides": sides})


def cassini(r: float = 0.8, R: float = 2.0, samples: int = 512) -> Fixture:
    """
    Three conductors of u = log|z^2 - 1|: the oval |z^2 - 1| = R outside and the
    two ovals |z^2 - 1| = r around +1 and -1. The gradient vanishes at 0.
    """
    if not 0.0 < r < 1.0 < R:
        raise ValueError(f"cassini needs 0 < r < 1 < R, got r={r}, R={R}")
    if samples % 4:
        raise ValueError("cassini needs a sample count divisible by 4")
    theta = 2.0 * np.pi * np.arange(samples) / samples
    radius = np.sqrt(np.cos(2 * theta) + np.sqrt(R**2 - np.sin(2 * theta) ** 2))
    outer = Curve.from_complex(radius * np.exp(1j * theta))
    phi = 2.0 * np.pi * np.arange(samples) / samples
    lobe = np.sqrt(1.0 + r * np.exp(1j * phi))
    spec = CapacitorSpec(
        outer=outer,
        holes=(Curve.from_complex(lobe), Curve.from_complex(-lobe)),
        hole_values=(np.log(r), np.log(r)),
        outer_map=BoundaryMap.constant(np.log(R)),
    )
    return Fixture(
        "cassini", spec, Cassini(), params={"r": r, "R": R}, points={"origin": 0j}
    )


def pharmonic_annulus(
    r: float = 1.0, R: float = 2.0, p: float = 3.0, samples: int = 512
) -> Fixture:
    """Annulus with 1 on the hole and 0 outside; oracle the radial p-harmonic."""
    fixture = annulus_log(r, R, samples)
    return Fixture(
        "pharmonic-annulus",
        fixture.spec,
        RadialPHarmonic(r, R, p),
        p=p,
        params={"r": r, "R": R, "p": p},
    )


FIXTURE_MAP: dict[str, Callable[..., Fixture]] = {
    "annulus-log": annulus_log,
    "capacitor-example": capacitor_example,
    "rkc-disk": rkc_disk,
    "cassini": cassini,
    "pharmonic-annulus": pharmonic_annulus,
}


def fixture_factory(name: str, params: dict | None = None) -> Fixture:
    builder = FIXTURE_MAP.get(name)
    if builder is None:
        raise KeyError(
            f"Unknown fixture '{name}', expected one of {sorted(FIXTURE_MAP)}"
        )
    try:
        return builder(**(params or {}))
    except TypeError as exc:
        raise ValueError(f"Bad parameters for fixture {name}: {exc}") from exc


def fixture_parameters(name: str) -> dict[str, object]:
    signature = inspect.signature(FIXTURE_MAP[name])
    return {key: value.default for key, value in signature.parameters.items()}


def list_fixtures() -> list[tuple[str, str, str]]:
    """(name, parameters with defaults, summary) per fixture."""
    rows = []
    for name, builder in FIXTURE_MAP.items():
        params = ", ".join(f"{k}={v}" for k, v in fixture_parameters(name).items())
        summary = inspect.getdoc(builder) or ""
        rows.append((name, params, " ".join(summary.split())))
    return rows


def fixture_table() -> str:
    return tabulate(list_fixtures(), headers=["fixture", "parameters", "description"])
