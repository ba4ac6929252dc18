from typing import TypeAlias, Union

from .fields import (
    AnalyticField,
    CapacitorExample,
    Cassini,
    LogAnnulus,
    RadialPHarmonic,
    Saddle,
)

Field: TypeAlias = Union[
    LogAnnulus,
    CapacitorExample,
    Cassini,
    Saddle,
    RadialPHarmonic,
]

FIELD_MAP: dict[str, type[AnalyticField]] = {
    # harmonic
    "log-annulus": LogAnnulus,
    "capacitor-example": CapacitorExample,
    "cassini": Cassini,
    "saddle": Saddle,
    # p-harmonic
    "radial-p-harmonic": RadialPHarmonic,
}

INTEGER_PARAMETERS = {"m"}


def parse_parameters(text: str) -> dict[str, float | int]:
    """'a=2,R=3' -> {'a': 2.0, 'R': 3.0}; integer-valued names stay integers."""
    params: dict[str, float | int] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"Malformed parameter '{item}', expected name=value")
        key = key.strip()
        params[key] = int(value) if key in INTEGER_PARAMETERS else float(value)
    return params


def analytic_field_factory(address: str) -> Field:
    """Factory function to create an analytic field from 'name:param=value,...'."""
    name, _, params = address.partition(":")
    field_class = FIELD_MAP.get(name.strip())
    if field_class is None:
        raise ValueError(
            f"Unknown analytic field '{name}', expected one of {sorted(FIELD_MAP)}"
        )
    try:
        return field_class(**parse_parameters(params))  # type: ignore[return-value]
    except TypeError as exc:
        raise ValueError(f"Bad parameters for {name}: {exc}") from exc
