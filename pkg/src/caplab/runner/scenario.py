import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from caplab.runner.fixtures import FIXTURE_MAP, fixture_parameters
from caplab.solver.p_laplace_solver import PharmonicConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Scenario file does not follow the schema."""


SOLVER_KINDS = ("harmonic", "p-harmonic")

# analysis kind -> accepted parameters with their defaults
ANALYSIS_PARAMETERS: dict[str, dict[str, Any]] = {
    "oracle": {"tolerance": 1e-2},
    "critical": {
        "standoff": 2,
        "rank_zero": None,
        "zero_near": None,
        "rank_one_circle": None,
        "hausdorff": 2.0,
        "coverage": 3.0,
    },
    "dendrite": {
        "seed": "auto",
        "level": None,
        "node_radius": 2.0,
        "standoff": 2,
        "dendrone": True,
        "bounded_faces": None,
        "node_degree": None,
    },
    "starlike": {"expect": True},
    "monotone": {"expect": True},
    "energy": {"expected": None, "rel_tol": 0.02},
    "verify-nonvanishing": {"margin": 4, "threshold": None, "oracle_fraction": None},
    "jacobian-positive": {"margin": 4},
    "gradient-at": {"point": [0.0, 0.0], "max_relative": 5e-3},
    "distortion": {"slack": 0.1},
    "gradient-identity": {"rel_tol": 1e-12},
    "max-principle": {},
}
COMPLEX_ONLY = {"jacobian-positive"}
REAL_ONLY = {"max-principle", "distortion"}


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "harmonic"
    p: float = 2.0
    tol_solve: float = 1e-10
    tol_outer: float = 1e-8
    max_outer: int = 500
    correct_boundary: bool = False

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ConfigError(
                f"Unknown solver kind '{self.kind}', expected {SOLVER_KINDS}"
            )
        if self.kind == "harmonic" and self.p != 2.0:
            raise ConfigError("A harmonic solver takes no exponent other than p = 2")
        if not self.p > 1.0:
            raise ConfigError(f"Solver exponent must exceed 1, got p={self.p}")
        if not isinstance(self.correct_boundary, bool):
            raise ConfigError(
                f"correct_boundary must be true or false, got {self.correct_boundary!r}"
            )

    def pharmonic(self) -> PharmonicConfig:
        return PharmonicConfig(
            p=self.p,
            tol_outer=self.tol_outer,
            max_outer=self.max_outer,
            tol_solve=self.tol_solve,
        )


@dataclass(frozen=True, eq=False)
class Analysis:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        accepted = ANALYSIS_PARAMETERS.get(self.kind)
        if accepted is None:
            raise ConfigError(
                f"Unknown analysis '{self.kind}', expected one of "
                f"{sorted(ANALYSIS_PARAMETERS)}"
            )
        unknown = sorted(set(self.params) - set(accepted))
        if unknown:
            raise ConfigError(f"Analysis '{self.kind}' does not take {unknown}")
        object.__setattr__(self, "params", {**accepted, **self.params})

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    fixture: str | None = None
    fixture_params: dict = field(default_factory=dict)
    geometry_file: Path | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    n: int = 129
    bbox: tuple[float, float, float, float] | None = None
    analyses: tuple[Analysis, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ConfigError("Scenario needs a name")
        if (self.fixture is None) == (self.geometry_file is None):
            raise ConfigError("Geometry needs exactly one of 'fixture' and 'file'")
        if self.fixture is not None:
            if self.fixture not in FIXTURE_MAP:
                raise ConfigError(
                    f"Unknown fixture '{self.fixture}', expected one of "
                    f"{sorted(FIXTURE_MAP)}"
                )
            accepted = fixture_parameters(self.fixture)
            unknown = sorted(set(self.fixture_params) - set(accepted))
            if unknown:
                raise ConfigError(f"Fixture '{self.fixture}' does not take {unknown}")
            fixture_p = self.fixture_params.get("p", accepted.get("p", 2.0))
            if fixture_p != self.solver.p:
                raise ConfigError(
                    f"Fixture exponent p={fixture_p} differs from "
                    f"solver p={self.solver.p}"
                )
        if self.n < 17 or self.n % 2 == 0:
            raise ConfigError(
                f"Grid size n must be odd and at least 17, got {self.n}"
            )
        object.__setattr__(self, "analyses", tuple(self.analyses))
        if self.solver.kind == "p-harmonic":
            complex_only = [a.kind for a in self.analyses if a.kind in COMPLEX_ONLY]
            if complex_only:
                raise ConfigError(f"Analyses {complex_only} need a harmonic solver")

    def with_grid(self, n: int | None) -> "Scenario":
        return self if n is None else replace(self, n=n)

    def to_dict(self) -> dict:
        geometry: dict[str, Any] = (
            {"fixture": self.fixture, "params": dict(self.fixture_params)}
            if self.fixture is not None
            else {"file": str(self.geometry_file)}
        )
        grid: dict[str, Any] = {"n": self.n}
        if self.bbox is not None:
            grid["bbox"] = list(self.bbox)
        return {
            "name": self.name,
            "geometry": geometry,
            "solver": {
                "kind": self.solver.kind,
                "p": self.solver.p,
                "tol_solve": self.solver.tol_solve,
                "tol_outer": self.solver.tol_outer,
                "max_outer": self.solver.max_outer,
                "correct_boundary": self.solver.correct_boundary,
            },
            "grid": grid,
            "analyses": [analysis.to_dict() for analysis in self.analyses],
        }


def _table(document: dict, key: str, required: bool = False) -> dict:
    value = document.get(key, {})
    if required and key not in document:
        raise ConfigError(f"Missing [{key}] table")
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"Unknown keys {unknown} in {where}")


def parse_scenario(document: dict, base: Path | None = None) -> Scenario:
    """Builds a Scenario from a parsed TOML document; files resolve from `base`."""
    _check_keys(
        document, {"name", "geometry", "solver", "grid", "analyses"}, "scenario"
    )
    geometry = _table(document, "geometry", required=True)
    _check_keys(geometry, {"fixture", "params", "file"}, "[geometry]")
    solver = _table(document, "solver")
    _check_keys(
        solver,
        {"kind", "p", "tol_solve", "tol_outer", "max_outer", "correct_boundary"},
        "[solver]",
    )
    grid = _table(document, "grid")
    _check_keys(grid, {"n", "bbox"}, "[grid]")
    analyses = document.get("analyses", [])
    if not isinstance(analyses, list):
        raise ConfigError("'analyses' must be an array of tables")

    geometry_file = None
    if "file" in geometry:
        geometry_file = Path(geometry["file"])
        if base is not None and not geometry_file.is_absolute():
            geometry_file = base / geometry_file
    bbox = grid.get("bbox")
    if bbox is not None and len(bbox) != 4:
        raise ConfigError(f"[grid].bbox needs 4 numbers, got {bbox}")
    try:
        return Scenario(
            name=str(document.get("name", "")),
            fixture=geometry.get("fixture"),
            fixture_params=dict(geometry.get("params", {})),
            geometry_file=geometry_file,
            solver=SolverConfig(**solver),
            n=int(grid.get("n", 129)),
            bbox=tuple(float(v) for v in bbox) if bbox is not None else None,
            analyses=tuple(
                Analysis(
                    str(entry.get("kind", "")),
                    {k: v for k, v in entry.items() if k != "kind"},
                )
                for entry in analyses
            ),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"Invalid scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            document = tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"Scenario file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from exc
    scenario = parse_scenario(document, base=path.parent)
    logger.debug("Loaded scenario %s from %s", scenario.name, path)
    return scenario
