import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from caplab.analysis.field_analysis import (
    CriticalPoint,
    Rank,
    WirtingerField,
    choose_coefficients,
    classify_critical,
    project_W,
    wirtinger,
)
from caplab.analysis.graph import CheckResult, build_graph, limit_sets, structure_checks
from caplab.analysis.levelset import LevelSetComponent, LevelSetTracer
from caplab.analytic.fields import CapacitorExample, distortion_bound
from caplab.geometry.boundary import boundary_values
from caplab.geometry.curves import CapacitorSpec, GridSpec, load_capacitor_spec
from caplab.geometry.mask import Mask, rasterize
from caplab.geometry.shape_checks import (
    is_monotone,
    is_starlike_shaping,
    monotone_segment_contradiction,
)
from caplab.runner.fixtures import Fixture, fixture_factory
from caplab.runner.scenario import REAL_ONLY, ConfigError, Scenario, load_scenario
from caplab.solver.fields import ComplexField, ScalarField, SolveReport, dump_field_csv
from caplab.solver.laplace_solver import (
    dirichlet_energy,
    energy_caveat,
    solve_complex,
    solve_dirichlet,
)
from caplab.solver.p_laplace_solver import (
    beltrami_distortion_estimate,
    solve_p_dirichlet,
)

logger = logging.getLogger(__name__)

CIRCLE_SAMPLES = 1024


@dataclass(eq=False)
class RunContext:
    """Everything an analysis needs about one solved scenario."""

    scenario: Scenario
    spec: CapacitorSpec
    mask: Mask
    field: ScalarField | ComplexField
    solve_report: SolveReport
    fixture: Fixture | None = None
    contours: list[dict] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)
    _wirtinger: WirtingerField | None = None
    _critical: dict[int, list[CriticalPoint]] = field(default_factory=dict)

    @property
    def is_real(self) -> bool:
        return isinstance(self.field, ScalarField)

    @property
    def p(self) -> float:
        return self.scenario.solver.p

    @property
    def wirtinger(self) -> WirtingerField:
        if self._wirtinger is None:
            self._wirtinger = wirtinger(self.field)
        return self._wirtinger

    def critical(self, standoff: int = 2) -> list[CriticalPoint]:
        if standoff not in self._critical:
            self._critical[standoff] = classify_critical(
                self.wirtinger, standoff=standoff
            )
        return self._critical[standoff]

    def scalar(self) -> ScalarField:
        if isinstance(self.field, ScalarField):
            return self.field
        return self.field.real


@dataclass(frozen=True, eq=False)
class VerificationReport:
    scenario: str
    checks: list[CheckResult]
    solve_report: SolveReport
    provenance: dict
    extras: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.passed is False and not c.soft]

    @property
    def passed(self) -> bool:
        return self.solve_report.converged and not self.failures

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "solver": self.solve_report.to_dict(),
            "checks": [check.to_dict() for check in self.checks],
            "provenance": self.provenance,
            **self.extras,
        }


Handler = Callable[[RunContext, dict], list[CheckResult]]


def _region(mask: Mask, margin: int) -> np.ndarray:
    region = mask.depth() >= margin
    if not region.any():
        raise ConfigError(f"No interior node has margin >= {margin} at n={mask.grid.n}")
    return region


def _oracle(ctx: RunContext, params: dict) -> list[CheckResult]:
    if ctx.fixture is None or ctx.fixture.oracle is None:
        raise ConfigError("The oracle analysis needs a fixture with a closed form")
    active = ctx.mask.active
    exact = ctx.fixture.oracle(ctx.mask.grid.z[active])
    values = ctx.field.values[active]
    if ctx.is_real:
        exact = np.real(exact)
    error = float(np.abs(values - exact).max())
    ctx.extras["oracle_max_error"] = error
    return [
        CheckResult(
            "oracle-error",
            error <= params["tolerance"],
            measured=error,
            threshold=params["tolerance"],
            detail=f"max |u - {ctx.fixture.oracle.describe()}| over non-exterior nodes",
        )
    ]


def _critical(ctx: RunContext, params: dict) -> list[CheckResult]:
    standoff = int(params["standoff"])
    points = ctx.critical(standoff)
    zero = [p for p in points if p.rank == Rank.ZERO]
    one = [p for p in points if p.rank == Rank.ONE]
    h = ctx.mask.h
    results = []
    if params["rank_zero"] is not None:
        results.append(
            CheckResult(
                "rank-zero-count",
                len(zero) == params["rank_zero"],
                measured=len(zero),
                threshold=params["rank_zero"],
            )
        )
    if params["zero_near"] is not None:
        target = complex(*params["zero_near"])
        distance = min((abs(p.location - target) for p in zero), default=np.inf)
        results.append(
            CheckResult(
                "rank-zero-near",
                distance <= 2.0 * h,
                measured=float(distance),
                threshold=2.0 * h,
                detail=f"nearest rank-zero point to {target}",
            )
        )
    if params["rank_one_circle"] is not None:
        results.extend(_rank_one_circle(ctx, one, params, standoff))
    return results


def _rank_one_circle(
    ctx: RunContext, one: list[CriticalPoint], params: dict, standoff: int
) -> list[CheckResult]:
    cx, cy, radius = params["rank_one_circle"]
    center = complex(cx, cy)
    h = ctx.mask.h
    if not one:
        return [
            CheckResult("rank-one-locus", False, measured=0, detail="no rank-one point")
        ]
    detected = np.array([p.location for p in one])
    locus_error = float(np.abs(np.abs(detected - center) - radius).max())
    angles = 2.0 * np.pi * np.arange(CIRCLE_SAMPLES) / CIRCLE_SAMPLES
    circle = center + radius * np.exp(1j * angles)
    depth = ctx.mask.depth()
    nodes = [ctx.mask.grid.nearest_node(point) for point in circle]
    inside = np.array([depth[j, i] >= standoff + 2 for j, i in nodes])
    gaps = [float(np.abs(detected - point).min()) for point in circle[inside]]
    coverage = max(gaps, default=0.0)
    return [
        CheckResult(
            "rank-one-locus",
            locus_error <= params["hausdorff"] * h,
            measured=locus_error,
            threshold=params["hausdorff"] * h,
            detail="largest distance of a rank-one point from the circle",
        ),
        CheckResult(
            "rank-one-coverage",
            coverage <= params["coverage"] * h,
            measured=coverage,
            threshold=params["coverage"] * h,
            detail="largest distance of a circle point in the domain from a detection",
        ),
    ]


def _seed(ctx: RunContext, params: dict) -> complex | None:
    if params["seed"] != "auto":
        return complex(*params["seed"])
    points = ctx.critical()
    ranked = [p for p in points if p.rank == Rank.ZERO] or points
    return ranked[0].location if ranked else None


def contour_document(component: LevelSetComponent, graph, checks) -> dict:
    return {
        "level": component.level,
        "seed": [component.seed.real, component.seed.imag],
        "arcs": [
            np.column_stack([arc.real, arc.imag]).tolist() for arc in component.arcs
        ],
        "nodes": [[point.real, point.imag] for point in component.node_points],
        "terminals": [
            {"arc": arc, "end": end, "kind": terminal.label()}
            for arc, end, terminal in component.terminals()
        ],
        "graph": graph.to_dict(),
        "checks": checks.to_dict(),
    }


def trace_dendrite(
    ctx: RunContext,
    seed: complex,
    level: float | None = None,
    node_radius: float = 2.0,
    standoff: int = 2,
) -> LevelSetComponent:
    """
    Level-set component through `seed`. A complex field is first projected to
    W = alpha U + beta V with coefficients chosen so that W vanishes at the
    seed and on the hole; the rank-zero points of the traced scalar become
    graph nodes.
    """
    if ctx.is_real:
        scalar = ctx.scalar()
    else:
        spec = ctx.spec
        center = spec.hole_values[0] if len(spec.hole_values) == 1 else 0j
        value = complex(ctx.field.interpolate(np.array([seed]))[0])
        coeffs = choose_coefficients(value, center)
        ctx.extras.setdefault("projection", []).append(
            {"alpha": coeffs.alpha, "beta": coeffs.beta}
        )
        scalar = project_W(ctx.field, coeffs)
    if level is None:
        level = float(scalar.interpolate(np.array([seed]))[0])
    nodes = [
        p
        for p in classify_critical(wirtinger(scalar), standoff=standoff)
        if p.rank == Rank.ZERO
    ]
    return LevelSetTracer(node_radius=node_radius)(scalar, level, seed, nodes)


def _dendrite(ctx: RunContext, params: dict) -> list[CheckResult]:
    seed = _seed(ctx, params)
    if seed is None:
        return [CheckResult("dendrite", False, detail="no critical point to seed from")]
    component = trace_dendrite(
        ctx, seed, params["level"], params["node_radius"], int(params["standoff"])
    )
    graph = build_graph(component, ctx.mask)
    soft = ctx.p != 2.0
    checks = structure_checks(
        graph,
        component,
        dendrone=params["dendrone"],
        soft=soft,
        loops=not ctx.is_real,
    )
    results = list(checks.results)
    if params["bounded_faces"] is not None:
        results.append(
            CheckResult(
                "bounded-face-count",
                len(graph.bounded_faces) == params["bounded_faces"],
                measured=len(graph.bounded_faces),
                threshold=params["bounded_faces"],
                soft=soft,
            )
        )
        holes = [len(face.holes) for face in graph.bounded_faces]
        results.append(
            CheckResult(
                "one-hole-per-face",
                all(count == 1 for count in holes),
                measured=holes,
                threshold=1,
                soft=soft,
            )
        )
    if params["node_degree"] is not None:
        degrees = [
            d for d, critical in zip(graph.degrees, graph.critical) if critical
        ]
        results.append(
            CheckResult(
                "critical-node-degree",
                degrees == [params["node_degree"]],
                measured=degrees,
                threshold=params["node_degree"],
                soft=soft,
            )
        )
    sets, disjoint = limit_sets(component, ctx.mask)
    results.append(
        CheckResult(
            "limit-sets-disjoint",
            disjoint,
            measured=len(sets),
            detail="boundary continua reached by arc ends",
            soft=soft,
        )
    )
    ctx.contours.append(contour_document(component, graph, checks))
    return [_prefixed("dendrite", result) for result in results]


def _prefixed(prefix: str, result: CheckResult) -> CheckResult:
    return CheckResult(
        f"{prefix}:{result.name}",
        result.passed,
        result.measured,
        result.threshold,
        result.detail,
        result.soft,
    )


def _starlike(ctx: RunContext, params: dict) -> list[CheckResult]:
    report = is_starlike_shaping(ctx.spec, merge_tol=2.0 * ctx.mask.h)
    return [
        CheckResult(
            "starlike-shaping",
            report.holds == params["expect"],
            measured=report.holds,
            threshold=params["expect"],
            detail=(
                f"single_hole={report.single_hole} nonconstant={report.nonconstant} "
                f"monotone={report.monotone}"
            ),
        )
    ]


def _monotone(ctx: RunContext, params: dict) -> list[CheckResult]:
    monotone = is_monotone(ctx.spec.outer_map)
    contradiction = monotone_segment_contradiction(ctx.spec.outer_map)
    return [
        CheckResult(
            "monotone",
            monotone == params["expect"],
            measured=monotone,
            threshold=params["expect"],
        ),
        CheckResult(
            "segment-image",
            not contradiction,
            measured=contradiction,
            threshold=False,
            detail="a monotone image of the outer boundary cannot be a segment",
        ),
    ]


def _energy(ctx: RunContext, params: dict) -> list[CheckResult]:
    energy = dirichlet_energy(ctx.field)
    caveat = energy_caveat(ctx.spec.outer_map)
    ctx.extras["energy"] = {"value": energy, "caveat": caveat}
    expected = params["expected"]
    if caveat:
        logger.warning("Boundary data oscillate strongly; the energy may be unreliable")
    if expected is None:
        return [
            CheckResult("energy", None, measured=energy, detail="no expected value")
        ]
    error = abs(energy - expected) / abs(expected)
    return [
        CheckResult(
            "energy",
            error <= params["rel_tol"],
            measured=energy,
            threshold=expected,
            detail=f"relative error {error:.3g}, tolerance {params['rel_tol']}",
            soft=caveat,
        )
    ]


def _verify_nonvanishing(ctx: RunContext, params: dict) -> list[CheckResult]:
    region = _region(ctx.mask, int(params["margin"]))
    smallest = float(np.nanmin(ctx.wirtinger.gradient_norm[region]))
    ctx.extras["min_interior_gradient"] = smallest
    threshold = params["threshold"]
    if params["oracle_fraction"] is not None:
        if ctx.fixture is None or ctx.fixture.oracle is None:
            raise ConfigError("oracle_fraction needs a fixture with a closed form")
        exact = ctx.fixture.oracle.eval(ctx.mask.grid.z[region])
        analytic = float(np.sqrt(2.0 * exact.grad_norm_sq).min())
        threshold = params["oracle_fraction"] * analytic
    if threshold is None:
        return [
            CheckResult(
                "nonvanishing", smallest > 0.0, measured=smallest, threshold=0.0
            )
        ]
    return [
        CheckResult(
            "nonvanishing",
            smallest >= threshold,
            measured=smallest,
            threshold=float(threshold),
            detail=f"min |grad| over nodes with margin >= {params['margin']}",
        )
    ]


def _jacobian_positive(ctx: RunContext, params: dict) -> list[CheckResult]:
    region = _region(ctx.mask, int(params["margin"]))
    smallest = float(np.nanmin(ctx.wirtinger.jac[region]))
    return [
        CheckResult(
            "jacobian-positive",
            smallest > 0.0,
            measured=smallest,
            threshold=0.0,
            detail=f"min Jacobian over nodes with margin >= {params['margin']}",
        )
    ]


def _gradient_at(ctx: RunContext, params: dict) -> list[CheckResult]:
    point = complex(*params["point"])
    j, i = ctx.mask.grid.nearest_node(point)
    gradient = float(ctx.wirtinger.gradient_norm[j, i])
    threshold = params["max_relative"] * ctx.field.data_range()
    ctx.extras["gradient_at"] = {"point": [point.real, point.imag], "value": gradient}
    return [
        CheckResult(
            "gradient-at",
            gradient <= threshold,
            measured=gradient,
            threshold=threshold,
            detail=f"|grad| at the node nearest {point}",
        )
    ]


def _gradient_identity(ctx: RunContext, params: dict) -> list[CheckResult]:
    """
    Closed-form identity behind the non-vanishing gradient of the explicit
    example. Its right side is only claimed to exceed 1; strict positivity is
    what the check asserts, the value at z = 1 is recorded.
    """
    oracle = ctx.fixture.oracle if ctx.fixture is not None else None
    if not isinstance(oracle, CapacitorExample):
        raise ConfigError("gradient-identity needs the capacitor-example fixture")
    z = ctx.mask.grid.z[ctx.mask.active]
    lhs, rhs = oracle.grad_identity_check(z)
    mismatch = float((np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1.0)).max())
    smallest = float(rhs.min())
    _, at_one = oracle.grad_identity_check(1.0 + 0j)
    ctx.extras["gradient_identity"] = {
        "min_rhs": smallest,
        "rhs_at_one": float(at_one),
        "exceeds_one": bool(smallest > 1.0),
        "claim_exceeds_one": "confirmed" if smallest > 1.0 else "unconfirmed",
    }
    return [
        CheckResult(
            "gradient-identity",
            mismatch <= params["rel_tol"],
            measured=mismatch,
            threshold=params["rel_tol"],
            detail="relative mismatch of both sides over non-exterior nodes",
        ),
        CheckResult(
            "gradient-identity-positive",
            smallest > 0.0,
            measured=smallest,
            threshold=0.0,
            detail=f"right side at z = 1 is {float(at_one):.6g}",
        ),
    ]


def _distortion(ctx: RunContext, params: dict) -> list[CheckResult]:
    estimate = beltrami_distortion_estimate(ctx.scalar())
    K = distortion_bound(ctx.p)
    bound = (K - 1.0) / (K + 1.0) + params["slack"]
    ctx.extras.update({"p": ctx.p, "K": K, "beltrami_p95": estimate})
    return [
        CheckResult(
            "distortion",
            estimate <= bound,
            measured=estimate,
            threshold=bound,
            detail="95th percentile of the Beltrami coefficient of u_z",
        )
    ]


def _max_principle(ctx: RunContext, params: dict) -> list[CheckResult]:
    values = ctx.scalar().values
    data = values[ctx.mask.boundary]
    interior = values[ctx.mask.interior]
    low, high = float(data.min()), float(data.max())
    measured = [float(interior.min()), float(interior.max())]
    return [
        CheckResult(
            "max-principle",
            bool(low < measured[0] and measured[1] < high),
            measured=measured,
            threshold=[low, high],
            detail="interior values strictly between the boundary extremes",
        )
    ]


ANALYSIS_MAP: dict[str, Handler] = {
    "oracle": _oracle,
    "critical": _critical,
    "dendrite": _dendrite,
    "starlike": _starlike,
    "monotone": _monotone,
    "energy": _energy,
    "verify-nonvanishing": _verify_nonvanishing,
    "jacobian-positive": _jacobian_positive,
    "gradient-at": _gradient_at,
    "distortion": _distortion,
    "gradient-identity": _gradient_identity,
    "max-principle": _max_principle,
}


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_json(document: Any, path: Path) -> None:
    text = json.dumps(document, sort_keys=True, indent=2, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


class ScenarioRunner:
    """Runs rasterize, solve, analyze and report for scenarios."""

    def __init__(self, out_dir: str | Path | None = None, grid: int | None = None):
        self._out_dir = Path(out_dir) if out_dir is not None else None
        self._grid = grid

    @property
    def out_dir(self) -> Path | None:
        return self._out_dir

    @property
    def grid(self) -> int | None:
        return self._grid

    def __call__(self, scenario: Scenario) -> VerificationReport:
        return self.run(scenario)

    def run_file(self, path: str | Path) -> VerificationReport:
        return self.run(load_scenario(path))

    def prepare(self, scenario: Scenario) -> tuple[CapacitorSpec, Mask, Fixture | None]:
        fixture = None
        if scenario.fixture is not None:
            try:
                fixture = fixture_factory(scenario.fixture, scenario.fixture_params)
            except (KeyError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
            spec = fixture.spec
        else:
            assert scenario.geometry_file is not None
            try:
                spec = load_capacitor_spec(scenario.geometry_file)
            except FileNotFoundError as exc:
                raise ConfigError(
                    f"Geometry file {scenario.geometry_file} not found"
                ) from exc
        if scenario.bbox is not None:
            grid = GridSpec(scenario.bbox, scenario.n)
        else:
            grid = GridSpec.around(spec.outer, scenario.n)
        return spec, rasterize(spec, grid), fixture

    def solve(self, scenario: Scenario) -> RunContext:
        scenario = scenario.with_grid(self._grid)
        spec, mask, fixture = self.prepare(scenario)
        boundary = boundary_values(spec, mask)
        solver = scenario.solver
        options = {
            "tol_solve": solver.tol_solve,
            "correct_boundary": solver.correct_boundary,
        }
        field: ScalarField | ComplexField
        if solver.kind == "p-harmonic":
            if not spec.is_real:
                raise ConfigError("The p-harmonic solver needs real boundary data")
            field, report = solve_p_dirichlet(
                boundary.real,
                solver.pharmonic(),
                correct_boundary=solver.correct_boundary,
            )
        elif spec.is_real:
            field, report = solve_dirichlet(boundary.real, **options)
        else:
            field, report = solve_complex(boundary, **options)
        return RunContext(scenario, spec, mask, field, report, fixture)

    def run(self, scenario: Scenario) -> VerificationReport:
        context = self.solve(scenario)
        scenario = context.scenario
        checks = [
            CheckResult(
                "solver-converged",
                context.solve_report.converged,
                measured=context.solve_report.final_residual,
                threshold=scenario.solver.tol_solve,
            )
        ]
        for analysis in scenario.analyses:
            if analysis.kind in REAL_ONLY and not context.is_real:
                raise ConfigError(f"Analysis '{analysis.kind}' needs a real field")
            logger.debug("Scenario %s: running %s", scenario.name, analysis.kind)
            checks.extend(ANALYSIS_MAP[analysis.kind](context, analysis.params))
        if scenario.solver.kind == "p-harmonic":
            context.extras.setdefault("p", context.p)
            context.extras.setdefault("K", distortion_bound(context.p))
        report = VerificationReport(
            scenario=scenario.name,
            checks=checks,
            solve_report=context.solve_report,
            provenance={
                "config": scenario.to_dict(),
                "grid": context.mask.grid.to_dict(),
            },
            extras=context.extras,
        )
        for check in report.failures:
            logger.warning(
                "Scenario %s: %s failed (measured %s, threshold %s)",
                scenario.name,
                check.name,
                check.measured,
                check.threshold,
            )
        logger.info("Scenario %s: passed=%s", scenario.name, report.passed)
        if self._out_dir is not None:
            self.write(context, report)
        return report

    def write(self, context: RunContext, report: VerificationReport) -> Path:
        assert self._out_dir is not None
        target = self._out_dir / context.scenario.name
        target.mkdir(parents=True, exist_ok=True)
        dump_field_csv(context.field, target / "field.csv")
        write_json(
            [point.to_dict() for point in context.critical()], target / "critical.json"
        )
        write_json(context.contours, target / "contours.json")
        write_json(report.to_dict(), target / "report.json")
        logger.info("Wrote results of %s to %s", context.scenario.name, target)
        return target
