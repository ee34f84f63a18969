"""Experiment harness: overload contrasts, information curves, the selection ablation.

Seeding rule: session ``i`` of an experiment with base seed ``b`` draws its
profile seed and engine seed from ``SeedSequence(b, spawn_key=(i,))``. The
rule ignores the condition, so session ``i`` meets the same user and the same
sales-agent stream under every condition, which is what makes the paired
tests paired. Sessions may run in any order on any number of workers;
results are gathered back in session-index order.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .catalog import Catalog, ProfileConfig, generate_profile, synthesize_catalog
from .dialogue import (
    ConfigurationError,
    EngineParams,
    Providers,
    SalesAgentConfig,
    UserModel,
    run_session,
)
from .hesitation import DEFAULT_CALIBRATION, CalibrationTable, HesitationParams
from .stats import DegenerateSampleError, WilcoxonResult, success_rate, wilcoxon_signed_rank

CSV_FORMAT_VERSION = 1
CURVES = ("total_info", "attributes", "assortment")
FORMATS = {1: "tabular", 2: "mixed", 3: "free-text"}
DEFAULT_ASSORTMENT_GRID = (1, 3, 6, 9, 12)
DEFAULT_ATTRIBUTE_GRID = (2, 4, 6, 8, 10)


class ExperimentError(RuntimeError):
    pass


# -- environment -------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """Everything a session needs besides the condition: catalog and engine knobs."""

    catalog_seed: int = 7
    n_items: int = 2000
    n_attrs: int = 10
    coherence: float = 0.5
    categories: tuple[str, ...] = ("headphones",)
    catalog_path: Optional[str] = None
    schema_path: Optional[str] = None
    calibration: CalibrationTable = DEFAULT_CALIBRATION
    p_base: float = 0.5
    prior: float = 0.5
    prior_strength: float = 4.0
    pickiness: int = 2
    openness: int = 2
    mode: str = "basic"
    relevance: bool = False
    turn_limit: int = 20
    provider: str = "rule"
    external_timeout: float = 10.0
    external_retries: int = 2

    def engine_params(self, variant: str = "structured_selection") -> EngineParams:
        return EngineParams(
            hesitation=HesitationParams(self.p_base),
            calibration=self.calibration,
            user=UserModel(self.prior, self.prior_strength),
            variant=variant,
        )

    def build_catalog(self) -> Catalog:
        if self.catalog_path:
            from .catalog import load_catalog, load_schema

            if not self.schema_path:
                raise ConfigurationError("catalog_path requires schema_path")
            with open(self.schema_path, encoding="utf-8") as fh:
                schema = load_schema(fh.read())
            with open(self.catalog_path, "rb") as fh:
                return load_catalog(fh.read(), schema)
        return synthesize_catalog(
            self.catalog_seed, self.n_items, self.n_attrs, categories=self.categories, coherence=self.coherence
        )


def session_seeds(base_seed: int, index: int) -> tuple[int, int]:
    """(profile seed, engine seed) for session ``index``; independent of condition."""
    state = np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


@dataclass(frozen=True)
class Cell:
    """One simulated condition: the levels that vary between conditions."""

    assortment: int
    attributes: int
    uncertainty: int
    time_pressure: int = 2
    format_level: int = 1
    variant: str = "structured_selection"

    def __post_init__(self):
        for name in ("uncertainty", "time_pressure", "format_level"):
            if getattr(self, name) not in (1, 2, 3):
                raise ConfigurationError(f"{name} must be 1, 2 or 3")
        if self.assortment < 1 or self.attributes < 1:
            raise ConfigurationError("assortment and attributes must be >= 1")
        if self.variant not in ("structured_selection", "flat_rating"):
            raise ConfigurationError(f"unknown variant {self.variant!r}")


# Worker-process globals, filled once per process by _init_worker.
_ENV: Optional[Environment] = None
_CATALOG: Optional[Catalog] = None
_PROVIDERS: Optional[Providers] = None


def _providers_for(env: Environment, catalog: Catalog) -> Providers:
    if env.provider == "external":
        from .external import external_providers

        return external_providers(catalog, env.external_timeout, env.external_retries)
    return Providers.rule_based(catalog)


def _init_worker(env: Environment, catalog: Catalog) -> None:
    global _ENV, _CATALOG, _PROVIDERS
    _ENV, _CATALOG = env, catalog
    _PROVIDERS = _providers_for(env, catalog)


def simulate_cell(env: Environment, catalog: Catalog, providers: Providers, cell: Cell, base_seed: int, index: int):
    profile_seed, engine_seed = session_seeds(base_seed, index)
    config = ProfileConfig(
        seed=profile_seed,
        uncertainty=cell.uncertainty,
        pickiness=env.pickiness,
        openness=env.openness,
        time_pressure=cell.time_pressure,
    )
    state, weights, constraints = generate_profile(config, catalog)
    sales = SalesAgentConfig(
        cell.assortment, cell.attributes, FORMATS[cell.format_level], env.mode, env.relevance
    )
    return run_session(
        state,
        weights,
        constraints,
        catalog,
        sales,
        env.engine_params(cell.variant),
        providers,
        seed=engine_seed,
        turn_limit=env.turn_limit,
    )


def _run_task(task) -> tuple[bool, int]:
    cell, base_seed, index = task
    try:
        result = simulate_cell(_ENV, _CATALOG, _PROVIDERS, cell, base_seed, index)
    except Exception as exc:  # noqa: BLE001
        raise ExperimentError(f"{cell}, session {index}: {exc}") from exc
    if result.status != "ok":
        raise ExperimentError(f"{cell}, session {index}: {result.diagnostic}")
    return result.purchased, result.terminal_turn


class Runner:
    """Runs batches of (cell, session) tasks serially or on a process pool."""

    def __init__(self, env: Environment, workers: int = 1, catalog: Optional[Catalog] = None):
        if workers < 1:
            raise ConfigurationError("workers must be >= 1")
        self.env = env
        self.workers = workers
        self.catalog = catalog if catalog is not None else env.build_catalog()

    def check(self, cell: Cell) -> None:
        if cell.attributes > len(self.catalog.schema):
            raise ConfigurationError(
                f"{cell.attributes} attributes requested but the schema has {len(self.catalog.schema)}"
            )
        if cell.assortment * self.env.turn_limit > len(self.catalog):
            raise ConfigurationError(
                f"assortment {cell.assortment} over {self.env.turn_limit} turns needs "
                f"{cell.assortment * self.env.turn_limit} items; catalog has {len(self.catalog)}"
            )
        SalesAgentConfig(cell.assortment, cell.attributes, FORMATS[cell.format_level])

    def run(self, cells: Sequence[Cell], n_sessions: int, base_seed: int) -> list[tuple[tuple[bool, ...], tuple[int, ...]]]:
        if n_sessions < 1:
            raise ConfigurationError("need at least one session per condition")
        for cell in cells:
            self.check(cell)
        tasks = [(cell, base_seed, i) for cell in cells for i in range(n_sessions)]
        if self.workers == 1:
            _init_worker(self.env, self.catalog)
            flat = [_run_task(t) for t in tasks]
        else:
            chunk = max(1, len(tasks) // (self.workers * 4))
            with ProcessPoolExecutor(
                self.workers, initializer=_init_worker, initargs=(self.env, self.catalog)
            ) as pool:
                flat = list(pool.map(_run_task, tasks, chunksize=chunk))
        out = []
        for c in range(len(cells)):
            block = flat[c * n_sessions : (c + 1) * n_sessions]
            out.append((tuple(p for p, _ in block), tuple(t for _, t in block)))
        return out


# -- overload experiment -----------------------------------------------------


@dataclass(frozen=True)
class OverloadCondition:
    name: str
    time_pressure: int
    format_level: int
    uncertainty: int
    assortment: int = 3
    attributes: int = 8

    def cell(self) -> Cell:
        return Cell(self.assortment, self.attributes, self.uncertainty, self.time_pressure, self.format_level)


OVERLOAD_CONDITIONS = (
    OverloadCondition("Low", 1, 1, 1),
    OverloadCondition("Medium", 2, 1, 2),
    OverloadCondition("Severe", 3, 3, 3),
)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    condition: OverloadCondition
    purchased: tuple[bool, ...]
    turns: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.purchased)

    @property
    def sr(self) -> float:
        return success_rate(self.purchased)


@dataclass(frozen=True)
class OverloadResult:
    conditions: tuple[ConditionResult, ...]
    base_seed: int
    test_pair: tuple[str, str]
    test: Optional[WilcoxonResult]
    diagnostic: str = ""

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def significant(self) -> bool:
        return self.test is not None and self.test.p_value < 0.05


def paired_test(a: ConditionResult, b: ConditionResult) -> tuple[Optional[WilcoxonResult], str]:
    """Wilcoxon on per-session purchase indicators; degenerate samples are not significant."""
    try:
        return wilcoxon_signed_rank(list(zip(map(int, a.purchased), map(int, b.purchased)))), ""
    except DegenerateSampleError as exc:
        return None, f"{a.name} vs {b.name}: {exc}; reported as not significant"


def run_overload_experiment(
    conditions: Sequence[OverloadCondition] = OVERLOAD_CONDITIONS,
    n_sessions: int = 200,
    base_seed: int = 0,
    env: Environment = Environment(),
    workers: int = 1,
    runner: Optional[Runner] = None,
    test_pair: Optional[tuple[str, str]] = None,
) -> OverloadResult:
    if not conditions:
        raise ConfigurationError("no conditions given")
    runner = runner or Runner(env, workers)
    raw = runner.run([c.cell() for c in conditions], n_sessions, base_seed)
    results = tuple(ConditionResult(c.name, c, p, t) for c, (p, t) in zip(conditions, raw))
    names = [c.name for c in conditions]
    if test_pair is None:
        test_pair = ("Low", "Severe") if {"Low", "Severe"} <= set(names) else (names[0], names[-1])
    by_name = {r.name: r for r in results}
    test, diag = paired_test(by_name[test_pair[0]], by_name[test_pair[1]])
    return OverloadResult(results, base_seed, test_pair, test, diag)


# -- sweeps ------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    curve: str
    assortment_grid: tuple[int, ...] = DEFAULT_ASSORTMENT_GRID
    attribute_grid: tuple[int, ...] = DEFAULT_ATTRIBUTE_GRID
    uncertainties: tuple[int, ...] = (1, 2, 3)
    fixed_assortment: int = 3
    fixed_attributes: int = 5
    time_pressure: int = 2
    format_level: int = 1

    def __post_init__(self):
        if self.curve not in CURVES:
            raise ConfigurationError(f"unknown curve {self.curve!r}; choose from {CURVES}")
        if not self.uncertainties:
            raise ConfigurationError("at least one uncertainty level required")
        if self.curve in ("total_info", "assortment") and not self.assortment_grid:
            raise ConfigurationError("assortment grid is empty")
        if self.curve in ("total_info", "attributes") and not self.attribute_grid:
            raise ConfigurationError("attribute grid is empty")

    def points(self) -> list[tuple[int, int]]:
        """(assortment, attributes) pairs in run order."""
        if self.curve == "assortment":
            return [(a, self.fixed_attributes) for a in self.assortment_grid]
        if self.curve == "attributes":
            return [(self.fixed_assortment, k) for k in self.attribute_grid]
        return [(a, k) for a in self.assortment_grid for k in self.attribute_grid]

    def axis(self, assortment: int, attributes: int) -> int:
        if self.curve == "assortment":
            return assortment
        if self.curve == "attributes":
            return attributes
        return assortment * attributes


@dataclass(frozen=True)
class CurvePoint:
    uncertainty: int
    axis: int
    cells: tuple[tuple[int, int], ...]  # (assortment, attributes) pooled into this point
    purchases: int
    n: int

    @property
    def sr(self) -> float:
        return self.purchases / self.n


@dataclass(frozen=True)
class CurveResult:
    spec: SweepSpec
    variant: str
    base_seed: int
    points: tuple[CurvePoint, ...]

    def series(self, uncertainty: int) -> tuple[list[int], list[float]]:
        pts = [p for p in self.points if p.uncertainty == uncertainty]
        if not pts:
            raise KeyError(f"no series for uncertainty {uncertainty}")
        return [p.axis for p in pts], [p.sr for p in pts]


def run_sweep(
    spec: SweepSpec,
    n_sessions: int = 200,
    base_seed: int = 0,
    env: Environment = Environment(),
    workers: int = 1,
    variant: str = "structured_selection",
    runner: Optional[Runner] = None,
) -> CurveResult:
    """SR at every grid point for every uncertainty overlay.

    On the total-information curve, grid cells with the same product
    ``assortment * attributes`` are pooled into one point.
    """
    runner = runner or Runner(env, workers)
    pairs = spec.points()
    cells = [
        Cell(a, k, u, spec.time_pressure, spec.format_level, variant) for u in spec.uncertainties for a, k in pairs
    ]
    raw = runner.run(cells, n_sessions, base_seed)
    points = []
    for ui, u in enumerate(spec.uncertainties):
        block = raw[ui * len(pairs) : (ui + 1) * len(pairs)]
        pooled: dict[int, list] = {}
        for (a, k), (purchased, _) in zip(pairs, block):
            entry = pooled.setdefault(spec.axis(a, k), [[], 0, 0])
            entry[0].append((a, k))
            entry[1] += sum(purchased)
            entry[2] += len(purchased)
        for x in sorted(pooled):
            cells_x, hits, n = pooled[x]
            points.append(CurvePoint(u, x, tuple(cells_x), hits, n))
    return CurveResult(spec, variant, base_seed, tuple(points))


def run_ablation(
    variant: str,
    spec: SweepSpec,
    n_sessions: int = 200,
    base_seed: int = 0,
    env: Environment = Environment(),
    workers: int = 1,
    runner: Optional[Runner] = None,
) -> CurveResult:
    if variant not in ("structured_selection", "flat_rating"):
        raise ConfigurationError(f"unknown variant {variant!r}")
    return run_sweep(spec, n_sessions, base_seed, env, workers, variant, runner)


def sign_changes(values: Sequence[float]) -> int:
    """Sign changes in the first differences, ignoring flat steps."""
    signs = [np.sign(b - a) for a, b in zip(values, values[1:])]
    signs = [s for s in signs if s != 0]
    return sum(1 for s, t in zip(signs, signs[1:]) if s != t)


# -- export ------------------------------------------------------------------

OVERLOAD_HEADER = (
    "condition", "time_pressure", "format_level", "uncertainty", "assortment", "attributes",
    "n", "purchases", "sr", "test", "statistic", "p_value",
)
CURVE_HEADER = ("curve", "variant", "uncertainty", "axis", "cells", "n", "purchases", "sr")


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv(result) -> bytes:
    buf = io.StringIO()
    buf.write(f"# format_version={CSV_FORMAT_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(result, OverloadResult):
        if not result.conditions:
            raise ValueError("empty result")
        w.writerow(OVERLOAD_HEADER)
        test_name = f"wilcoxon:{result.test_pair[0]}-{result.test_pair[1]}"
        for c in result.conditions:
            cond = c.condition
            in_test = c.name in result.test_pair and result.test is not None
            w.writerow([
                c.name, cond.time_pressure, cond.format_level, cond.uncertainty, cond.assortment,
                cond.attributes, c.n, sum(c.purchased), _fmt(c.sr),
                test_name if in_test else "",
                _fmt(result.test.statistic) if in_test else "",
                _fmt(result.test.p_value) if in_test else "",
            ])
    elif isinstance(result, CurveResult):
        if not result.points:
            raise ValueError("empty result")
        w.writerow(CURVE_HEADER)
        for p in result.points:
            cells = ";".join(f"{a}x{k}" for a, k in p.cells)
            w.writerow([result.spec.curve, result.variant, p.uncertainty, p.axis, cells, p.n, p.purchases, _fmt(p.sr)])
    else:
        raise ValueError(f"cannot export {type(result).__name__}")
    return buf.getvalue().encode("utf-8")


COLORS = {1: "#1b9e77", 2: "#d95f02", 3: "#7570b3"}


def _svg(result) -> bytes:
    if isinstance(result, OverloadResult):
        if not result.conditions:
            raise ValueError("empty result")
        series = {0: ([i for i in range(len(result.conditions))], [c.sr for c in result.conditions])}
        labels = [c.name for c in result.conditions]
        xlabel = "condition"
    elif isinstance(result, CurveResult):
        if not result.points:
            raise ValueError("empty result")
        series = {u: result.series(u) for u in result.spec.uncertainties}
        labels = None
        xlabel = {"total_info": "total information", "attributes": "attributes shown", "assortment": "assortment size"}[
            result.spec.curve
        ]
    else:
        raise ValueError(f"cannot export {type(result).__name__}")
    width, height, m = 480, 320, 50
    xs = [x for s in series.values() for x in s[0]]
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1

    def px(x):
        return m + (x - x0) / span * (width - 2 * m)

    def py(y):
        return height - m - y * (height - 2 * m)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {height / 2:.1f})">success rate</text>',
    ]
    for t in (0.0, 0.5, 1.0):
        out.append(f'<text x="{m - 6}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="10">{t:.1f}</text>')
    ticks = sorted(set(xs))
    for i, x in enumerate(ticks):
        label = labels[i] if labels else str(x)
        out.append(f'<text x="{px(x):.1f}" y="{height - m + 14}" text-anchor="middle" font-size="10">{label}</text>')
    for row, (u, (sx, sy)) in enumerate(series.items()):
        color = COLORS.get(u, "#333333")
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(sx, sy))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        if u:
            ly = m + 14 * row
            out.append(f'<text x="{width - m}" y="{ly}" text-anchor="end" font-size="10" fill="{color}">uncertainty {u}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def export_results(result, fmt: str) -> bytes:
    if fmt == "csv":
        return _csv(result)
    if fmt == "svg":
        return _svg(result)
    raise ValueError(f"unsupported format {fmt!r}; use 'csv' or 'svg'")
