"""Overload perception, meta-analytic calibration, and the commit/defer draw.

The chain for one turn is::

    leaves --compose--> (assortment, complexity, difficulty, uncertainty)
           --calibrate--> d_total = sum over factors of beta * interp(level, delta range)
           --clamp--> --arcsine map--> P_accept --epsilon draw--> purchase | defer
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Protocol

import numpy as np

from . import kernels
from .catalog import normalize
from .state import LEVELS, GlobalState

FACTORS = ("a", "s", "t", "u")


class PerceptionError(RuntimeError):
    """A perception provider failed to score a turn."""


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class LeafScores:
    assortment: int
    dominance: int
    alignability: int
    attribute_count: int
    format_complexity: int
    time_pressure: int
    uncertainty: int

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value not in LEVELS:
                raise ValueError(f"leaf {name} must be in {LEVELS}, got {value!r}")


@dataclass(frozen=True)
class PerceivedLeaves:
    """The five leaves a perception provider is responsible for."""

    assortment: int
    dominance: int
    alignability: int
    attribute_count: int
    format_complexity: int


@dataclass(frozen=True)
class OverloadVector:
    a: float
    s: float
    t: float
    u: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.s, self.t, self.u)


@dataclass(frozen=True)
class FactorCalibration:
    beta: float
    delta_min: float
    delta_max: float


@dataclass(frozen=True)
class CalibrationTable:
    """Moderator coefficients and effect-size ranges per overload factor.

    ``zero_effect`` lists moderators that are deliberately kept at zero
    contribution (decision intent and accountability never vary here).
    """

    a: FactorCalibration = FactorCalibration(0.41, -0.18, 1.22)
    s: FactorCalibration = FactorCalibration(0.55, -1.65, 0.48)
    t: FactorCalibration = FactorCalibration(0.37, -0.59, 0.81)
    u: FactorCalibration = FactorCalibration(0.32, -1.34, 1.21)
    zero_effect: tuple[str, ...] = ("decision_intent", "decision_accountability")

    def factor(self, k: str) -> FactorCalibration:
        return getattr(self, k)

    def invalid_factors(self) -> list[str]:
        return [k for k in FACTORS if self.factor(k).delta_min > self.factor(k).delta_max]

    def attainable_range(self) -> tuple[float, float]:
        lo = math.fsum(self.factor(k).beta * self.factor(k).delta_min for k in FACTORS)
        hi = math.fsum(self.factor(k).beta * self.factor(k).delta_max for k in FACTORS)
        return lo, hi

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "factors": {k: asdict(self.factor(k)) for k in FACTORS},
            "zero_effect": {name: 0.0 for name in self.zero_effect},
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, validate: bool = True) -> "CalibrationTable":
        if not text.strip():
            raise CalibrationError("calibration file is empty")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"calibration file is not valid JSON ({exc.msg})") from exc
        if not isinstance(doc, dict) or doc.get("format_version") != 1:
            raise CalibrationError("calibration file needs format_version 1")
        factors = doc.get("factors", {})
        default = cls()
        parts = {}
        for k in FACTORS:
            entry = factors.get(k)
            if entry is None:
                parts[k] = default.factor(k)
                continue
            try:
                parts[k] = FactorCalibration(
                    float(entry["beta"]), float(entry["delta_min"]), float(entry["delta_max"])
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CalibrationError(f"factor {k}: needs numeric beta, delta_min, delta_max") from exc
        zero = doc.get("zero_effect", {name: 0.0 for name in default.zero_effect})
        nonzero = [name for name, value in zero.items() if value != 0]
        if nonzero:
            raise CalibrationError(f"zero-effect moderators must stay 0: {nonzero}")
        table = cls(zero_effect=tuple(zero), **parts)
        if validate and table.invalid_factors():
            bad = table.invalid_factors()
            raise CalibrationError(f"delta_min > delta_max for factor(s) {', '.join(bad)}")
        return table


DEFAULT_CALIBRATION = CalibrationTable()


@dataclass(frozen=True)
class HesitationParams:
    p_base: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_base < 1.0:
            raise ValueError("p_base must lie strictly between 0 and 1")


@dataclass(frozen=True)
class HesitationOutcome:
    leaves: LeafScores
    v: OverloadVector
    effects: tuple[float, float, float, float]
    d_raw: float
    d_total: float
    p_accept: float
    epsilon: float
    decision: str  # "purchase" | "defer"

    def __post_init__(self):
        if (self.decision == "purchase") != (self.epsilon <= self.p_accept):
            raise ValueError("decision inconsistent with epsilon draw")

    def to_record(self) -> dict:
        return {
            "leaves": asdict(self.leaves),
            "v": list(self.v.as_tuple()),
            "effects": [round(e, 12) for e in self.effects],
            "d_raw": round(self.d_raw, 12),
            "d_total": round(self.d_total, 12),
            "p_accept": round(self.p_accept, 12),
            "epsilon": round(self.epsilon, 12),
            "decision": self.decision,
        }


# -- calibration math --------------------------------------------------------


def compose_factors(leaves: LeafScores) -> OverloadVector:
    return OverloadVector(
        a=float(leaves.assortment),
        s=(leaves.dominance + leaves.alignability) / 2.0,
        t=(leaves.time_pressure + leaves.attribute_count + leaves.format_complexity) / 3.0,
        u=float(leaves.uncertainty),
    )


def interp_effect(level: float, delta_min: float, delta_max: float) -> float:
    """Linear map of an overload level in [1, 3] onto [delta_min, delta_max]."""
    if not 1.0 <= level <= 3.0:
        raise ValueError(f"level must lie in [1, 3], got {level!r}")
    return delta_min + (level - 1.0) / 2.0 * (delta_max - delta_min)


def factor_effects(v: OverloadVector, table: CalibrationTable = DEFAULT_CALIBRATION) -> tuple[float, ...]:
    """Per-factor contributions ``beta * interp(level)`` in (a, s, t, u) order."""
    out = []
    for k, level in zip(FACTORS, v.as_tuple()):
        f = table.factor(k)
        out.append(f.beta * interp_effect(level, f.delta_min, f.delta_max))
    return tuple(out)


def total_effect(v: OverloadVector, table: CalibrationTable = DEFAULT_CALIBRATION) -> float:
    return math.fsum(factor_effects(v, table))


def clamp_bounds(p_base: float) -> tuple[float, float]:
    root = math.asin(math.sqrt(p_base))
    return 2.0 * (root - math.pi / 2.0), 2.0 * root


def clamp_effect(d: float, p_base: float = 0.5) -> float:
    """Clip ``d`` so the arcsine map stays on its monotone branch."""
    if not 0.0 < p_base < 1.0:
        raise ValueError("p_base must lie strictly between 0 and 1")
    lo, hi = clamp_bounds(p_base)
    return min(hi, max(lo, d))


def accept_probability(d: float, p_base: float = 0.5) -> float:
    """``sin^2(arcsin(sqrt(p_base)) - d / 2)``."""
    if d == 0.0:
        return p_base
    return math.sin(math.asin(math.sqrt(p_base)) - d / 2.0) ** 2


def inverse_effect(p_accept: float, p_base: float = 0.5) -> float:
    """Effect size that maps ``p_base`` to ``p_accept``."""
    if not (0.0 <= p_accept <= 1.0 and 0.0 <= p_base <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return 2.0 * (math.asin(math.sqrt(p_base)) - math.asin(math.sqrt(p_accept)))


def decide_commit(p_accept: float, rng: np.random.Generator) -> tuple[str, float]:
    """Draw epsilon ~ U[0, 1); purchase iff epsilon <= p_accept."""
    if not 0.0 <= p_accept <= 1.0:
        raise ValueError("p_accept must lie in [0, 1]")
    eps = float(rng.random())
    return ("purchase" if eps <= p_accept else "defer"), eps


# -- perception --------------------------------------------------------------


class PerceptionProvider(Protocol):
    def perceive(self, sales, state: GlobalState) -> PerceivedLeaves: ...


def score_assortment(n_items: int) -> int:
    if n_items <= 3:
        return 1
    return 2 if n_items <= 8 else 3


def score_attribute_count(n_attrs: int) -> int:
    if n_attrs <= 4:
        return 1
    return 2 if n_attrs <= 9 else 3


def score_dominance(matrix: np.ndarray) -> int:
    """1 if one item Pareto-dominates the rest, else 2/3 by trade-off rate."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] == 0:
        return 3 if matrix.shape[0] > 1 else 1
    has_dominant, rate = kernels.dominance_profile(matrix)
    if has_dominant:
        return 1
    return 2 if rate < 0.5 else 3


def score_alignability(attribute_sets) -> int:
    sets = [set(s) for s in attribute_sets]
    union = set().union(*sets) if sets else set()
    if not union:
        return 1
    shared = set.intersection(*sets)
    frac = len(shared) / len(union)
    if frac >= 0.8:
        return 1
    return 2 if frac >= 0.4 else 3


FORMAT_LEVELS = {"tabular": 1, "mixed": 2, "free-text": 3}


def score_format_complexity(presentation: str) -> int:
    try:
        return FORMAT_LEVELS[presentation]
    except KeyError:
        raise ValueError(f"unknown presentation {presentation!r}") from None


class RuleBasedPerception:
    """Deterministic leaf scoring from the structured sales turn."""

    def __init__(self, schema):
        self.schema = schema

    def perceive(self, sales, state: GlobalState) -> PerceivedLeaves:
        shown = [set(it.attributes) for it in sales.items]
        common = [n for n in self.schema.names if all(n in s for s in shown)]
        cols = [self.schema.index(n) for n in common]
        matrix = np.array([normalize(it, self.schema)[cols] for it in sales.items], dtype=np.float64)
        matrix = matrix.reshape(len(sales.items), len(cols))
        return PerceivedLeaves(
            assortment=score_assortment(len(sales.items)),
            dominance=score_dominance(matrix),
            alignability=score_alignability(shown),
            attribute_count=score_attribute_count(sales.shown_attribute_count),
            format_complexity=score_format_complexity(sales.presentation),
        )


def perceive_overload(sales, state: GlobalState, provider: PerceptionProvider) -> LeafScores:
    """Ask the provider for the five perceived leaves; fix the other two."""
    try:
        p = provider.perceive(sales, state)
    except PerceptionError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise PerceptionError(f"perception provider failed: {exc}") from exc
    return LeafScores(
        assortment=p.assortment,
        dominance=p.dominance,
        alignability=p.alignability,
        attribute_count=p.attribute_count,
        format_complexity=p.format_complexity,
        time_pressure=state.scenario.time_pressure,
        uncertainty=state.persona.uncertainty,
    )


def hesitate(
    sales,
    state: GlobalState,
    provider: PerceptionProvider,
    rng: np.random.Generator,
    table: CalibrationTable = DEFAULT_CALIBRATION,
    params: HesitationParams = HesitationParams(),
) -> HesitationOutcome:
    leaves = perceive_overload(sales, state, provider)
    v = compose_factors(leaves)
    effects = factor_effects(v, table)
    d_raw = math.fsum(effects)
    d = clamp_effect(d_raw, params.p_base)
    p = accept_probability(d, params.p_base)
    decision, eps = decide_commit(p, rng)
    return HesitationOutcome(leaves, v, effects, d_raw, d, p, eps, decision)
