"""Two-stage item selection: elimination by aspects, then weighted-additive utility.

Stage 1 removes items that break a hard constraint (only when more than
``theta`` items are on the table). Stage 2 scores the survivors with a
weighted sum of normalized attributes and keeps the best one if it clears the
pickiness threshold ``gamma + alpha * pickiness``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .catalog import AttributeSchema, Item, WeightVector, normalize
from .state import Constraint, ConstraintSet, check_level

NUMERIC_EQ_TOL = 1e-9


@dataclass(frozen=True)
class SelectionParams:
    theta: int = 3
    gamma: float = 0.6
    alpha: float = 0.1

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError("theta must be >= 1")
        if self.gamma + self.alpha * 3 > 1.0 + 1e-12:
            raise ValueError("gamma + 3 * alpha must not exceed 1")


@dataclass(frozen=True)
class Elimination:
    item_id: str
    constraint: str
    kind: str  # "violated" | "missing" | "soft"


@dataclass(frozen=True)
class CandidateTrace:
    retained: tuple[str, ...] = ()
    eliminated: tuple[Elimination, ...] = ()
    eba_applied: bool = False
    utilities: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class SelectionOutcome:
    status: str  # "proceed" | "reject"
    best_item: Optional[str] = None
    best_utility: Optional[float] = None
    reject_reason: Optional[str] = None  # "no_candidates" | "below_threshold"
    threshold: float = 0.0
    trace: CandidateTrace = field(default_factory=CandidateTrace)

    def __post_init__(self):
        if self.status == "proceed" and (self.best_item is None or self.best_utility < self.threshold):
            raise ValueError("proceed requires a best item clearing the threshold")
        if self.status == "reject" and self.reject_reason is None:
            raise ValueError("reject requires a reason")

    @property
    def violated_constraints(self) -> tuple[str, ...]:
        seen = []
        for e in self.trace.eliminated:
            if e.kind != "soft" and e.constraint not in seen:
                seen.append(e.constraint)
        return tuple(seen)

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "best_item": self.best_item,
            "best_utility": None if self.best_utility is None else round(self.best_utility, 12),
            "reject_reason": self.reject_reason,
            "threshold": round(self.threshold, 12),
            "eba_applied": self.trace.eba_applied,
            "retained": list(self.trace.retained),
            "eliminated": [[e.item_id, e.constraint, e.kind] for e in self.trace.eliminated],
        }


def _attribute_value(item: Item, name: str):
    if name == "price":
        return item.price
    return item.attributes.get(name)


def holds(constraint: Constraint, item: Item) -> Optional[bool]:
    """Evaluate one constraint; ``None`` when the item lacks the attribute."""
    value = _attribute_value(item, constraint.attribute)
    if value is None:
        return None
    if constraint.comparator == "<=":
        return value <= constraint.bound
    if constraint.comparator == ">=":
        return value >= constraint.bound
    if isinstance(value, bool) or isinstance(constraint.bound, bool):
        return bool(value) == bool(constraint.bound)
    return abs(float(value) - float(constraint.bound)) <= NUMERIC_EQ_TOL


@dataclass(frozen=True)
class EbaResult:
    candidates: tuple[Item, ...]
    eliminated: tuple[Elimination, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(it.id for it in self.candidates)


def eba_filter(items: Sequence[Item], constraints: ConstraintSet) -> EbaResult:
    """Keep the items that satisfy every constraint.

    The first failing constraint is recorded per eliminated item. A missing
    attribute counts as a violation (kind ``"missing"``).
    """
    kept, gone = [], []
    for it in items:
        for c in constraints:
            ok = holds(c, it)
            if ok is None:
                gone.append(Elimination(it.id, str(c), "missing"))
                break
            if not ok:
                gone.append(Elimination(it.id, str(c), "violated"))
                break
        else:
            kept.append(it)
    return EbaResult(tuple(kept), tuple(gone))


def wadd_utility(attributes, weights) -> float:
    """Weighted sum of a normalized attribute vector."""
    a = np.asarray(attributes, dtype=np.float64)
    w = weights.as_array() if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    if a.shape != w.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {w.shape}")
    return float(kernels.wadd_scores(a.reshape(1, -1), w)[0])


def acceptance_threshold(pickiness: int, params: SelectionParams = SelectionParams()) -> float:
    check_level("pickiness", pickiness)
    return params.gamma + params.alpha * pickiness


def _reduce(ids: list[str], vectors: Mapping[str, np.ndarray], priority: Sequence[int], names, theta: int):
    """Tighten an oversized candidate set attribute by attribute.

    For each attribute in descending weight order, keep only candidates at or
    above the set's median on it, until at most ``theta`` remain. If the
    attributes run out, keep the ``theta`` best on the heaviest attribute.
    """
    dropped: list[Elimination] = []
    for j in priority:
        if len(ids) <= theta:
            break
        values = np.array([vectors[i][j] for i in ids])
        med = float(np.median(values))
        keep = [i for i, v in zip(ids, values) if v >= med]
        dropped += [Elimination(i, f"{names[j]} >= median", "soft") for i in ids if i not in keep]
        ids = keep
    if len(ids) > theta:
        top = priority[0]
        ranked = sorted(ids, key=lambda i: (-vectors[i][top], i))
        dropped += [Elimination(i, f"top {theta} on {names[top]}", "soft") for i in ranked[theta:]]
        ids = [i for i in ids if i in ranked[:theta]]
    return ids, dropped


def select(
    items: Sequence[Item],
    constraints: ConstraintSet,
    weights: WeightVector,
    pickiness: int,
    params: SelectionParams = SelectionParams(),
    *,
    schema: Optional[AttributeSchema] = None,
    perceived: Optional[Mapping[str, np.ndarray]] = None,
) -> SelectionOutcome:
    """Run the full selection pipeline over one recommendation turn.

    ``perceived`` maps item id to the attribute vector the user perceives
    (schema order, values in [0, 1]); when omitted it is computed with
    :func:`normalize`, which requires the items to carry every attribute.
    """
    tau = acceptance_threshold(pickiness, params)
    if perceived is None:
        if schema is None:
            raise ValueError("schema or perceived vectors required")
        perceived = {it.id: normalize(it, schema) for it in items}
    if len(items) > params.theta:
        eba = eba_filter(items, constraints)
        candidates, eliminated, applied = list(eba.ids), list(eba.eliminated), True
    else:
        candidates, eliminated, applied = [it.id for it in items], [], False
    if len(candidates) > params.theta:
        priority = [weights.names.index(n) for n in weights.priority()]
        candidates, soft = _reduce(candidates, perceived, priority, weights.names, params.theta)
        eliminated += soft
    if not candidates:
        trace = CandidateTrace((), tuple(eliminated), applied)
        return SelectionOutcome("reject", reject_reason="no_candidates", threshold=tau, trace=trace)
    matrix = np.array([perceived[i] for i in candidates], dtype=np.float64)
    if np.isnan(matrix).any():
        raise ValueError("perceived attribute vectors must not contain NaN")
    scores = kernels.wadd_scores(matrix, weights.as_array())
    best = min(range(len(candidates)), key=lambda r: (-scores[r], candidates[r]))
    best_id, best_u = candidates[best], float(scores[best])
    trace = CandidateTrace(
        tuple(candidates), tuple(eliminated), applied, tuple((c, float(s)) for c, s in zip(candidates, scores))
    )
    if best_u < tau:
        return SelectionOutcome("reject", best_id, best_u, "below_threshold", tau, trace)
    return SelectionOutcome("proceed", best_id, best_u, None, tau, trace)


def flat_rating_select(
    items: Sequence[Item],
    pickiness: int,
    params: SelectionParams = SelectionParams(),
    *,
    perceived: Mapping[str, np.ndarray],
) -> SelectionOutcome:
    """Ablation variant: unweighted attribute mean, no filtering, same threshold."""
    tau = acceptance_threshold(pickiness, params)
    if not items:
        return SelectionOutcome("reject", reject_reason="no_candidates", threshold=tau)
    ids = [it.id for it in items]
    scores = [math.fsum(perceived[i]) / len(perceived[i]) for i in ids]
    best = min(range(len(ids)), key=lambda r: (-scores[r], ids[r]))
    trace = CandidateTrace(tuple(ids), (), False, tuple(zip(ids, scores)))
    if scores[best] < tau:
        return SelectionOutcome("reject", ids[best], scores[best], "below_threshold", tau, trace)
    return SelectionOutcome("proceed", ids[best], scores[best], None, tau, trace)
