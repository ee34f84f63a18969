"""Session ground truth: persona, scenario, global state and dialogue history."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

LEVELS = (1, 2, 3)
OUTCOMES = ("accept", "reject", "defer")
COMPARATORS = ("<=", ">=", "==")
DEFAULT_TURN_LIMIT = 20


class ContractViolation(RuntimeError):
    """Raised when an operation is applied outside its precondition."""


def check_level(name: str, value: int) -> int:
    if value not in LEVELS:
        raise ValueError(f"{name} must be one of {LEVELS}, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class Persona:
    openness: int
    pickiness: int
    uncertainty: int

    def __post_init__(self):
        check_level("openness", self.openness)
        check_level("pickiness", self.pickiness)
        check_level("uncertainty", self.uncertainty)


@dataclass(frozen=True)
class Constraint:
    """A hard constraint ``attribute <comparator> bound``.

    ``attribute`` is a schema attribute name or the built-in ``"price"``.
    """

    attribute: str
    comparator: str
    bound: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def __str__(self):
        return f"{self.attribute} {self.comparator} {self.bound:g}"


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...] = ()

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def with_constraint(self, constraint: Constraint) -> "ConstraintSet":
        return ConstraintSet(self.constraints + (constraint,))

    def attributes(self) -> tuple[str, ...]:
        return tuple(c.attribute for c in self.constraints)


@dataclass(frozen=True)
class Scenario:
    needs_text: str
    constraints: ConstraintSet
    budget: float
    time_pressure: int
    category: str = ""

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError(f"budget must be > 0, got {self.budget!r}")
        check_level("time_pressure", self.time_pressure)

    def validate_against(self, attribute_names: Iterable[str]) -> None:
        known = set(attribute_names) | {"price"}
        for c in self.constraints:
            if c.attribute not in known:
                raise ValueError(f"constraint names unknown attribute {c.attribute!r}")


@dataclass(frozen=True)
class GlobalState:
    persona: Persona
    scenario: Scenario

    def fingerprint(self) -> str:
        """Stable digest used to check the state is untouched across a session."""
        payload = json.dumps(
            {
                "persona": [self.persona.openness, self.persona.pickiness, self.persona.uncertainty],
                "needs": self.scenario.needs_text,
                "constraints": [[c.attribute, c.comparator, c.bound] for c in self.scenario.constraints],
                "budget": self.scenario.budget,
                "time_pressure": self.scenario.time_pressure,
                "category": self.scenario.category,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class UserTurn:
    action: str
    text: str
    outcome: str
    decision: Any = None

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}, got {self.outcome!r}")


@dataclass(frozen=True)
class Turn:
    index: int
    sales: Any
    user: UserTurn


@dataclass(frozen=True)
class DialogueHistory:
    initial_message: str
    turns: tuple[Turn, ...] = ()
    turn_limit: int = DEFAULT_TURN_LIMIT
    terminal: bool = False
    terminal_reason: Optional[str] = None

    def __post_init__(self):
        if self.turn_limit < 1:
            raise ValueError("turn limit must be >= 1")

    def __len__(self):
        return len(self.turns)

    @property
    def last(self) -> Optional[Turn]:
        return self.turns[-1] if self.turns else None

    def shown_item_ids(self) -> set[str]:
        return {i for t in self.turns for i in t.sales.item_ids}


def render_initial_message(state: GlobalState) -> str:
    return f"Hi, I'm looking for {state.scenario.needs_text}."


def init_history(state: GlobalState, turn_limit: int = DEFAULT_TURN_LIMIT) -> DialogueHistory:
    return DialogueHistory(initial_message=render_initial_message(state), turn_limit=turn_limit)


def append_turn(history: DialogueHistory, sales, user: UserTurn) -> DialogueHistory:
    """Return a new history with ``(sales, user)`` appended as the next turn.

    Only the (sales, user) pairs count against the turn limit; the opening
    user message does not.
    """
    if history.terminal:
        raise ContractViolation("cannot append to a terminal history")
    if len(history.turns) >= history.turn_limit:
        raise ContractViolation("turn limit already reached")
    index = len(history.turns) + 1
    turns = history.turns + (Turn(index=index, sales=sales, user=user),)
    if user.outcome == "accept":
        return replace(history, turns=turns, terminal=True, terminal_reason="purchase")
    if index == history.turn_limit:
        return replace(history, turns=turns, terminal=True, terminal_reason="turn_limit")
    return replace(history, turns=turns)


# -- transcripts -------------------------------------------------------------

TRANSCRIPT_FIELDS = (
    "turn",
    "sales_items",
    "sales_text",
    "user_action",
    "user_text",
    "outcome",
    "p_accept",
    "d_total",
)


def _round(x):
    return None if x is None else round(float(x), 12)


def turn_record(turn: Turn, detail: bool = False) -> dict:
    """Flatten one turn into the transcript record.

    With ``detail=True`` the selection trace and hesitation internals are
    appended under extra keys (after the fixed fields).
    """
    decision = turn.user.decision
    hes = getattr(decision, "hesitation", None)
    record = {
        "turn": turn.index,
        "sales_items": list(turn.sales.item_ids),
        "sales_text": turn.sales.rendered_text,
        "user_action": turn.user.action,
        "user_text": turn.user.text,
        "outcome": turn.user.outcome,
        "p_accept": _round(hes.p_accept) if hes is not None else None,
        "d_total": _round(hes.d_total) if hes is not None else None,
    }
    if detail and decision is not None:
        sel = decision.selection
        record["selection"] = sel.to_record()
        if hes is not None:
            record["hesitation"] = hes.to_record()
    return record


def history_to_jsonl(history: DialogueHistory, detail: bool = False) -> str:
    lines = [json.dumps(turn_record(t, detail=detail), sort_keys=False) for t in history.turns]
    return "".join(line + "\n" for line in lines)


def read_transcript(text: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: not a transcript record ({exc.msg})") from exc
        missing = [f for f in TRANSCRIPT_FIELDS if f not in rec]
        if missing:
            raise ValueError(f"line {lineno}: missing fields {missing}")
        records.append(rec)
    return records
