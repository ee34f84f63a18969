"""Turn loop between a scripted sales agent and the simulated user.

Each turn the sales agent presents an assortment, the user runs selection and
(if an item qualifies) hesitation, picks a communicative intent, and renders a
reply. The loop stops on a purchase or at the turn limit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Protocol, Sequence

import numpy as np

from . import kernels
from .catalog import Catalog, Item, WeightVector, normalize
from .hesitation import (
    DEFAULT_CALIBRATION,
    CalibrationTable,
    HesitationOutcome,
    HesitationParams,
    PerceptionError,
    PerceptionProvider,
    RuleBasedPerception,
    hesitate,
)
from .selection import SelectionOutcome, SelectionParams, flat_rating_select, select
from .state import (
    ConstraintSet,
    DialogueHistory,
    GlobalState,
    UserTurn,
    append_turn,
    history_to_jsonl,
    init_history,
)

PRESENTATIONS = ("tabular", "mixed", "free-text")
MODES = ("basic", "persuasive-lite")
INTENTS = ("accept_offer", "reject_with_reason", "defer_with_rationale", "ask_clarification")


class ConfigurationError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """An external provider answered outside the allowed vocabulary."""


# -- sales side --------------------------------------------------------------


@dataclass(frozen=True)
class SalesAgentConfig:
    assortment_size: int = 3
    attributes_shown: int = 8
    presentation: str = "tabular"
    mode: str = "basic"
    relevance: bool = False

    def __post_init__(self):
        if self.assortment_size < 1:
            raise ConfigurationError("assortment_size must be >= 1")
        if self.attributes_shown < 1:
            raise ConfigurationError("attributes_shown must be >= 1")
        if self.presentation not in PRESENTATIONS:
            raise ConfigurationError(f"presentation must be one of {PRESENTATIONS}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")

    def check_catalog(self, catalog: Catalog) -> None:
        if self.attributes_shown > len(catalog.schema):
            raise ConfigurationError(
                f"attributes_shown={self.attributes_shown} exceeds schema size {len(catalog.schema)}"
            )
        if self.assortment_size > len(catalog):
            raise ConfigurationError(
                f"assortment_size={self.assortment_size} exceeds catalog size {len(catalog)}"
            )


@dataclass(frozen=True)
class SalesTurn:
    items: tuple[Item, ...]
    shown_attribute_count: int
    presentation: str
    reoffered: tuple[str, ...] = ()

    def __post_init__(self):
        if any(len(it.attributes) != self.shown_attribute_count for it in self.items):
            raise ValueError("every item must show exactly shown_attribute_count attributes")
        if self.presentation not in PRESENTATIONS:
            raise ValueError(f"presentation must be one of {PRESENTATIONS}")

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(it.id for it in self.items)

    @cached_property
    def rendered_text(self) -> str:
        # rendered on demand; experiments never look at it
        names = list(self.items[0].attributes) if self.items else []
        return _render(self.items, names, self.presentation)


@dataclass(frozen=True)
class ObservableProfile:
    """What the sales agent is told about the user up front."""

    openness: int
    pickiness: int


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def _render(items: Sequence[Item], names: Sequence[str], presentation: str) -> str:
    if presentation == "tabular":
        header = "| id | title | price | " + " | ".join(names) + " |"
        rows = [
            f"| {it.id} | {it.title} | {it.price:.2f} | "
            + " | ".join(f"{it.attributes[n]:g}" for n in names)
            + " |"
            for it in items
        ]
        return "Here are some options:\n" + "\n".join([header] + rows)
    if presentation == "mixed":
        lead = ", ".join(f"{it.title} ({it.id}) at ${it.price:.2f}" for it in items)
        rows = [f"{it.id}: " + "; ".join(f"{n}={it.attributes[n]:g}" for n in names) for it in items]
        return f"You might like {lead}. Specs:\n" + "\n".join(rows)
    parts = []
    for it in items:
        specs = ", ".join(
            f"{n.replace('_', ' ')} rated {it.attributes[n]:g}" if k % 2 else f"{it.attributes[n]:g} on {n.replace('_', ' ')}"
            for k, n in enumerate(names)
        )
        parts.append(f"The {it.title} ({it.id}) goes for about {it.price:.0f} dollars and offers {specs}.")
    return " ".join(parts)


def _infer_category(history: DialogueHistory, catalog: Catalog) -> Optional[str]:
    words = _tokens(history.initial_message)
    for cat in catalog.categories:
        if _tokens(cat) <= words:
            return cat
    return None


def _rejected_ids(history: DialogueHistory) -> set[str]:
    return {i for t in history.turns if t.user.outcome == "reject" for i in t.sales.item_ids}


def _rows_of(catalog: Catalog, ids) -> np.ndarray:
    mask = np.zeros(len(catalog), dtype=bool)
    mask[[catalog.row(i) for i in ids]] = True
    return mask


def _tier_neighbours(anchor: int, others: np.ndarray, catalog: Catalog, k: int, n: int) -> list[int]:
    """The ``n`` rows whose mean over the first ``k`` attributes is closest to the anchor's."""
    if n <= 0 or others.size == 0:
        return []
    level = catalog.prefix_mean(k)
    dist = kernels.sq_distances(level[others].reshape(-1, 1), level[anchor : anchor + 1])
    order = np.lexsort((catalog.id_rank[others], dist))
    return [int(r) for r in others[order[:n]]]


def scripted_sales_agent(
    config: SalesAgentConfig,
    profile: ObservableProfile,
    history: DialogueHistory,
    catalog: Catalog,
    rng: np.random.Generator,
) -> SalesTurn:
    """Present the next assortment.

    Without relevance ranking the agent picks a random fresh anchor and fills
    the assortment with the fresh items closest to it in average rating over
    the attributes it is about to present, so one turn offers comparable
    options. With ``relevance`` on, items are ranked by token overlap between
    the opening request and title/category, ties by id. Items from rejected
    turns are never shown again except in ``persuasive-lite`` mode, which
    re-offers a deferred pick together with its closest peers.
    """
    config.check_catalog(catalog)
    n, k = config.assortment_size, config.attributes_shown
    pool = catalog.category_rows(_infer_category(history, catalog))
    if len(pool) < n:
        raise ConfigurationError(f"only {len(pool)} items available for assortment_size={n}")
    persuasive = config.mode == "persuasive-lite"
    shown_ids = history.shown_item_ids()
    shown = _rows_of(catalog, shown_ids)[pool]
    rejected = np.zeros_like(shown) if persuasive else _rows_of(catalog, _rejected_ids(history))[pool]
    fresh = pool[~shown]
    seen_ok = pool[shown & ~rejected]

    last = history.last
    if persuasive and last is not None and last.user.outcome == "defer":
        anchor = catalog.row(last.user.decision.selection.best_item)
        others = np.concatenate([fresh, seen_ok])
        chosen = [anchor] + _tier_neighbours(anchor, others[others != anchor], catalog, k, n - 1)
    elif config.relevance:
        want = _tokens(history.initial_message)
        items = catalog.items

        def key(r):
            it = items[r]
            return (-len(want & _tokens(it.title + " " + it.category)), it.id)

        chosen = sorted(fresh.tolist(), key=key)[:n]
        if len(chosen) < n:
            chosen += sorted(seen_ok.tolist(), key=key)[: n - len(chosen)]
    else:
        candidates = fresh if fresh.size else seen_ok
        if candidates.size == 0:
            raise ConfigurationError("sales agent ran out of items to recommend")
        anchor = int(candidates[int(rng.integers(candidates.size))])
        others = fresh[fresh != anchor]
        if others.size < n - 1:
            others = np.concatenate([others, seen_ok[seen_ok != anchor]])
        chosen = [anchor] + _tier_neighbours(anchor, others, catalog, k, n - 1)
    if len(chosen) < n:
        raise ConfigurationError("sales agent ran out of items to recommend")

    names = catalog.schema.names[:k]
    items = tuple(catalog.items[r].restricted(names) for r in chosen)
    reoffered = tuple(it.id for it in items if it.id in shown_ids)
    return SalesTurn(items, k, config.presentation, reoffered)


# -- user side ---------------------------------------------------------------


@dataclass(frozen=True)
class UserModel:
    """How the user fills in attributes the sales agent did not show.

    An unshown attribute is perceived at the posterior-mean estimate of the
    item's quality given the ``k`` shown attributes: the shown mean shrunk
    toward ``prior`` with a pseudo-count of ``prior_strength`` attributes.
    """

    prior: float = 0.5
    prior_strength: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.prior <= 1.0:
            raise ValueError("prior must lie in [0, 1]")
        if self.prior_strength < 0:
            raise ValueError("prior_strength must be >= 0")

    def perceive(self, item: Item, catalog_schema) -> np.ndarray:
        a = normalize(item, catalog_schema)
        known = ~np.isnan(a)
        k = int(known.sum())
        if k == len(a):
            return a
        if k == 0:
            fill = self.prior
        else:
            fill = (a[known].sum() + self.prior_strength * self.prior) / (k + self.prior_strength)
        a[~known] = fill
        return a


@dataclass(frozen=True)
class EngineParams:
    selection: SelectionParams = SelectionParams()
    hesitation: HesitationParams = HesitationParams()
    calibration: CalibrationTable = DEFAULT_CALIBRATION
    user: UserModel = UserModel()
    variant: str = "structured_selection"  # or "flat_rating"

    def __post_init__(self):
        if self.variant not in ("structured_selection", "flat_rating"):
            raise ValueError(f"unknown selection variant {self.variant!r}")


@dataclass(frozen=True)
class Decision:
    outcome: str
    selection: SelectionOutcome
    hesitation: Optional[HesitationOutcome] = None

    def __post_init__(self):
        if (self.hesitation is not None) != (self.selection.status == "proceed"):
            raise ValueError("hesitation present iff selection proceeded")


@dataclass(frozen=True)
class UserAction:
    intent: str

    def __post_init__(self):
        if self.intent not in INTENTS:
            raise ProtocolError(f"unknown intent {self.intent!r}")


class ResponseProvider(Protocol):
    def select_action(self, state: GlobalState, history: DialogueHistory, decision: Decision) -> UserAction: ...

    def synthesize(
        self, state: GlobalState, history: DialogueHistory, sales: SalesTurn, decision: Decision, action: UserAction
    ) -> str: ...


def user_decide(
    sales: SalesTurn,
    state: GlobalState,
    weights: WeightVector,
    constraints: ConstraintSet,
    params: EngineParams,
    perception: PerceptionProvider,
    rng: np.random.Generator,
    schema,
) -> Decision:
    if params.variant == "flat_rating":
        # a flat rating only sees what is on the table
        shown = {}
        for it in sales.items:
            a = normalize(it, schema)
            shown[it.id] = a[~np.isnan(a)]
        sel = flat_rating_select(sales.items, state.persona.pickiness, params.selection, perceived=shown)
    else:
        perceived = {it.id: params.user.perceive(it, schema) for it in sales.items}
        sel = select(
            sales.items, constraints, weights, state.persona.pickiness, params.selection, perceived=perceived
        )
    if sel.status == "reject":
        return Decision("reject", sel)
    hes = hesitate(sales, state, perception, rng, params.calibration, params.hesitation)
    return Decision("accept" if hes.decision == "purchase" else "defer", sel, hes)


# -- response module ---------------------------------------------------------

RATIONALES = {
    "a": "there are too many options to choose from",
    "s": "they all involve trade-offs and none is clearly better",
    "t": "it is hard to compare all of this right now",
    "u": "I'm not sure what I really want yet",
}


def intent_for(decision: Decision, openness: int) -> str:
    """Template intent table, a pure function of the decision and openness."""
    if decision.outcome == "accept":
        return "accept_offer"
    if decision.outcome == "defer":
        return "defer_with_rationale"
    if decision.selection.reject_reason == "below_threshold" and openness == 3:
        return "ask_clarification"
    return "reject_with_reason"


def deferral_rationales(hes: HesitationOutcome) -> list[str]:
    """Rationale phrases for every overload factor perceived at a high level."""
    out = []
    if hes.leaves.assortment == 3:
        out.append(RATIONALES["a"])
    if hes.v.s >= 2.0:
        out.append(RATIONALES["s"])
    if hes.v.t >= 2.0:
        out.append(RATIONALES["t"])
    if hes.leaves.uncertainty >= 2:
        out.append(RATIONALES["u"])
    if not out:
        out.append("I'd like to sleep on it")
    return out


class TemplateResponder:
    """Default response provider: fixed templates, no text generation."""

    def select_action(self, state, history, decision) -> UserAction:
        return UserAction(intent_for(decision, state.persona.openness))

    def synthesize(self, state, history, sales, decision, action) -> str:
        titles = {it.id: f"{it.title} ({it.id})" for it in sales.items}
        sel = decision.selection
        if action.intent == "accept_offer":
            return f"Great, I'll take the {titles[sel.best_item]}."
        if action.intent == "defer_with_rationale":
            reasons = deferral_rationales(decision.hesitation)
            return f"The {titles[sel.best_item]} looks good, but I'll hold off for now: " + "; ".join(reasons) + "."
        if action.intent == "ask_clarification":
            names = sorted(sales.items[0].attributes) if sales.items else []
            topic = names[0].replace("_", " ") if names else "these options"
            return f"None of these quite convince me. Could you tell me more about {topic}, or show something else?"
        if sel.reject_reason == "no_candidates":
            violated = sel.violated_constraints
            if any(c.startswith("price") for c in violated):
                return f"These are all over my budget of ${state.scenario.budget:.0f}."
            if violated:
                attr = violated[0].split(" ")[0].replace("_", " ")
                return f"None of these meet what I need on {attr}."
            return "None of these work for me."
        return f"The best of these, the {titles[sel.best_item]}, still isn't good enough for me."


def select_action(state, history, decision, provider: ResponseProvider) -> UserAction:
    action = provider.select_action(state, history, decision)
    if not isinstance(action, UserAction):
        action = UserAction(str(action))
    return action


def synthesize_response(state, history, sales, decision, action, provider: ResponseProvider) -> str:
    return provider.synthesize(state, history, sales, decision, action)


# -- session -----------------------------------------------------------------


@dataclass(frozen=True)
class Providers:
    perception: PerceptionProvider
    response: ResponseProvider

    @classmethod
    def rule_based(cls, catalog: Catalog) -> "Providers":
        return cls(RuleBasedPerception(catalog.schema), TemplateResponder())


@dataclass(frozen=True)
class SessionResult:
    history: DialogueHistory
    status: str = "ok"  # "ok" | "aborted"
    diagnostic: str = ""

    @property
    def purchased(self) -> bool:
        return self.history.terminal_reason == "purchase"

    @property
    def terminal_turn(self) -> int:
        return len(self.history.turns)

    @property
    def decisions(self) -> tuple[Decision, ...]:
        return tuple(t.user.decision for t in self.history.turns)

    def transcript(self, detail: bool = False) -> str:
        return history_to_jsonl(self.history, detail=detail)


def run_session(
    state: GlobalState,
    weights: WeightVector,
    constraints: ConstraintSet,
    catalog: Catalog,
    sales_config: SalesAgentConfig = SalesAgentConfig(),
    params: EngineParams = EngineParams(),
    providers: Optional[Providers] = None,
    seed: int = 0,
    turn_limit: int = 20,
) -> SessionResult:
    """Simulate one session; a pure function of its arguments for rule-based providers."""
    if turn_limit < 1:
        raise ValueError("turn limit must be >= 1")
    providers = providers or Providers.rule_based(catalog)
    sales_seed, user_seed = np.random.SeedSequence(seed).spawn(2)
    sales_rng, user_rng = np.random.default_rng(sales_seed), np.random.default_rng(user_seed)
    observable = ObservableProfile(state.persona.openness, state.persona.pickiness)
    history = init_history(state, turn_limit)
    while not history.terminal:
        sales = scripted_sales_agent(sales_config, observable, history, catalog, sales_rng)
        try:
            decision = user_decide(
                sales, state, weights, constraints, params, providers.perception, user_rng, catalog.schema
            )
            action = select_action(state, history, decision, providers.response)
            text = synthesize_response(state, history, sales, decision, action, providers.response)
        except (PerceptionError, ProtocolError) as exc:
            return SessionResult(history, status="aborted", diagnostic=f"turn {len(history.turns) + 1}: {exc}")
        history = append_turn(history, sales, UserTurn(action.intent, text, decision.outcome, decision))
    return SessionResult(history)
