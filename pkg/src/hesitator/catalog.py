"""Item catalogs, attribute schemas, and user-profile construction.

Catalog files are UTF-8 JSON lines. The first line is a header
``{"format_version": 1}``; each following line is one item::

    {"id": "SKU00001", "title": "...", "category": "headphones",
     "price": 129.99, "attributes": {"battery_life": 31.5, ...}}

Schema files are a single JSON document::

    {"format_version": 1,
     "attributes": [{"name": "battery_life", "kind": "numeric",
                     "observed_min": 0, "observed_max": 60}, ...]}
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .state import Constraint, ConstraintSet, GlobalState, Persona, Scenario, check_level

FORMAT_VERSION = 1
KINDS = ("numeric", "binary")


class CatalogError(ValueError):
    """Base class for catalog ingestion problems."""


class CatalogParseError(CatalogError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class CatalogValidationError(CatalogError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str = "numeric"
    observed_min: float = 0.0
    observed_max: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "numeric" and self.observed_min > self.observed_max:
            raise ValueError(f"attribute {self.name!r}: observed_min > observed_max")


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[AttributeSpec, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        if "price" in names:
            raise ValueError("'price' is an item field, not a schema attribute")

    def __len__(self):
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def spec(self, name: str) -> AttributeSpec:
        return self.attributes[self.index(name)]

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "attributes": [
                {"name": a.name, "kind": a.kind, "observed_min": a.observed_min, "observed_max": a.observed_max}
                for a in self.attributes
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AttributeSchema":
        if not text.strip():
            raise CatalogError("schema file is empty")
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise CatalogError(f"unsupported schema format_version {version!r}")
        return cls(tuple(AttributeSpec(**a) for a in doc["attributes"]))


@dataclass(frozen=True, eq=False)
class Item:
    id: str
    title: str
    category: str
    price: float
    attributes: Mapping[str, float] = field(default_factory=dict)

    def restricted(self, names: Iterable[str]) -> "Item":
        """Copy of this item carrying only the named attributes (those it has)."""
        keep = {n: self.attributes[n] for n in names if n in self.attributes}
        return Item(self.id, self.title, self.category, self.price, keep)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "category": self.category,
            "price": self.price,
            "attributes": dict(self.attributes),
        }


def normalize(item: Item, schema: AttributeSchema) -> np.ndarray:
    """Min-max scale an item's attributes into [0, 1] in schema order.

    Attributes the item does not carry come back as NaN. A numeric attribute
    whose observed range is degenerate maps to 0.5.
    """
    out = np.full(len(schema), np.nan)
    for j, spec in enumerate(schema.attributes):
        if spec.name not in item.attributes:
            continue
        raw = item.attributes[spec.name]
        if spec.kind == "binary":
            out[j] = 1.0 if raw else 0.0
        elif spec.observed_max == spec.observed_min:
            out[j] = 0.5
        else:
            x = (float(raw) - spec.observed_min) / (spec.observed_max - spec.observed_min)
            out[j] = min(1.0, max(0.0, x))
    return out


class Catalog:
    """Immutable, validated collection of items sharing one schema."""

    def __init__(self, schema: AttributeSchema, items: Sequence[Item], errors: Sequence[str] = ()):
        self.schema = schema
        self.items = tuple(items)
        self.errors = tuple(errors)
        self._by_id = {it.id: it for it in self.items}
        if len(self._by_id) != len(self.items):
            raise CatalogValidationError(["duplicate item ids"])
        self._row = {it.id: r for r, it in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __getitem__(self, item_id: str) -> Item:
        return self._by_id[item_id]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_id

    @cached_property
    def matrix(self) -> np.ndarray:
        """Normalized attribute matrix (items x schema), NaN where missing."""
        m = np.array([normalize(it, self.schema) for it in self.items], dtype=np.float64)
        m.setflags(write=False)
        return m.reshape(len(self.items), len(self.schema))

    def row(self, item_id: str) -> int:
        return self._row[item_id]

    @cached_property
    def categories(self) -> tuple[str, ...]:
        return tuple(sorted({it.category for it in self.items}))

    def in_category(self, category: Optional[str]) -> tuple[Item, ...]:
        if category is None:
            return self.items
        return tuple(it for it in self.items if it.category == category)

    def category_rows(self, category: Optional[str]) -> np.ndarray:
        """Row indices of the items in ``category`` (all rows for ``None``)."""
        cache = self.__dict__.setdefault("_category_rows", {})
        if category not in cache:
            rows = [r for r, it in enumerate(self.items) if category is None or it.category == category]
            cache[category] = np.asarray(rows, dtype=np.intp)
        return cache[category]

    @cached_property
    def id_rank(self) -> np.ndarray:
        """Position of each row's id in sorted id order, for deterministic tie-breaks."""
        order = sorted(range(len(self.items)), key=lambda r: self.items[r].id)
        rank = np.empty(len(self.items), dtype=np.intp)
        rank[order] = np.arange(len(self.items))
        return rank

    def prefix_mean(self, k: int) -> np.ndarray:
        """Per-item mean of the first ``k`` normalized attributes (missing read as 0.5)."""
        cache = self.__dict__.setdefault("_prefix_mean", {})
        if k not in cache:
            cache[k] = np.nan_to_num(self.matrix[:, :k], nan=0.5).mean(axis=1)
        return cache[k]

    def dumps(self) -> bytes:
        lines = [json.dumps({"format_version": FORMAT_VERSION})]
        lines += [json.dumps(it.to_record()) for it in self.items]
        return ("\n".join(lines) + "\n").encode("utf-8")


def _validate_record(rec, schema: AttributeSchema, lineno: int) -> list[str]:
    problems = []
    for key in ("id", "title", "category", "price"):
        if key not in rec:
            problems.append(f"line {lineno}: missing field {key!r}")
    attrs = rec.get("attributes", {})
    if not isinstance(attrs, dict):
        return problems + [f"line {lineno}: attributes must be an object"]
    price = rec.get("price")
    if price is not None and (not isinstance(price, (int, float)) or price < 0):
        problems.append(f"line {lineno}: price must be a non-negative number")
    known = set(schema.names)
    for name, value in attrs.items():
        if name not in known:
            problems.append(f"line {lineno}: unknown attribute {name!r}")
            continue
        spec = schema.spec(name)
        if spec.kind == "binary":
            if value not in (0, 1, True, False):
                problems.append(f"line {lineno}: binary attribute {name!r} must be 0/1")
        elif not isinstance(value, (int, float)) or isinstance(value, bool):
            problems.append(f"line {lineno}: attribute {name!r} must be numeric")
        elif not (spec.observed_min <= value <= spec.observed_max):
            problems.append(f"line {lineno}: attribute {name!r}={value} outside observed range")
    return problems


def load_catalog(source: Union[bytes, str, IO], schema: AttributeSchema, strict: bool = True) -> Catalog:
    """Parse and validate a JSON-lines catalog.

    Malformed lines raise :class:`CatalogParseError` immediately. Schema
    violations and duplicate ids are collected; with ``strict`` they raise
    :class:`CatalogValidationError` listing every problem, otherwise the
    offending records are excluded and reported on ``Catalog.errors``.
    """
    if isinstance(source, bytes):
        stream = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        stream = io.StringIO(source)
    else:
        stream = source
    problems: list[str] = []
    items: list[Item] = []
    seen: dict[str, int] = {}
    header_seen = False
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CatalogParseError(lineno, f"malformed record ({exc.msg})") from exc
        if not isinstance(rec, dict):
            raise CatalogParseError(lineno, "record must be a JSON object")
        if not header_seen:
            header_seen = True
            if "format_version" in rec:
                if rec["format_version"] != FORMAT_VERSION:
                    raise CatalogParseError(lineno, f"unsupported format_version {rec['format_version']!r}")
                continue
        bad = _validate_record(rec, schema, lineno)
        item_id = rec.get("id")
        if item_id in seen:
            bad.append(f"duplicate id {item_id!r} on lines {seen[item_id]} and {lineno}")
        elif item_id is not None:
            seen[item_id] = lineno
        if bad:
            problems.extend(bad)
            continue
        items.append(
            Item(
                id=str(rec["id"]),
                title=str(rec["title"]),
                category=str(rec["category"]),
                price=float(rec["price"]),
                attributes=dict(rec.get("attributes", {})),
            )
        )
    if problems and strict:
        raise CatalogValidationError(problems)
    dup_ids = {p.split("'")[1] for p in problems if p.startswith("duplicate id")}
    items = [it for it in items if it.id not in dup_ids]
    return Catalog(schema, items, errors=problems)


# -- synthesis ---------------------------------------------------------------

ATTRIBUTE_POOL = (
    ("sound_quality", 0.0, 10.0),
    ("battery_life", 0.0, 60.0),
    ("comfort", 0.0, 10.0),
    ("build_quality", 0.0, 10.0),
    ("noise_cancelling", 0.0, 40.0),
    ("connectivity", 0.0, 10.0),
    ("durability", 0.0, 10.0),
    ("portability", 0.0, 10.0),
    ("microphone_clarity", 0.0, 10.0),
    ("bass_response", 0.0, 10.0),
    ("water_resistance", 0.0, 8.0),
    ("charging_speed", 0.0, 100.0),
    ("app_support", 0.0, 10.0),
    ("warranty_years", 0.0, 5.0),
    ("eco_rating", 0.0, 10.0),
    ("latency_score", 0.0, 10.0),
)
BRANDS = ("Aurex", "Belmont", "Corvo", "Dalia", "Everton", "Fennix", "Galvan", "Halden")


def _attribute_name(j: int) -> tuple[str, float, float]:
    if j < len(ATTRIBUTE_POOL):
        return ATTRIBUTE_POOL[j]
    return (f"feature_{j + 1}", 0.0, 10.0)


def synthetic_schema(n_attrs: int) -> AttributeSchema:
    return AttributeSchema(
        tuple(AttributeSpec(name, "numeric", lo, hi) for name, lo, hi in map(_attribute_name, range(n_attrs)))
    )


def _std_normal_cdf(z: np.ndarray) -> np.ndarray:
    erf = np.vectorize(math.erf, otypes=[float])
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


def synthesize_catalog(
    seed: int,
    n_items: int,
    n_attrs: int,
    price_range: tuple[float, float] = (20.0, 400.0),
    categories: Sequence[str] = ("headphones",),
    coherence: float = 0.0,
) -> Catalog:
    """Generate a deterministic synthetic catalog.

    Every numeric attribute is marginally uniform over its schema range. With
    ``coherence > 0`` the attributes of one item share a latent quality factor
    (a Gaussian copula with that correlation), which keeps the marginals
    uniform while making good items good on many attributes at once.
    Prices are uniform over ``price_range`` and independent of quality.
    """
    if n_items < 1 or n_attrs < 1:
        raise ValueError("n_items and n_attrs must be >= 1")
    if not categories:
        raise ValueError("need at least one category")
    if not 0.0 <= coherence < 1.0:
        raise ValueError("coherence must be in [0, 1)")
    lo_p, hi_p = price_range
    if not 0 <= lo_p <= hi_p:
        raise ValueError("price_range must satisfy 0 <= low <= high")
    rng = np.random.default_rng(seed)
    schema = synthetic_schema(n_attrs)
    if coherence > 0.0:
        latent = rng.standard_normal((n_items, 1))
        noise = rng.standard_normal((n_items, n_attrs))
        u = _std_normal_cdf(math.sqrt(coherence) * latent + math.sqrt(1.0 - coherence) * noise)
    else:
        u = rng.random((n_items, n_attrs))
    prices = rng.uniform(lo_p, hi_p, size=n_items)
    brands = rng.integers(0, len(BRANDS), size=n_items)
    items = []
    for i in range(n_items):
        category = categories[i % len(categories)]
        attrs = {}
        for j, spec in enumerate(schema.attributes):
            attrs[spec.name] = round(spec.observed_min + float(u[i, j]) * (spec.observed_max - spec.observed_min), 4)
        strong = [schema.names[j].replace("_", " ") for j in np.argsort(-u[i], kind="stable")[:2] if u[i, j] >= 0.8]
        title = " ".join([BRANDS[brands[i]], category] + ([f"with {' and '.join(strong)}"] if strong else []))
        items.append(Item(f"SKU{i + 1:05d}", title, category, round(float(prices[i]), 2), attrs))
    return Catalog(schema, items)


# -- profiles ----------------------------------------------------------------


@dataclass(frozen=True)
class WeightVector:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if any(v < 0 for v in self.values):
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(self.values) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def priority(self) -> tuple[str, ...]:
        """Attribute names by descending weight, schema order breaking ties."""
        order = sorted(range(len(self.values)), key=lambda j: (-self.values[j], j))
        return tuple(self.names[j] for j in order)


def _normalized(names, raw) -> WeightVector:
    raw = [float(x) for x in raw]
    total = math.fsum(raw)
    if total <= 0:
        raise ValueError("weights must have positive total mass")
    values = [x / total for x in raw]
    # fold the rounding residue into the largest entry so the sum is exact
    residue = 1.0 - math.fsum(values)
    k = max(range(len(values)), key=lambda j: values[j])
    values[k] += residue
    return WeightVector(tuple(names), tuple(values))


def build_weight_vector(
    uncertainty: int,
    schema: AttributeSchema,
    emphasis: Optional[Mapping[str, float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> WeightVector:
    """Attribute weights for a user with the given preference uncertainty.

    Uncertain users (level 2 or 3) weigh all attributes equally. Confident
    users (level 1) follow ``emphasis`` when given, otherwise a random simplex
    point sorted descending and assigned along a random priority order.
    """
    check_level("uncertainty", uncertainty)
    if len(schema) == 0:
        raise ValueError("schema is empty")
    names = schema.names
    n = len(names)
    if uncertainty in (2, 3):
        return WeightVector(names, tuple([1.0 / n] * n))
    if emphasis is not None:
        unknown = set(emphasis) - set(names)
        if unknown:
            raise ValueError(f"emphasis names unknown attributes {sorted(unknown)}")
        if any(v < 0 for v in emphasis.values()):
            raise ValueError("emphasis entries must be non-negative")
        return _normalized(names, [emphasis.get(name, 0.0) for name in names])
    if rng is None:
        raise ValueError("rng required for sampled weights")
    mass = np.sort(rng.dirichlet(np.ones(n)))[::-1]
    order = rng.permutation(n)
    raw = np.empty(n)
    raw[order] = mass
    return _normalized(names, raw)


def sample_budget(catalog: Catalog, category: Optional[str], rng: np.random.Generator) -> float:
    """Budget drawn uniformly from the category's interquartile price range.

    Quartiles use linear interpolation between order statistics.
    """
    prices = np.array([it.price for it in catalog.in_category(category)], dtype=np.float64)
    if prices.size < 4:
        raise InsufficientDataError(
            f"category {category!r} has {prices.size} priced items; need at least 4"
        )
    q1, q3 = np.quantile(prices, [0.25, 0.75], method="linear")
    if q3 <= q1:
        return float(q1)
    return float(min(q3, max(q1, rng.uniform(q1, q3))))


@dataclass(frozen=True)
class ProfileConfig:
    seed: int
    uncertainty: int = 2
    pickiness: int = 2
    openness: int = 2
    time_pressure: int = 2
    category: Optional[str] = None

    def __post_init__(self):
        for name in ("uncertainty", "pickiness", "openness", "time_pressure"):
            check_level(name, getattr(self, name))


def _phrase(name: str) -> str:
    return name.replace("_", " ")


def generate_profile(config: ProfileConfig, catalog: Catalog) -> tuple[GlobalState, WeightVector, ConstraintSet]:
    """Build one user's ground-truth state, weights and hard constraints.

    Random draws come from independent child streams of ``config.seed`` so
    the budget and category are identical for every uncertainty level; only
    the uncertainty-dependent parts differ.
    """
    base, weight_stream, constraint_stream = np.random.SeedSequence(config.seed).spawn(3)
    rng = np.random.default_rng(base)
    category = config.category
    if category is None:
        category = str(rng.choice(catalog.categories))
    budget = sample_budget(catalog, category, rng)
    schema = catalog.schema
    weights = build_weight_vector(config.uncertainty, schema, rng=np.random.default_rng(weight_stream))
    constraints = ConstraintSet((Constraint("price", "<=", budget),))
    if config.uncertainty == 1:
        crng = np.random.default_rng(constraint_stream)
        pool = catalog.in_category(category)
        top = weights.priority()[:2]
        for name in top:
            spec = schema.spec(name)
            if spec.kind == "binary":
                constraints = constraints.with_constraint(Constraint(name, "==", 1.0))
                continue
            values = np.array([it.attributes[name] for it in pool if name in it.attributes])
            level = float(crng.uniform(0.1, 0.4))
            bound = float(np.quantile(values, level)) if values.size else spec.observed_min
            constraints = constraints.with_constraint(Constraint(name, ">=", round(bound, 4)))
        needs = f"{category} with great {_phrase(top[0])}"
        if len(top) > 1:
            needs += f" and good {_phrase(top[1])}"
    else:
        needs = f"a good {category} that fits my budget"
    scenario = Scenario(
        needs_text=needs,
        constraints=constraints,
        budget=budget,
        time_pressure=config.time_pressure,
        category=category,
    )
    persona = Persona(openness=config.openness, pickiness=config.pickiness, uncertainty=config.uncertainty)
    return GlobalState(persona, scenario), weights, constraints


def load_schema(text: str) -> AttributeSchema:
    return AttributeSchema.from_json(text)
