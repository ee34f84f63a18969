import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hesitator.catalog import (
    AttributeSchema,
    AttributeSpec,
    CatalogError,
    CatalogParseError,
    CatalogValidationError,
    InsufficientDataError,
    Item,
    ProfileConfig,
    build_weight_vector,
    generate_profile,
    load_catalog,
    load_schema,
    normalize,
    sample_budget,
    synthesize_catalog,
)
from hesitator.catalog import Catalog


def line(item_id, **attrs):
    return json.dumps({"id": item_id, "title": "t", "category": "c", "price": 10.0, "attributes": attrs})


def test_load_three_lines(tiny_schema):
    text = "\n".join(line(f"A{i}", battery=10 * i) for i in range(3))
    cat = load_catalog(text, tiny_schema)
    assert len(cat) == 3 and cat["A2"].attributes["battery"] == 20


def test_header_line_accepted_and_version_checked(tiny_schema):
    body = line("A1")
    assert len(load_catalog(json.dumps({"format_version": 1}) + "\n" + body, tiny_schema)) == 1
    with pytest.raises(CatalogParseError, match="format_version"):
        load_catalog(json.dumps({"format_version": 9}) + "\n" + body, tiny_schema)


def test_unknown_attribute_is_named(tiny_schema):
    with pytest.raises(CatalogValidationError, match="colour"):
        load_catalog(line("A1", colour=3), tiny_schema)


def test_duplicate_id_cites_both_lines(tiny_schema):
    lines = [line("X0"), line("X1"), line("X2"), line("X3"), line("X1")]
    with pytest.raises(CatalogValidationError, match="lines 2 and 5"):
        load_catalog("\n".join(lines), tiny_schema)


def test_malformed_line_number(tiny_schema):
    with pytest.raises(CatalogParseError) as err:
        load_catalog(line("A") + "\n{oops\n", tiny_schema)
    assert err.value.lineno == 2


def test_lenient_mode_collects_errors(tiny_schema):
    lines = [line("A"), line("B", battery=500), line("C", wireless=7)]
    cat = load_catalog("\n".join(lines), tiny_schema, strict=False)
    assert [it.id for it in cat.items] == ["A"]
    assert len(cat.errors) == 2 and "line 2" in cat.errors[0]


def test_catalog_round_trip(catalog):
    again = load_catalog(catalog.dumps(), catalog.schema)
    assert again.dumps() == catalog.dumps()


def test_schema_round_trip(tiny_schema):
    assert load_schema(tiny_schema.to_json()) == tiny_schema
    with pytest.raises(CatalogError):
        load_schema('{"format_version": 2, "attributes": []}')


def test_schema_invariants():
    with pytest.raises(ValueError):
        AttributeSchema((AttributeSpec("a"), AttributeSpec("a")))
    with pytest.raises(ValueError):
        AttributeSpec("a", "numeric", 2.0, 1.0)
    with pytest.raises(ValueError):
        AttributeSpec("a", "ordinal")


def test_normalize_examples(tiny_schema):
    it = Item("i", "t", "c", 1.0, {"battery": 50, "comfort": 10, "wireless": True})
    assert normalize(it, tiny_schema).tolist() == [0.5, 1.0, 1.0]
    flat = AttributeSchema((AttributeSpec("k", "numeric", 3.0, 3.0),))
    assert normalize(Item("j", "t", "c", 1.0, {"k": 3.0}), flat).tolist() == [0.5]
    assert np.isnan(normalize(Item("k", "t", "c", 1.0, {}), tiny_schema)).all()


@given(st.floats(-1e6, 1e6), st.floats(-1e3, 1e3), st.floats(0, 1e3))
def test_normalized_values_in_unit_interval(x, lo, width):
    schema = AttributeSchema((AttributeSpec("a", "numeric", lo, lo + width),))
    v = normalize(Item("i", "t", "c", 0.0, {"a": x}), schema)[0]
    assert 0.0 <= v <= 1.0


def test_synthesize_deterministic():
    a = synthesize_catalog(7, 10, 5)
    b = synthesize_catalog(7, 10, 5)
    assert a.dumps() == b.dumps()
    assert synthesize_catalog(8, 10, 5).dumps() != a.dumps()


def test_synthesize_shapes():
    assert len(synthesize_catalog(1, 1, 3)) == 1
    cat = synthesize_catalog(2, 30, 15)
    assert all(len(it.attributes) == 15 for it in cat.items)
    assert cat.matrix.shape == (30, 15)
    with pytest.raises(ValueError):
        synthesize_catalog(1, 0, 3)
    with pytest.raises(ValueError):
        synthesize_catalog(1, 3, 0)


def test_synthesize_ranges():
    cat = synthesize_catalog(5, 400, 4, price_range=(50.0, 60.0), coherence=0.5)
    prices = [it.price for it in cat.items]
    assert 50.0 <= min(prices) and max(prices) <= 60.0
    assert np.all((cat.matrix >= 0) & (cat.matrix <= 1))
    # copula keeps marginals roughly uniform
    assert abs(cat.matrix.mean() - 0.5) < 0.05


def test_coherence_correlates_attributes():
    m = synthesize_catalog(5, 2000, 2, coherence=0.5).matrix
    assert np.corrcoef(m[:, 0], m[:, 1])[0, 1] > 0.3
    m0 = synthesize_catalog(5, 2000, 2).matrix
    assert abs(np.corrcoef(m0[:, 0], m0[:, 1])[0, 1]) < 0.1


def priced(prices):
    schema = AttributeSchema((AttributeSpec("a"),))
    return Catalog(schema, [Item(f"P{i}", "t", "c", p, {}) for i, p in enumerate(prices)])


def test_budget_within_type7_quartiles():
    cat = priced([10, 20, 30, 40])
    # type-7 quartiles of 10..40: Q1 = 17.5, Q3 = 32.5
    for seed in range(50):
        b = sample_budget(cat, "c", np.random.default_rng(seed))
        assert 17.5 <= b <= 32.5


def test_budget_degenerate_and_too_small():
    assert sample_budget(priced([25] * 6), "c", np.random.default_rng(0)) == 25
    with pytest.raises(InsufficientDataError):
        sample_budget(priced([1, 2, 3]), "c", np.random.default_rng(0))


@given(st.lists(st.floats(0, 1e4), min_size=4, max_size=40), st.integers(0, 2**32 - 1))
def test_budget_within_price_range(prices, seed):
    b = sample_budget(priced(prices), "c", np.random.default_rng(seed))
    assert min(prices) <= b <= max(prices)


def test_uniform_weights(tiny_schema):
    four = AttributeSchema(tuple(AttributeSpec(n) for n in "abcd"))
    assert build_weight_vector(2, four).values == (0.25,) * 4
    assert build_weight_vector(3, four).values == (0.25,) * 4


def test_emphasis_weights():
    # "price" is an item field here, so the two-attribute emphasis example uses other names
    schema = AttributeSchema((AttributeSpec("sound"), AttributeSpec("brand_score")))
    w = build_weight_vector(1, schema, emphasis={"sound": 3, "brand_score": 1})
    assert w.values == (0.75, 0.25)
    with pytest.raises(ValueError):
        build_weight_vector(1, schema, emphasis={"sound": -1})


def test_sampled_weights_deterministic_and_sorted_by_priority():
    schema = AttributeSchema(tuple(AttributeSpec(n) for n in "abcdef"))
    w1 = build_weight_vector(1, schema, rng=np.random.default_rng(4))
    w2 = build_weight_vector(1, schema, rng=np.random.default_rng(4))
    assert w1 == w2
    ordered = [w1[n] for n in w1.priority()]
    assert ordered == sorted(ordered, reverse=True)


@given(st.integers(1, 3), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_weights_on_simplex(u, n, seed):
    schema = AttributeSchema(tuple(AttributeSpec(f"x{j}") for j in range(n)))
    w = build_weight_vector(u, schema, rng=np.random.default_rng(seed))
    assert abs(sum(w.values) - 1.0) <= 1e-9 and min(w.values) >= 0


def test_profile_needs_text_coarseness(catalog):
    for seed in range(20):
        state, _, cons = generate_profile(ProfileConfig(seed, uncertainty=3), catalog)
        text = state.scenario.needs_text
        assert not any(n in text or n.replace("_", " ") in text for n in catalog.schema.names)
        assert ("price", "<=", state.scenario.budget) in [(c.attribute, c.comparator, c.bound) for c in cons]


def test_confident_users_get_attribute_constraints(catalog):
    for seed in range(100):
        _, _, cons = generate_profile(ProfileConfig(seed, uncertainty=1), catalog)
        assert any(c.attribute != "price" for c in cons)
        assert any(c.attribute == "price" and c.comparator == "<=" for c in cons)


def test_profile_deterministic_and_budget_shared_across_uncertainty(catalog):
    a = generate_profile(ProfileConfig(11, uncertainty=1), catalog)
    b = generate_profile(ProfileConfig(11, uncertainty=1), catalog)
    assert a[0].fingerprint() == b[0].fingerprint() and a[1] == b[1]
    c = generate_profile(ProfileConfig(11, uncertainty=3), catalog)
    assert c[0].scenario.budget == a[0].scenario.budget


def test_profile_config_levels():
    with pytest.raises(ValueError):
        ProfileConfig(1, pickiness=4)
