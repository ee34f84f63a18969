import csv
import io

import numpy as np
import pytest

from hesitator.dialogue import ConfigurationError
from hesitator.experiments import (
    CSV_FORMAT_VERSION,
    OVERLOAD_CONDITIONS,
    Cell,
    Environment,
    ExperimentError,
    OverloadCondition,
    Runner,
    SweepSpec,
    export_results,
    run_ablation,
    run_overload_experiment,
    run_sweep,
    session_seeds,
    sign_changes,
)

SMALL = Environment(n_items=300)


@pytest.fixture(scope="module")
def runner():
    return Runner(SMALL)


def test_seeds_depend_only_on_base_and_index():
    assert session_seeds(0, 5) == session_seeds(0, 5)
    assert session_seeds(0, 5) != session_seeds(0, 6)
    assert session_seeds(0, 5) != session_seeds(1, 5)
    assert len({session_seeds(3, i) for i in range(500)}) == 500


def test_table_conditions():
    got = [(c.name, c.time_pressure, c.format_level, c.uncertainty, c.assortment, c.attributes) for c in OVERLOAD_CONDITIONS]
    assert got == [("Low", 1, 1, 1, 3, 8), ("Medium", 2, 1, 2, 3, 8), ("Severe", 3, 3, 3, 3, 8)]


def test_cell_validation():
    with pytest.raises(ConfigurationError):
        Cell(3, 8, 4)
    with pytest.raises(ConfigurationError):
        Cell(0, 8, 2)
    with pytest.raises(ConfigurationError):
        Cell(3, 8, 2, variant="coin")


def test_runner_capacity_checks(runner):
    with pytest.raises(ConfigurationError, match="schema"):
        runner.check(Cell(3, 11, 2))
    with pytest.raises(ConfigurationError, match="catalog has 300"):
        runner.check(Cell(16, 4, 2))
    with pytest.raises(ConfigurationError):
        runner.run([Cell(3, 4, 2)], 0, 0)
    with pytest.raises(ConfigurationError):
        Runner(SMALL, workers=0, catalog=runner.catalog)


def test_pairing_same_user_across_conditions(runner):
    # identical cells under two names must give identical per-session outcomes
    a = OverloadCondition("A", 2, 1, 2)
    b = OverloadCondition("B", 2, 1, 2)
    res = run_overload_experiment([a, b], 30, 4, runner=runner)
    assert res["A"].purchased == res["B"].purchased
    assert res.test is None and "not significant" in res.diagnostic and not res.significant


def test_overload_result_and_csv(runner):
    res = run_overload_experiment(n_sessions=40, base_seed=1, runner=runner)
    assert [c.name for c in res.conditions] == ["Low", "Medium", "Severe"]
    assert res.test_pair == ("Low", "Severe")
    text = export_results(res, "csv").decode()
    lines = text.splitlines()
    assert lines[0] == f"# format_version={CSV_FORMAT_VERSION}"
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert [r["condition"] for r in rows] == ["Low", "Medium", "Severe"]
    assert float(rows[0]["sr"]) == res["Low"].sr
    if res.test is not None:
        assert rows[0]["test"] == "wilcoxon:Low-Severe" and rows[1]["test"] == ""
    with pytest.raises(KeyError):
        res["Extreme"]


def test_parallel_matches_serial(runner):
    spec = SweepSpec("assortment", assortment_grid=(1, 6), uncertainties=(3,))
    serial = export_results(run_sweep(spec, 12, 2, runner=runner), "csv")
    par = Runner(SMALL, workers=2, catalog=runner.catalog)
    assert export_results(run_sweep(spec, 12, 2, runner=par), "csv") == serial


def test_total_info_pools_equal_products(runner):
    spec = SweepSpec("total_info", assortment_grid=(1, 2), attribute_grid=(2, 4), uncertainties=(2,))
    res = run_sweep(spec, 5, 0, runner=runner)
    xs, _ = res.series(2)
    assert xs == [2, 4, 8]
    mid = [p for p in res.points if p.axis == 4][0]
    assert set(mid.cells) == {(1, 4), (2, 2)} and mid.n == 10
    with pytest.raises(KeyError):
        res.series(1)


def test_sweep_spec_axes():
    assert SweepSpec("attributes").points() == [(3, k) for k in (2, 4, 6, 8, 10)]
    assert SweepSpec("assortment").points() == [(a, 5) for a in (1, 3, 6, 9, 12)]
    assert len(SweepSpec("total_info").points()) == 25
    with pytest.raises(ConfigurationError):
        SweepSpec("price")
    with pytest.raises(ConfigurationError):
        SweepSpec("attributes", attribute_grid=())


def test_ablation_variants(runner):
    spec = SweepSpec("attributes", attribute_grid=(2, 6), uncertainties=(2,))
    flat = run_ablation("flat_rating", spec, 10, 0, runner=runner)
    assert flat.variant == "flat_rating"
    assert b"flat_rating" in export_results(flat, "csv")
    with pytest.raises(ConfigurationError):
        run_ablation("lottery", spec, 10, 0, runner=runner)


def test_sign_changes():
    assert sign_changes([1, 2, 3]) == 0
    assert sign_changes([1, 3, 2, 4]) == 2
    assert sign_changes([1, 1, 2, 2, 1]) == 1
    assert sign_changes([]) == 0


def test_svg_export(runner):
    res = run_sweep(SweepSpec("attributes", attribute_grid=(2, 4), uncertainties=(1, 3)), 4, 0, runner=runner)
    svg = export_results(res, "svg").decode()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


def test_export_errors(runner):
    res = run_sweep(SweepSpec("attributes", attribute_grid=(2,), uncertainties=(2,)), 2, 0, runner=runner)
    with pytest.raises(ValueError, match="unsupported format"):
        export_results(res, "xlsx")
    empty = type(res)(res.spec, res.variant, 0, ())
    with pytest.raises(ValueError, match="empty"):
        export_results(empty, "csv")
    with pytest.raises(ValueError):
        export_results(object(), "csv")


def test_aborted_session_raises_with_provenance(runner, monkeypatch):
    import hesitator.experiments as ex
    from hesitator.dialogue import Providers, TemplateResponder
    from hesitator.hesitation import PerceptionError

    class Broken:
        def perceive(self, sales, state):
            raise PerceptionError("offline")

    monkeypatch.setattr(ex, "_providers_for", lambda env, cat: Providers(Broken(), TemplateResponder()))
    with pytest.raises(ExperimentError, match=r"session \d+: turn \d+: offline"):
        runner.run([Cell(3, 4, 2)], 20, 0)


def test_environment_loads_catalog_files(tmp_path, runner):
    cat = runner.catalog
    (tmp_path / "cat.jsonl").write_bytes(cat.dumps())
    (tmp_path / "schema.json").write_text(cat.schema.to_json())
    env = Environment(catalog_path=str(tmp_path / "cat.jsonl"), schema_path=str(tmp_path / "schema.json"))
    assert env.build_catalog().dumps() == cat.dumps()
    with pytest.raises(ConfigurationError):
        Environment(catalog_path=str(tmp_path / "cat.jsonl")).build_catalog()
