"""Run pipeline, aggregation math, and report rendering."""
import json
import random

import pytest

from sheetapps.aggregation import (
    StoredSubmission,
    aggregate_rows,
    inject_aggregate,
    supersede,
)
from sheetapps.appdef import parse_definition
from sheetapps.cells import CellError, parse_range_ref
from sheetapps.executor import (
    build_edits,
    decode_output,
    decode_typed_inputs,
    encode_output,
    encode_typed_inputs,
    execute_pipeline,
    input_digest,
)
from sheetapps.formula import build_graph, full_recalculate
from sheetapps.report import render_report
from sheetapps.workbook import load_workbook


from appfix import expo_definition, expo_workbook


def fixture_app(formula_b="=Inp!A2*2"):
    defn = parse_definition(json.dumps(expo_definition()))
    wb = load_workbook(json.dumps(expo_workbook(formula_b=formula_b)))
    return defn, {"main": wb}


class TestValueCodec:
    def test_scalar_round_trips(self):
        for value in (None, True, False, 3.5, "hi", CellError("#N/A")):
            assert decode_output(encode_output(value)) == value

    def test_table_round_trips(self):
        table = [[1.0, None], ["x", CellError("#DIV/0!")]]
        assert decode_output(encode_output(table)) == table

    def test_typed_inputs_round_trip(self):
        typed = {"a": 1.5, "b": None, "c": True, "d": "text"}
        assert decode_typed_inputs(encode_typed_inputs(typed)) == typed

    def test_digest_independent_of_insertion_order(self):
        fwd = {"a": 1.0, "b": 2.0}
        rev = {"b": 2.0, "a": 1.0}
        assert input_digest(fwd) == input_digest(rev)
        assert input_digest(fwd) != input_digest({"a": 1.0, "b": 3.0})


class TestPipeline:
    def test_minimal_run(self):
        defn, wbs = fixture_app()
        edits = build_edits(defn, {"a": 5.0, "b": 3.0})
        outcome = execute_pipeline(defn, wbs, edits)
        assert outcome.outputs["out_a"] == 10.0
        assert outcome.outputs["out_b"] == 6.0
        assert outcome.outputs["pair"] == [[10.0], [6.0]]

    def test_source_workbook_untouched(self):
        defn, wbs = fixture_app()
        execute_pipeline(defn, wbs, build_edits(defn, {"a": 9.0, "b": 9.0}))
        assert wbs["main"].cell(defn.inputs["a"].cell).value == 1.0

    def test_submission_rows_derived(self):
        defn, wbs = fixture_app()
        outcome = execute_pipeline(defn, wbs, build_edits(defn, {"a": 5.0, "b": 3.0}))
        assert [(r.key, r.measures) for r in outcome.rows] == [
            (("alpha",), {"value": 10.0}),
            (("beta",), {"value": 6.0}),
        ]
        assert outcome.flags == []

    def test_error_measure_skips_row_and_flags(self):
        defn, wbs = fixture_app(formula_b="=1/0")
        outcome = execute_pipeline(defn, wbs, build_edits(defn, {"a": 5.0, "b": 3.0}))
        assert outcome.outputs["out_b"] == CellError("#DIV/0!")
        assert [r.key for r in outcome.rows] == [("alpha",)]
        assert len(outcome.flags) == 1
        assert "beta" in outcome.flags[0]
        assert "#DIV/0!" in outcome.flags[0]

    def test_blank_measure_also_skips(self):
        defn, wbs = fixture_app(formula_b=None)  # Out!B2 has no content at all
        outcome = execute_pipeline(defn, wbs, build_edits(defn, {"a": 5.0, "b": 3.0}))
        assert outcome.outputs["out_b"] is None
        assert [r.key for r in outcome.rows] == [("alpha",)]
        assert "blank" in outcome.flags[0]

    def test_graph_reuse_matches_fresh_build(self):
        defn, wbs = fixture_app()
        graphs = {"main": build_graph(wbs["main"])}
        edits = build_edits(defn, {"a": 2.0, "b": 4.0})
        with_cache = execute_pipeline(defn, wbs, edits, graphs=graphs)
        without = execute_pipeline(defn, wbs, edits)
        assert with_cache.outputs == without.outputs


def sub(user, seq, item, value):
    return StoredSubmission(user_id=user, seq=seq, key=(item,), measures={"value": value})


class TestAggregation:
    def test_supersede_keeps_latest_per_user_and_key(self):
        rows = [sub("u1", 1, "alpha", 10.0), sub("u1", 5, "alpha", 20.0), sub("u2", 3, "alpha", 7.0)]
        kept = supersede(rows)
        assert sorted((r.user_id, r.measures["value"]) for r in kept) == [("u1", 20.0), ("u2", 7.0)]

    def test_single_run_aggregate_is_identity(self):
        rows = [sub("u1", 1, "alpha", 10.0), sub("u1", 1, "beta", 6.0)]
        table = aggregate_rows("expo", "p1", ["item"], rows, schema_measures=["value"])
        assert [(g.key, g.sums["value"], g.rows, g.users) for g in table.groups] == [
            (("alpha",), 10.0, 1, 1),
            (("beta",), 6.0, 1, 1),
        ]

    def test_many_users_match_brute_force(self):
        rng = random.Random(42)
        rows = []
        expected = {}
        for u in range(20):
            for item in ("alpha", "beta", "gamma"):
                v = float(rng.randint(0, 1000))
                rows.append(sub(f"u{u:02d}", u + 1, item, v))
                expected[item] = expected.get(item, 0.0) + v
        table = aggregate_rows("expo", "p1", ["item"], rows, schema_measures=["value"])
        got = {g.key[0]: g.sums["value"] for g in table.groups}
        assert got == expected
        assert all(g.users == 20 for g in table.groups)
        assert table.totals()["value"] == sum(expected[k] for k in sorted(expected))

    def test_arrival_order_does_not_matter(self):
        rng = random.Random(7)
        rows = [sub(f"u{i}", i, item, float(i * 3 + len(item))) for i in range(15) for item in ("a", "b")]
        shuffled = rows[:]
        rng.shuffle(shuffled)
        t1 = aggregate_rows("x", "p", ["item"], rows, schema_measures=["value"])
        t2 = aggregate_rows("x", "p", ["item"], shuffled, schema_measures=["value"])
        assert t1 == t2

    def test_unknown_key_and_measure_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            aggregate_rows("x", "p", ["item"], [], keys=["nope"], schema_measures=["value"])
        with pytest.raises(ValueError, match="unknown measure"):
            aggregate_rows("x", "p", ["item"], [], measures=["nope"], schema_measures=["value"])

    def test_resubmission_supersedes_in_aggregate(self):
        rows = [
            sub("u1", 1, "alpha", 100.0),
            sub("u2", 2, "alpha", 50.0),
            sub("u1", 9, "alpha", 10.0),  # u1 resubmits
        ]
        table = aggregate_rows("x", "p", ["item"], rows, schema_measures=["value"])
        assert table.groups[0].sums["value"] == 60.0
        assert table.groups[0].users == 2


class TestInjection:
    def report_template(self):
        doc = {
            "sheets": [
                {
                    "name": "Report",
                    "cells": {
                        "E1": {"f": "=SUM(B2:B4)"},
                        "A2": {"v": "stale"},
                        "B2": {"v": 999.0},
                    },
                }
            ]
        }
        return load_workbook(json.dumps(doc))

    def test_single_cell_injection_recalculates_dependents(self):
        wb = load_workbook(
            json.dumps(
                {"sheets": [{"name": "R", "cells": {"B1": {"f": "=A1*2"}}}]}
            )
        )
        table = aggregate_rows(
            "x", "p", ["item"], [sub("u", 1, "k", 21.0)], keys=[], schema_measures=["value"]
        )
        # keys=[] groups everything into one row of just the measure
        region = parse_range_ref("R!A1")
        injected = inject_aggregate(wb, region, table)
        calc = full_recalculate(injected)
        assert calc.cell(parse_range_ref("R!B1").cell_at(0, 0)).value == 42.0

    def test_grand_total_matches_database_total(self):
        rows = [sub(f"u{i}", i, item, float(i + 1)) for i in range(3) for item in ("a", "b", "c")]
        table = aggregate_rows("x", "p", ["item"], rows, schema_measures=["value"])
        wb = self.report_template()
        injected = inject_aggregate(wb, parse_range_ref("Report!A2:B4"), table)
        calc = full_recalculate(injected)
        total_cell = parse_range_ref("Report!E1").cell_at(0, 0)
        assert calc.cell(total_cell).value == table.totals()["value"]

    def test_stale_fixture_rows_are_blanked(self):
        table = aggregate_rows(
            "x", "p", ["item"], [sub("u", 1, "only", 5.0)], schema_measures=["value"]
        )
        injected = inject_aggregate(self.report_template(), parse_range_ref("Report!A2:B4"), table)
        calc = full_recalculate(injected)
        region = parse_range_ref("Report!A2:B4")
        assert calc.cell(region.cell_at(0, 0)).value == "only"
        assert calc.cell(region.cell_at(1, 0)) is None  # "stale" row cleared
        assert calc.cell(region.cell_at(1, 1)) is None  # 999.0 cleared
        total = calc.cell(parse_range_ref("Report!E1").cell_at(0, 0)).value
        assert total == 5.0

    def test_region_too_small_names_sizes(self):
        rows = [sub("u", 1, item, 1.0) for item in ("a", "b", "c", "d")]
        table = aggregate_rows("x", "p", ["item"], rows, schema_measures=["value"])
        with pytest.raises(ValueError, match=r"needs 4x2.*is 3x2"):
            inject_aggregate(self.report_template(), parse_range_ref("Report!A2:B4"), table)

    def test_formula_in_region_rejected_by_set_inputs(self):
        wb = load_workbook(
            json.dumps({"sheets": [{"name": "Report", "cells": {"A2": {"f": "=1+1"}}}]})
        )
        table = aggregate_rows(
            "x", "p", ["item"], [sub("u", 1, "k", 1.0)], schema_measures=["value"]
        )
        from sheetapps.workbook import BindingError

        with pytest.raises(BindingError):
            inject_aggregate(wb, parse_range_ref("Report!A2:B2"), table)


class TestReportRendering:
    def outputs(self):
        defn, wbs = fixture_app()
        outcome = execute_pipeline(defn, wbs, build_edits(defn, {"a": 16.0, "b": 8.0}))
        return defn, outcome.outputs

    def test_placeholder_substitution_formats_numbers(self):
        defn, outputs = self.outputs()
        html_doc = render_report(defn, outputs, scope="run", title="Run", meta=[])
        assert "Alpha came to 32." in html_doc

    def test_scope_filtering(self):
        defn, outputs = self.outputs()
        run_doc = render_report(defn, outputs, scope="run", title="Run", meta=[])
        agg_doc = render_report(defn, outputs, scope="aggregate", title="Agg", meta=[])
        assert "Alpha came to" in run_doc and "Alpha came to" not in agg_doc
        assert "chart-data" in agg_doc and "chart-data" not in run_doc
        assert run_doc.count("<table>") == 1 and agg_doc.count("<table>") == 1  # scope both

    def test_chart_data_is_machine_readable(self):
        defn, outputs = self.outputs()
        doc = render_report(defn, outputs, scope="aggregate", title="Agg", meta=[])
        start = doc.index('class="chart-data">') + len('class="chart-data">')
        end = doc.index("</script>", start)
        payload = json.loads(doc[start:end])
        assert payload["series"][0]["values"] == [32.0, 16.0]

    def test_error_cells_flagged_in_tables(self):
        defn, wbs = fixture_app(formula_b="=1/0")
        outcome = execute_pipeline(defn, wbs, build_edits(defn, {"a": 1.0, "b": 1.0}))
        doc = render_report(defn, outcome.outputs, scope="run", title="Run", meta=[])
        assert '<td class="err">#DIV/0!</td>' in doc

    def test_rendering_is_deterministic(self):
        defn, outputs = self.outputs()
        args = dict(scope="run", title="Run", meta=[("App", "expo")], flags=["note"])
        assert render_report(defn, outputs, **args) == render_report(defn, outputs, **args)

    def test_meta_and_flags_escaped(self):
        defn, outputs = self.outputs()
        doc = render_report(
            defn,
            outputs,
            scope="run",
            title="<script>x</script>",
            meta=[("User", "a<b")],
            flags=["<!-- boom -->"],
        )
        assert "<script>x</script>" not in doc
        assert "&lt;script&gt;" in doc
        assert "a&lt;b" in doc
        assert "&lt;!-- boom --&gt;" in doc

    def test_unmatched_placeholder_left_verbatim(self):
        defn, outputs = self.outputs()
        partial = {k: v for k, v in outputs.items() if k != "out_a"}
        doc = render_report(defn, partial, scope="run", title="t", meta=[])
        assert "{out_a}" in doc
