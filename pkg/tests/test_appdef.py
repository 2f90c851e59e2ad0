"""Definition schema: parsing, canonical form, validation, input typing."""
import json

import pytest

from sheetapps.appdef import (
    DefinitionError,
    parse_definition,
    serialize_definition,
    validate_definition,
    validate_inputs,
)
from sheetapps.workbook import load_workbook


def base_doc():
    return {
        "name": "demo",
        "label": "Demo",
        "workbooks": {"main": "main.json"},
        "ui": {
            "kind": "group",
            "id": "root",
            "label": "Demo",
            "children": [
                {
                    "kind": "input-field",
                    "id": "qty",
                    "label": "Quantity",
                    "type": "number",
                    "validators": [{"kind": "required"}, {"kind": "number-range", "min": 0}],
                },
                {
                    "kind": "input-field",
                    "id": "note",
                    "label": "Note",
                    "type": "text",
                    "validators": [{"kind": "pattern", "pattern": "[A-Z]{2}-[0-9]+"}],
                },
                {"kind": "input-field", "id": "active", "label": "Active", "type": "bool"},
                {"kind": "choice-list", "id": "region", "label": "Region", "options": ["North", "South"]},
                {"kind": "radio-buttons", "id": "mode", "label": "Mode", "options": ["fast", "slow"]},
                {"kind": "static-text", "id": "blurb", "label": "", "text": "Fill in the form."},
                {
                    "kind": "output-display",
                    "id": "total_view",
                    "label": "Total",
                    "source": "total",
                    "display": "scalar",
                },
                {
                    "kind": "output-display",
                    "id": "table_view",
                    "label": "Rows",
                    "source": "rows",
                    "display": "table",
                },
            ],
        },
        "bindings": {
            "inputs": {
                "qty": {"wb": "main", "cell": "Data!A1"},
                "note": {"wb": "main", "cell": "Data!A2"},
                "active": {"wb": "main", "cell": "Data!A3"},
                "region": {"wb": "main", "cell": "Data!A4"},
                "mode": {"wb": "main", "cell": "Data!A5"},
            },
            "outputs": {
                "total": {"wb": "main", "cell": "Data!B1"},
                "rows": {"wb": "main", "range": "Data!A1:B2"},
            },
        },
        "report": {
            "blocks": [
                {"kind": "text", "scope": "run", "content": "Total was {total}."},
                {"kind": "table", "scope": "both", "source": "rows", "title": "Rows"},
                {"kind": "chart", "scope": "aggregate", "labels": "rows", "series": ["rows"]},
            ]
        },
        "submission": {
            "keys": ["region"],
            "measures": ["exposure"],
            "rows": [{"keys": {"region": "North"}, "measures": {"exposure": "total"}}],
        },
    }


def parse(doc):
    return parse_definition(json.dumps(doc))


def base_workbook():
    return load_workbook(
        json.dumps(
            {
                "sheets": [
                    {
                        "name": "Data",
                        "cells": {
                            "A1": {"v": 2.0},
                            "A2": {"v": "AB-1"},
                            "A4": {"v": "North"},
                            "A5": {"v": "fast"},
                            "B1": {"f": "=A1*3"},
                            "B2": {"v": 7.0},
                        },
                    }
                ]
            }
        )
    )


class TestParsing:
    def test_full_document_parses(self):
        defn = parse(base_doc())
        assert defn.name == "demo"
        assert sorted(defn.inputs) == ["active", "mode", "note", "qty", "region"]
        assert defn.outputs["total"].is_scalar
        assert not defn.outputs["rows"].is_scalar
        assert defn.submission.rows[0].keys == ("North",)

    def test_round_trip_is_identity(self):
        defn = parse(base_doc())
        text = serialize_definition(defn)
        again = parse_definition(text)
        assert again == defn
        assert serialize_definition(again) == text

    def test_canonical_form_ignores_key_order(self):
        doc = base_doc()
        shuffled = json.dumps(doc, sort_keys=True)
        plain = json.dumps(doc)
        assert serialize_definition(parse_definition(shuffled)) == serialize_definition(
            parse_definition(plain)
        )

    def test_invalid_json_reports_line(self):
        with pytest.raises(DefinitionError) as err:
            parse_definition("{not json")
        assert "line" in str(err.value)

    def test_duplicate_component_id_named_in_error(self):
        doc = base_doc()
        doc["ui"]["children"].append(
            {"kind": "input-field", "id": "qty", "label": "Dup", "type": "number"}
        )
        with pytest.raises(DefinitionError) as err:
            parse(doc)
        assert "qty" in str(err.value)
        assert "duplicate" in str(err.value)

    def test_unknown_key_rejected_with_path(self):
        doc = base_doc()
        doc["ui"]["children"][0]["typo"] = 1
        with pytest.raises(DefinitionError) as err:
            parse(doc)
        assert "ui.children[0]" in str(err.value)

    def test_unknown_component_kind(self):
        doc = base_doc()
        doc["ui"]["children"][0] = {"kind": "slider", "id": "s", "label": ""}
        with pytest.raises(DefinitionError, match="slider"):
            parse(doc)

    def test_app_name_must_be_url_safe(self):
        doc = base_doc()
        doc["name"] = "Has Spaces"
        with pytest.raises(DefinitionError):
            parse(doc)

    def test_empty_options_rejected(self):
        doc = base_doc()
        doc["ui"]["children"][3]["options"] = []
        with pytest.raises(DefinitionError, match="options"):
            parse(doc)

    def test_number_range_needs_a_bound(self):
        doc = base_doc()
        doc["ui"]["children"][0]["validators"] = [{"kind": "number-range"}]
        with pytest.raises(DefinitionError, match="min or max"):
            parse(doc)

    def test_number_range_only_on_number_fields(self):
        doc = base_doc()
        doc["ui"]["children"][1]["validators"] = [{"kind": "number-range", "min": 0}]
        with pytest.raises(DefinitionError, match="number fields"):
            parse(doc)

    def test_backreference_pattern_rejected(self):
        doc = base_doc()
        doc["ui"]["children"][1]["validators"] = [{"kind": "pattern", "pattern": r"(a)\1"}]
        with pytest.raises(DefinitionError, match="backreference"):
            parse(doc)

    def test_binding_to_missing_component_rejected(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["ghost"] = {"wb": "main", "cell": "Data!C1"}
        with pytest.raises(DefinitionError, match="ghost"):
            parse(doc)

    def test_unbound_input_component_rejected(self):
        doc = base_doc()
        del doc["bindings"]["inputs"]["qty"]
        with pytest.raises(DefinitionError, match="qty"):
            parse(doc)

    def test_binding_to_non_input_component_rejected(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["blurb"] = {"wb": "main", "cell": "Data!C1"}
        with pytest.raises(DefinitionError, match="blurb"):
            parse(doc)

    def test_binding_to_undeclared_workbook_rejected(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["qty"]["wb"] = "other"
        with pytest.raises(DefinitionError, match="other"):
            parse(doc)

    def test_output_binding_needs_exactly_one_target(self):
        doc = base_doc()
        doc["bindings"]["outputs"]["total"] = {
            "wb": "main",
            "cell": "Data!B1",
            "range": "Data!A1:B2",
        }
        with pytest.raises(DefinitionError, match="exactly one"):
            parse(doc)

    def test_unqualified_cell_in_binding_rejected(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["qty"]["cell"] = "A1"
        with pytest.raises(DefinitionError, match="sheet"):
            parse(doc)

    def test_table_display_needs_range_bound_output(self):
        doc = base_doc()
        doc["ui"]["children"][7]["source"] = "total"
        with pytest.raises(DefinitionError, match="cell-bound"):
            parse(doc)

    def test_display_source_must_exist(self):
        doc = base_doc()
        doc["ui"]["children"][6]["source"] = "missing"
        with pytest.raises(DefinitionError, match="missing"):
            parse(doc)

    def test_table_block_requires_range_output(self):
        doc = base_doc()
        doc["report"]["blocks"][1]["source"] = "total"
        with pytest.raises(DefinitionError, match="range-bound"):
            parse(doc)

    def test_measure_must_reference_scalar_output(self):
        doc = base_doc()
        doc["submission"]["rows"][0]["measures"]["exposure"] = "rows"
        with pytest.raises(DefinitionError, match="cell-bound"):
            parse(doc)

    def test_duplicate_key_tuple_rejected(self):
        doc = base_doc()
        doc["submission"]["rows"].append(
            {"keys": {"region": "North"}, "measures": {"exposure": "total"}}
        )
        with pytest.raises(DefinitionError, match="duplicate key tuple"):
            parse(doc)

    def test_row_must_cover_all_keys(self):
        doc = base_doc()
        doc["submission"]["keys"] = ["region", "city"]
        with pytest.raises(DefinitionError, match="cover the schema keys"):
            parse(doc)


class TestValidateDefinition:
    def test_clean_definition_has_no_issues(self):
        assert validate_definition(parse(base_doc()), {"main": base_workbook()}) == []

    def test_input_binding_to_formula_cell(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["qty"]["cell"] = "Data!B1"
        issues = validate_definition(parse(doc), {"main": base_workbook()})
        assert any("input binding targets formula cell" in str(i) for i in issues)

    def test_missing_workbook_reported(self):
        issues = validate_definition(parse(base_doc()), {})
        assert any("not provided" in str(i) for i in issues)

    def test_unknown_sheet_reported(self):
        doc = base_doc()
        doc["bindings"]["inputs"]["qty"]["cell"] = "Elsewhere!A1"
        issues = validate_definition(parse(doc), {"main": base_workbook()})
        assert any("Elsewhere" in str(i) for i in issues)

    def test_dangling_placeholder_reported(self):
        doc = base_doc()
        doc["report"]["blocks"][0]["content"] = "See {nonexistent} here"
        issues = validate_definition(parse(doc), {"main": base_workbook()})
        assert any("{nonexistent}" in str(i) for i in issues)

    def test_non_numeric_measure_at_fixture_values(self):
        doc = base_doc()
        wb = load_workbook(
            json.dumps(
                {
                    "sheets": [
                        {
                            "name": "Data",
                            "cells": {"A1": {"v": 2.0}, "B1": {"f": '=CONCATENATE("x", A1)'}, "B2": {"v": 1.0}},
                        }
                    ]
                }
            )
        )
        issues = validate_definition(parse(doc), {"main": wb})
        assert any("not numeric at fixture values" in str(i) for i in issues)

    def test_broken_formula_reported_not_raised(self):
        wb = load_workbook(
            json.dumps({"sheets": [{"name": "Data", "cells": {"B1": {"f": "=SUM("}}}]})
        )
        issues = validate_definition(parse(base_doc()), {"main": wb})
        assert any("formula error" in str(i) for i in issues)

    def test_aggregate_region_width_checked(self):
        doc = base_doc()
        doc["report"]["aggregate"] = {"workbook": "main", "region": "Data!D1:D5"}
        issues = validate_definition(parse(doc), {"main": base_workbook()})
        assert any("columns wide" in str(i) for i in issues)

    def test_aggregate_region_must_not_cover_formulas(self):
        doc = base_doc()
        doc["report"]["aggregate"] = {"workbook": "main", "region": "Data!A1:B5"}
        issues = validate_definition(parse(doc), {"main": base_workbook()})
        assert any("formula cell" in str(i) for i in issues)


class TestValidateInputs:
    def make(self):
        return parse(base_doc())

    def full_inputs(self, **over):
        values = {"qty": 5, "note": "AB-12", "active": True, "region": "North", "mode": "fast"}
        values.update(over)
        return values

    def test_happy_path_types_values(self):
        res = validate_inputs(self.make(), self.full_inputs())
        assert res.ok
        assert res.typed == {
            "qty": 5.0,
            "note": "AB-12",
            "active": True,
            "region": "North",
            "mode": "fast",
        }
        edits = res.edits["main"]
        assert len(edits) == 5

    def test_numbers_parse_from_decimal_text(self):
        res = validate_inputs(self.make(), self.full_inputs(qty="12.5"))
        assert res.ok
        assert res.typed["qty"] == 12.5

    def test_non_numeric_text_is_an_error(self):
        res = validate_inputs(self.make(), self.full_inputs(qty="12x"))
        assert res.errors == {"qty": "not a number"}
        assert res.edits == {}

    def test_below_minimum_message_format(self):
        res = validate_inputs(self.make(), self.full_inputs(qty="-5"))
        assert res.errors == {"qty": "below minimum 0"}

    def test_required_field_rejects_empty_string(self):
        res = validate_inputs(self.make(), self.full_inputs(qty=""))
        assert res.errors == {"qty": "required"}

    def test_required_field_rejects_absence(self):
        values = self.full_inputs()
        del values["qty"]
        res = validate_inputs(self.make(), values)
        assert res.errors == {"qty": "required"}

    def test_empty_string_to_optional_field_blanks_the_cell(self):
        res = validate_inputs(self.make(), self.full_inputs(note=""))
        assert res.ok
        assert res.typed["note"] is None
        cell = self.make().inputs["note"].cell
        assert res.edits["main"][cell] is None

    def test_absent_optional_field_also_blanks(self):
        values = self.full_inputs()
        del values["active"]
        res = validate_inputs(self.make(), values)
        assert res.ok
        assert res.typed["active"] is None

    def test_pattern_validator_uses_full_match(self):
        res = validate_inputs(self.make(), self.full_inputs(note="AB-12 extra"))
        assert "pattern" in res.errors["note"]

    def test_choice_value_must_be_an_option(self):
        res = validate_inputs(self.make(), self.full_inputs(region="East"))
        assert res.errors == {"region": "not one of the allowed options"}

    def test_choice_options_are_case_sensitive(self):
        res = validate_inputs(self.make(), self.full_inputs(region="north"))
        assert not res.ok

    def test_unknown_input_id_rejected(self):
        res = validate_inputs(self.make(), self.full_inputs(bogus=1))
        assert res.errors == {"bogus": "unknown input"}

    def test_bool_accepts_text_forms(self):
        res = validate_inputs(self.make(), self.full_inputs(active="TRUE"))
        assert res.ok and res.typed["active"] is True
        res = validate_inputs(self.make(), self.full_inputs(active="false"))
        assert res.ok and res.typed["active"] is False
        res = validate_inputs(self.make(), self.full_inputs(active="yes"))
        assert res.errors == {"active": "not a boolean"}

    def test_bool_not_accepted_as_number(self):
        res = validate_inputs(self.make(), self.full_inputs(qty=True))
        assert res.errors == {"qty": "not a number"}

    def test_nan_rejected(self):
        res = validate_inputs(self.make(), self.full_inputs(qty=float("nan")))
        assert res.errors == {"qty": "not a finite number"}

    def test_above_maximum_message(self):
        doc = base_doc()
        doc["ui"]["children"][0]["validators"] = [{"kind": "number-range", "max": 100}]
        res = validate_inputs(parse(doc), self.full_inputs(qty=101))
        assert res.errors == {"qty": "above maximum 100"}

    def test_one_of_validator_on_text(self):
        doc = base_doc()
        doc["ui"]["children"][1]["validators"] = [{"kind": "one-of", "options": ["a", "b"]}]
        res = validate_inputs(parse(doc), self.full_inputs(note="c"))
        assert res.errors == {"note": "not one of the allowed options"}
        res = validate_inputs(parse(doc), self.full_inputs(note="b"))
        assert res.ok

    def test_errors_reported_per_field(self):
        res = validate_inputs(self.make(), self.full_inputs(qty="-1", region="East"))
        assert set(res.errors) == {"qty", "region"}
