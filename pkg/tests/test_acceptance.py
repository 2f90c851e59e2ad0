"""End-to-end acceptance suite.

Each test here states a product-level guarantee: engine equivalence and
minimality at scale, cycle handling against an independent graph oracle,
version byte-identity, the 20-user exposure-return scenario, concurrency
isolation, server-side validation authority, and local/server equivalence.
"""
import concurrent.futures
import json
import random
import re
import time
from pathlib import Path

import networkx as nx
from click.testing import CliRunner
from fastapi.testclient import TestClient

from appfix import service_config
from livesrv import running_service
from support import all_values, assert_same_values
from genwb import generate_workbook_doc, random_edit
from sheetapps.cells import CYCLE, CellRef, parse_a1
from sheetapps.cli import main as cli_main
from sheetapps.formula.graph import (
    RecalcStats,
    build_graph,
    full_recalculate,
    recalculate,
)
from sheetapps.service import Principal, create_app
from sheetapps.store import PublicationStore
from sheetapps.workbook import load_workbook, set_inputs

FIXTURE_DIR = Path(__file__).parent.parent / "fixtures" / "rds"

SCENARIOS = ["Windstorm", "Earthquake", "Flood"]
CODES = ["RC-01", "RC-02", "RC-03", "RC-04"]
FIELD_IDS = [
    f"{pre}_{code.lower().replace('-', '')}"
    for pre in ("ws", "eq", "fl")
    for code in CODES
]
FIELD_KEYS = {
    f"{pre}_{code.lower().replace('-', '')}": (scenario, code)
    for pre, scenario in zip(("ws", "eq", "fl"), SCENARIOS)
    for code in CODES
}


def rds_documents():
    defn = (FIXTURE_DIR / "rds.json").read_text(encoding="utf-8")
    workbooks = {
        "calc": (FIXTURE_DIR / "calc.json").read_text(encoding="utf-8"),
        "report": (FIXTURE_DIR / "report.json").read_text(encoding="utf-8"),
    }
    return defn, workbooks


def rds_inputs(rng, office="London", basis="gross"):
    values = {"office": office, "basis": basis}
    for cid in FIELD_IDS:
        values[cid] = float(rng.randint(0, 5_000_000))
    return values


def submit_and_wait(client, token, inputs, period="2009-H1"):
    resp = client.post(
        "/api/runs",
        json={"app": "rds", "inputs": inputs, "period": period},
        headers={"X-Auth-Token": token},
    )
    assert resp.status_code == 202, resp.text
    run_id = resp.json()["run_id"]
    deadline = time.time() + 30
    while time.time() < deadline:
        body = client.get(f"/api/runs/{run_id}", headers={"X-Auth-Token": token}).json()
        if body["status"] in ("COMPLETED", "FAILED"):
            assert body["status"] == "COMPLETED", body
            return body
        time.sleep(0.005)
    raise AssertionError("run did not finish")


class TestEngineAtScale:
    def test_incremental_equals_full_on_1000_workbooks(self):
        """One random edit per generated workbook; bit-exact agreement, <10s."""
        rng = random.Random(20260819)
        started = time.perf_counter()
        for _ in range(1000):
            doc, literals = generate_workbook_doc(rng, max_cells=200, max_depth=6)
            wb = load_workbook(json.dumps(doc))
            graph = build_graph(wb)
            base = full_recalculate(wb, graph=graph)
            ref, value = random_edit(rng, literals)
            edited = set_inputs(base, {ref: value})
            incremental = recalculate(edited, [ref], graph=graph)
            full = full_recalculate(edited, graph=graph)
            assert_same_values(incremental, full)
        assert time.perf_counter() - started < 10.0

    def test_cycle_totality_against_graph_oracle(self):
        """Inject back edges, then check the poisoned set against networkx.

        Exactly the cells on or downstream of a cycle must read #CYCLE!;
        every other cell must match a recalculation of the workbook with
        the poisoned formulas deleted (the acyclic subgraph).
        """
        rng = random.Random(4171)
        saw_cycles = 0
        for _ in range(60):
            doc, _ = generate_workbook_doc(rng, max_cells=120, max_depth=5)
            cells = doc["sheets"][0]["cells"]
            formulas = [a for a, spec in cells.items() if "f" in spec]
            if len(formulas) < 2:
                continue
            # rewire a few formulas to later cells, which can close cycles
            for addr in rng.sample(formulas, k=min(3, len(formulas))):
                other = rng.choice(formulas)
                cells[addr] = {"f": f"={other}+1"}
            wb = load_workbook(json.dumps(doc))
            graph = build_graph(wb)

            oracle = nx.DiGraph()
            oracle.add_nodes_from(graph.precedents)
            for ref, deps in graph.precedents.items():
                for dep in deps:
                    oracle.add_edge(dep, ref)
            on_cycle = set()
            for scc in nx.strongly_connected_components(oracle):
                if len(scc) > 1:
                    on_cycle |= scc
                else:
                    (node,) = scc
                    if oracle.has_edge(node, node):
                        on_cycle.add(node)
            poisoned = set(on_cycle)
            for node in on_cycle:
                poisoned |= nx.descendants(oracle, node)
            poisoned &= set(graph.precedents)  # formula cells only

            assert graph.cyclic == poisoned
            if poisoned:
                saw_cycles += 1
            out = full_recalculate(wb, graph=graph)

            # acyclic-subgraph oracle: same workbook minus poisoned formulas
            sheet_name = doc["sheets"][0]["name"]
            poisoned_addrs = {(r.sheet, r.col, r.row) for r in poisoned}
            keep = {}
            for addr, spec in cells.items():
                col, row = parse_a1(addr)
                if (sheet_name, col, row) not in poisoned_addrs:
                    keep[addr] = spec
            trimmed_doc = dict(doc)
            trimmed_doc["sheets"] = [
                {"name": sheet_name, "cells": keep},
                doc["sheets"][1],
            ]
            trimmed = full_recalculate(load_workbook(json.dumps(trimmed_doc)))

            got = all_values(out)
            want = all_values(trimmed)
            for key, token in got.items():
                ref = CellRef(*key)
                if ref in poisoned:
                    assert token == ("err", CYCLE.code), f"{key} not poisoned"
                else:
                    assert token == want[key], f"{key}: {token!r} != {want[key]!r}"
        assert saw_cycles >= 10  # the construction must actually exercise cycles

    def test_minimal_recomputation_in_thousand_cell_workbook(self):
        """Evaluation count equals the exact dependent closure, not more."""
        rng = random.Random(7021)
        cells = {}
        refs = []
        for i in range(1, 51):  # layer 0: fifty inputs in column A
            cells[f"A{i}"] = {"v": float(i)}
            refs.append(("A", i))
        col_letters = "BCDEFGHIJKLMNOPQRST"
        per_col = 50
        for ci, letter in enumerate(col_letters):
            for i in range(1, per_col + 1):
                prev = [f"{l}{r}" for l, r in refs if l != letter]
                picks = rng.sample(prev, k=rng.randint(1, 3))
                cells[f"{letter}{i}"] = {"f": "=" + "+".join(picks)}
                refs.append((letter, i))
        assert len(cells) == 1000
        doc = {"sheets": [{"name": "S", "cells": cells}]}
        wb = load_workbook(json.dumps(doc))
        graph = build_graph(wb)
        base = full_recalculate(wb, graph=graph)

        oracle = nx.DiGraph()
        for ref, deps in graph.precedents.items():
            for dep in deps:
                oracle.add_edge(dep, ref)
        target = CellRef("S", 1, 17)  # leaf input A17
        closure = nx.descendants(oracle, target)

        edited = set_inputs(base, {target: 123456.0})
        stats = RecalcStats()
        recalculate(edited, [target], graph=graph, stats=stats)
        assert stats.evaluated == len(closure)
        assert len(closure) > 100  # the edit actually fans out

    def test_version_laws_over_six_revisions(self, tmp_path):
        """r1..r5 distinct, restore(2) -> r6 byte-identical, history intact."""
        store = PublicationStore(tmp_path / "store")
        defn_text, workbooks = rds_documents()
        snapshots = {}
        for n in range(1, 6):
            doc = json.loads(defn_text)
            doc["label"] = f"Catastrophe exposure return v{n}"
            rev = store.publish(json.dumps(doc), workbooks, "alice")
            assert rev.revision == n
            stored = store.get("rds", n)
            snapshots[n] = (stored.definition_text, dict(stored.workbook_texts))
        restored = store.restore("rds", 2, "root")
        assert restored.revision == 6
        assert restored.origin_label == "restore-of(2)"

        head = store.get("rds")
        assert head.revision == 6
        assert head.definition_text == snapshots[2][0]
        assert head.workbook_texts == snapshots[2][1]
        for n in range(1, 6):
            again = store.get("rds", n)
            assert again.definition_text == snapshots[n][0]
            assert again.workbook_texts == snapshots[n][1]


def twenty_user_config(tmp_path):
    tokens = {"tok-author": Principal("author", "author"),
              "tok-admin": Principal("admin", "admin")}
    for i in range(1, 21):
        tokens[f"tok-u{i:02d}"] = Principal(f"u{i:02d}", "consumer")
    return service_config(tmp_path, workers=4, tokens=tokens)


class TestExposureReturnScenario:
    """20 underwriters file a full exposure return through the API."""

    def test_twenty_user_period(self, tmp_path):
        started = time.perf_counter()
        app = create_app(twenty_user_config(tmp_path))
        with TestClient(app) as client:
            defn_text, workbooks = rds_documents()
            resp = client.post(
                "/api/apps",
                json={"definition": defn_text, "workbooks": workbooks},
                headers={"X-Auth-Token": "tok-author"},
            )
            assert resp.status_code == 201, resp.text
            assert resp.json() == {"revision": 1}

            rng = random.Random(20090101)
            submitted = {}  # user -> {cid: value}
            for i in range(1, 21):
                user = f"u{i:02d}"
                values = rds_inputs(rng, office=["London", "Paris", "Zurich"][i % 3])
                submitted[user] = values
                body = submit_and_wait(client, f"tok-{user}", values)
                assert body["revision"] == 1

            # brute-force oracle over all 240 raw values
            expected = {}
            for values in submitted.values():
                for cid, key in FIELD_KEYS.items():
                    expected[key] = expected.get(key, 0.0) + values[cid]

            agg = client.get(
                "/api/aggregate/rds?period=2009-H1",
                headers={"X-Auth-Token": "tok-author"},
            ).json()
            assert agg["keys"] == ["scenario", "risk_code"]
            got = {tuple(g["key"]): g["sums"]["exposure"] for g in agg["groups"]}
            assert got == expected
            assert len(agg["groups"]) == 12
            for group in agg["groups"]:
                assert group["rows"] == 20
                assert group["users"] == 20
            db_grand_total = agg["totals"]["exposure"]
            assert db_grand_total == sum(expected.values())

            # template-sheet grand total must equal the database total
            report = client.get(
                "/api/reports/aggregate/rds/2009-H1",
                headers={"X-Auth-Token": "tok-author"},
            )
            assert report.status_code == 200
            match = re.search(r"Market grand total (\S+) across (\d+) rows", report.text)
            assert match, report.text[:400]
            assert float(match.group(1)) == db_grand_total
            assert int(match.group(2)) == 240 // 20  # 12 injected rows

            # audit: exactly 20 created + 20 completed, all pinned to r1
            records = client.get(
                "/api/audit?app=rds", headers={"X-Auth-Token": "tok-admin"}
            ).json()["records"]
            created = [r for r in records if r["action"] == "run-created"]
            completed = [r for r in records if r["action"] == "run-completed"]
            assert len(created) == 20
            assert len(completed) == 20
            assert all(r["revision"] == 1 for r in created + completed)

            # one underwriter resubmits; supersession replaces their rows
            revised = rds_inputs(rng, office="Zurich")
            submitted["u07"] = revised
            submit_and_wait(client, "tok-u07", revised)
            expected = {}
            for values in submitted.values():
                for cid, key in FIELD_KEYS.items():
                    expected[key] = expected.get(key, 0.0) + values[cid]
            agg = client.get(
                "/api/aggregate/rds?period=2009-H1",
                headers={"X-Auth-Token": "tok-author"},
            ).json()
            got = {tuple(g["key"]): g["sums"]["exposure"] for g in agg["groups"]}
            assert got == expected
            for group in agg["groups"]:
                assert group["rows"] == 20  # still one row per user after supersession

        assert time.perf_counter() - started < 60.0


class TestConcurrencyIsolation:
    def test_fifty_concurrent_runs_match_serial(self, tmp_path):
        config = service_config(tmp_path, workers=8)
        with running_service(config) as base_url:
            import httpx

            defn_text, workbooks = rds_documents()
            with httpx.Client(base_url=base_url, timeout=30.0) as c:
                resp = c.post(
                    "/api/apps",
                    json={"definition": defn_text, "workbooks": workbooks},
                    headers={"X-Auth-Token": "tok-alice"},
                )
                assert resp.status_code == 201

            grids = []
            rng = random.Random(5150)
            for _ in range(50):
                grids.append(rds_inputs(rng))

            def one(values):
                with httpx.Client(base_url=base_url, timeout=30.0) as c:
                    body = submit_and_wait_httpx(c, "tok-bob", values)
                return body["outputs"]

            with concurrent.futures.ThreadPoolExecutor(max_workers=10) as pool:
                outputs = list(pool.map(one, grids))

        # serial oracle: the same pipeline run in-process, one at a time
        from sheetapps.appdef import parse_definition, validate_inputs
        from sheetapps.executor import build_edits, encode_output, execute_pipeline

        defn = parse_definition(defn_text)
        loaded = {wid: load_workbook(text) for wid, text in workbooks.items()}
        for values, got in zip(grids, outputs):
            checked = validate_inputs(defn, values)
            assert checked.ok
            outcome = execute_pipeline(defn, loaded, build_edits(defn, checked.typed))
            want = {oid: encode_output(v) for oid, v in outcome.outputs.items()}
            assert got == want

    def test_single_worker_completes_in_submission_order(self, tmp_path):
        config = service_config(tmp_path, workers=1)
        app = create_app(config)
        with TestClient(app) as client:
            defn_text, workbooks = rds_documents()
            client.post(
                "/api/apps",
                json={"definition": defn_text, "workbooks": workbooks},
                headers={"X-Auth-Token": "tok-alice"},
            )
            rng = random.Random(33)
            run_ids = []
            for _ in range(50):
                resp = client.post(
                    "/api/runs",
                    json={"app": "rds", "inputs": rds_inputs(rng)},
                    headers={"X-Auth-Token": "tok-bob"},
                )
                assert resp.status_code == 202
                run_ids.append(resp.json()["run_id"])
            deadline = time.time() + 60
            while time.time() < deadline:
                body = client.get(
                    f"/api/runs/{run_ids[-1]}", headers={"X-Auth-Token": "tok-bob"}
                ).json()
                if body["status"] == "COMPLETED":
                    break
                time.sleep(0.01)
            records = client.get(
                "/api/audit", headers={"X-Auth-Token": "tok-root"}
            ).json()["records"]
            completed = [r["run_id"] for r in records if r["action"] == "run-completed"]
            assert completed == run_ids


class TestServerAuthority:
    def test_out_of_range_value_rejected_without_trace(self, tmp_path):
        """A crafted request with -5 exposure: 422, no run, no audit record."""
        app = create_app(service_config(tmp_path))
        with TestClient(app) as client:
            defn_text, workbooks = rds_documents()
            client.post(
                "/api/apps",
                json={"definition": defn_text, "workbooks": workbooks},
                headers={"X-Auth-Token": "tok-alice"},
            )
            values = rds_inputs(random.Random(1))
            values["ws_rc01"] = -5
            resp = client.post(
                "/api/runs",
                json={"app": "rds", "inputs": values},
                headers={"X-Auth-Token": "tok-bob"},
            )
            assert resp.status_code == 422
            assert resp.json()["field_errors"] == {"ws_rc01": "below minimum 0"}
            assert "run_id" not in resp.json()
            records = client.get(
                "/api/audit", headers={"X-Auth-Token": "tok-root"}
            ).json()["records"]
            assert all(r["action"] != "run-created" for r in records)


class TestLocalServerEquivalence:
    def test_cli_matches_service_across_input_grid(self, tmp_path):
        app = create_app(service_config(tmp_path))
        with TestClient(app) as client:
            defn_text, workbooks = rds_documents()
            client.post(
                "/api/apps",
                json={"definition": defn_text, "workbooks": workbooks},
                headers={"X-Auth-Token": "tok-alice"},
            )
            rng = random.Random(614)
            exposure_patterns = [
                {cid: 0.0 for cid in FIELD_IDS},
                {cid: float(i * 1000) for i, cid in enumerate(FIELD_IDS)},
                {cid: float(rng.randint(0, 10**7)) for cid in FIELD_IDS},
            ]
            runner = CliRunner()
            for office in ("London", "Paris", "Zurich"):
                for basis in ("gross", "net"):
                    for pattern in exposure_patterns:
                        values = {"office": office, "basis": basis, **pattern}
                        inputs_path = tmp_path / "inputs.json"
                        inputs_path.write_text(json.dumps(values), encoding="utf-8")
                        local = runner.invoke(cli_main, [
                            "run-local", str(FIXTURE_DIR / "rds.json"),
                            "--inputs", str(inputs_path), "--json",
                        ])
                        assert local.exit_code == 0, local.output
                        local_doc = json.loads(local.stdout)
                        body = submit_and_wait(client, "tok-bob", values)
                        assert body["outputs"] == local_doc["outputs"]
                        assert body["flags"] == local_doc["flags"]


def submit_and_wait_httpx(client, token, inputs, period="2009-H1"):
    resp = client.post(
        "/api/runs",
        json={"app": "rds", "inputs": inputs, "period": period},
        headers={"X-Auth-Token": token},
    )
    assert resp.status_code == 202, resp.text
    run_id = resp.json()["run_id"]
    deadline = time.time() + 30
    while time.time() < deadline:
        body = client.get(f"/api/runs/{run_id}", headers={"X-Auth-Token": token}).json()
        if body["status"] in ("COMPLETED", "FAILED"):
            assert body["status"] == "COMPLETED", body
            return body
        time.sleep(0.005)
    raise AssertionError("run did not finish")
