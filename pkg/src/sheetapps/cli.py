"""Operator command line: validate, publish, run locally, serve, aggregate.

Exit codes: 0 success, 1 validation or server-side problem, 2 unreadable
file or bad invocation, 3/4/5 for server 401/403/422 answers.
"""
from __future__ import annotations

import csv
import json
import pathlib
import sys

import click

from .appdef import (
    DefinitionError,
    EasapDefinition,
    parse_definition,
    serialize_definition,
    validate_definition,
    validate_inputs,
)
from .cells import to_display_text
from .executor import build_edits, encode_output, execute_pipeline
from .workbook import WorkbookError, load_workbook


def _read_text(path: str) -> str:
    try:
        return pathlib.Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"cannot read {path}: {exc.strerror or exc}", err=True)
        raise SystemExit(2)


def _parse_or_exit(definition_text: str) -> EasapDefinition:
    try:
        return parse_definition(definition_text)
    except DefinitionError as exc:
        click.echo(str(exc), err=True)
        raise SystemExit(1)


def _workbook_texts(defn: EasapDefinition, definition_path: str,
                    workbook_paths: tuple[str, ...]) -> dict[str, str]:
    """Pair declared workbook ids with file contents.

    Explicit paths are matched to declarations by file name; anything not
    given explicitly is read from the definition's own directory.
    """
    by_name = {}
    for path in workbook_paths:
        by_name[pathlib.Path(path).name] = path
    base = pathlib.Path(definition_path).parent
    texts = {}
    for wid, filename in defn.workbooks.items():
        path = by_name.pop(filename, None) or str(base / filename)
        texts[wid] = _read_text(path)
    for stray in by_name.values():
        click.echo(f"{stray} does not match any declared workbook", err=True)
        raise SystemExit(2)
    return texts


def _load_workbooks(defn: EasapDefinition, texts: dict[str, str]):
    workbooks = {}
    for wid, text in texts.items():
        try:
            workbooks[wid] = load_workbook(text)
        except WorkbookError as exc:
            click.echo(f"workbooks.{wid}: {exc}", err=True)
            raise SystemExit(1)
    return workbooks


def _client(server: str, token: str):
    import httpx

    return httpx.Client(base_url=server, headers={"X-Auth-Token": token}, timeout=60.0)


def _server_exit(resp) -> SystemExit:
    """Map an unexpected server answer to an exit code."""
    code = {401: 3, 403: 4, 422: 5}.get(resp.status_code, 1)
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    click.echo(f"server said {resp.status_code}: {detail}", err=True)
    return SystemExit(code)


@click.group()
def main():
    """Publish and operate workbook-backed web apps."""


@main.command()
@click.argument("definition", type=click.Path())
@click.argument("workbooks", nargs=-1, type=click.Path())
def validate(definition, workbooks):
    """Check a definition and its workbooks; print issues one per line."""
    defn = _parse_or_exit(_read_text(definition))
    texts = _workbook_texts(defn, definition, workbooks)
    loaded = _load_workbooks(defn, texts)
    issues = validate_definition(defn, loaded)
    for issue in issues:
        click.echo(str(issue))
    raise SystemExit(1 if issues else 0)


@main.command()
@click.argument("definition", type=click.Path())
@click.argument("workbooks", nargs=-1, type=click.Path())
@click.option("--server", required=True, help="Service base URL.")
@click.option("--token", required=True, help="Auth token.")
def publish(definition, workbooks, server, token):
    """Upload a definition and its workbooks; print the new revision."""
    defn_text = _read_text(definition)
    defn = _parse_or_exit(defn_text)
    texts = _workbook_texts(defn, definition, workbooks)
    with _client(server, token) as client:
        resp = client.post("/api/apps", json={"definition": defn_text, "workbooks": texts})
    if resp.status_code == 201:
        click.echo(resp.json()["revision"])
        return
    if resp.status_code == 422:
        body = resp.json()
        for issue in body.get("issues", []):
            click.echo(f"{issue['path']}: {issue['message']}", err=True)
        if not body.get("issues"):
            click.echo(f"server said 422: {body}", err=True)
        raise SystemExit(5)
    raise _server_exit(resp)


@main.command("run-local")
@click.argument("definition", type=click.Path())
@click.argument("workbooks", nargs=-1, type=click.Path())
@click.option("--inputs", "inputs_path", required=True, type=click.Path(),
              help="JSON file mapping component id to value.")
@click.option("--json", "as_json", is_flag=True,
              help="Print tagged outputs as JSON instead of a table.")
def run_local(definition, workbooks, inputs_path, as_json):
    """Execute one run in-process, exactly as the server would."""
    defn = _parse_or_exit(_read_text(definition))
    texts = _workbook_texts(defn, definition, workbooks)
    loaded = _load_workbooks(defn, texts)
    issues = validate_definition(defn, loaded)
    if issues:
        for issue in issues:
            click.echo(str(issue), err=True)
        raise SystemExit(1)

    try:
        raw = json.loads(_read_text(inputs_path))
    except ValueError as exc:
        click.echo(f"inputs file: {exc}", err=True)
        raise SystemExit(1)
    if not isinstance(raw, dict):
        click.echo("inputs file: expected a JSON object", err=True)
        raise SystemExit(1)

    checked = validate_inputs(defn, raw)
    if not checked.ok:
        for cid in sorted(checked.errors):
            click.echo(f"{cid}: {checked.errors[cid]}", err=True)
        raise SystemExit(1)

    outcome = execute_pipeline(defn, loaded, build_edits(defn, checked.typed))
    outputs = outcome.outputs

    if as_json:
        doc = {
            "outputs": {oid: encode_output(value) for oid, value in outputs.items()},
            "flags": outcome.flags,
        }
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        for oid in sorted(outputs):
            value = outputs[oid]
            if isinstance(value, list):
                click.echo(f"{oid}:")
                for row in value:
                    click.echo("  " + "\t".join(to_display_text(c) for c in row))
            else:
                click.echo(f"{oid} = {to_display_text(value)}")
        for flag in outcome.flags:
            click.echo(flag, err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Service config JSON file.")
def serve(config_path):
    """Start the HTTP service described by a config file."""
    import uvicorn

    from .service import create_app, load_config

    try:
        config = load_config(config_path)
    except OSError as exc:
        click.echo(f"cannot read {config_path}: {exc.strerror or exc}", err=True)
        raise SystemExit(2)
    except ValueError as exc:
        click.echo(f"config file: {exc}", err=True)
        raise SystemExit(1)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


@main.command()
@click.argument("app_name")
@click.option("--server", required=True, help="Service base URL.")
@click.option("--token", required=True, help="Auth token.")
@click.option("--period", default="default", show_default=True)
@click.option("--keys", default=None, help="Comma-separated key subset.")
@click.option("--measures", default=None, help="Comma-separated measure subset.")
def aggregate(app_name, server, token, period, keys, measures):
    """Print a submission aggregate as CSV, one row per key group."""
    params = {"period": period}
    if keys:
        params["keys"] = keys
    if measures:
        params["measures"] = measures
    with _client(server, token) as client:
        resp = client.get(f"/api/aggregate/{app_name}", params=params)
    if resp.status_code != 200:
        raise _server_exit(resp)
    body = resp.json()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(body["keys"] + body["measures"] + ["rows", "users"])
    for group in body["groups"]:
        sums = [to_display_text(float(group["sums"][m])) for m in body["measures"]]
        writer.writerow(list(group["key"]) + sums + [group["rows"], group["users"]])


if __name__ == "__main__":
    main()
