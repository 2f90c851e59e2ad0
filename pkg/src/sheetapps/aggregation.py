"""Cross-user aggregation of submission rows, and injection of aggregate
tables into a template workbook.

Supersession rule: within one (app, period), only a user's latest run
counts for each key tuple; earlier submissions are superseded. Aggregates
group the surviving rows by a key subset and sum measures.

Summation order is fixed (groups by key tuple, rows by user then full
key), so results do not depend on arrival order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .cells import RangeRef, CellValue
from .workbook import Workbook, set_inputs


@dataclass(frozen=True)
class StoredSubmission:
    """One persisted submission row as read back from the run database."""

    user_id: str
    seq: int  # creation order of the owning run; higher supersedes
    key: tuple[str, ...]
    measures: dict[str, float]


@dataclass(frozen=True)
class AggregateGroup:
    key: tuple[str, ...]
    sums: dict[str, float]
    rows: int
    users: int


@dataclass(frozen=True)
class AggregateTable:
    app: str
    period: str
    keys: tuple[str, ...]
    measures: tuple[str, ...]
    groups: tuple[AggregateGroup, ...]

    def totals(self) -> dict[str, float]:
        """Per-measure grand totals, summed over groups in table order."""
        out = {m: 0.0 for m in self.measures}
        for group in self.groups:
            for m in self.measures:
                out[m] += group.sums[m]
        return out


def supersede(rows: Iterable[StoredSubmission]) -> list[StoredSubmission]:
    """Keep each user's latest row per full key tuple."""
    latest: dict[tuple[str, tuple[str, ...]], StoredSubmission] = {}
    for row in rows:
        slot = (row.user_id, row.key)
        held = latest.get(slot)
        if held is None or row.seq > held.seq:
            latest[slot] = row
    return list(latest.values())


def aggregate_rows(
    app: str,
    period: str,
    schema_keys: Sequence[str],
    rows: Iterable[StoredSubmission],
    keys: Sequence[str] | None = None,
    measures: Sequence[str] | None = None,
    *,
    schema_measures: Sequence[str],
) -> AggregateTable:
    """Group superseding rows by a key subset and sum measure subsets.

    Unknown key or measure names raise ValueError; subsets default to the
    full schema.
    """
    keys = tuple(keys) if keys is not None else tuple(schema_keys)
    measures = tuple(measures) if measures is not None else tuple(schema_measures)
    for k in keys:
        if k not in schema_keys:
            raise ValueError(f"unknown key {k!r}")
    for m in measures:
        if m not in schema_measures:
            raise ValueError(f"unknown measure {m!r}")
    key_idx = [list(schema_keys).index(k) for k in keys]

    surviving = supersede(rows)
    buckets: dict[tuple[str, ...], list[StoredSubmission]] = {}
    for row in surviving:
        group_key = tuple(row.key[i] for i in key_idx)
        buckets.setdefault(group_key, []).append(row)

    groups = []
    for group_key in sorted(buckets):
        members = sorted(buckets[group_key], key=lambda r: (r.user_id, r.key))
        sums = {m: 0.0 for m in measures}
        for row in members:
            for m in measures:
                sums[m] += row.measures[m]
        groups.append(
            AggregateGroup(
                key=group_key,
                sums=sums,
                rows=len(members),
                users=len({r.user_id for r in members}),
            )
        )
    return AggregateTable(
        app=app, period=period, keys=keys, measures=measures, groups=tuple(groups)
    )


def inject_aggregate(template: Workbook, region: RangeRef, table: AggregateTable) -> Workbook:
    """Write an aggregate table into a region of a template workbook.

    Rows land row-major: key values as text, then measure sums, one group
    per row. Region rows beyond the table are blanked so stale fixture
    values cannot leak into totals. The caller recalculates.
    """
    need_rows = len(table.groups)
    need_cols = len(table.keys) + len(table.measures)
    if need_rows > region.height or need_cols > region.width:
        raise ValueError(
            f"region too small: table needs {need_rows}x{need_cols}, "
            f"region {region.text()} is {region.height}x{region.width}"
        )
    edits: dict = {}
    for r, group in enumerate(table.groups):
        values: list[CellValue] = list(group.key)
        values.extend(group.sums[m] for m in table.measures)
        for c, value in enumerate(values):
            edits[region.cell_at(r, c)] = value
        for c in range(len(values), region.width):
            edits[region.cell_at(r, c)] = None
    for r in range(need_rows, region.height):
        for c in range(region.width):
            edits[region.cell_at(r, c)] = None
    return set_inputs(template, edits)
