"""Command-line entry point: ``storage-upgrade {layout,diff,migrate,simulate}``.

Machine-readable output goes to stdout as JSON; diagnostics go to stderr.
Exit codes: 0 success, 1 error, 2 plan written with warnings (``diff``).
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from .analyzer import MigrationPlan, diff_layouts
from .errors import UpgradeError
from .layout import compute_layout, layout_rows
from .reorganizer import apply_plan
from .scenario import run_scenario
from .schema import parse_schema
from .store import ContractStorage, dump_json


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - running from a checkout
        return "0.0.0"


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _read(path: str) -> str:
    return Path(path).read_text()


TABLE_COLUMNS = ("name", "kind", "slot", "offset", "size", "base")


def _table(rows: list[dict]) -> str:
    body = []
    for r in rows:
        base = r.get("data_base") or r.get("value_slot") or ""
        body.append((r["name"], r["kind"], r["slot"], str(r["offset"]), str(r["size"]), base))
    widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(TABLE_COLUMNS)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(TABLE_COLUMNS, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines)


def cmd_layout(args) -> int:
    try:
        schema = parse_schema(_read(args.schema))
    except OSError as exc:
        return _fail(str(exc))
    except UpgradeError as exc:
        return _fail(f"{args.schema}: {exc}")
    layout = compute_layout(schema)
    rows = layout_rows(schema, layout)
    if args.format == "json":
        sys.stdout.write(dump_json({
            "contract": schema.contract_name,
            "version": schema.version,
            "slots_used_header": layout.slots_used_header,
            "variables": rows,
        }))
    else:
        print(_table(rows))
    return 0


def cmd_diff(args) -> int:
    try:
        old = parse_schema(_read(args.old))
        new = parse_schema(_read(args.new), default_version=old.version + 1)
        plan = diff_layouts(old, new)
    except OSError as exc:
        return _fail(str(exc))
    except UpgradeError as exc:
        return _fail(f"{exc.code}: {exc}")
    Path(args.plan_out).write_text(plan.dumps())
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(dump_json({
        "from": plan.from_version,
        "to": plan.to_version,
        "steps": len(plan.steps),
        "warnings": len(plan.warnings),
        "plan_hash": "0x" + plan.plan_hash.hex(),
        "plan_file": args.plan_out,
    }))
    return 2 if plan.warnings else 0


def cmd_migrate(args) -> int:
    try:
        storage = ContractStorage.loads(_read(args.snapshot_in))
        plan = MigrationPlan.loads(_read(args.plan))
        report = apply_plan(storage, plan)
    except OSError as exc:
        return _fail(str(exc))
    except UpgradeError as exc:
        return _fail(f"{exc.code}: {exc}")
    Path(args.snapshot_out).write_text(storage.dumps())
    sys.stdout.write(dump_json(report.to_json()))
    return 0


def cmd_simulate(args) -> int:
    try:
        report, _ = run_scenario(args.scenario)
    except UpgradeError as exc:
        return _fail(f"{exc.code}: {exc}")
    sys.stdout.write(dump_json(report.to_json()))
    if not report.passed:
        failure = report.failure or {}
        print(f"assertion failed at action {failure.get('index')}: {failure.get('detail')}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storage-upgrade",
        description="Storage layouts, migration plans and governed in-place contract upgrades.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("layout", help="print the storage layout of a schema file")
    p.add_argument("schema")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("diff", help="write the migration plan between two schema files")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("plan_out")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("migrate", help="apply a plan to a storage snapshot")
    p.add_argument("snapshot_in")
    p.add_argument("plan")
    p.add_argument("snapshot_out")
    p.set_defaults(func=cmd_migrate)

    p = sub.add_parser("simulate", help="run a scenario on the simulated chain")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
