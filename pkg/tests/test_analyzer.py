import random

import pytest

from storage_upgrade.access import read_variable, write_variable
from storage_upgrade.analyzer import (
    SCRATCH_SLOT,
    ClearDynArray,
    ClearMapping,
    ClearRange,
    MigrationPlan,
    MoveBytes,
    RehashMapping,
    RelocateDynArray,
    UseScratch,
    diff_layouts,
    plan_touched_slots,
)
from storage_upgrade.errors import PlanCorrupt, VersionMismatch
from storage_upgrade.layout import compute_layout
from storage_upgrade.reorganizer import apply_plan
from storage_upgrade.schema import Value, parse_schema, uint
from storage_upgrade.store import ContractStorage

from support import mismatches, random_edit, random_history, random_schema, surviving


def schema(body: str, version: int = 1):
    return parse_schema(f"contract T version {version} {{ {body} }}")


SWAP_OLD = schema("uint256 a; uint256 b; uint256 c; uint256 d;")
SWAP_NEW = schema("uint256 a; uint256 c; uint256 b; uint256 e; uint256 d;", 2)


def test_swap_and_insert_plan():
    plan = diff_layouts(SWAP_OLD, SWAP_NEW)
    S = SCRATCH_SLOT
    assert plan.steps == (
        MoveBytes(3, 0, 4, 0, 32),
        UseScratch(S),
        MoveBytes(2, 0, S, 0, 32),
        MoveBytes(1, 0, 2, 0, 32),
        MoveBytes(S, 0, 1, 0, 32),
        ClearRange(S, 0, 32),
        ClearRange(3, 0, 32),
    )
    assert plan.warnings == ()


def test_array_shift_plan():
    old = schema("uint256 x; uint256[] arr;")
    new = schema("uint256 x; uint256 y; uint256[] arr;", 2)
    assert diff_layouts(old, new).steps == (RelocateDynArray("arr", 1, 2, uint(256)),)


def test_identical_schemas_give_empty_plan():
    assert diff_layouts(SWAP_OLD, SWAP_OLD.with_version(2)).steps == ()


def test_version_must_advance_by_one():
    with pytest.raises(VersionMismatch):
        diff_layouts(SWAP_OLD, SWAP_NEW.with_version(3))
    with pytest.raises(VersionMismatch):
        diff_layouts(SWAP_OLD, SWAP_OLD)


def test_mapping_shift_rehashes():
    old = schema("mapping(uint256 => uint256) m;")
    new = schema("uint8 z; mapping(uint256 => uint256) m;", 2)
    assert diff_layouts(old, new).steps == (RehashMapping("m", 0, 1, uint(256), uint(256)),)


def test_removed_and_retyped_variables_warn():
    old = schema("uint256 a; uint256[] gone; mapping(uint8 => bool) m; uint64 t;")
    new = schema("uint256 a; uint128 t;", 2)
    plan = diff_layouts(old, new)
    assert len(plan.warnings) == 3
    assert ClearDynArray("gone", 1, uint(256)) in plan.steps
    assert any(isinstance(s, ClearMapping) for s in plan.steps)
    assert plan.steps.index(ClearDynArray("gone", 1, uint(256))) < 2


def test_packed_swap_within_one_slot():
    old = schema("uint64 a; uint64 b;")
    new = schema("uint64 b; uint64 a;", 2)
    plan = diff_layouts(old, new)
    assert any(isinstance(s, UseScratch) for s in plan.steps)
    s = _store(old, {"a": 7, "b": 9})
    apply_plan(s, plan)
    lay = compute_layout(new)
    assert (read_variable(s, lay, "a"), read_variable(s, lay, "b")) == (7, 9)
    assert s.slots.get(SCRATCH_SLOT) is None


def test_swapping_dynamic_arrays_goes_through_scratch():
    old = schema("uint256[] p; uint256[] q;")
    new = schema("uint256[] q; uint256[] p;", 2)
    plan = diff_layouts(old, new)
    s = _store(old, {"p": [1, 2], "q": [3]})
    apply_plan(s, plan)
    lay = compute_layout(new)
    assert read_variable(s, lay, "p") == [1, 2]
    assert read_variable(s, lay, "q") == [3]


def test_plan_json_round_trip_and_hash():
    plan = diff_layouts(SWAP_OLD, SWAP_NEW)
    again = MigrationPlan.loads(plan.dumps())
    assert again == plan
    assert again.plan_hash == plan.plan_hash
    other = diff_layouts(schema("uint256 a;"), schema("uint8 z; uint256 a;", 2))
    assert other.plan_hash != plan.plan_hash


@pytest.mark.parametrize("text", [
    '{"from": 1, "to": 2, "steps": [{"op": "teleport"}]}',
    '{"from": 1, "to": 2, "steps": [{"op": "clear_range", "slot": 0, "offset": 30, "length": 4}]}',
    '{"from": 1, "steps": []}',
])
def test_corrupt_plan_json(text):
    with pytest.raises(PlanCorrupt):
        MigrationPlan.loads(text)


def test_swap_touched_slots():
    plan = diff_layouts(SWAP_OLD, SWAP_NEW)
    assert plan_touched_slots(plan, _store(SWAP_OLD, {})) == {1, 2, 3, 4, SCRATCH_SLOT}


def _store(sch, values):
    s = ContractStorage(version=sch.version)
    lay = compute_layout(sch)
    for name, value in values.items():
        write_variable(s, lay, name, value)
    return s


def _check_order_safe(plan, old_layout, kept):
    """No step overwrites a preserved variable's source before it has been moved."""
    pending = {}
    for name in kept:
        loc = old_layout.locations[name]
        if hasattr(loc, "slot"):
            pending[name] = {(loc.slot, loc.byte_offset + i) for i in range(loc.size_bytes)}
    for step in plan.steps:
        if isinstance(step, MoveBytes):
            if step.var in pending:
                src = {(step.from_slot, step.from_off + i) for i in range(step.length)}
                if src & pending[step.var]:
                    pending.pop(step.var)
            dst = {(step.to_slot, step.to_off + i) for i in range(step.length)}
            for name, cells in pending.items():
                assert not (dst & cells), f"step {step} clobbers unmoved {name}"


def test_random_plans_preserve_and_are_order_safe():
    rng = random.Random(20261014)
    for _ in range(150):
        old = random_schema(rng)
        new = random_edit(rng, old)
        storage, shadow = random_history(rng, old)
        plan = diff_layouts(old, new)
        kept = surviving(old, new)
        moved = {s.var for s in plan.steps if isinstance(s, MoveBytes)}
        _check_order_safe(plan, compute_layout(old), [k for k in kept if k in moved])
        touched = plan_touched_slots(plan, storage)
        report = apply_plan(storage, plan)
        assert report.written <= touched
        assert mismatches(storage, new, shadow, kept) == []


def test_shadow_oracle_flags_skipped_migration():
    """Control: without the plan, relocated variables read wrong through the new layout."""
    rng = random.Random(99)
    flagged = 0
    for _ in range(100):
        old = random_schema(rng)
        new = random_edit(rng, old)
        storage, shadow = random_history(rng, old)
        plan = diff_layouts(old, new)
        if not any(isinstance(s, (MoveBytes, RelocateDynArray, RehashMapping)) for s in plan.steps):
            continue
        # scalars only: an unmigrated array header may hold an absurd "length"
        scalars = [n for n in surviving(old, new) if isinstance(new.variable(n).var_type, Value)]
        flagged += bool(mismatches(storage, new, shadow, scalars))
    assert flagged > 10
