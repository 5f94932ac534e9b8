"""Off-chain layout diffing into slot-level migration plans.

Variables are identified by name. A variable present in both schemas with an
identical type is *preserved* and its data is moved to its new location;
anything else in the old schema is dropped and its storage cleared.

Plans are ordered so that no step reads a byte range an earlier step has
overwritten. Moves form a dependency graph (``X`` must wait for ``Y`` when
``X`` writes over ``Y``'s source); cycles are broken by parking one node's
data in a scratch slot at the top of the address space.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Union

from .access import checked_length
from .errors import PlanCorrupt, VersionMismatch
from .keccak import keccak256
from .layout import (
    SLOT_SPACE,
    WORD,
    DynArrayAt,
    FixedArrayAt,
    MappingAt,
    Packed,
    array_slot_count,
    compute_layout,
    dyn_array_data_base,
    mapping_value_slot,
    parse_slot,
    slot_add,
    slot_hex,
)
from .schema import ContractSchema, ValueType, parse_value_type
from .store import ContractStorage

SCRATCH_SLOT = SLOT_SPACE - 1
FULL_MASK = (1 << WORD) - 1


# --- plan model ------------------------------------------------------------


@dataclass(frozen=True)
class MoveBytes:
    from_slot: int
    from_off: int
    to_slot: int
    to_off: int
    length: int
    var: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RelocateDynArray:
    name: str
    old_p: int
    new_p: int
    element: ValueType


@dataclass(frozen=True)
class RehashMapping:
    name: str
    old_p: int
    new_p: int
    key: ValueType
    value: ValueType


@dataclass(frozen=True)
class ClearRange:
    slot: int
    offset: int
    length: int


@dataclass(frozen=True)
class UseScratch:
    slot: int


@dataclass(frozen=True)
class ClearDynArray:
    name: str
    p: int
    element: ValueType


@dataclass(frozen=True)
class ClearMapping:
    name: str
    p: int
    key: ValueType
    value: ValueType


MigrationStep = Union[
    MoveBytes, RelocateDynArray, RehashMapping, ClearRange, UseScratch, ClearDynArray, ClearMapping
]


def step_to_json(step: MigrationStep) -> dict:
    if isinstance(step, MoveBytes):
        out = {
            "op": "move_bytes",
            "from_slot": slot_hex(step.from_slot),
            "from_offset": step.from_off,
            "to_slot": slot_hex(step.to_slot),
            "to_offset": step.to_off,
            "length": step.length,
        }
        if step.var is not None:
            out["var"] = step.var
        return out
    if isinstance(step, RelocateDynArray):
        return {"op": "relocate_dyn_array", "name": step.name, "old_p": slot_hex(step.old_p),
                "new_p": slot_hex(step.new_p), "element": str(step.element)}
    if isinstance(step, RehashMapping):
        return {"op": "rehash_mapping", "name": step.name, "old_p": slot_hex(step.old_p),
                "new_p": slot_hex(step.new_p), "key": str(step.key), "value": str(step.value)}
    if isinstance(step, ClearRange):
        return {"op": "clear_range", "slot": slot_hex(step.slot), "offset": step.offset, "length": step.length}
    if isinstance(step, UseScratch):
        return {"op": "use_scratch", "slot": slot_hex(step.slot)}
    if isinstance(step, ClearDynArray):
        return {"op": "clear_dyn_array", "name": step.name, "p": slot_hex(step.p), "element": str(step.element)}
    if isinstance(step, ClearMapping):
        return {"op": "clear_mapping", "name": step.name, "p": slot_hex(step.p),
                "key": str(step.key), "value": str(step.value)}
    raise PlanCorrupt(f"unknown step {step!r}")


def _int_field(d: dict, name: str, lo: int, hi: int) -> int:
    v = d[name]
    if not isinstance(v, int) or isinstance(v, bool) or not lo <= v <= hi:
        raise PlanCorrupt(f"field {name!r}={v!r} outside {lo}..{hi}")
    return v


def step_from_json(d: dict) -> MigrationStep:
    try:
        op = d["op"]
        if op == "move_bytes":
            step = MoveBytes(parse_slot(d["from_slot"]), _int_field(d, "from_offset", 0, 31),
                             parse_slot(d["to_slot"]), _int_field(d, "to_offset", 0, 31),
                             _int_field(d, "length", 1, 32), d.get("var"))
        elif op == "relocate_dyn_array":
            step = RelocateDynArray(d["name"], parse_slot(d["old_p"]), parse_slot(d["new_p"]),
                                    parse_value_type(d["element"]))
        elif op == "rehash_mapping":
            step = RehashMapping(d["name"], parse_slot(d["old_p"]), parse_slot(d["new_p"]),
                                 parse_value_type(d["key"]), parse_value_type(d["value"]))
        elif op == "clear_range":
            step = ClearRange(parse_slot(d["slot"]), _int_field(d, "offset", 0, 31), _int_field(d, "length", 1, 32))
        elif op == "use_scratch":
            step = UseScratch(parse_slot(d["slot"]))
        elif op == "clear_dyn_array":
            step = ClearDynArray(d["name"], parse_slot(d["p"]), parse_value_type(d["element"]))
        elif op == "clear_mapping":
            step = ClearMapping(d["name"], parse_slot(d["p"]), parse_value_type(d["key"]), parse_value_type(d["value"]))
        else:
            raise PlanCorrupt(f"unknown op {op!r}")
    except PlanCorrupt:
        raise
    except Exception as exc:  # missing keys, bad hex, unparseable type names
        raise PlanCorrupt(f"malformed step {d!r}: {exc}") from None
    validate_step(step)
    return step


def validate_step(step) -> None:
    if isinstance(step, MoveBytes):
        for off in (step.from_off, step.to_off):
            if off < 0 or step.length < 1 or off + step.length > WORD:
                raise PlanCorrupt(f"byte range out of slot bounds in {step}")
    elif isinstance(step, ClearRange):
        if step.offset < 0 or step.length < 1 or step.offset + step.length > WORD:
            raise PlanCorrupt(f"byte range out of slot bounds in {step}")
    elif not isinstance(step, (RelocateDynArray, RehashMapping, UseScratch, ClearDynArray, ClearMapping)):
        raise PlanCorrupt(f"unknown step {step!r}")


@dataclass(frozen=True)
class MigrationPlan:
    from_version: int
    to_version: int
    steps: tuple[MigrationStep, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "from": self.from_version,
            "to": self.to_version,
            "steps": [step_to_json(s) for s in self.steps],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, data: dict) -> MigrationPlan:
        if not isinstance(data, dict):
            raise PlanCorrupt("plan must be a JSON object")
        try:
            from_v, to_v = data["from"], data["to"]
            steps = data.get("steps", [])
            warnings = data.get("warnings", [])
        except KeyError as exc:
            raise PlanCorrupt(f"plan missing field {exc}") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (from_v, to_v)):
            raise PlanCorrupt("plan versions must be integers")
        if not isinstance(steps, list) or not all(isinstance(s, dict) for s in steps):
            raise PlanCorrupt("plan steps must be a list of objects")
        return cls(from_v, to_v, tuple(step_from_json(s) for s in steps), tuple(str(w) for w in warnings))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> MigrationPlan:
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise PlanCorrupt(f"plan is not valid JSON: {exc}") from None

    @property
    def plan_hash(self) -> bytes:
        """Keccak-256 over the canonical compact JSON encoding."""
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return keccak256(canonical.encode())


# --- scheduling ------------------------------------------------------------


def _mask(offset: int, length: int) -> int:
    return ((1 << length) - 1) << offset


class _Node:
    """One pending data movement between an old and a new location."""

    def __init__(self, order: int, kind: str, name: str, src, dst, types=()):
        self.order = order
        self.kind = kind  # "move" | "dyn" | "map"
        self.name = name
        self.src = src  # move: (slot, off, len); dyn/map: p
        self.dst = dst
        self.types = types
        self.scratch: int | None = None

    def _resources(self, where):
        if self.kind == "move":
            slot, off, length = where
            return [(("s", slot), _mask(off, length))]
        if self.kind == "dyn":
            return [(("s", where), FULL_MASK), (("arr", where), 1)]
        return [(("map", where), 1)]

    def src_res(self):
        return self._resources(self.src)

    def dst_res(self):
        return self._resources(self.dst)

    def step(self) -> MigrationStep:
        return self._step(self.src, self.dst)

    def _step(self, src, dst) -> MigrationStep:
        if self.kind == "move":
            return MoveBytes(src[0], src[1], dst[0], dst[1], src[2], self.name)
        if self.kind == "dyn":
            return RelocateDynArray(self.name, src, dst, self.types[0])
        return RehashMapping(self.name, src, dst, *self.types)

    def park(self, scratch: int) -> MigrationStep:
        """Move this node's source into ``scratch`` and retarget the source."""
        target = (scratch, 0, self.src[2]) if self.kind == "move" else scratch
        step = self._step(self.src, target)
        self.src = target
        self.scratch = scratch
        return step


def _schedule(nodes: list[_Node]) -> list[MigrationStep]:
    # ``blockers[x]`` = nodes whose source x's destination overwrites
    by_src: dict = {}
    for n in nodes:
        for key, mask in n.src_res():
            by_src.setdefault(key, []).append((n, mask))
    dependents: dict[int, set[int]] = {n.order: set() for n in nodes}
    indegree: dict[int, int] = {n.order: 0 for n in nodes}
    index = {n.order: n for n in nodes}
    for x in nodes:
        for key, mask in x.dst_res():
            for y, src_mask in by_src.get(key, ()):
                if y is not x and mask & src_mask and x.order not in dependents[y.order]:
                    dependents[y.order].add(x.order)
                    indegree[x.order] += 1

    steps: list[MigrationStep] = []
    ready = [o for o, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    done: set[int] = set()
    free_scratch: list[int] = []
    next_scratch = SCRATCH_SLOT
    announced: set[int] = set()

    def release(order: int):
        for dep in dependents[order]:
            indegree[dep] -= 1
            if indegree[dep] == 0 and dep not in done:
                heapq.heappush(ready, dep)
        dependents[order] = set()

    while len(done) < len(nodes):
        if ready:
            order = heapq.heappop(ready)
            node = index[order]
            steps.append(node.step())
            done.add(order)
            if node.scratch is not None:
                if node.kind == "move":
                    steps.append(ClearRange(node.scratch, 0, node.src[2]))
                free_scratch.append(node.scratch)
                free_scratch.sort()
            else:
                release(order)
            continue
        # every pending node waits on another: park the one blocking the most
        pending = [index[o] for o in sorted(index) if o not in done and index[o].scratch is None]
        victim = max(pending, key=lambda n: (len(dependents[n.order]), -n.order))
        if free_scratch:
            scratch = free_scratch.pop()
        else:
            scratch = next_scratch
            next_scratch -= 1
        if scratch not in announced:
            announced.add(scratch)
            steps.append(UseScratch(scratch))
        steps.append(victim.park(scratch))
        release(victim.order)
    return steps


# --- diffing ---------------------------------------------------------------


def _static_ranges(loc):
    """``(slot, mask)`` pairs of a location's header-region bytes."""
    if isinstance(loc, Packed):
        return [(loc.slot, _mask(loc.byte_offset, loc.size_bytes))]
    if isinstance(loc, FixedArrayAt):
        return [(loc.base_slot + k, FULL_MASK) for k in range(loc.slot_count)]
    return [(loc.p, FULL_MASK)]


def _mask_runs(mask: int):
    offset = 0
    while mask:
        if mask & 1:
            length = 0
            while mask & 1:
                length += 1
                mask >>= 1
            yield offset, length
            offset += length
        else:
            mask >>= 1
            offset += 1


def diff_layouts(old_schema: ContractSchema, new_schema: ContractSchema) -> MigrationPlan:
    if new_schema.version != old_schema.version + 1:
        raise VersionMismatch(
            f"new schema version {new_schema.version} must follow old version {old_schema.version}"
        )
    old_l, new_l = compute_layout(old_schema), compute_layout(new_schema)
    warnings: list[str] = []
    preserved: list[str] = []
    for var in old_schema.variables:
        new_var = new_schema.variable(var.name)
        if new_var is None:
            warnings.append(f"variable {var.name!r} removed; its data is cleared")
        elif new_var.var_type != var.var_type:
            warnings.append(
                f"variable {var.name!r} changed type {var.var_type} -> {new_var.var_type}; data not migrated"
            )
        else:
            preserved.append(var.name)
    kept = set(preserved)

    steps: list[MigrationStep] = []
    # dropped dynamic structures first: nothing reads them, and later steps may write over them
    for var in old_schema.variables:
        if var.name in kept:
            continue
        loc = old_l.locations[var.name]
        if isinstance(loc, DynArrayAt):
            steps.append(ClearDynArray(var.name, loc.p, loc.element))
        elif isinstance(loc, MappingAt):
            steps.append(ClearMapping(var.name, loc.p, loc.key, loc.value))

    nodes: list[_Node] = []
    for var in new_schema.variables:
        if var.name not in kept:
            continue
        old, new = old_l.locations[var.name], new_l.locations[var.name]
        if isinstance(old, Packed):
            if (old.slot, old.byte_offset) != (new.slot, new.byte_offset):
                nodes.append(_Node(len(nodes), "move", var.name, (old.slot, old.byte_offset, old.size_bytes),
                                   (new.slot, new.byte_offset, new.size_bytes)))
        elif isinstance(old, FixedArrayAt):
            if old.base_slot != new.base_slot:
                for k in range(old.slot_count):
                    nodes.append(_Node(len(nodes), "move", var.name, (old.base_slot + k, 0, WORD),
                                       (new.base_slot + k, 0, WORD)))
        elif isinstance(old, DynArrayAt):
            if old.p != new.p:
                nodes.append(_Node(len(nodes), "dyn", var.name, old.p, new.p, (old.element,)))
        elif old.p != new.p:
            nodes.append(_Node(len(nodes), "map", var.name, old.p, new.p, (old.key, old.value)))
    steps.extend(_schedule(nodes))

    # zero whatever old header bytes no preserved variable occupies afterwards
    self_clearing = {
        loc.p for name, loc in old_l.locations.items()
        if isinstance(loc, (DynArrayAt, MappingAt))
        and (name not in kept or isinstance(loc, MappingAt) or loc.p != new_l.locations[name].p)
    }
    old_bytes: dict[int, int] = {}
    for loc in old_l.locations.values():
        for slot, mask in _static_ranges(loc):
            if slot not in self_clearing:
                old_bytes[slot] = old_bytes.get(slot, 0) | mask
    keep_bytes: dict[int, int] = {}
    for name in kept:
        for slot, mask in _static_ranges(new_l.locations[name]):
            keep_bytes[slot] = keep_bytes.get(slot, 0) | mask
    for slot in sorted(old_bytes):
        for offset, length in _mask_runs(old_bytes[slot] & ~keep_bytes.get(slot, 0)):
            steps.append(ClearRange(slot, offset, length))

    return MigrationPlan(old_schema.version, new_schema.version, tuple(steps), tuple(warnings))


# --- touched-slot expansion ------------------------------------------------


def plan_touched_slots(plan: MigrationPlan, s: ContractStorage) -> set[int]:
    """Every slot applying ``plan`` to ``s`` could write.

    Array lengths and journaled keys are read straight from ``s`` (without
    touching its counters) and carried symbolically through relocations.
    """
    lengths: dict[int, int] = {}

    def length_at(p: int) -> int:
        if p in lengths:
            return lengths[p]
        return checked_length(s.slots.get(p, bytes(WORD)), p)

    def region(p: int, element: ValueType, length: int):
        base = dyn_array_data_base(p)
        return {slot_add(base, k) for k in range(array_slot_count(element, length))}

    touched: set[int] = set()
    for step in plan.steps:
        if isinstance(step, MoveBytes):
            touched.add(step.to_slot)
        elif isinstance(step, (ClearRange, UseScratch)):
            touched.add(step.slot)
        elif isinstance(step, RelocateDynArray):
            n = length_at(step.old_p)
            touched |= {step.old_p, step.new_p}
            touched |= region(step.old_p, step.element, n) | region(step.new_p, step.element, n)
            lengths[step.new_p], lengths[step.old_p] = n, 0
        elif isinstance(step, ClearDynArray):
            touched.add(step.p)
            touched |= region(step.p, step.element, length_at(step.p))
            lengths[step.p] = 0
        elif isinstance(step, RehashMapping):
            for k in s.journaled_keys(step.name):
                touched |= {mapping_value_slot(step.old_p, k), mapping_value_slot(step.new_p, k)}
        elif isinstance(step, ClearMapping):
            touched |= {mapping_value_slot(step.p, k) for k in s.journaled_keys(step.name)}
    return touched

