"""In-place execution of migration plans against contract storage."""

from __future__ import annotations

from dataclasses import dataclass, field

from .access import checked_length, dyn_length
from .analyzer import (
    ClearDynArray,
    ClearMapping,
    ClearRange,
    MigrationPlan,
    MoveBytes,
    RehashMapping,
    RelocateDynArray,
    UseScratch,
    validate_step,
)
from .errors import InvalidValue, PlanCorrupt, RangeError, ScratchNotRestored, VersionMismatch
from .layout import (
    SLOT_SPACE,
    WORD,
    FixedArrayAt,
    MappingAt,
    Packed,
    StorageLayout,
    array_slot_count,
    dyn_array_data_base,
    element_position,
    encode_key,
    encode_value,
    mapping_value_slot,
    slot_add,
)
from .store import ZERO_WORD, ContractStorage


@dataclass(frozen=True)
class ApplyReport:
    steps_executed: int
    slots_written: int
    slots_read: int
    write_ops: int
    read_ops: int
    written: frozenset = field(default=frozenset(), repr=False)

    def to_json(self) -> dict:
        return {
            "steps_executed": self.steps_executed,
            "slots_written": self.slots_written,
            "slots_read": self.slots_read,
            "write_ops": self.write_ops,
            "read_ops": self.read_ops,
        }


class _TrackedStorage(ContractStorage):
    """Staging copy that records which slots a plan touched."""

    def __init__(self, base: ContractStorage):
        clone = base.copy()
        super().__init__(clone.slots, clone.key_journal, clone.version)
        self.read_set: set[int] = set()
        self.write_set: set[int] = set()

    def read_slot(self, addr: int) -> bytes:
        self.read_set.add(addr % SLOT_SPACE)
        return super().read_slot(addr)

    def write_slot(self, addr: int, word: bytes) -> None:
        self.write_set.add(addr % SLOT_SPACE)
        super().write_slot(addr, word)


def _region(p: int, element, length: int) -> list[int]:
    base = dyn_array_data_base(p)
    return [slot_add(base, k) for k in range(array_slot_count(element, length))]


def _relocate(s: _TrackedStorage, step: RelocateDynArray) -> None:
    length = dyn_length(s, step.old_p)
    old = _region(step.old_p, step.element, length)
    new = _region(step.new_p, step.element, length)
    if set(old) & set(new) or step.old_p in new or step.new_p in old:
        raise PlanCorrupt(f"old and new data regions of {step.name!r} overlap")
    for src, dst in zip(old, new):  # ascending index
        s.write_slot(dst, s.read_slot(src))
    for src in old:
        s.write_slot(src, ZERO_WORD)
    s.write_slot(step.new_p, length.to_bytes(WORD, "big"))
    s.write_slot(step.old_p, ZERO_WORD)


def _rehash(s: _TrackedStorage, step: RehashMapping) -> None:
    keys = s.journaled_keys(step.name)
    pairs = [(mapping_value_slot(step.old_p, k), mapping_value_slot(step.new_p, k)) for k in keys]
    if {o for o, _ in pairs} & {n for _, n in pairs}:
        raise PlanCorrupt(f"old and new value slots of mapping {step.name!r} collide")
    for old, new in pairs:
        s.write_slot(new, s.read_slot(old))
        s.write_slot(old, ZERO_WORD)


def _execute(s: _TrackedStorage, step, scratch: set[int]) -> None:
    if isinstance(step, MoveBytes):
        if step.length == WORD:
            s.write_slot(step.to_slot, s.read_slot(step.from_slot))
        else:
            data = s.read_bytes(step.from_slot, step.from_off, step.length)
            s.write_bytes(step.to_slot, step.to_off, step.length, data)
    elif isinstance(step, ClearRange):
        s.write_bytes(step.slot, step.offset, step.length, bytes(step.length))
    elif isinstance(step, UseScratch):
        if s.read_slot(step.slot) != ZERO_WORD:
            raise PlanCorrupt(f"scratch slot {step.slot:#x} holds live data")
        scratch.add(step.slot)
    elif isinstance(step, RelocateDynArray):
        _relocate(s, step)
    elif isinstance(step, RehashMapping):
        _rehash(s, step)
    elif isinstance(step, ClearDynArray):
        length = dyn_length(s, step.p)
        for slot in _region(step.p, step.element, length):
            s.write_slot(slot, ZERO_WORD)
        s.write_slot(step.p, ZERO_WORD)
    elif isinstance(step, ClearMapping):
        for k in s.journaled_keys(step.name):
            s.write_slot(mapping_value_slot(step.p, k), ZERO_WORD)
        s.key_journal.pop(step.name, None)


def apply_plan(s: ContractStorage, plan: MigrationPlan) -> ApplyReport:
    """Execute ``plan`` in order against ``s``, all-or-nothing.

    Steps run on a staged copy which replaces ``s``'s contents only once every
    step has succeeded and every scratch slot is back to zero.
    """
    if s.version != plan.from_version:
        raise VersionMismatch(f"storage is at version {s.version}, plan migrates from {plan.from_version}")
    if plan.to_version != plan.from_version + 1:
        raise VersionMismatch(f"plan jumps from version {plan.from_version} to {plan.to_version}")
    for step in plan.steps:
        validate_step(step)
    work = _TrackedStorage(s)
    scratch: set[int] = set()
    for step in plan.steps:
        _execute(work, step, scratch)
    if any(work.slots.get(slot) for slot in scratch):
        raise ScratchNotRestored(f"scratch slots not zero after plan: {sorted(hex(x) for x in scratch)}")

    s.slots, s.key_journal, s.version = work.slots, work.key_journal, plan.to_version
    s.read_count += work.read_count
    s.write_count += work.write_count
    return ApplyReport(
        steps_executed=len(plan.steps),
        slots_written=len(work.write_set),
        slots_read=len(work.read_set),
        write_ops=work.write_count,
        read_ops=work.read_count,
        written=frozenset(work.write_set),
    )


def _same_image(t, value, raw: bytes) -> bool:
    try:
        return encode_value(t, value) == raw
    except InvalidValue:
        return False


def verify_post_state(s: ContractStorage, new_layout: StorageLayout, shadow: dict) -> bool:
    """True iff every variable in ``shadow`` reads back equal through ``new_layout``.

    Shadow values are logical: scalars, lists for arrays, ``{key: value}``
    dicts for mappings (only the listed keys are checked).
    """
    slots = s.slots

    def raw(slot, offset, size):
        word = slots.get(slot % SLOT_SPACE, ZERO_WORD)
        return word[WORD - offset - size:WORD - offset]

    for name, expected in shadow.items():
        loc = new_layout.locations.get(name)
        if loc is None:
            return False
        if isinstance(loc, Packed):
            if not _same_image(loc.value_type, expected, raw(loc.slot, loc.byte_offset, loc.size_bytes)):
                return False
        elif isinstance(loc, MappingAt):
            for key, value in expected.items():
                slot = mapping_value_slot(loc.p, encode_key(loc.key, key))
                if not _same_image(loc.value, value, raw(slot, 0, loc.value.width_bytes)):
                    return False
        else:
            if isinstance(loc, FixedArrayAt):
                base, length = loc.base_slot, loc.length
            else:
                base = dyn_array_data_base(loc.p)
                try:
                    length = checked_length(slots.get(loc.p, ZERO_WORD), loc.p)
                except RangeError:
                    return False
            if length != len(expected):
                return False
            size = loc.element.width_bytes
            for i, value in enumerate(expected):
                delta, offset = element_position(loc.element, i)
                if not _same_image(loc.element, value, raw(slot_add(base, delta), offset, size)):
                    return False
    return True

