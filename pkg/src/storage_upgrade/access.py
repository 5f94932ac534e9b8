"""Logical reads and writes of state variables through a layout."""

from __future__ import annotations

from .errors import InvalidValue, RangeError
from .layout import (
    DynArrayAt,
    FixedArrayAt,
    MappingAt,
    Packed,
    StorageLayout,
    VariableAccess,
    array_slot_count,
    decode_value,
    dyn_array_data_base,
    element_position,
    encode_key,
    encode_value,
    locate,
    mapping_value_slot,
    slot_add,
)
from .schema import ValueType
from .store import ZERO_WORD, ContractStorage


def element_type(layout: StorageLayout, name: str) -> ValueType:
    """Value type stored by an element-level access to ``name``."""
    loc = layout[name]
    if isinstance(loc, Packed):
        return loc.value_type
    return loc.value if isinstance(loc, MappingAt) else loc.element


# A real chain would run out of gas long before walking an array this long;
# the simulator refuses instead of looping over a corrupt length word.
MAX_DYN_LENGTH = 1 << 24


def checked_length(word: bytes, p: int) -> int:
    n = int.from_bytes(word, "big")
    if n > MAX_DYN_LENGTH:
        raise RangeError(f"dynamic array at slot {p:#x} claims length {n}, above the simulator limit")
    return n


def dyn_length(storage: ContractStorage, p: int) -> int:
    return checked_length(storage.read_slot(p), p)


def read_raw(storage: ContractStorage, layout: StorageLayout, access: VariableAccess) -> bytes:
    loc = layout[access.name]
    length = dyn_length(storage, loc.p) if isinstance(loc, DynArrayAt) and access.index is not None else None
    slot, offset, size = locate(layout, access, length)
    return storage.read_bytes(slot, offset, size)


def read_element(storage: ContractStorage, layout: StorageLayout, access: VariableAccess):
    return decode_value(element_type(layout, access.name), read_raw(storage, layout, access))


def write_element(storage: ContractStorage, layout: StorageLayout, access: VariableAccess, value) -> None:
    loc = layout[access.name]
    image = encode_value(element_type(layout, access.name), value)
    length = dyn_length(storage, loc.p) if isinstance(loc, DynArrayAt) and access.index is not None else None
    slot, offset, size = locate(layout, access, length)
    if isinstance(loc, MappingAt):
        storage.journal_key(access.name, encode_key(loc.key, access.key))
    storage.write_bytes(slot, offset, size, image)


def _array_cells(loc, base: int, length: int):
    for i in range(length):
        delta, offset = element_position(loc.element, i)
        yield i, slot_add(base, delta), offset


def read_variable(storage: ContractStorage, layout: StorageLayout, name: str):
    """Whole logical value of a variable.

    Arrays decode to lists; mappings decode to ``{key word hex: value}`` over
    the journaled keys.
    """
    loc = layout[name]
    if isinstance(loc, Packed):
        return decode_value(loc.value_type, storage.read_bytes(loc.slot, loc.byte_offset, loc.size_bytes))
    if isinstance(loc, MappingAt):
        size = loc.value.width_bytes
        return {
            "0x" + k.hex(): decode_value(loc.value, storage.read_bytes(mapping_value_slot(loc.p, k), 0, size))
            for k in storage.journaled_keys(name)
        }
    if isinstance(loc, FixedArrayAt):
        base, length = loc.base_slot, loc.length
    else:
        base, length = dyn_array_data_base(loc.p), dyn_length(storage, loc.p)
    size = loc.element.width_bytes
    return [
        decode_value(loc.element, storage.read_bytes(slot, offset, size))
        for _, slot, offset in _array_cells(loc, base, length)
    ]


def write_variable(storage: ContractStorage, layout: StorageLayout, name: str, value) -> None:
    """Assign a whole variable. Values are validated before any slot is written."""
    loc = layout[name]
    if isinstance(loc, Packed):
        image = encode_value(loc.value_type, value)
        storage.write_bytes(loc.slot, loc.byte_offset, loc.size_bytes, image)
        return
    if isinstance(loc, MappingAt):
        if not isinstance(value, dict):
            raise InvalidValue(f"mapping {name!r} takes an object of key -> value")
        items = [(encode_key(loc.key, k), encode_value(loc.value, v)) for k, v in value.items()]
        for key_word, image in items:
            storage.journal_key(name, key_word)
            storage.write_bytes(mapping_value_slot(loc.p, key_word), 0, len(image), image)
        return
    if not isinstance(value, (list, tuple)):
        raise InvalidValue(f"array {name!r} takes a list")
    images = [encode_value(loc.element, v) for v in value]
    size = loc.element.width_bytes
    if isinstance(loc, FixedArrayAt):
        if len(images) != loc.length:
            raise InvalidValue(f"{name!r} has fixed length {loc.length}, got {len(images)} values")
        base = loc.base_slot
    else:
        base = dyn_array_data_base(loc.p)
        old_len = dyn_length(storage, loc.p)
        if old_len > len(images):
            # shrinking zeroes the abandoned tail, as Solidity does
            keep = array_slot_count(loc.element, len(images))
            for k in range(keep, array_slot_count(loc.element, old_len)):
                storage.write_slot(slot_add(base, k), ZERO_WORD)
            if images:
                delta, offset = element_position(loc.element, len(images) - 1)
                used = offset + size
                if used < 32 and delta == keep - 1:
                    storage.write_bytes(slot_add(base, delta), used, 32 - used, bytes(32 - used))
        storage.write_slot(loc.p, len(images).to_bytes(32, "big"))
    for (_, slot, offset), image in zip(_array_cells(loc, base, len(images)), images):
        storage.write_bytes(slot, offset, size, image)
