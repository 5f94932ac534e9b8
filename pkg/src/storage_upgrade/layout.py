"""Ethereum-convention storage layout.

Slot addresses are plain ``int`` values in ``[0, 2**256)``; arithmetic on
them wraps modulo ``2**256``. Byte offsets count from the low-order end of
a slot word, so the first variable packed into a slot lands in its
least-significant bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from .errors import AccessShapeMismatch, IndexOutOfBounds, InvalidValue, UnknownVariable
from .keccak import keccak256
from .schema import (
    ContractSchema,
    DynamicArray,
    FixedArray,
    Kind,
    Mapping,
    Value,
    ValueType,
    type_size_bytes,
)

SLOT_SPACE = 1 << 256
WORD = 32


def slot_add(base: int, delta: int) -> int:
    return (base + delta) % SLOT_SPACE


def slot_bytes(slot: int) -> bytes:
    return (slot % SLOT_SPACE).to_bytes(WORD, "big")


def slot_hex(slot: int) -> str:
    return f"0x{slot % SLOT_SPACE:064x}"


def parse_slot(text: str | int) -> int:
    if isinstance(text, int):
        value = text
    else:
        value = int(text, 16) if text.lower().startswith("0x") else int(text)
    if not 0 <= value < SLOT_SPACE:
        raise ValueError(f"slot {text!r} outside 256-bit address space")
    return value


# --- locations -------------------------------------------------------------


@dataclass(frozen=True)
class Packed:
    slot: int
    byte_offset: int
    size_bytes: int
    value_type: ValueType | None = field(default=None, compare=False)


@dataclass(frozen=True)
class FixedArrayAt:
    base_slot: int
    element: ValueType
    length: int

    @property
    def slot_count(self) -> int:
        return array_slot_count(self.element, self.length)


@dataclass(frozen=True)
class DynArrayAt:
    p: int
    element: ValueType


@dataclass(frozen=True)
class MappingAt:
    p: int
    key: ValueType
    value: ValueType


VarLocation = Union[Packed, FixedArrayAt, DynArrayAt, MappingAt]


@dataclass(frozen=True)
class StorageLayout:
    schema_version: int
    locations: dict[str, VarLocation]
    slots_used_header: int

    def __getitem__(self, name: str) -> VarLocation:
        try:
            return self.locations[name]
        except KeyError:
            raise UnknownVariable(f"no state variable named {name!r}") from None

    def static_slots(self, name: str) -> list[int]:
        """Header-region slots occupied by ``name``."""
        loc = self[name]
        if isinstance(loc, Packed):
            return [loc.slot]
        if isinstance(loc, FixedArrayAt):
            return [loc.base_slot + k for k in range(loc.slot_count)]
        return [loc.p]


def elements_per_slot(element: ValueType) -> int:
    return WORD // type_size_bytes(element)


def array_slot_count(element: ValueType, length: int) -> int:
    return math.ceil(length / elements_per_slot(element)) if length else 0


def element_position(element: ValueType, index: int) -> tuple[int, int]:
    """``(slot delta, byte offset)`` of element ``index`` within an array region.

    Elements never straddle slots: a slot holds ``32 // size`` of them.
    """
    per_slot = elements_per_slot(element)
    return index // per_slot, (index % per_slot) * type_size_bytes(element)


def compute_layout(schema: ContractSchema) -> StorageLayout:
    locations: dict[str, VarLocation] = {}
    slot, used = 0, 0  # ``used`` bytes of the current slot are taken

    def fresh_slot():
        nonlocal slot, used
        if used:
            slot += 1
            used = 0

    for var in schema.variables:
        t = var.var_type
        if isinstance(t, Value):
            size = type_size_bytes(t.type)
            if used + size > WORD:
                fresh_slot()
            locations[var.name] = Packed(slot, used, size, t.type)
            used += size
            if used == WORD:
                fresh_slot()
            continue
        fresh_slot()
        if isinstance(t, FixedArray):
            locations[var.name] = FixedArrayAt(slot, t.element, t.length)
            slot += array_slot_count(t.element, t.length)
        elif isinstance(t, DynamicArray):
            locations[var.name] = DynArrayAt(slot, t.element)
            slot += 1
        elif isinstance(t, Mapping):
            locations[var.name] = MappingAt(slot, t.key, t.value)
            slot += 1
        else:  # pragma: no cover - VarType is closed
            raise TypeError(f"unknown variable type {t!r}")
    header = slot + (1 if used else 0)
    return StorageLayout(schema.version, locations, header)


def dyn_array_data_base(p: int) -> int:
    return int.from_bytes(keccak256(slot_bytes(p)), "big")


def mapping_value_slot(p: int, key_bytes: bytes) -> int:
    if len(key_bytes) != WORD:
        raise ValueError("mapping key must be a 32-byte word")
    return int.from_bytes(keccak256(key_bytes + slot_bytes(p)), "big")


# --- value codec -----------------------------------------------------------


def _hex_to_bytes(text: str) -> bytes:
    body = text[2:] if text.lower().startswith("0x") else text
    if len(body) % 2:
        body = "0" + body
    try:
        return bytes.fromhex(body)
    except ValueError:
        raise InvalidValue(f"malformed hex literal {text!r}") from None


def encode_value(t: ValueType, value) -> bytes:
    """Encode a logical value into its ``width_bytes`` big-endian storage image.

    ``int`` and ``bool`` are numeric values (signed ints become two's
    complement). A hex string (or ``bytes``) is a raw image: left-padded for
    numeric kinds, right-padded for ``bytesN`` as in Solidity literals.
    """
    width = type_size_bytes(t)
    if isinstance(value, str) and not value.lower().startswith("0x"):
        if t.kind is Kind.BOOL and value in ("true", "false"):
            value = value == "true"
        else:
            try:
                value = int(value)
            except ValueError:
                raise InvalidValue(f"cannot encode {value!r} as {t}") from None
    if isinstance(value, str):
        value = _hex_to_bytes(value)
    if isinstance(value, (bytes, bytearray)):
        raw = bytes(value)
        if len(raw) > width:
            raw = raw.lstrip(b"\x00") if t.kind is not Kind.FIXED_BYTES else raw
            if len(raw) > width:
                raise InvalidValue(f"{len(raw)}-byte image does not fit {t}")
        if t.kind is Kind.FIXED_BYTES:
            return raw.ljust(width, b"\x00")
        return raw.rjust(width, b"\x00")
    if isinstance(value, bool):
        value = int(value)
    if not isinstance(value, int):
        raise InvalidValue(f"cannot encode {value!r} as {t}")
    bits = 8 * width
    if t.kind is Kind.SIGNED_INT:
        if not -(1 << (bits - 1)) <= value < (1 << (bits - 1)):
            raise InvalidValue(f"{value} out of range for {t}")
        value %= 1 << bits
    elif t.kind is Kind.BOOL:
        if value not in (0, 1):
            raise InvalidValue(f"{value} is not a bool")
    elif not 0 <= value < (1 << bits):
        raise InvalidValue(f"{value} out of range for {t}")
    return value.to_bytes(width, "big")


def decode_value(t: ValueType, raw: bytes):
    n = int.from_bytes(raw, "big")
    if t.kind is Kind.UNSIGNED_INT:
        return n
    if t.kind is Kind.SIGNED_INT:
        bits = 8 * len(raw)
        return n - (1 << bits) if n >> (bits - 1) else n
    if t.kind is Kind.BOOL:
        return n != 0
    return "0x" + raw.hex()


def encode_key(t: ValueType, key) -> bytes:
    """Canonical 32-byte mapping key: numeric kinds left-padded (signed ints
    sign-extended), ``bytesN`` left-aligned."""
    image = encode_value(t, key)
    if t.kind is Kind.FIXED_BYTES:
        return image.ljust(WORD, b"\x00")
    if t.kind is Kind.SIGNED_INT and image[0] & 0x80:
        return image.rjust(WORD, b"\xff")
    return image.rjust(WORD, b"\x00")


# --- access resolution -----------------------------------------------------


@dataclass(frozen=True)
class VariableAccess:
    name: str
    index: int | None = None
    key: object = None

    def __str__(self) -> str:
        if self.index is not None:
            return f"{self.name}[{self.index}]"
        if self.key is not None:
            return f"{self.name}[{self.key}]"
        return self.name


def parse_access(text: str, layout: StorageLayout) -> VariableAccess:
    """Parse ``name``, ``name[3]`` or ``name[0x05]`` against a layout."""
    text = text.strip()
    if "[" not in text:
        return VariableAccess(text)
    if not text.endswith("]"):
        raise AccessShapeMismatch(f"malformed access {text!r}")
    name, selector = text[:-1].split("[", 1)
    name, selector = name.strip(), selector.strip()
    loc = layout[name]
    if isinstance(loc, MappingAt):
        return VariableAccess(name, key=selector)
    if isinstance(loc, (FixedArrayAt, DynArrayAt)):
        try:
            return VariableAccess(name, index=int(selector, 0))
        except ValueError:
            raise AccessShapeMismatch(f"array index {selector!r} is not an integer") from None
    raise AccessShapeMismatch(f"{name!r} is a scalar and takes no selector")


def locate(layout: StorageLayout, access: VariableAccess, dyn_length: int | None = None):
    """Physical ``(slot, byte_offset, size_bytes)`` of an element-level access.

    ``dyn_length`` is the current length of a dynamic array, when known; it is
    runtime state, so without it only the index sign is checked.
    """
    loc = layout[access.name]
    if isinstance(loc, Packed):
        if access.index is not None or access.key is not None:
            raise AccessShapeMismatch(f"{access.name!r} is a scalar and takes no selector")
        return loc.slot, loc.byte_offset, loc.size_bytes
    if isinstance(loc, MappingAt):
        if access.key is None or access.index is not None:
            raise AccessShapeMismatch(f"mapping {access.name!r} needs a key")
        slot = mapping_value_slot(loc.p, encode_key(loc.key, access.key))
        return slot, 0, type_size_bytes(loc.value)
    if access.index is None or access.key is not None:
        raise AccessShapeMismatch(f"array {access.name!r} needs an index")
    i = access.index
    if isinstance(loc, FixedArrayAt):
        if not 0 <= i < loc.length:
            raise IndexOutOfBounds(f"{access.name}[{i}] outside length {loc.length}")
        delta, offset = element_position(loc.element, i)
        return slot_add(loc.base_slot, delta), offset, type_size_bytes(loc.element)
    if i < 0 or (dyn_length is not None and i >= dyn_length):
        raise IndexOutOfBounds(f"{access.name}[{i}] outside length {dyn_length}")
    delta, offset = element_position(loc.element, i)
    return slot_add(dyn_array_data_base(loc.p), delta), offset, type_size_bytes(loc.element)


def kind_name(loc: VarLocation) -> str:
    return {
        Packed: "value",
        FixedArrayAt: "fixed_array",
        DynArrayAt: "dyn_array",
        MappingAt: "mapping",
    }[type(loc)]


def layout_rows(schema: ContractSchema, layout: StorageLayout) -> list[dict]:
    """One row per variable, used by the CLI table and JSON output."""
    rows = []
    for var in schema.variables:
        loc = layout.locations[var.name]
        row = {"name": var.name, "type": str(var.var_type), "kind": kind_name(loc)}
        if isinstance(loc, Packed):
            row.update(slot=slot_hex(loc.slot), offset=loc.byte_offset, size=loc.size_bytes)
        elif isinstance(loc, FixedArrayAt):
            row.update(slot=slot_hex(loc.base_slot), offset=0, size=loc.slot_count * WORD)
        elif isinstance(loc, DynArrayAt):
            row.update(slot=slot_hex(loc.p), offset=0, size=WORD,
                       data_base=slot_hex(dyn_array_data_base(loc.p)))
        else:
            row.update(slot=slot_hex(loc.p), offset=0, size=WORD, value_slot="keccak256(key . p)")
        rows.append(row)
    return rows
