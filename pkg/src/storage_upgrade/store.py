"""Sparse emulation of one contract account's storage.

Absent slots read as zero words and writing a zero word deletes the entry, so
``slots`` only ever holds nonzero words. The mapping-key journal lives beside
the slot space: it is simulator metadata recording every key a mapping has
seen, which is what lets a reorganizer rehash non-enumerable mappings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import RangeError, SnapshotError
from .layout import SLOT_SPACE, WORD, parse_slot, slot_hex

ZERO_WORD = bytes(WORD)


def _check_range(offset: int, length: int) -> None:
    if not (0 <= offset < WORD and 1 <= length <= WORD and offset + length <= WORD):
        raise RangeError(f"byte range offset={offset} len={length} does not fit a 32-byte slot")


@dataclass
class ContractStorage:
    slots: dict[int, bytes] = field(default_factory=dict)
    key_journal: dict[str, set[bytes]] = field(default_factory=dict)
    version: int = 1
    write_count: int = 0
    read_count: int = 0

    def read_slot(self, addr: int) -> bytes:
        self.read_count += 1
        return self.slots.get(addr % SLOT_SPACE, ZERO_WORD)

    def write_slot(self, addr: int, word: bytes) -> None:
        if len(word) != WORD:
            raise RangeError(f"slot words are 32 bytes, got {len(word)}")
        self.write_count += 1
        addr %= SLOT_SPACE
        if word == ZERO_WORD:
            self.slots.pop(addr, None)
        else:
            self.slots[addr] = bytes(word)

    def read_bytes(self, addr: int, offset: int, length: int) -> bytes:
        _check_range(offset, length)
        word = self.read_slot(addr)
        end = WORD - offset
        return word[end - length:end]

    def write_bytes(self, addr: int, offset: int, length: int, data: bytes) -> None:
        _check_range(offset, length)
        if len(data) != length:
            raise RangeError(f"expected {length} bytes, got {len(data)}")
        if length == WORD:
            self.write_slot(addr, data)
            return
        word = bytearray(self.read_slot(addr))
        end = WORD - offset
        word[end - length:end] = data
        self.write_slot(addr, bytes(word))

    def journal_key(self, mapping_name: str, key: bytes) -> None:
        if len(key) != WORD:
            raise RangeError("journaled keys are 32-byte words")
        self.key_journal.setdefault(mapping_name, set()).add(bytes(key))

    def journaled_keys(self, mapping_name: str) -> list[bytes]:
        return sorted(self.key_journal.get(mapping_name, ()))

    def copy(self) -> ContractStorage:
        return ContractStorage(
            dict(self.slots),
            {k: set(v) for k, v in self.key_journal.items()},
            self.version,
            self.write_count,
            self.read_count,
        )

    def same_state(self, other: ContractStorage) -> bool:
        """Equality of chain-visible state, ignoring counters."""
        return (self.slots, self.key_journal, self.version) == (
            other.slots, other.key_journal, other.version
        )

    # --- snapshot files ----------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "version": self.version,
            "slots": {slot_hex(k): "0x" + v.hex() for k, v in sorted(self.slots.items())},
            "journal": {
                name: ["0x" + k.hex() for k in sorted(keys)]
                for name, keys in sorted(self.key_journal.items())
                if keys
            },
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> ContractStorage:
        if not isinstance(data, dict) or not isinstance(data.get("slots", {}), dict):
            raise SnapshotError("snapshot must be an object with a 'slots' object")
        storage = cls(version=int(data.get("version", 1)))
        try:
            for k, v in data.get("slots", {}).items():
                word = _word(v)
                if word != ZERO_WORD:
                    storage.slots[parse_slot(k)] = word
            for name, keys in data.get("journal", {}).items():
                for key in keys:
                    storage.journal_key(name, _word(key))
        except (ValueError, TypeError) as exc:
            raise SnapshotError(f"malformed snapshot: {exc}") from None
        return storage

    def dumps(self) -> str:
        return dump_json(self.to_snapshot())

    @classmethod
    def loads(cls, text: str) -> ContractStorage:
        try:
            return cls.from_snapshot(json.loads(text))
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"snapshot is not valid JSON: {exc}") from None


def _word(text: str) -> bytes:
    body = text[2:] if text.lower().startswith("0x") else text
    if len(body) > 2 * WORD:
        raise ValueError(f"word {text!r} longer than 32 bytes")
    return bytes.fromhex(body.rjust(2 * WORD, "0"))


def dump_json(obj) -> str:
    """Deterministic JSON text used for every file this package writes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
