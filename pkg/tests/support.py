"""Random schemas, edits and write histories shared by the property tests.

The shadow model is purely logical: it remembers what was assigned to each
variable and never looks at slots, so it can serve as the oracle for reads
taken through any layout.
"""

from __future__ import annotations

import random

from storage_upgrade.access import read_variable, write_element, write_variable
from storage_upgrade.layout import VariableAccess, compute_layout, encode_key, encode_value
from storage_upgrade.schema import (
    ADDRESS,
    BOOL,
    DynamicArray,
    FixedArray,
    Mapping,
    StateVariable,
    Value,
    ContractSchema,
    fixed_bytes,
    sint,
    uint,
)
from storage_upgrade.store import ContractStorage

VALUE_TYPES = [
    uint(8), uint(16), uint(32), uint(64), uint(128), uint(256),
    sint(8), sint(64), sint(256),
    BOOL, ADDRESS, fixed_bytes(1), fixed_bytes(4), fixed_bytes(20), fixed_bytes(32),
]


def random_value_type(rng: random.Random):
    return rng.choice(VALUE_TYPES)


def random_var_type(rng: random.Random):
    r = rng.random()
    if r < 0.55:
        return Value(random_value_type(rng))
    if r < 0.7:
        return FixedArray(random_value_type(rng), rng.randint(1, 5))
    if r < 0.85:
        return DynamicArray(random_value_type(rng))
    return Mapping(random_value_type(rng), random_value_type(rng))


def random_value(rng: random.Random, t):
    kind = t.kind.value
    bits = 8 * t.width_bytes
    if kind == "uint":
        return rng.randrange(1 << bits)
    if kind == "int":
        return rng.randrange(-(1 << (bits - 1)), 1 << (bits - 1))
    if kind == "bool":
        return rng.random() < 0.5
    return "0x" + rng.randbytes(t.width_bytes).hex()


def build(name: str, vars_, version: int = 1) -> ContractSchema:
    return ContractSchema(name, tuple(StateVariable(n, t, i) for i, (n, t) in enumerate(vars_)), version)


def random_schema(rng: random.Random, max_vars: int = 8) -> ContractSchema:
    n = rng.randint(1, max_vars)
    return build("R", [(f"v{i}", random_var_type(rng)) for i in range(n)])


def random_edit(rng: random.Random, schema: ContractSchema) -> ContractSchema:
    """One to three edits: insert, remove, swap, move, retype."""
    vars_ = [(v.name, v.var_type) for v in schema.variables]
    fresh = 0
    for _ in range(rng.randint(1, 3)):
        op = rng.choice(["insert", "insert", "swap", "move", "remove", "retype"])
        if op == "insert" or len(vars_) < 2:
            vars_.insert(rng.randint(0, len(vars_)), (f"n{fresh}", random_var_type(rng)))
            fresh += 1
        elif op == "swap":
            i, j = rng.sample(range(len(vars_)), 2)
            vars_[i], vars_[j] = vars_[j], vars_[i]
        elif op == "move":
            item = vars_.pop(rng.randrange(len(vars_)))
            vars_.insert(rng.randint(0, len(vars_)), item)
        elif op == "remove":
            vars_.pop(rng.randrange(len(vars_)))
        else:
            i = rng.randrange(len(vars_))
            vars_[i] = (vars_[i][0], random_var_type(rng))
    return build(schema.contract_name, vars_, schema.version + 1)


def random_history(rng: random.Random, schema: ContractSchema, max_writes: int = 20, max_keys: int = 6):
    """Apply random writes to fresh storage; return (storage, shadow).

    Shadow values: scalars, lists for arrays, ``{key: value}`` for mappings.
    """
    layout = compute_layout(schema)
    storage = ContractStorage(version=schema.version)
    shadow: dict = {}
    for _ in range(rng.randint(0, max_writes)):
        var = rng.choice(schema.variables)
        t = var.var_type
        if isinstance(t, Value):
            value = random_value(rng, t.type)
            write_variable(storage, layout, var.name, value)
            shadow[var.name] = value
        elif isinstance(t, FixedArray):
            current = shadow.setdefault(var.name, [default(t.element)] * t.length)
            i = rng.randrange(t.length)
            current[i] = random_value(rng, t.element)
            write_element(storage, layout, VariableAccess(var.name, index=i), current[i])
        elif isinstance(t, DynamicArray):
            values = [random_value(rng, t.element) for _ in range(rng.randint(0, 7))]
            write_variable(storage, layout, var.name, values)
            shadow[var.name] = values
        else:
            entries = shadow.setdefault(var.name, {})
            for _ in range(rng.randint(1, max_keys)):
                key = random_value(rng, t.key)
                value = random_value(rng, t.value)
                write_element(storage, layout, VariableAccess(var.name, key=key), value)
                entries[key_id(t.key, key)] = (key, value)
    return storage, {
        name: ({k: v for k, v in val.values()} if isinstance(val, dict) else val)
        for name, val in shadow.items()
    }


def default(t):
    return False if t.kind.value == "bool" else 0


def key_id(t, key) -> bytes:
    return encode_key(t, key)


def same(t, a, b) -> bool:
    return encode_value(t, a) == encode_value(t, b)


def surviving(old: ContractSchema, new: ContractSchema) -> list[str]:
    out = []
    for v in old.variables:
        nv = new.variable(v.name)
        if nv is not None and nv.var_type == v.var_type:
            out.append(v.name)
    return out


def mismatches(storage, schema: ContractSchema, shadow: dict, names) -> list[str]:
    """Names whose reads through ``schema``'s layout disagree with the shadow."""
    layout = compute_layout(schema)
    bad = []
    for name in names:
        if name not in shadow:
            continue
        t = schema.variable(name).var_type
        actual = read_variable(storage, layout, name)
        expected = shadow[name]
        if isinstance(t, Mapping):
            ok = all(
                same(t.value, actual.get("0x" + encode_key(t.key, k).hex(), default(t.value)), v)
                for k, v in expected.items()
            )
        elif isinstance(t, (FixedArray, DynamicArray)):
            ok = len(actual) == len(expected) and all(same(t.element, a, e) for a, e in zip(actual, expected))
        else:
            ok = same(t.type, actual, expected)
        if not ok:
            bad.append(name)
    return bad
