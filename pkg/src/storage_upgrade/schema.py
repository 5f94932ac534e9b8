"""Contract-schema DSL: type model, parser and canonical renderer.

Grammar::

    schema  := "contract" IDENT ["version" INT] "{" (decl ";")* "}"
    decl    := TYPE IDENT
    TYPE    := uintN | intN | bool | address | bytesN
             | TYPE "[" INT "]" | TYPE "[" "]"
             | "mapping" "(" TYPE "=>" TYPE ")"

``//`` starts a comment running to end of line. Nested collections (arrays of
arrays, mappings of anything but value types, arrays of mappings) are
rejected with :class:`UnsupportedType`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Union

from .errors import DuplicateVariable, SchemaSyntaxError, UnsupportedType


class Kind(enum.Enum):
    UNSIGNED_INT = "uint"
    SIGNED_INT = "int"
    BOOL = "bool"
    ADDRESS = "address"
    FIXED_BYTES = "bytes"


@dataclass(frozen=True)
class ValueType:
    kind: Kind
    width_bytes: int

    def __post_init__(self):
        if self.kind is Kind.BOOL and self.width_bytes != 1:
            raise UnsupportedType("bool is 1 byte wide")
        if self.kind is Kind.ADDRESS and self.width_bytes != 20:
            raise UnsupportedType("address is 20 bytes wide")
        if not 1 <= self.width_bytes <= 32:
            raise UnsupportedType(f"width {self.width_bytes} outside 1..32 bytes")

    def __str__(self) -> str:
        if self.kind is Kind.BOOL:
            return "bool"
        if self.kind is Kind.ADDRESS:
            return "address"
        if self.kind is Kind.FIXED_BYTES:
            return f"bytes{self.width_bytes}"
        return f"{self.kind.value}{8 * self.width_bytes}"


def uint(bits: int = 256) -> ValueType:
    return ValueType(Kind.UNSIGNED_INT, bits // 8)


def sint(bits: int = 256) -> ValueType:
    return ValueType(Kind.SIGNED_INT, bits // 8)


BOOL = ValueType(Kind.BOOL, 1)
ADDRESS = ValueType(Kind.ADDRESS, 20)


def fixed_bytes(n: int) -> ValueType:
    return ValueType(Kind.FIXED_BYTES, n)


@dataclass(frozen=True)
class Value:
    type: ValueType

    def __str__(self) -> str:
        return str(self.type)


@dataclass(frozen=True)
class FixedArray:
    element: ValueType
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise UnsupportedType("fixed array length must be >= 1")

    def __str__(self) -> str:
        return f"{self.element}[{self.length}]"


@dataclass(frozen=True)
class DynamicArray:
    element: ValueType

    def __str__(self) -> str:
        return f"{self.element}[]"


@dataclass(frozen=True)
class Mapping:
    key: ValueType
    value: ValueType

    def __str__(self) -> str:
        return f"mapping({self.key} => {self.value})"


VarType = Union[Value, FixedArray, DynamicArray, Mapping]


@dataclass(frozen=True)
class StateVariable:
    name: str
    var_type: VarType
    decl_index: int


@dataclass(frozen=True)
class ContractSchema:
    contract_name: str
    variables: tuple[StateVariable, ...] = ()
    version: int = 1

    def __post_init__(self):
        if self.version < 1:
            raise ValueError("schema version must be >= 1")
        seen = set()
        for i, var in enumerate(self.variables):
            if var.decl_index != i:
                raise ValueError(f"variable {var.name!r} has decl_index {var.decl_index}, expected {i}")
            if var.name in seen:
                raise DuplicateVariable(f"duplicate state variable {var.name!r}")
            seen.add(var.name)

    def variable(self, name: str) -> StateVariable | None:
        for var in self.variables:
            if var.name == name:
                return var
        return None

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def with_version(self, version: int) -> ContractSchema:
        return ContractSchema(self.contract_name, self.variables, version)


def build_schema(contract_name: str, decls, version: int = 1) -> ContractSchema:
    """Convenience constructor from ``(name, var_type)`` pairs."""
    variables = tuple(StateVariable(name, t, i) for i, (name, t) in enumerate(decls))
    return ContractSchema(contract_name, variables, version)


def type_size_bytes(t: ValueType) -> int:
    return t.width_bytes


# --- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<int>[0-9]+)"
    r"|(?P<arrow>=>)|(?P<punct>[{}();\[\]])"
)

_UINT_RE = re.compile(r"u?int([0-9]+)")
_BYTES_RE = re.compile(r"bytes([0-9]+)")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise SchemaSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: _Token | None = None) -> SchemaSyntaxError:
        tok = tok or self.tok
        return SchemaSyntaxError(message, tok.line, tok.column)

    def expect(self, text: str) -> _Token:
        tok = self.tok
        if tok.text != text or tok.kind == "eof":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        self.pos += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> _Token:
        tok = self.tok
        if tok.kind != kind:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(f"expected {what}, found {found}")
        self.pos += 1
        return tok

    def parse(self, default_version: int) -> ContractSchema:
        self.expect("contract")
        name = self.expect_kind("ident", "contract name").text
        version = default_version
        if self.tok.text == "version":
            self.pos += 1
            vtok = self.expect_kind("int", "version number")
            version = int(vtok.text)
            if version < 1:
                raise self.error("version must be >= 1", vtok)
        self.expect("{")
        variables: list[StateVariable] = []
        seen: set[str] = set()
        while self.tok.text != "}":
            if self.tok.kind == "eof":
                raise self.error("expected '}', found end of input")
            var_type = self.parse_type()
            ident = self.expect_kind("ident", "variable name")
            if ident.text in seen:
                raise DuplicateVariable(
                    f"line {ident.line}, column {ident.column}: duplicate state variable {ident.text!r}"
                )
            seen.add(ident.text)
            self.expect(";")
            variables.append(StateVariable(ident.text, var_type, len(variables)))
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after contract body")
        return ContractSchema(name, tuple(variables), version)

    def parse_type(self) -> VarType:
        tok = self.tok
        if tok.text == "mapping":
            self.pos += 1
            self.expect("(")
            key = self.parse_type()
            self.expect("=>")
            value = self.parse_type()
            self.expect(")")
            if not isinstance(key, Value) or not isinstance(value, Value):
                raise UnsupportedType(
                    f"line {tok.line}, column {tok.column}: mapping keys and values must be value types"
                )
            t: VarType = Mapping(key.type, value.type)
        else:
            t = Value(self.parse_value_type())
        while self.tok.text == "[":
            bracket = self.tok
            self.pos += 1
            if not isinstance(t, Value):
                raise UnsupportedType(
                    f"line {bracket.line}, column {bracket.column}: nested collection types are not supported"
                )
            if self.tok.text == "]":
                self.pos += 1
                t = DynamicArray(t.type)
            else:
                ntok = self.expect_kind("int", "array length")
                self.expect("]")
                if int(ntok.text) < 1:
                    raise self.error("fixed array length must be >= 1", ntok)
                t = FixedArray(t.type, int(ntok.text))
        return t

    def parse_value_type(self) -> ValueType:
        tok = self.expect_kind("ident", "type name")
        text = tok.text
        where = f"line {tok.line}, column {tok.column}"
        if text == "bool":
            return BOOL
        if text == "address":
            return ADDRESS
        m = _UINT_RE.fullmatch(text)
        if m:
            bits = int(m.group(1))
            if bits % 8 or not 8 <= bits <= 256:
                raise UnsupportedType(f"{where}: integer width {bits} not a multiple of 8 in 8..256")
            kind = Kind.UNSIGNED_INT if text.startswith("u") else Kind.SIGNED_INT
            return ValueType(kind, bits // 8)
        m = _BYTES_RE.fullmatch(text)
        if m:
            n = int(m.group(1))
            if not 1 <= n <= 32:
                raise UnsupportedType(f"{where}: bytes{n} outside bytes1..bytes32")
            return fixed_bytes(n)
        if text in ("string", "bytes", "uint", "int"):
            raise UnsupportedType(f"{where}: type {text!r} is not supported")
        raise UnsupportedType(f"{where}: unknown type {text!r}")


def parse_schema(source: str, default_version: int = 1) -> ContractSchema:
    """Parse DSL source into a validated :class:`ContractSchema`.

    ``default_version`` applies when the source carries no ``version`` clause.
    """
    return _Parser(source).parse(default_version)


def parse_type(text: str) -> VarType:
    """Parse a standalone type expression such as ``uint64[]``."""
    p = _Parser(text)
    t = p.parse_type()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after type")
    return t


def parse_value_type(text: str) -> ValueType:
    t = parse_type(text)
    if not isinstance(t, Value):
        raise UnsupportedType(f"{text!r} is not a value type")
    return t.type


def render_schema(schema: ContractSchema) -> str:
    """Canonical text form: one declaration per line, two-space indent."""
    header = f"contract {schema.contract_name}"
    if schema.version != 1:
        header += f" version {schema.version}"
    if not schema.variables:
        return header + " {\n}\n"
    body = "".join(f"  {v.var_type} {v.name};\n" for v in schema.variables)
    return f"{header} {{\n{body}}}\n"
