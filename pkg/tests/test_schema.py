import pytest
from hypothesis import given, settings, strategies as st

from storage_upgrade.errors import DuplicateVariable, SchemaSyntaxError, UnsupportedType
from storage_upgrade.schema import (
    ADDRESS,
    BOOL,
    DynamicArray,
    FixedArray,
    Mapping,
    Value,
    fixed_bytes,
    parse_schema,
    parse_type,
    render_schema,
    sint,
    type_size_bytes,
    uint,
)

from support import VALUE_TYPES, build


def test_parse_four_words():
    s = parse_schema("contract Token { uint256 a; uint256 b; uint256 c; uint256 d; }")
    assert s.contract_name == "Token"
    assert s.names == ["a", "b", "c", "d"]
    assert [v.decl_index for v in s.variables] == [0, 1, 2, 3]
    assert all(v.var_type == Value(uint(256)) for v in s.variables)
    assert s.version == 1


def test_parse_all_shapes():
    s = parse_schema("""
        // comment
        contract Mixed version 3 {
            int8 small;
            bool flag;
            address owner;
            bytes4 sel;
            uint64[3] fixed;
            uint256[] dyn;
            mapping(address => uint128) balances;
        }
    """)
    assert s.version == 3
    types = [v.var_type for v in s.variables]
    assert types == [
        Value(sint(8)), Value(BOOL), Value(ADDRESS), Value(fixed_bytes(4)),
        FixedArray(uint(64), 3), DynamicArray(uint(256)), Mapping(ADDRESS, uint(128)),
    ]


def test_empty_contract():
    s = parse_schema("contract Nothing {}")
    assert s.variables == ()
    assert render_schema(s) == "contract Nothing {\n}\n"


@pytest.mark.parametrize("name,size", [
    ("uint8", 1), ("uint64", 8), ("uint256", 32), ("int128", 16),
    ("bool", 1), ("address", 20), ("bytes1", 1), ("bytes32", 32),
])
def test_type_sizes(name, size):
    assert type_size_bytes(parse_type(name).type) == size


@pytest.mark.parametrize("source,error", [
    ("contract C { uint256 a; uint256 a; }", DuplicateVariable),
    ("contract C { string s; }", UnsupportedType),
    ("contract C { bytes b; }", UnsupportedType),
    ("contract C { uint7 x; }", UnsupportedType),
    ("contract C { uint264 x; }", UnsupportedType),
    ("contract C { bytes33 x; }", UnsupportedType),
    ("contract C { uint256[][] x; }", UnsupportedType),
    ("contract C { mapping(uint256 => uint256[]) m; }", UnsupportedType),
    ("contract C { mapping(uint256 => mapping(uint256 => bool)) m; }", UnsupportedType),
    ("contract C { uint256[0] x; }", SchemaSyntaxError),
    ("contract C { uint256 x }", SchemaSyntaxError),
    ("contract { }", SchemaSyntaxError),
    ("contract C { uint256 x; } trailing", SchemaSyntaxError),
])
def test_rejects(source, error):
    with pytest.raises(error):
        parse_schema(source)


def test_syntax_error_position():
    with pytest.raises(SchemaSyntaxError) as info:
        parse_schema("contract C {\n  uint256 x\n}")
    assert info.value.line == 3
    assert info.value.column == 1


def test_render_is_canonical():
    s = parse_schema("contract C{uint8 a;mapping(bool=>bytes2) m;}")
    assert render_schema(s) == "contract C {\n  uint8 a;\n  mapping(bool => bytes2) m;\n}\n"
    assert "version" not in render_schema(s)
    assert render_schema(s.with_version(4)).startswith("contract C version 4 {")


value_types = st.sampled_from(VALUE_TYPES)
var_types = st.one_of(
    value_types.map(Value),
    st.builds(FixedArray, value_types, st.integers(1, 40)),
    value_types.map(DynamicArray),
    st.builds(Mapping, value_types, value_types),
)
names = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True).filter(
    lambda n: n not in {"contract", "mapping", "version"}
)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(names, var_types), max_size=10, unique_by=lambda d: d[0]), st.integers(1, 50))
def test_round_trip(decls, version):
    schema = build("Gen", decls, version)
    text = render_schema(schema)
    assert parse_schema(text) == schema
    assert render_schema(parse_schema(text)) == text
