import numpy as np
import pytest
from hypothesis import given, strategies as st

from colforth.builder import (
    BEGIN_LIST,
    END_LIST,
    BuilderCommand,
    CommandKind,
    Outcome,
    Poisoned,
    TypedArrayBuilder,
    UnbalancedLists,
    UnsupportedDescriptor,
    append,
    new_builder,
    parse_replay,
)
from colforth.bytecode import OutputDtype
from colforth.formats import oracle
from colforth.generators import InvalidCommandMap
from colforth.types import Primitive, Record, nested_list

KINDS = {"begin_list": BEGIN_LIST, "end_list": END_LIST}


def to_commands(pairs):
    return [append(v) if kind == "append" else KINDS[kind] for kind, v in pairs]


def snapshot_bytes(builder):
    return {k: v.tobytes() for k, v in builder.snapshot().items()}


def test_construction():
    b = TypedArrayBuilder(nested_list(3))
    assert {k: v.tolist() for k, v in b.snapshot().items()} == {
        "offsets0": [0], "offsets1": [0], "offsets2": [0], "content": []}
    assert list(TypedArrayBuilder(nested_list(1)).snapshot()) == ["offsets0", "content"]
    with pytest.raises(UnsupportedDescriptor):
        TypedArrayBuilder(Record([("x", nested_list(1))]))
    with pytest.raises(UnsupportedDescriptor):
        TypedArrayBuilder(Primitive("float32"))
    with pytest.raises(UnsupportedDescriptor):
        TypedArrayBuilder(nested_list(2, "int64"))


def test_command_validation():
    with pytest.raises(ValueError):
        BuilderCommand(CommandKind.APPEND)
    with pytest.raises(ValueError):
        BuilderCommand(CommandKind.END_LIST, 1.0)


def test_top_level_commands():
    b = TypedArrayBuilder(nested_list(2))
    assert b.begin_list() is Outcome.ACCEPTED
    b.reset()
    assert b.append(1.0) is Outcome.REJECTED
    with pytest.raises(Poisoned):
        b.begin_list()
    b.reset()
    assert b.end_list() is Outcome.REJECTED


def test_empty_list():
    b = TypedArrayBuilder(nested_list(1))
    b.begin_list()
    assert b.end_list() is Outcome.ACCEPTED
    assert b.finish().columns["offsets0"].tolist() == [0, 0]


def test_depth1_two_lists():
    b = new_builder(nested_list(1))
    assert b.extend(parse_replay("[ 1.5 ] [ 2.5 3.5 ]")) == -1
    result = b.finish()
    assert result.columns["offsets0"].tolist() == [0, 1, 3]
    assert result.columns["content"].tolist() == [1.5, 2.5, 3.5]


def test_depth2_nested():
    b = TypedArrayBuilder(nested_list(2))
    b.extend(parse_replay("[ [ 1.5 ] [ 2.5 3.5 ] ]"))
    result = b.finish()
    assert result.columns["offsets0"].tolist() == [0, 2]
    assert result.columns["offsets1"].tolist() == [0, 1, 3]
    assert result.columns["content"].tolist() == [1.5, 2.5, 3.5]
    assert result.to_list() == [[[1.5], [2.5, 3.5]]]


def test_no_commands():
    result = TypedArrayBuilder(nested_list(2)).finish()
    assert result.length == 0
    assert result.columns["offsets0"].tolist() == [0]
    assert result.columns["offsets1"].tolist() == [0]
    assert len(result.columns["content"]) == 0


def test_unbalanced():
    b = TypedArrayBuilder(nested_list(2))
    b.begin_list()
    with pytest.raises(UnbalancedLists):
        b.finish()


def test_float64_leaf_and_narrowing():
    b = TypedArrayBuilder(nested_list(1, "float64"))
    b.extend([BEGIN_LIST, append(0.1), END_LIST])
    assert b.finish().columns["content"].tolist() == [0.1]
    b = TypedArrayBuilder(nested_list(1, "float32"))
    b.extend([BEGIN_LIST, append(0.1), END_LIST])
    assert b.finish().columns["content"].tolist() == [float(np.float32(0.1))]


def test_custom_command_ids():
    b = TypedArrayBuilder(nested_list(1), {"begin_list": 7, "end_list": 8, "append": 9})
    assert b.extend(parse_replay("[ 1 2 ]")) == -1
    assert b.finish().to_list() == [[1.0, 2.0]]
    with pytest.raises(InvalidCommandMap):
        TypedArrayBuilder(nested_list(1), {"append": 0})


def test_program_is_fixed_after_construction():
    b = TypedArrayBuilder(nested_list(2))
    program = b.machine.program
    b.extend(parse_replay("[ [ 1 ] ]"))
    b.reset()
    b.extend(parse_replay("[ ]"))
    assert b.machine.program is program


def test_reset_clears_data():
    b = TypedArrayBuilder(nested_list(1))
    b.extend(parse_replay("[ 1 2 ]"))
    b.reset()
    assert b.finish().length == 0


def test_replay_parse_errors():
    with pytest.raises(ValueError):
        parse_replay("[ one ]")


def random_stream(rng, depth, n):
    values = oracle.random_nested_columns(rng, n, depth, 2.0, OutputDtype.FLOAT32).to_list()
    return values, oracle.commands_for(values, depth)


def test_oracle_equivalence(rng):
    for _ in range(40):
        depth = int(rng.integers(1, 5))
        values, pairs = random_stream(rng, depth, int(rng.integers(0, 30)))
        b = TypedArrayBuilder(nested_list(depth))
        assert b.extend(to_commands(pairs)) == -1
        result = b.finish()
        expected, rejected = oracle.build_from_commands(pairs, depth)
        assert rejected == -1
        assert {k: v.tobytes() for k, v in result.columns.items()} == \
            {k: v.tobytes() for k, v in expected.items()}
        assert result.to_list() == values


def ill_typed_at(depth, level):
    """Commands that the builder must reject at nesting ``level``."""
    bad = []
    if level < depth:
        bad.append(("append", 1.0))
    if level == depth:
        bad.append(("begin_list", None))
    if level == 0:
        bad.append(("end_list", None))
    return bad


def test_rejection_is_safe(rng):
    for _ in range(60):
        depth = int(rng.integers(1, 5))
        _, pairs = random_stream(rng, depth, int(rng.integers(1, 10)))
        cut = int(rng.integers(0, len(pairs) + 1))
        level = sum(1 if k == "begin_list" else -1 if k == "end_list" else 0 for k, _ in pairs[:cut])
        options = ill_typed_at(depth, level)
        bad = options[int(rng.integers(0, len(options)))]
        stream = pairs[:cut] + [bad] + pairs[cut:]

        b = TypedArrayBuilder(nested_list(depth))
        assert b.extend(to_commands(pairs[:cut])) == -1
        before = snapshot_bytes(b)
        assert b.send(to_commands([bad])[0]) is Outcome.REJECTED
        assert snapshot_bytes(b) == before
        assert b.machine.error.value == "user halt"

        b.reset()
        assert b.extend(to_commands(stream)) == cut
        expected, rejected = oracle.build_from_commands(stream, depth)
        assert rejected == cut
        assert snapshot_bytes(b) == {k: v.tobytes() for k, v in expected.items()}


@given(st.lists(st.sampled_from(["begin_list", "end_list", "append"]), max_size=40), st.integers(1, 4))
def test_arbitrary_streams_match_oracle(kinds, depth):
    pairs = [(k, 0.5 if k == "append" else None) for k in kinds]
    b = TypedArrayBuilder(nested_list(depth))
    got = b.extend(to_commands(pairs))
    expected, rejected = oracle.build_from_commands(pairs, depth)
    assert got == rejected
    assert snapshot_bytes(b) == {k: v.tobytes() for k, v in expected.items()}
