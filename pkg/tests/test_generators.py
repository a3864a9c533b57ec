import struct

import numpy as np
import pytest

from colforth.compiler import compile_source, tokenize
from colforth.formats import oracle
from colforth.formats.basket import write_synthetic_baskets
from colforth.formats.replevels import decode_replevels, levels_to_offsets
from colforth.generators import (
    DEFAULT_COMMAND_IDS,
    InvalidCommandMap,
    UnsupportedSchema,
    gen_avro_program,
    gen_builder_program,
    gen_replevel_decoder,
    gen_replevel_to_offsets,
    gen_tbasket_program,
    replevel_bit_width,
)
from colforth.machine import Machine, StopReason
from colforth.types import Bytes, ListOf, Primitive, Record, String, nested_list

# Reference programs, comments removed.

TBASKET_DEPTH3 = """
input data
input byte_offsets
output offsets0 int32
output offsets1 int32
output offsets2 int32
output content float32
0 offsets0 <- stack
0 offsets1 <- stack
0 offsets2 <- stack
begin
  byte_offsets i-> stack
  6 + data seek
  data !i-> stack
  dup offsets0 +<- stack
  0 do
    data !i-> stack
    dup offsets1 +<- stack
    0 do
      data !i-> stack
      dup offsets2 +<- stack
      data #!f-> content
    loop
  loop
again
"""

AVRO_DEPTH3 = """
input data
output offsets0 int32
output offsets1 int32
output offsets2 int32
output content float32
0 offsets0 <- stack
0 offsets1 <- stack
0 offsets2 <- stack
0 do
  data zigzag-> stack
  dup offsets0 +<- stack
  0 do
    data zigzag-> stack
    dup offsets1 +<- stack
    0 do
      data zigzag-> stack
      dup offsets2 +<- stack
      data #f-> content
      data b-> stack drop
    loop
    data b-> stack drop
  loop
  data b-> stack drop
loop
"""

REPLEVEL_DECODER_MAX3 = """
input data
output replevels uint8
data I-> stack
begin
  data varint-> stack
  dup 1 and
  0= if
    data B-> replevels
    1 rshift 1-
    replevels dup
  else
    1 rshift 8 *
    data #2bit-> replevels
  then
  dup data pos 4 -
until
"""

REPLEVEL_CONVERTER_DEPTH3 = """
input replevels
output offsets0 int32 output offsets1 int32 output offsets2 int32
variable count0 variable count1 variable count2
begin
  replevels b-> stack
  dup 3 = if
    1 count2 +!
  then
  dup 2 = if
    1 count1 +!
    count2 @ offsets2 +<- stack 1 count2 !
  then
  dup 1 = if
    1 count0 +!
    count1 @ offsets1 +<- stack 1 count1 !
    count2 @ offsets2 +<- stack 1 count2 !
  then
  0 = if
    count0 @ offsets0 +<- stack 1 count0 !
    count1 @ offsets1 +<- stack 1 count1 !
    count2 @ offsets2 +<- stack 1 count2 !
  then
  replevels end
until
count0 @ offsets0 +<- stack
count1 @ offsets1 +<- stack
count2 @ offsets2 +<- stack
"""

BUILDER_HEAD = """
input data
output offsets0 int32
output offsets1 int32
output offsets2 int32
output content float32
0 offsets0 <- stack
0 offsets1 <- stack
0 offsets2 <- stack
: node3
  {float32-command} = if
    0 data seek
    data d-> content
  else
    halt
  then
;
{node2} {node1} {node0}
0 begin
  pause node0
again
"""

BUILDER_NODE = """
: {node_name}
  {begin_list-command} <> if
    halt
  then
  0 begin
    pause dup {end_list-command} = if
      drop
      {offsets_name} +<- stack
      exit
    else
      {next_node_name}
      1+
    then
  again
;
"""


def words(source):
    return [t.text for t in tokenize(source)]


def builder_reference(ids):
    def node(k):
        return (BUILDER_NODE.replace("{node_name}", f"node{k}")
                .replace("{begin_list-command}", str(ids["begin_list"]))
                .replace("{end_list-command}", str(ids["end_list"]))
                .replace("{offsets_name}", f"offsets{k}")
                .replace("{next_node_name}", f"node{k + 1}"))
    return (BUILDER_HEAD.replace("{float32-command}", str(ids["append"]))
            .replace("{node2}", node(2)).replace("{node1}", node(1)).replace("{node0}", node(0)))


# -- structural identity with the reference programs --------------------------------

def test_tbasket_depth3_matches_reference():
    assert words(gen_tbasket_program(3).source) == words(TBASKET_DEPTH3)


def test_avro_single_block_matches_reference():
    g = gen_avro_program(nested_list(3), style="single_block")
    assert words(g.source) == words(AVRO_DEPTH3)


def test_replevel_decoder_matches_reference_plus_comparison():
    got = words(gen_replevel_decoder(3).source)
    want = words(REPLEVEL_DECODER_MAX3)
    k = len(want) - 1  # the reference loop ends "... 4 - until"; the generated one compares first
    assert got == want[:k] + ["="] + want[k:]


def test_replevel_converter_matches_reference_inside_guard():
    got = words(gen_replevel_to_offsets(3).source)
    start = got.index("begin")
    assert got[start - 3 : start] == ["replevels", "len", "if"]
    stop = got.index("until") + 1
    assert got[stop] == "then"
    unguarded = got[: start - 3] + got[start:stop] + got[stop + 1 :]
    assert unguarded == words(REPLEVEL_CONVERTER_DEPTH3)


@pytest.mark.parametrize("ids", [DEFAULT_COMMAND_IDS, {"begin_list": 10, "end_list": 20, "append": 30}])
def test_builder_depth3_matches_reference(ids):
    assert words(gen_builder_program(nested_list(3), ids).source) == words(builder_reference(ids))


# -- shape of generated programs --------------------------------------------------------

def test_tbasket_depth1():
    g = gen_tbasket_program(1)
    assert g.column_names == ["offsets0", "content"]
    tokens = words(g.source)
    assert tokens.count("begin") == 1 and "do" not in tokens


def test_avro_primitive_program():
    g = gen_avro_program(Primitive("float32"))
    assert g.column_names == ["content"]
    assert "do" in words(g.source) and "f->" in words(g.source)


def test_avro_record_columns_are_prefixed():
    g = gen_avro_program(Record([("x", Primitive("int64")), ("s", String()), ("v", ListOf(Primitive("float64")))]))
    assert g.column_names == ["x.content", "s.offsets0", "s.content", "v.offsets0", "v.content"]


def test_replevel_bit_width():
    assert replevel_bit_width(3) == 2
    assert replevel_bit_width(1) == 1
    assert replevel_bit_width(4) == 3
    assert "#2bit->" in words(gen_replevel_decoder(3).source)


def test_generation_is_idempotent(rng):
    for _ in range(20):
        d = oracle.random_descriptor(rng, max_depth=5)
        assert gen_avro_program(d).source == gen_avro_program(d).source
    assert gen_builder_program(nested_list(4)).source == gen_builder_program(nested_list(4)).source


def test_random_descriptors_compile(rng):
    for _ in range(60):
        d = oracle.random_descriptor(rng, max_depth=5)
        for style in ("general", "single_block"):
            g = gen_avro_program(d, style)
            assert g.column_names == [name for name, _ in g.program.outputs]
    for depth in range(1, 6):
        for g in (gen_tbasket_program(depth), gen_replevel_to_offsets(depth),
                  gen_replevel_decoder(depth), gen_builder_program(nested_list(depth, "float64"))):
            assert g.column_names == [name for name, _ in g.program.outputs]
            compile_source(g.source)


def test_unsupported_schemas():
    with pytest.raises(UnsupportedSchema):
        gen_avro_program(Primitive("uint16"))
    with pytest.raises(UnsupportedSchema):
        gen_builder_program(Record([("a", Primitive("float32"))]))
    with pytest.raises(UnsupportedSchema):
        gen_builder_program(nested_list(2, "int32"))



@pytest.mark.parametrize("make", [
    lambda: gen_replevel_decoder(256),
    lambda: gen_replevel_decoder(0),
    lambda: gen_tbasket_program(0),
    lambda: gen_replevel_to_offsets(0),
    lambda: gen_avro_program(ListOf(Bytes()), style="sideways"),
])
def test_bad_parameters(make):
    with pytest.raises(ValueError):
        make()


def test_invalid_command_maps():
    with pytest.raises(InvalidCommandMap):
        gen_builder_program(nested_list(1), {"begin_list": 1, "end_list": 1})
    with pytest.raises(InvalidCommandMap):
        gen_builder_program(nested_list(1), {"float32": 3})


# -- generated programs running ----------------------------------------------------------

def test_decoder_run_length_header():
    stream = struct.pack("<I", 2) + bytes([0x08, 0x01])
    assert decode_replevels(stream, 3).tolist() == [1, 1, 1, 1]


def test_decoder_bit_packed_header():
    stream = struct.pack("<I", 3) + bytes([0x03, 0b11100100, 0x00])
    levels = decode_replevels(stream, 3)
    assert levels[:4].tolist() == [0, 1, 2, 3]
    assert decode_replevels(stream, 3, 4).tolist() == [0, 1, 2, 3]


def test_converter_examples():
    out = levels_to_offsets(np.array([0, 3, 2, 1], np.uint8), 3)
    assert {k: v.tolist() for k, v in out.items()} == {
        "offsets0": [0, 2], "offsets1": [0, 2, 3], "offsets2": [0, 2, 3, 4]}
    out = levels_to_offsets(np.array([0, 1, 1, 0], np.uint8), 1)
    assert out["offsets0"].tolist() == [0, 3, 4]
    out = levels_to_offsets(np.zeros(0, np.uint8), 3)
    assert {k: v.tolist() for k, v in out.items()} == {
        "offsets0": [0], "offsets1": [0], "offsets2": [0]}


def test_builder_program_halts_on_wrong_leaf_command():
    m = Machine(gen_builder_program(nested_list(3)).program)
    m.begin_run({"data": np.zeros(8, np.uint8)})
    assert m.resume() is StopReason.PAUSED
    for cmd in (0, 0, 0):
        m.push(cmd)
        assert m.resume() is StopReason.PAUSED
    m.push(DEFAULT_COMMAND_IDS["end_list"] + 10)
    assert m.resume() is StopReason.ERROR
    assert m.error.value == "user halt"


def test_builder_program_two_lists():
    m = Machine(gen_builder_program(nested_list(1)).program)
    m.begin_run({"data": np.zeros(8, np.uint8)})
    m.resume()
    data = m.input_view("data")
    for cmd, value in [(0, None), (2, 1.5), (1, None), (0, None), (2, 2.5), (2, 3.5), (1, None)]:
        if value is not None:
            data[:] = np.frombuffer(struct.pack("<d", value), np.uint8)
        m.push(cmd)
        assert m.resume() is StopReason.PAUSED
    assert m.output("offsets0").tolist() == [0, 1, 3]
    assert m.output("content").tolist() == [1.5, 2.5, 3.5]


def test_tbasket_program_against_oracle(rng):
    for depth in (1, 2, 3):
        truth = oracle.random_nested_columns(rng, 200, depth, 3.0, oracle.OutputDtype.FLOAT32)
        basket = write_synthetic_baskets(truth, depth)
        m = Machine(gen_tbasket_program(depth).program)
        reason = m.run({"data": basket.data, "byte_offsets": basket.byte_offsets})
        assert (reason, m.error.value) == (StopReason.ERROR, "seek beyond")
        for name, col in truth.columns.items():
            assert m.output(name).tobytes() == col.tobytes()
