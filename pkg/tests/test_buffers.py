import struct
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import given, strategies as st

from colforth.buffers import InputBuffer, OutputBuffer
from colforth.bytecode import ErrorKind, OutputDtype
from colforth.errors import ForthRuntimeError
from colforth.formats import oracle
from colforth.machine import Machine

U64 = st.integers(0, 2**64 - 1)
I64 = st.integers(-(2**63), 2**63 - 1)


@contextmanager
def raises_kind(kind):
    with pytest.raises(ForthRuntimeError) as info:
        yield info
    assert info.value.kind is kind


def test_fixed_reads():
    assert InputBuffer("d", b"\x00\x00\x00\x07").read_fixed("i", big=True) == [7]
    assert InputBuffer("d", b"\x01\x00").read_fixed("h") == [1]
    data = np.arange(100, dtype="<u4")
    buf = InputBuffer("d", data.tobytes())
    assert buf.read_fixed("I", 100) == data.tolist()
    assert buf.pos() == 400 and buf.end() == -1


def test_read_beyond():
    buf = InputBuffer("d", b"\x00\x00\x00")
    with raises_kind(ErrorKind.READ_BEYOND):
        buf.read_fixed("i")
    assert buf.pos() == 0
    with raises_kind(ErrorKind.READ_BEYOND):
        buf.read_fixed("B", -1)


def test_varint_examples():
    assert InputBuffer("d", b"\x00").read_varint() == [0]
    assert InputBuffer("d", b"\x96\x01").read_varint() == [150]
    assert InputBuffer("d", b"\x03").read_zigzag() == [-2]
    assert InputBuffer("d", b"\x04").read_zigzag() == [2]
    with raises_kind(ErrorKind.VARINT_TOO_BIG):
        InputBuffer("d", b"\xff" * 11).read_varint()
    with raises_kind(ErrorKind.READ_BEYOND):
        InputBuffer("d", b"\x80\x80").read_varint()


def test_nbit_examples():
    assert InputBuffer("d", bytes([0b11100100])).read_nbit(2, 4) == [0, 1, 2, 3]
    raw = bytes(range(7, 17))
    assert InputBuffer("d", raw).read_nbit(8, 10) == InputBuffer("d", raw).read_fixed("B", 10)
    buf = InputBuffer("d", b"\x05")
    assert buf.read_nbit(3, 0) == [] and buf.pos() == 0
    with raises_kind(ErrorKind.READ_BEYOND):
        InputBuffer("d", b"\x05").read_nbit(3, 3)


def test_position_words():
    buf = InputBuffer("d", bytes(10))
    buf.seek(10)
    assert buf.end() == -1
    with raises_kind(ErrorKind.SEEK_BEYOND):
        buf.seek(11)
    with raises_kind(ErrorKind.SKIP_BEYOND):
        buf.skip(1)
    buf.rewind(10)
    with raises_kind(ErrorKind.REWIND_BEYOND):
        buf.rewind(1)
    buf.read_fixed("i")
    assert buf.pos() == 4 and buf.len() == 10


def test_output_buffer():
    x = OutputBuffer("x", "int32")
    x.write(0)
    x.write(5, add_last=True)
    assert x.values() == [0, 5]
    assert x.snapshot().data == bytes([0, 0, 0, 0, 5, 0, 0, 0])
    y = OutputBuffer("y", OutputDtype.INT32)
    y.write(3, add_last=True)
    assert y.values() == [3]
    z = OutputBuffer("z", "int32")
    z.write(7)
    z.dup_last(3)
    assert z.values() == [7, 7, 7, 7]
    e = OutputBuffer("e", "float32")
    assert e.snapshot().length == 0
    e.dup_last(2)
    assert e.values() == [0.0, 0.0]


def test_float64_big_endian_to_output():
    buf = InputBuffer("d", struct.pack(">d", 1.5))
    out = OutputBuffer("o", "float64")
    out.extend(buf.read_fixed("d", big=True), floats=True)
    assert out.values() == [1.5]


def test_narrowing_rounds_to_nearest_even():
    x = 1 + 2**-24  # halfway between two float32 values; ties to the even one
    out = OutputBuffer("o", "float32")
    out.write(x)
    assert out.values() == [1.0]
    m = Machine("input d output o float32 d d-> o")
    m.run({"d": struct.pack("<d", 1 + 3 * 2**-24)})
    assert m.output("o").tolist() == [float(np.float32(1 + 3 * 2**-24))]


@pytest.mark.parametrize("dtype", [d for d in OutputDtype])
def test_integer_writes_wrap_per_dtype(dtype):
    out = OutputBuffer("o", dtype)
    out.write(2**40 + 3)
    if dtype.is_float:
        assert out.values() == [float(dtype.numpy.type(2**40 + 3))]
    elif dtype is OutputDtype.BOOL:
        assert out.values() == [True]
    else:
        assert out.values() == [np.array([2**40 + 3], np.int64).astype(dtype.numpy)[0].item()]


# -- properties ------------------------------------------------------------------

@given(U64)
def test_varint_round_trip(u):
    enc = oracle.varint_encode(u)
    buf = InputBuffer("d", enc)
    assert buf.read_varint() == [u - 2**64 if u >= 2**63 else u]
    assert buf.pos() == len(enc)
    assert oracle.varint_decode(enc) == (u, len(enc))


@given(I64)
def test_zigzag_round_trip(v):
    enc = oracle.long_encode(v)
    assert InputBuffer("d", enc).read_zigzag() == [v]
    assert oracle.zigzag_decode(oracle.zigzag_encode(v)) == v


@given(st.binary(min_size=1, max_size=12))
def test_canonical_varint_reencodes(raw):
    try:
        u, used = oracle.varint_decode(raw)
    except (EOFError, OverflowError):
        return
    if used > 1 and raw[used - 1] == 0:
        return  # non-canonical padding
    assert oracle.varint_encode(u) == raw[:used]
    assert InputBuffer("d", raw).read_varint() == [u - 2**64 if u >= 2**63 else u]


@given(st.integers(1, 32), st.data())
def test_nbit_round_trip(nbits, data):
    values = data.draw(st.lists(st.integers(0, 2**nbits - 1), max_size=40))
    packed = oracle._bit_pack(values, nbits) if len(values) % 8 == 0 else None
    bits = "".join(format(v, f"0{nbits}b")[::-1] for v in values)
    bits += "0" * (-len(bits) % 8)
    raw = bytes(int(bits[k:k + 8][::-1], 2) for k in range(0, len(bits), 8))
    if packed is not None:
        assert packed == raw
    buf = InputBuffer("d", raw)
    assert buf.read_nbit(nbits, len(values)) == values
    assert buf.pos() == (nbits * len(values) + 7) // 8


@given(st.sampled_from("bBhHiIqQfd"), st.booleans(), st.binary(max_size=64))
def test_fixed_read_matches_struct(code, big, raw):
    width = struct.calcsize(code)
    count = len(raw) // width
    buf = InputBuffer("d", raw)
    got = buf.read_fixed(code, count, big=big)
    want = list(struct.unpack(("><"[not big]) + code * count, raw[: width * count]))
    if code == "Q":
        want = [w - 2**64 if w >= 2**63 else w for w in want]
    assert np.array_equal(np.array(got, dtype=float), np.array(want, dtype=float), equal_nan=True)
    assert buf.pos() == width * count


@given(st.sampled_from("fd"), st.booleans(), st.binary(min_size=8, max_size=8))
def test_float_reads_bit_identical_through_machine(code, big, raw):
    out_type = "float32" if code == "f" else "float64"
    width = 4 if code == "f" else 8
    m = Machine(f"input d output o {out_type} d {'!' if big else ''}{code}-> o")
    m.run({"d": raw})
    src = raw[:width][::-1] if big else raw[:width]
    assert m.output("o").tobytes() == src


@given(st.integers(0, 50), st.integers(-100, 100))
def test_dup_last_keeps_last(k, v):
    out = OutputBuffer("o", "int64")
    out.write(v)
    out.dup_last(k)
    assert len(out) == k + 1 and out.last == v


@given(st.binary(max_size=32), st.integers(0, 32))
def test_seek_then_pos(raw, p):
    buf = InputBuffer("d", raw)
    if p <= len(raw):
        buf.seek(p)
        assert buf.pos() == p
    else:
        with raises_kind(ErrorKind.SEEK_BEYOND):
            buf.seek(p)
