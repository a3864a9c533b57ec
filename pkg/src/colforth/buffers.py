"""Input decoding and output encoding.

The ``@njit`` kernels in this module are the only place bytes are turned
into values and back; the VM inlines them, and the host-side
:class:`InputBuffer` / :class:`OutputBuffer` classes call the same kernels
so their behaviour cannot drift from the interpreter's.

Conventions:
  * integers travel as int64 (unsigned 64-bit values wrap);
  * n-bit values are packed LSB-first within each byte;
  * floats written from the integer stack are converted, floats read to
    the stack are truncated toward zero (NaN and out-of-range become 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, types
from numba.extending import intrinsic

from . import bytecode as bc
from .bytecode import OutputDtype
from .errors import ForthRuntimeError

# -- bit reinterpretation ----------------------------------------------------


@intrinsic
def _i64_as_f64(typingctx, x):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.float64))

    return sig, codegen


@intrinsic
def _f64_as_i64(typingctx, x):
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.int64))

    return sig, codegen


@intrinsic
def _i32_as_f32(typingctx, x):
    sig = types.float32(types.int32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.float32))

    return sig, codegen


@intrinsic
def _f32_as_i32(typingctx, x):
    sig = types.int32(types.float32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], context.get_value_type(types.int32))

    return sig, codegen


# -- kernels -------------------------------------------------------------------

_CODE_WIDTH = np.array(bc.CODE_WIDTH, dtype=np.int64)
_DTYPE_WIDTH = np.array(bc.DTYPE_WIDTH, dtype=np.int64)
# dtype code a type code can be byte-copied into (same width, same class)
_INT_SAME = np.array([1, 5, 2, 6, 3, 7, 4, 8, -1, -1], dtype=np.int64)

_MIN_F = -9.223372036854775808e18
_MAX_F = 9.223372036854775808e18


@njit(inline="always")
def code_width(kind):
    return _CODE_WIDTH[kind]


@njit(inline="always")
def dtype_width(dt):
    return _DTYPE_WIDTH[dt]


@njit(inline="always")
def load_bits(buf, p, width, big):
    v = np.int64(0)
    if big:
        for k in range(width):
            v = (v << 8) | np.int64(buf[p + k])
    else:
        for k in range(width):
            v |= np.int64(buf[p + k]) << (8 * k)
    return v


@njit(inline="always")
def bits_to_int(v, kind):
    # sign-extend / zero-extend the raw bits of a fixed-width integer code
    if kind == 0:
        v = v & 0xFF
        return v - 256 if v >= 128 else v
    if kind == 1:
        return v & 0xFF
    if kind == 2:
        v = v & 0xFFFF
        return v - 65536 if v >= 32768 else v
    if kind == 3:
        return v & 0xFFFF
    if kind == 4:
        v = v & 0xFFFFFFFF
        return v - 4294967296 if v >= 2147483648 else v
    if kind == 5:
        return v & 0xFFFFFFFF
    return v


@njit(inline="always")
def bits_to_float(v, kind):
    if kind == 8:
        return np.float64(_i32_as_f32(np.int32(v & 0xFFFFFFFF)))
    return _i64_as_f64(v)


@njit(inline="always")
def float_to_int(x):
    if x != x or x >= _MAX_F or x < _MIN_F:
        return np.int64(0)
    return np.int64(x)


@njit(inline="always")
def int_to_float(v, unsigned64):
    if unsigned64 and v < 0:
        return np.float64(np.uint64(v))
    return np.float64(v)


@njit(inline="always")
def store_bits(buf, p, v, width):
    for k in range(width):
        buf[p + k] = np.uint8((v >> (8 * k)) & 0xFF)


@njit(inline="always")
def store_int(buf, p, dt, v):
    """Encode integer ``v`` as dtype ``dt`` at ``buf[p]``; returns bytes written."""
    if dt == 0:
        buf[p] = np.uint8(1 if v != 0 else 0)
        return 1
    if dt == 9:
        store_bits(buf, p, np.int64(_f32_as_i32(np.float32(np.float64(v)))), 4)
        return 4
    if dt == 10:
        store_bits(buf, p, _f64_as_i64(np.float64(v)), 8)
        return 8
    w = _DTYPE_WIDTH[dt]
    store_bits(buf, p, v, w)
    return w


@njit(inline="always")
def store_float(buf, p, dt, x):
    """Encode float ``x`` as dtype ``dt`` at ``buf[p]``; returns bytes written."""
    if dt == 9:
        store_bits(buf, p, np.int64(_f32_as_i32(np.float32(x))), 4)
        return 4
    if dt == 10:
        store_bits(buf, p, _f64_as_i64(x), 8)
        return 8
    if dt == 0:
        buf[p] = np.uint8(1 if x != 0.0 else 0)
        return 1
    w = _DTYPE_WIDTH[dt]
    store_bits(buf, p, float_to_int(x), w)
    return w


@njit(inline="always")
def load_int(buf, p, dt):
    """Value at ``buf[p]`` of dtype ``dt`` as int64 (floats truncated)."""
    if dt == 0:
        return np.int64(1 if buf[p] != 0 else 0)
    if dt == 9:
        return float_to_int(bits_to_float(load_bits(buf, p, 4, False), 8))
    if dt == 10:
        return float_to_int(bits_to_float(load_bits(buf, p, 8, False), 9))
    if dt <= 4:
        return bits_to_int(load_bits(buf, p, _DTYPE_WIDTH[dt], False), 2 * (dt - 1))
    return bits_to_int(load_bits(buf, p, _DTYPE_WIDTH[dt], False), 2 * (dt - 5) + 1)


@njit(inline="always")
def load_float(buf, p, dt):
    if dt == 9:
        return bits_to_float(load_bits(buf, p, 4, False), 8)
    if dt == 10:
        return bits_to_float(load_bits(buf, p, 8, False), 9)
    return int_to_float(load_int(buf, p, dt), dt == 8)


@njit(inline="always")
def varint_at(buf, p, end):
    """Decode one varint. Returns ``(error code, value, new position)``."""
    result = np.int64(0)
    shift = 0
    q = p
    while True:
        if q >= end:
            return bc.E_READ_BEYOND, np.int64(0), p
        byte = np.int64(buf[q])
        q += 1
        if shift == 63 and byte > 1:
            return bc.E_VARINT_TOO_BIG, np.int64(0), p
        result |= (byte & 0x7F) << shift
        if byte < 0x80:
            return 0, result, q
        shift += 7


@njit(inline="always")
def unzigzag(v):
    return ((v >> 1) & 0x7FFFFFFFFFFFFFFF) ^ (-(v & 1))


@njit(inline="always")
def nbit_at(buf, p, nbits, j):
    """The ``j``-th ``nbits``-wide unsigned value packed LSB-first from ``buf[p]``."""
    bit = j * nbits
    q = p + (bit >> 3)
    shift = bit & 7
    acc = np.int64(0)
    k = 0
    while 8 * k < nbits + shift:
        acc |= np.int64(buf[q + k]) << (8 * k)
        k += 1
    return (acc >> shift) & ((np.int64(1) << nbits) - 1)


@njit(inline="always")
def nbit_bytes(nbits, count):
    return (nbits * count + 7) >> 3


# -- host-side wrappers ---------------------------------------------------------


@njit(cache=True)
def _read_fixed(buf, p, kind, big, count, out_ints, out_floats):
    w = _CODE_WIDTH[kind]
    for j in range(count):
        v = load_bits(buf, p + j * w, w, big)
        if kind >= 8:
            out_floats[j] = bits_to_float(v, kind)
            out_ints[j] = float_to_int(out_floats[j])
        else:
            out_ints[j] = bits_to_int(v, kind)
            out_floats[j] = int_to_float(out_ints[j], kind == 7)


@njit(cache=True)
def _read_varints(buf, p, end, count, zigzag, out):
    q = p
    for j in range(count):
        err, v, q = varint_at(buf, q, end)
        if err != 0:
            return err, p
        out[j] = unzigzag(v) if zigzag else v
    return 0, q


@njit(cache=True)
def _read_nbits(buf, p, nbits, count, out):
    for j in range(count):
        out[j] = nbit_at(buf, p, nbits, j)


@njit(cache=True)
def _encode_ints(buf, p, dt, values):
    for v in values:
        p += store_int(buf, p, dt, v)


@njit(cache=True)
def _encode_floats(buf, p, dt, values):
    for x in values:
        p += store_float(buf, p, dt, x)


@njit(cache=True)
def _decode_all(buf, n, dt, out_ints, out_floats):
    w = _DTYPE_WIDTH[dt]
    for j in range(n):
        out_ints[j] = load_int(buf, j * w, dt)
        out_floats[j] = load_float(buf, j * w, dt)


def _raise(code: int, context: str):
    raise ForthRuntimeError(bc.ERROR_KINDS[code], context)


class InputBuffer:
    """Named, fixed-size raw bytes with a seekable read position."""

    def __init__(self, name: str, data):
        self.name = name
        self.data = np.frombuffer(bytes(data), dtype=np.uint8)
        self.position = 0

    def __len__(self):
        return len(self.data)

    def _need(self, nbytes: int):
        if nbytes < 0 or self.position + nbytes > len(self.data):
            _raise(bc.E_READ_BEYOND, self.name)

    def read_fixed(self, code: str, count: int = 1, big: bool = False) -> list:
        """Read ``count`` values of a struct-style type code (``b`` ... ``d``)."""
        kind = bc.TYPE_CODES.index(code)
        if count < 0:
            _raise(bc.E_READ_BEYOND, self.name)
        self._need(bc.CODE_WIDTH[kind] * count)
        ints = np.empty(count, np.int64)
        floats = np.empty(count, np.float64)
        _read_fixed(self.data, self.position, kind, big, count, ints, floats)
        self.position += bc.CODE_WIDTH[kind] * count
        return floats.tolist() if kind >= 8 else ints.tolist()

    def _read_var(self, count: int, zigzag: bool) -> list[int]:
        if count < 0:
            _raise(bc.E_READ_BEYOND, self.name)
        out = np.empty(count, np.int64)
        err, q = _read_varints(self.data, self.position, len(self.data), count, zigzag, out)
        if err:
            _raise(err, self.name)
        self.position = q
        return out.tolist()

    def read_varint(self, count: int = 1) -> list[int]:
        return self._read_var(count, zigzag=False)

    def read_zigzag(self, count: int = 1) -> list[int]:
        return self._read_var(count, zigzag=True)

    def read_nbit(self, nbits: int, count: int = 1) -> list[int]:
        if not 1 <= nbits <= 32:
            raise ValueError("bit width must be in 1..32")
        if count < 0:
            _raise(bc.E_READ_BEYOND, self.name)
        nbytes = nbit_bytes(nbits, count)
        self._need(nbytes)
        out = np.empty(count, np.int64)
        _read_nbits(self.data, self.position, nbits, count, out)
        self.position += nbytes
        return out.tolist()

    def seek(self, to: int):
        if to < 0 or to > len(self.data):
            _raise(bc.E_SEEK_BEYOND, self.name)
        self.position = to

    def skip(self, by: int):
        if by < 0 or self.position + by > len(self.data):
            _raise(bc.E_SKIP_BEYOND, self.name)
        self.position += by

    def rewind(self, by: int):
        if by < 0 or self.position - by < 0:
            _raise(bc.E_REWIND_BEYOND, self.name)
        self.position -= by

    def pos(self) -> int:
        return self.position

    def end(self) -> int:
        return -1 if self.position == len(self.data) else 0

    def len(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Snapshot:
    """Finished column: dtype, element count, and little-endian value bytes."""

    dtype: OutputDtype
    length: int
    data: bytes

    @property
    def array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=self.dtype.numpy, count=self.length)


class OutputBuffer:
    """Named, typed, append-only column."""

    def __init__(self, name: str, dtype: OutputDtype | str):
        self.name = name
        self.dtype = OutputDtype.parse(dtype) if isinstance(dtype, str) else dtype
        self._bytes = np.zeros(64, np.uint8)
        self.length = 0

    def __len__(self):
        return self.length

    def _reserve(self, count: int) -> int:
        w = self.dtype.itemsize
        need = (self.length + count) * w
        if need > len(self._bytes):
            grown = np.zeros(max(need, 2 * len(self._bytes)), np.uint8)
            grown[: self.length * w] = self._bytes[: self.length * w]
            self._bytes = grown
        return self.length * w

    @property
    def last(self):
        """Most recently appended value; zero while empty."""
        if self.length == 0:
            return 0.0 if self.dtype.is_float else 0
        return self.values()[-1]

    def write(self, value, add_last: bool = False):
        """Append ``value`` (``<-``) or ``last + value`` (``+<-``)."""
        if add_last:
            value = self.last + value
        p = self._reserve(1)
        if isinstance(value, float):
            _encode_floats(self._bytes, p, self.dtype.value, np.array([value], np.float64))
        else:
            wrapped = ((int(value) + (1 << 63)) % (1 << 64)) - (1 << 63)
            _encode_ints(self._bytes, p, self.dtype.value, np.array([wrapped], np.int64))
        self.length += 1

    def extend(self, values, floats: bool | None = None):
        values = list(values)
        if not values:
            return
        if floats is None:
            floats = any(isinstance(v, float) for v in values)
        p = self._reserve(len(values))
        if floats:
            _encode_floats(self._bytes, p, self.dtype.value, np.array(values, np.float64))
        else:
            wrapped = [((int(v) + (1 << 63)) % (1 << 64)) - (1 << 63) for v in values]
            _encode_ints(self._bytes, p, self.dtype.value, np.array(wrapped, np.int64))
        self.length += len(values)

    def dup_last(self, count: int):
        """Append the last value ``count`` more times (zero on an empty column)."""
        if count <= 0:
            return
        w = self.dtype.itemsize
        last = bytes(self._bytes[(self.length - 1) * w : self.length * w]) if self.length else bytes(w)
        p = self._reserve(count)
        self._bytes[p : p + count * w] = np.frombuffer(last * count, np.uint8)
        self.length += count

    def values(self) -> list:
        n = self.length
        ints = np.empty(n, np.int64)
        floats = np.empty(n, np.float64)
        _decode_all(self._bytes, n, self.dtype.value, ints, floats)
        if self.dtype.is_float:
            return floats.tolist()
        if self.dtype is OutputDtype.BOOL:
            return [bool(v) for v in ints]
        return self.snapshot().array.tolist()

    def snapshot(self) -> Snapshot:
        n = self.length * self.dtype.itemsize
        return Snapshot(self.dtype, self.length, bytes(self._bytes[:n]))
