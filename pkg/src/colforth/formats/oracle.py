"""Reference codecs and corpus generators, written in plain Python.

Nothing here touches the VM. Tests and the CLI use these functions as ground
truth for the generated programs.
"""

from __future__ import annotations

import math
import struct
from typing import Iterable, Sequence

import numpy as np

from ..bytecode import OutputDtype
from ..columnar import ColumnarResult, LeafForm, ListForm, RecordForm, StringForm
from ..types import Bytes, ListOf, Primitive, Record, String, TypeDescriptor

MASK64 = (1 << 64) - 1


class SchemaMismatch(ValueError):
    pass


# -- varints -------------------------------------------------------------------


def zigzag_encode(v: int) -> int:
    v = ((v + (1 << 63)) & MASK64) - (1 << 63)
    return ((v << 1) ^ (v >> 63)) & MASK64


def zigzag_decode(u: int) -> int:
    u &= MASK64
    return (u >> 1) ^ -(u & 1)


def varint_encode(u: int) -> bytes:
    u &= MASK64
    out = bytearray()
    while True:
        byte = u & 0x7F
        u >>= 7
        if u:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def varint_decode(buf: bytes, pos: int = 0) -> tuple[int, int]:
    """Decode one unsigned varint; returns ``(value, new_pos)``."""
    result = shift = 0
    for k in range(10):
        if pos >= len(buf):
            raise EOFError("input ends inside a varint")
        byte = buf[pos]
        pos += 1
        if k == 9 and byte > 1:
            raise OverflowError("varint exceeds 64 bits")
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
    raise OverflowError("varint longer than 10 bytes")


def long_encode(v: int) -> bytes:
    return varint_encode(zigzag_encode(v))


def long_decode(buf: bytes, pos: int) -> tuple[int, int]:
    u, pos = varint_decode(buf, pos)
    return zigzag_decode(u), pos


# -- Avro values ---------------------------------------------------------------

_FLOAT_PACK = {OutputDtype.FLOAT32: "<f", OutputDtype.FLOAT64: "<d"}
_INT_RANGE = {OutputDtype.INT32: 32, OutputDtype.INT64: 64}


def avro_encode(value, node: TypeDescriptor, out: bytearray, splits=None):
    """Append the Avro binary encoding of ``value`` to ``out``.

    Arrays are written as one block plus the zero terminator unless
    ``splits`` (a numpy Generator) is given, in which case each array is cut
    into random blocks and some blocks use the negative-count form.
    """
    if isinstance(node, Primitive):
        dt = node.dtype
        if dt == OutputDtype.BOOL:
            if not isinstance(value, (bool, np.bool_)):
                raise SchemaMismatch(f"expected bool, got {value!r}")
            out.append(1 if value else 0)
        elif dt in _INT_RANGE:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SchemaMismatch(f"expected integer, got {value!r}")
            bits = _INT_RANGE[dt]
            if not -(1 << (bits - 1)) <= int(value) < (1 << (bits - 1)):
                raise SchemaMismatch(f"{value} does not fit {dt.type_name}")
            out += long_encode(int(value))
        elif dt in _FLOAT_PACK:
            if not isinstance(value, (float, int, np.floating)) or isinstance(value, bool):
                raise SchemaMismatch(f"expected float, got {value!r}")
            out += struct.pack(_FLOAT_PACK[dt], value)
        else:
            raise SchemaMismatch(f"no Avro encoding for {dt.type_name}")
    elif isinstance(node, (String, Bytes)):
        if isinstance(node, String):
            if not isinstance(value, str):
                raise SchemaMismatch(f"expected str, got {value!r}")
            value = value.encode("utf-8")
        elif not isinstance(value, (bytes, bytearray)):
            raise SchemaMismatch(f"expected bytes, got {value!r}")
        out += long_encode(len(value))
        out += value
    elif isinstance(node, ListOf):
        if not isinstance(value, (list, tuple)):
            raise SchemaMismatch(f"expected list, got {value!r}")
        items = list(value)
        for block in _blocks(len(items), splits):
            start, stop, negative = block
            if negative:
                body = bytearray()
                for item in items[start:stop]:
                    avro_encode(item, node.item, body, splits)
                out += long_encode(-(stop - start))
                out += long_encode(len(body))
                out += body
            else:
                out += long_encode(stop - start)
                for item in items[start:stop]:
                    avro_encode(item, node.item, out, splits)
        out.append(0)
    elif isinstance(node, Record):
        if not isinstance(value, dict) or set(value) != {n for n, _ in node.fields}:
            raise SchemaMismatch(f"record fields do not match: {value!r}")
        for name, t in node.fields:
            avro_encode(value[name], t, out, splits)
    else:
        raise SchemaMismatch(f"unsupported schema node {node!r}")


def _blocks(n: int, splits) -> list[tuple[int, int, bool]]:
    if n == 0:
        return []
    if splits is None:
        return [(0, n, False)]
    cuts = sorted(set(splits.integers(1, n + 1, size=int(splits.integers(0, 3))).tolist()) | {n})
    blocks, start = [], 0
    for stop in cuts:
        blocks.append((start, stop, bool(splits.integers(0, 2))))
        start = stop
    return blocks


def avro_decode(buf: bytes, pos: int, node: TypeDescriptor):
    """Decode one value; returns ``(value, new_pos)``. Accepts any block split."""
    if isinstance(node, Primitive):
        dt = node.dtype
        if dt == OutputDtype.BOOL:
            return buf[pos] != 0, pos + 1
        if dt in _INT_RANGE:
            return long_decode(buf, pos)
        if dt in _FLOAT_PACK:
            size = struct.calcsize(_FLOAT_PACK[dt])
            return struct.unpack_from(_FLOAT_PACK[dt], buf, pos)[0], pos + size
        raise SchemaMismatch(f"no Avro encoding for {dt.type_name}")
    if isinstance(node, (String, Bytes)):
        n, pos = long_decode(buf, pos)
        raw = bytes(buf[pos : pos + n])
        if len(raw) != n or n < 0:
            raise EOFError("string runs past the end of the block")
        return (raw.decode("utf-8") if isinstance(node, String) else raw), pos + n
    if isinstance(node, ListOf):
        items = []
        while True:
            count, pos = long_decode(buf, pos)
            if count == 0:
                return items, pos
            if count < 0:
                count = -count
                _, pos = long_decode(buf, pos)
            for _ in range(count):
                item, pos = avro_decode(buf, pos, node.item)
                items.append(item)
    if isinstance(node, Record):
        value = {}
        for name, t in node.fields:
            value[name], pos = avro_decode(buf, pos, t)
        return value, pos
    raise SchemaMismatch(f"unsupported schema node {node!r}")


# -- direct columnarization ----------------------------------------------------


def columnarize(values: Sequence, node: TypeDescriptor) -> ColumnarResult:
    """Build offsets/content columns by walking Python values recursively."""
    columns: dict[str, list] = {}
    dtypes: dict[str, OutputDtype] = {}

    def declare(name, dtype, seed=()):
        columns[name] = list(seed)
        dtypes[name] = dtype
        return name

    def plan(n: TypeDescriptor, prefix: str, level: int):
        if isinstance(n, Primitive):
            return LeafForm(declare(prefix + "content", n.dtype))
        if isinstance(n, (String, Bytes)):
            off = declare(f"{prefix}offsets{level}", OutputDtype.INT32, [0])
            return StringForm(off, declare(prefix + "content", OutputDtype.UINT8), isinstance(n, String))
        if isinstance(n, ListOf):
            off = declare(f"{prefix}offsets{level}", OutputDtype.INT32, [0])
            return ListForm(off, plan(n.item, prefix, level + 1))
        return RecordForm(tuple((name, plan(t, f"{prefix}{name}.", level)) for name, t in n.fields))

    def fill(v, n: TypeDescriptor, form):
        if isinstance(form, LeafForm):
            columns[form.content].append(v)
        elif isinstance(form, StringForm):
            raw = v.encode("utf-8") if isinstance(v, str) else bytes(v)
            off = columns[form.offsets]
            off.append(off[-1] + len(raw))
            columns[form.content].extend(raw)
        elif isinstance(form, ListForm):
            off = columns[form.offsets]
            off.append(off[-1] + len(v))
            for item in v:
                fill(item, n.item, form.content)
        else:
            for (name, t), (_, f) in zip(n.fields, form.fields):
                fill(v[name], t, f)

    form = plan(node, "", 0)
    for v in values:
        fill(v, node, form)
    arrays = {name: np.array(col, dtype=dtypes[name].numpy) for name, col in columns.items()}
    return ColumnarResult(arrays, form, len(values))


def nested_columns(values: Sequence, depth: int, leaf: OutputDtype = OutputDtype.FLOAT32) -> ColumnarResult:
    """Columns for a sequence of ``depth``-nested lists of one primitive."""
    node: TypeDescriptor = Primitive(leaf)
    for _ in range(depth):
        node = ListOf(node)
    return columnarize(values, node)


# -- repetition levels ---------------------------------------------------------


def replevels_from_nested(values: Sequence, depth: int) -> list[int]:
    """Repetition level of every leaf; every list at every level must be non-empty."""
    levels: list[int] = []

    def walk(node, k: int, first: int):
        if len(node) == 0:
            raise ValueError("repetition levels cannot express empty lists")
        for i, child in enumerate(node):
            lv = first if i == 0 else k + 1
            if k == depth - 1:
                levels.append(lv)
            else:
                walk(child, k + 1, lv)

    for record in values:
        walk(record, 0, 0)
    return levels


def offsets_from_replevels(levels: Sequence[int], depth: int) -> dict[str, np.ndarray]:
    """Offsets implied by ``levels``: level ``lv`` opens new lists at depths lv..depth-1."""
    sizes: list[list[int]] = [[] for _ in range(depth)]
    for lv in levels:
        for k in range(lv, depth):
            sizes[k].append(0)
        for k in range(max(lv, 1), depth):
            sizes[k - 1][-1] += 1
        sizes[depth - 1][-1] += 1
    return {
        f"offsets{k}": np.concatenate([[0], np.cumsum(s, dtype=np.int64)]).astype(np.int32)
        for k, s in enumerate(sizes)
    }


def offsets_from_nested(values: Sequence, depth: int) -> dict[str, np.ndarray]:
    cols = [[0] for _ in range(depth)]

    def walk(node, k):
        cols[k].append(cols[k][-1] + len(node))
        if k + 1 < depth:
            for child in node:
                walk(child, k + 1)

    for record in values:
        walk(record, 0)
    return {f"offsets{k}": np.array(c, dtype=np.int32) for k, c in enumerate(cols)}


# -- RLE / bit-packed hybrid ---------------------------------------------------


def _rle_run(value: int, count: int, width_bytes: int) -> bytes:
    return varint_encode(count << 1) + int(value).to_bytes(width_bytes, "little")


def _bit_pack(values: Sequence[int], bit_width: int) -> bytes:
    acc = 0
    for j, v in enumerate(values):
        acc |= (int(v) & ((1 << bit_width) - 1)) << (j * bit_width)
    return acc.to_bytes(len(values) * bit_width // 8, "little")


def hybrid_encode(levels: Sequence[int], bit_width: int, length_prefix: bool = True) -> bytes:
    """Encode ``levels`` as runs: repeats of 8+ and tails as RLE, the rest bit-packed."""
    levels = [int(v) for v in levels]
    width_bytes = (bit_width + 7) // 8
    n = len(levels)
    body = bytearray()
    i = 0

    def run_length(at: int) -> int:
        j = at
        while j < n and levels[j] == levels[at]:
            j += 1
        return j - at

    while i < n:
        r = run_length(i)
        if r >= 8 or n - i < 8:
            body += _rle_run(levels[i], r, width_bytes)
            i += r
            continue
        start = i
        while n - i >= 8 and run_length(i) < 8:
            i += 8
        groups = (i - start) // 8
        body += varint_encode((groups << 1) | 1)
        body += _bit_pack(levels[start:i], bit_width)
    if not length_prefix:
        return bytes(body)
    return struct.pack("<I", len(body)) + bytes(body)


def hybrid_decode(stream: bytes, bit_width: int, num_values: int | None = None) -> list[int]:
    """Decode a length-prefixed hybrid stream (reference implementation)."""
    (length,) = struct.unpack_from("<I", stream, 0)
    end = 4 + length
    if end > len(stream):
        raise EOFError("length prefix runs past the stream")
    width_bytes = (bit_width + 7) // 8
    pos, out = 4, []
    while pos < end:
        header, pos = varint_decode(stream, pos)
        if header & 1:
            count = (header >> 1) * 8
            nbytes = count * bit_width // 8
            acc = int.from_bytes(stream[pos : pos + nbytes], "little")
            if pos + nbytes > end:
                raise EOFError("bit-packed group runs past the stream")
            pos += nbytes
            mask = (1 << bit_width) - 1
            out.extend((acc >> (j * bit_width)) & mask for j in range(count))
        else:
            if pos + width_bytes > end:
                raise EOFError("run value runs past the stream")
            value = int.from_bytes(stream[pos : pos + width_bytes], "little")
            pos += width_bytes
            out.extend([value] * (header >> 1))
    return out if num_values is None else out[:num_values]


# -- random corpora ------------------------------------------------------------


def poisson(rng: np.random.Generator, lam: float, size: int) -> np.ndarray:
    """Poisson(lam) samples by inverse transform of seeded uniforms."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    kmax = int(lam + 12 * math.sqrt(lam) + 30)
    k = np.arange(kmax + 1)
    logp = k * math.log(lam) - lam - np.array([math.lgamma(x + 1) for x in k])
    cdf = np.cumsum(np.exp(logp))
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), kmax).astype(np.int64)


def random_leaves(rng: np.random.Generator, n: int, leaf: OutputDtype) -> np.ndarray:
    if leaf.is_float:
        return rng.normal(0.0, 100.0, n).astype(leaf.numpy)
    if leaf == OutputDtype.BOOL:
        return rng.integers(0, 2, n).astype(bool)
    info = np.iinfo(leaf.numpy)
    return rng.integers(int(info.min), int(info.max), n, dtype=leaf.numpy, endpoint=True)


def random_nested_columns(rng: np.random.Generator, n: int, depth: int, lam: float,
                          leaf: OutputDtype = OutputDtype.FLOAT32,
                          nonempty: bool = False) -> ColumnarResult:
    """Columns of ``n`` entries of ``depth``-nested lists with Poisson lengths.

    With ``nonempty`` the lengths are ``1 + Poisson(lam - 1)`` so every list
    has at least one item (as repetition levels require).
    """
    columns = {}
    count = n
    form_names = []
    for k in range(depth):
        if nonempty:
            sizes = 1 + (poisson(rng, lam - 1, count) if lam > 1 else np.zeros(count, np.int64))
        else:
            sizes = poisson(rng, lam, count)
        offsets = np.zeros(count + 1, np.int64)
        np.cumsum(sizes, out=offsets[1:])
        columns[f"offsets{k}"] = offsets.astype(np.int32)
        form_names.append(f"offsets{k}")
        count = int(offsets[-1])
    columns["content"] = random_leaves(rng, count, leaf)
    form = LeafForm("content")
    for name in reversed(form_names):
        form = ListForm(name, form)
    return ColumnarResult(columns, form, n)


def random_values(rng: np.random.Generator, node: TypeDescriptor, n: int, lam: float = 3.0) -> list:
    """``n`` random Python values conforming to ``node``."""

    def one(t: TypeDescriptor):
        if isinstance(t, Primitive):
            dt = t.dtype
            if dt == OutputDtype.BOOL:
                return bool(rng.integers(0, 2))
            if dt == OutputDtype.INT32:
                return int(rng.integers(-(1 << 31), 1 << 31))
            if dt == OutputDtype.INT64:
                return int(rng.integers(-(1 << 63), (1 << 63) - 1, endpoint=True))
            if dt == OutputDtype.FLOAT32:
                return float(np.float32(rng.normal(0, 1e3)))
            return float(rng.normal(0, 1e6))
        if isinstance(t, String):
            return "".join(chr(c) for c in rng.integers(0x20, 0x2FF, int(poisson(rng, lam, 1)[0])))
        if isinstance(t, Bytes):
            return rng.integers(0, 256, int(poisson(rng, lam, 1)[0]), dtype=np.uint8).tobytes()
        if isinstance(t, ListOf):
            return [one(t.item) for _ in range(int(poisson(rng, lam, 1)[0]))]
        return {name: one(f) for name, f in t.fields}

    return [one(node) for _ in range(n)]


AVRO_PRIMITIVES = (
    OutputDtype.BOOL, OutputDtype.INT32, OutputDtype.INT64, OutputDtype.FLOAT32, OutputDtype.FLOAT64,
)


def random_descriptor(rng: np.random.Generator, max_depth: int = 4, max_fields: int = 3) -> TypeDescriptor:
    """A random Avro-compatible descriptor with at most ``max_depth`` nesting levels."""

    def node(budget: int) -> TypeDescriptor:
        choice = int(rng.integers(0, 10))
        if budget == 0 or choice < 3:
            return Primitive(AVRO_PRIMITIVES[int(rng.integers(0, len(AVRO_PRIMITIVES)))])
        if choice == 3:
            return String() if rng.integers(0, 2) else Bytes()
        if choice < 8:
            return ListOf(node(budget - 1))
        k = int(rng.integers(1, max_fields + 1))
        return Record({f"f{j}": node(budget - 1) for j in range(k)})

    return node(max_depth)


# -- builder reference ---------------------------------------------------------


def build_from_commands(commands: Iterable[tuple[str, float | None]], depth: int,
                        leaf: OutputDtype = OutputDtype.FLOAT32) -> tuple[dict[str, np.ndarray], int]:
    """Apply builder commands with a host-side nesting stack.

    Returns the columns as they stand after every command accepted before
    the first ill-typed one, and the index of that command (or -1). Lists
    still open contribute content but no closing offset yet.
    """
    offsets = [[0] for _ in range(depth)]
    content: list[float] = []
    open_counts: list[int] = []
    rejected = -1
    for i, (kind, value) in enumerate(commands):
        level = len(open_counts)
        if kind == "begin_list" and level < depth:
            if open_counts:
                open_counts[-1] += 1
            open_counts.append(0)
        elif kind == "end_list" and level > 0:
            n = open_counts.pop()
            offsets[level - 1].append(offsets[level - 1][-1] + n)
        elif kind == "append" and level == depth:
            if open_counts:
                open_counts[-1] += 1
            content.append(value)
        else:
            rejected = i
            break
    columns = {f"offsets{k}": np.array(o, np.int32) for k, o in enumerate(offsets)}
    columns["content"] = np.array(content, dtype=np.float64).astype(leaf.numpy)
    return columns, rejected


def commands_for(values: Sequence, depth: int) -> list[tuple[str, float | None]]:
    """Command stream that builds ``values`` (each a ``depth``-nested list)."""
    out: list[tuple[str, float | None]] = []

    def walk(v, k):
        if k == depth:
            out.append(("append", float(v)))
            return
        out.append(("begin_list", None))
        for item in v:
            walk(item, k + 1)
        out.append(("end_list", None))

    for v in values:
        walk(v, 0)
    return out
