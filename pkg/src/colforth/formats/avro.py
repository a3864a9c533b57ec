"""Avro object container files: parse, decode blocks with generated programs, write."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..columnar import ColumnarResult, concatenate
from ..errors import ForthRuntimeError
from ..generators import GeneratedProgram, UnsupportedSchema, gen_avro_program
from ..machine import Machine, StopReason
from ..types import Bytes, ListOf, Primitive, Record, String, TypeDescriptor
from ..bytecode import OutputDtype
from .oracle import SchemaMismatch, avro_decode, avro_encode, long_decode, long_encode

MAGIC = b"Obj\x01"
SYNC_SIZE = 16


class AvroFormatError(ValueError):
    pass


class BadMagic(AvroFormatError):
    pass


class UnsupportedCodec(AvroFormatError):
    pass


class SyncMismatch(AvroFormatError):
    pass


class CorruptBlock(AvroFormatError):
    pass


# -- schema JSON ---------------------------------------------------------------

_PRIMITIVES = {
    "boolean": OutputDtype.BOOL,
    "int": OutputDtype.INT32,
    "long": OutputDtype.INT64,
    "float": OutputDtype.FLOAT32,
    "double": OutputDtype.FLOAT64,
}
_PRIMITIVE_NAMES = {v: k for k, v in _PRIMITIVES.items()}


def schema_to_descriptor(schema) -> TypeDescriptor:
    """Avro schema (JSON text or parsed) to a type descriptor."""
    if isinstance(schema, bytes):
        schema = schema.decode("utf-8")
    if isinstance(schema, str) and schema.strip()[:1] in ("{", "[", '"'):
        try:
            schema = json.loads(schema)
        except ValueError as exc:
            raise UnsupportedSchema(f"schema is not valid JSON: {exc}") from None
    return _descriptor(schema)


def _descriptor(node) -> TypeDescriptor:
    if isinstance(node, str):
        if node in _PRIMITIVES:
            return Primitive(_PRIMITIVES[node])
        if node == "string":
            return String()
        if node == "bytes":
            return Bytes()
        raise UnsupportedSchema(f"unsupported Avro type {node!r}")
    if isinstance(node, list):
        raise UnsupportedSchema("unions are not supported")
    if not isinstance(node, dict) or "type" not in node:
        raise UnsupportedSchema(f"malformed schema node {node!r}")
    kind = node["type"]
    if kind == "array":
        return ListOf(_descriptor(node.get("items")))
    if kind == "record":
        fields = node.get("fields")
        if not isinstance(fields, list) or not fields:
            raise UnsupportedSchema("records need a non-empty field list")
        try:
            return Record([(f["name"], _descriptor(f["type"])) for f in fields])
        except (KeyError, TypeError):
            raise UnsupportedSchema(f"malformed record fields in {node.get('name')!r}") from None
    if isinstance(kind, (str, list, dict)) and kind not in ("map", "enum", "fixed"):
        return _descriptor(kind)
    raise UnsupportedSchema(f"unsupported Avro type {kind!r}")


def descriptor_to_schema(node: TypeDescriptor, _names=None):
    """Type descriptor to a JSON-compatible Avro schema; records get generated names."""
    names = _names if _names is not None else [0]
    if isinstance(node, Primitive):
        if node.dtype not in _PRIMITIVE_NAMES:
            raise UnsupportedSchema(f"no Avro type for {node.dtype.type_name}")
        return _PRIMITIVE_NAMES[node.dtype]
    if isinstance(node, String):
        return "string"
    if isinstance(node, Bytes):
        return "bytes"
    if isinstance(node, ListOf):
        return {"type": "array", "items": descriptor_to_schema(node.item, names)}
    if isinstance(node, Record):
        names[0] += 1
        name = f"r{names[0]}"
        return {
            "type": "record",
            "name": name,
            "fields": [{"name": n, "type": descriptor_to_schema(t, names)} for n, t in node.fields],
        }
    raise UnsupportedSchema(f"unsupported descriptor {node!r}")


# -- container layout ----------------------------------------------------------


@dataclass(frozen=True)
class Block:
    index: int
    count: int
    start: int  # payload offset in the file
    size: int


@dataclass(frozen=True)
class AvroContainer:
    metadata: dict[str, bytes]
    sync: bytes
    blocks: tuple[Block, ...]
    data: np.ndarray  # whole file, uint8

    @property
    def schema(self) -> TypeDescriptor:
        return schema_to_descriptor(self.metadata["avro.schema"].decode("utf-8"))

    def payload(self, block: Block) -> np.ndarray:
        return self.data[block.start : block.start + block.size]


def _read_long(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    try:
        return long_decode(buf, pos)
    except (EOFError, OverflowError) as exc:
        raise AvroFormatError(f"bad {what} at byte {pos}: {exc}") from None


def parse_container(data) -> AvroContainer:
    """Parse header and block framing; payloads are not decoded."""
    if isinstance(data, np.ndarray):
        arr = data.view(np.uint8).reshape(-1)
    else:
        arr = np.frombuffer(bytearray(data), dtype=np.uint8)
    buf = memoryview(arr)
    if bytes(buf[:4]) != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {bytes(buf[:4])!r}")
    pos = 4
    metadata: dict[str, bytes] = {}
    while True:
        count, pos = _read_long(buf, pos, "metadata count")
        if count == 0:
            break
        if count < 0:
            count = -count
            _, pos = _read_long(buf, pos, "metadata size")
        for _ in range(count):
            klen, pos = _read_long(buf, pos, "metadata key")
            key = bytes(buf[pos : pos + klen]).decode("utf-8")
            pos += klen
            vlen, pos = _read_long(buf, pos, "metadata value")
            metadata[key] = bytes(buf[pos : pos + vlen])
            pos += vlen
    if pos + SYNC_SIZE > len(buf):
        raise AvroFormatError("file ends inside the header")
    sync = bytes(buf[pos : pos + SYNC_SIZE])
    pos += SYNC_SIZE
    codec = metadata.get("avro.codec", b"null")
    if codec not in (b"null", b""):
        raise UnsupportedCodec(f"codec {codec.decode(errors='replace')!r} is not supported")
    if "avro.schema" not in metadata:
        raise AvroFormatError("header has no avro.schema")

    blocks = []
    while pos < len(buf):
        count, pos = _read_long(buf, pos, "block count")
        size, pos = _read_long(buf, pos, "block size")
        if count < 0 or size < 0 or pos + size + SYNC_SIZE > len(buf):
            raise CorruptBlock(f"block {len(blocks)} is truncated or malformed")
        blocks.append(Block(len(blocks), count, pos, size))
        pos += size
        if bytes(buf[pos : pos + SYNC_SIZE]) != sync:
            raise SyncMismatch(f"block {len(blocks) - 1} is not followed by the sync marker")
        pos += SYNC_SIZE
    return AvroContainer(metadata, sync, tuple(blocks), arr)


# -- decoding with generated programs ------------------------------------------


def decode_block(machine: Machine, container: AvroContainer, block: Block,
                 generated: GeneratedProgram) -> ColumnarResult:
    machine.reset()
    machine.begin_run({"data": container.payload(block)})
    machine.push(block.count)
    reason = machine.resume()
    if reason is StopReason.ERROR:
        raise ForthRuntimeError(machine.error, f"block {block.index}")
    if reason is not StopReason.DONE:
        raise CorruptBlock(f"block {block.index}: program stopped with {reason.value}")
    if machine.input_position("data") != block.size:
        raise CorruptBlock(
            f"block {block.index}: decoded {machine.input_position('data')} of {block.size} bytes"
        )
    return ColumnarResult(machine.outputs(), generated.form, block.count)


def _decode_range(container, blocks, generated) -> list[ColumnarResult]:
    machine = Machine(generated.program)
    return [decode_block(machine, container, b, generated) for b in blocks]


def read_avro(data, schema: TypeDescriptor | None = None, threads: int = 1,
              style: str = "general") -> ColumnarResult:
    """Decode every block of a container into one columnar result.

    With ``threads > 1`` blocks are split into contiguous runs, each decoded
    by its own machine; results are merged in block order, so the output
    does not depend on the thread count.
    """
    container = data if isinstance(data, AvroContainer) else parse_container(data)
    descriptor = schema if schema is not None else container.schema
    generated = gen_avro_program(descriptor, style)
    generated.program  # compile once, before workers start
    blocks = list(container.blocks)
    if not blocks:
        return _empty(generated)
    threads = max(1, min(int(threads), len(blocks)))
    if threads == 1:
        parts = _decode_range(container, blocks, generated)
    else:
        chunks = [list(c) for c in np.array_split(np.arange(len(blocks)), threads)]
        with ThreadPoolExecutor(threads) as pool:
            futures = [
                pool.submit(_decode_range, container, [blocks[i] for i in chunk], generated)
                for chunk in chunks
            ]
            parts = [p for f in futures for p in f.result()]
    return concatenate(parts, generated.form).validate()


def _empty(generated: GeneratedProgram) -> ColumnarResult:
    columns = {}
    for col in generated.column_plan:
        seed = [0] if col.role == "offsets" else []
        columns[col.name] = np.array(seed, dtype=col.dtype.numpy)
    return ColumnarResult(columns, generated.form, 0)


def read_avro_oracle(data) -> tuple[TypeDescriptor, list]:
    """Decode a container with the pure-Python value decoder."""
    container = data if isinstance(data, AvroContainer) else parse_container(data)
    descriptor = container.schema
    values = []
    for block in container.blocks:
        buf = container.payload(block).tobytes()
        pos = 0
        for _ in range(block.count):
            value, pos = avro_decode(buf, pos, descriptor)
            values.append(value)
        if pos != block.size:
            raise CorruptBlock(f"block {block.index}: {block.size - pos} trailing bytes")
    return descriptor, values


# -- writing -------------------------------------------------------------------


def _default_sync(schema_json: str) -> bytes:
    return hashlib.md5(schema_json.encode("utf-8")).digest()


def container_bytes(schema_json: str, payloads: Sequence[tuple[int, bytes]],
                    sync: bytes | None = None, metadata: dict[str, bytes] | None = None) -> bytes:
    """Assemble a container from already-encoded block payloads ``(count, bytes)``."""
    sync = sync if sync is not None else _default_sync(schema_json)
    if len(sync) != SYNC_SIZE:
        raise ValueError("sync marker must be 16 bytes")
    meta = {"avro.schema": schema_json.encode("utf-8"), "avro.codec": b"null"}
    meta.update(metadata or {})
    out = bytearray(MAGIC)
    out += long_encode(len(meta))
    for key, value in meta.items():
        k = key.encode("utf-8")
        out += long_encode(len(k)) + k + long_encode(len(value)) + value
    out += long_encode(0)
    out += sync
    for count, payload in payloads:
        out += long_encode(count) + long_encode(len(payload))
        out += payload
        out += sync
    return bytes(out)


def write_avro_oracle(values: Sequence, schema: TypeDescriptor, block_size: int = 1000,
                      sync: bytes | None = None, splits=None) -> bytes:
    """Encode ``values`` into a null-codec container, ``block_size`` entries per block.

    ``splits`` (a numpy Generator) cuts arrays into several blocks with mixed
    count signs; without it every array is one block plus the terminator.
    """
    if block_size < 1:
        raise ValueError("block_size must be positive")
    schema_json = json.dumps(descriptor_to_schema(schema))
    payloads = []
    for start in range(0, len(values), block_size):
        chunk = values[start : start + block_size]
        body = bytearray()
        for v in chunk:
            avro_encode(v, schema, body, splits)
        payloads.append((len(chunk), bytes(body)))
    return container_bytes(schema_json, payloads, sync)


def encode_nested_block(result: ColumnarResult, start: int, stop: int) -> bytes:
    """Avro payload for entries ``start:stop`` of nested lists of one float type.

    Works from offsets and content directly, so large corpora avoid Python
    value objects. Arrays use the single-block pattern.
    """
    names = []
    form = result.form
    while hasattr(form, "offsets"):
        names.append(form.offsets)
        form = form.content
    offsets = [result.columns[n] for n in names]
    content = result.columns[form.content]
    if content.dtype not in (np.float32, np.float64):
        raise SchemaMismatch("nested block encoding supports float content only")
    raw = content.astype(content.dtype.newbyteorder("<"), copy=False)
    depth = len(offsets)
    out = bytearray()

    def walk(level: int, i: int):
        a, b = int(offsets[level][i]), int(offsets[level][i + 1])
        if a == b:
            out.append(0)
            return
        out.extend(long_encode(b - a))
        if level == depth - 1:
            out.extend(raw[a:b].tobytes())
        else:
            for j in range(a, b):
                walk(level + 1, j)
        out.append(0)

    for i in range(start, stop):
        walk(0, i)
    return bytes(out)


def write_avro_columns(result: ColumnarResult, block_size: int, sync: bytes | None = None) -> bytes:
    """Container holding nested float lists given as columns."""
    depth = 0
    form = result.form
    while hasattr(form, "offsets"):
        depth += 1
        form = form.content
    dtype = OutputDtype.FLOAT32 if result.columns[form.content].dtype == np.float32 else OutputDtype.FLOAT64
    node: TypeDescriptor = Primitive(dtype)
    for _ in range(depth):
        node = ListOf(node)
    schema_json = json.dumps(descriptor_to_schema(node))
    payloads = [
        (min(block_size, result.length - s), encode_nested_block(result, s, min(s + block_size, result.length)))
        for s in range(0, result.length, block_size)
    ]
    return container_bytes(schema_json, payloads, sync)


def replicate_blocks(data: bytes, copies: int) -> bytes:
    """Repeat every block of a container ``copies`` times (for large benchmark corpora)."""
    container = parse_container(data)
    schema_json = container.metadata["avro.schema"].decode("utf-8")
    payloads = [(b.count, container.payload(b).tobytes()) for b in container.blocks]
    return container_bytes(schema_json, payloads * copies, container.sync)


def random_sync(rng: np.random.Generator | None = None) -> bytes:
    return rng.bytes(SYNC_SIZE) if rng is not None else os.urandom(SYNC_SIZE)
