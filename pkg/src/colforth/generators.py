"""Generate Forth source from type descriptions.

Each generator returns a :class:`GeneratedProgram`: source text, the ordered
column plan matching the program's outputs, and the form that nests those
columns into a :class:`~colforth.columnar.ColumnarResult`. Generation is
deterministic, so equal descriptors give byte-identical source.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

from .bytecode import OutputDtype
from .columnar import (
    ColumnSpec,
    Form,
    IndexForm,
    LeafForm,
    ListForm,
    RecordForm,
    StringForm,
)
from .compiler import Program, compile_source
from .types import Bytes, ListOf, Primitive, Record, String, TypeDescriptor, list_chain


class UnsupportedSchema(ValueError):
    pass


class InvalidCommandMap(ValueError):
    pass


DEFAULT_COMMAND_IDS = {"begin_list": 0, "end_list": 1, "append": 2}

# leaf dtype -> fixed-width read code
READ_CODE = {
    OutputDtype.BOOL: "B",
    OutputDtype.INT8: "b",
    OutputDtype.UINT8: "B",
    OutputDtype.INT16: "h",
    OutputDtype.UINT16: "H",
    OutputDtype.INT32: "i",
    OutputDtype.UINT32: "I",
    OutputDtype.INT64: "q",
    OutputDtype.UINT64: "Q",
    OutputDtype.FLOAT32: "f",
    OutputDtype.FLOAT64: "d",
}

# Avro primitive kinds this generator decodes, by output dtype
AVRO_READ = {
    OutputDtype.BOOL: "B->",
    OutputDtype.INT32: "zigzag->",
    OutputDtype.INT64: "zigzag->",
    OutputDtype.FLOAT32: "f->",
    OutputDtype.FLOAT64: "d->",
}


@dataclass(frozen=True)
class GeneratedProgram:
    source: str
    column_plan: tuple[ColumnSpec, ...]
    form: Form
    placeholders: Mapping[str, int] = field(default_factory=dict)

    @cached_property
    def program(self) -> Program:
        return compile_source(self.source)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.column_plan]


class _Source:
    def __init__(self):
        self.lines: list[str] = []
        self.indent = 0

    def emit(self, *words: str):
        line = " ".join(words)
        self.lines.append("  " * self.indent + line if line else "")

    def block(self, opener: str, closer: str, body):
        self.emit(opener)
        self.indent += 1
        body()
        self.indent -= 1
        self.emit(closer)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _declare(src: _Source, inputs: list[str], plan: list[ColumnSpec]):
    for name in inputs:
        src.emit("input", name)
    src.emit()
    for col in plan:
        src.emit("output", col.name, col.dtype.type_name)
    src.emit()


def _seed_offsets(src: _Source, plan: list[ColumnSpec]):
    for col in plan:
        if col.role == "offsets":
            src.emit("0", col.name, "<-", "stack")
    src.emit()


def _nested_form(depth: int, leaf: str = "content", prefix: str = "") -> Form:
    form: Form = LeafForm(leaf)
    for k in reversed(range(depth)):
        form = ListForm(f"{prefix}offsets{k}", form)
    return form


def _nested_plan(depth: int, leaf: OutputDtype) -> list[ColumnSpec]:
    plan = [ColumnSpec(f"offsets{k}", OutputDtype.INT32, "offsets", k) for k in range(depth)]
    plan.append(ColumnSpec("content", leaf, "content", depth))
    return plan


def _as_dtype(leaf) -> OutputDtype:
    if isinstance(leaf, Primitive):
        return leaf.dtype
    return OutputDtype.parse(leaf) if isinstance(leaf, str) else leaf


# -- nested vectors in a length-prefixed payload -------------------------------


def gen_tbasket_program(depth: int, leaf: OutputDtype | str = OutputDtype.FLOAT32) -> GeneratedProgram:
    """Reader for entries of ``depth``-nested vectors with big-endian u32 sizes.

    Each entry starts at the next value of ``byte_offsets`` and carries a
    6-byte header. The outer loop never ends on its own: it stops with
    seek-beyond once the offsets run out, and the driver accepts that.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    leaf = _as_dtype(leaf)
    plan = _nested_plan(depth, leaf)
    src = _Source()
    _declare(src, ["data", "byte_offsets"], plan)
    _seed_offsets(src, plan)

    def level(k: int):
        src.emit("data", "!i->", "stack")
        src.emit("dup", f"offsets{k}", "+<-", "stack")
        if k == depth - 1:
            src.emit("data", f"#!{READ_CODE[leaf]}->", "content")
        else:
            src.block("0 do", "loop", lambda: level(k + 1))

    def entry():
        src.emit("byte_offsets", "i->", "stack")
        src.emit("6", "+", "data", "seek")
        level(0)

    src.block("begin", "again", entry)
    return GeneratedProgram(src.text(), tuple(plan), _nested_form(depth))


# -- Avro values ---------------------------------------------------------------


class _AvroEmitter:
    def __init__(self, style: str):
        if style not in ("general", "single_block"):
            raise ValueError(f"unknown style {style!r}")
        self.style = style
        self.src = _Source()
        self.plan: list[ColumnSpec] = []

    def column(self, name: str, dtype: OutputDtype, role: str, level: int) -> str:
        self.plan.append(ColumnSpec(name, dtype, role, level))
        return name

    # Layout pass: assign columns and build the form without emitting code.
    def layout(self, node: TypeDescriptor, prefix: str, level: int) -> Form:
        if isinstance(node, Primitive):
            if node.dtype not in AVRO_READ:
                raise UnsupportedSchema(f"no Avro encoding for {node.dtype.type_name}")
            return LeafForm(self.column(prefix + "content", node.dtype, "content", level))
        if isinstance(node, (String, Bytes)):
            offsets = self.column(f"{prefix}offsets{level}", OutputDtype.INT32, "offsets", level)
            content = self.column(prefix + "content", OutputDtype.UINT8, "content", level + 1)
            return StringForm(offsets, content, utf8=isinstance(node, String))
        if isinstance(node, ListOf):
            offsets = self.column(f"{prefix}offsets{level}", OutputDtype.INT32, "offsets", level)
            return ListForm(offsets, self.layout(node.item, prefix, level + 1))
        if isinstance(node, Record):
            if not node.fields:
                raise UnsupportedSchema("records need at least one field")
            return RecordForm(tuple(
                (name, self.layout(t, f"{prefix}{name}.", level)) for name, t in node.fields
            ))
        raise UnsupportedSchema(f"unsupported schema node {node!r}")

    # Code pass: "value" reads one value; "items" reads as many as the count on the stack.
    def value(self, node: TypeDescriptor, form: Form):
        e = self.src.emit
        if isinstance(form, LeafForm):
            e("data", AVRO_READ[node.dtype], form.content)
        elif isinstance(form, StringForm):
            e("data", "zigzag->", "stack")
            e("dup", form.offsets, "+<-", "stack")
            e("data", "#B->", form.content)
        elif isinstance(form, RecordForm):
            for (_, t), (_, f) in zip(node.fields, form.fields):
                self.value(t, f)
        elif self.style == "single_block":
            e("data", "zigzag->", "stack")
            e("dup", form.offsets, "+<-", "stack")
            self.items(node.item, form.content)
            e("data", "b->", "stack", "drop")
        else:
            self.general_list(node, form)

    def general_list(self, node: ListOf, form: ListForm):
        e = self.src.emit

        def block():
            e("dup", "while")
            self.src.block("dup 0 < if", "then", lambda: e("negate", "data", "zigzag->", "stack", "drop"))
            e("dup", "rot", "+", "swap")
            self.items(node.item, form.content)
            e("data", "zigzag->", "stack")

        e("0", "data", "zigzag->", "stack")
        self.src.block("begin", "repeat", block)
        e("drop", form.offsets, "+<-", "stack")

    def items(self, node: TypeDescriptor, form: Form):
        if isinstance(form, LeafForm):
            self.src.emit("data", "#" + AVRO_READ[node.dtype], form.content)
        else:
            self.src.block("0 do", "loop", lambda: self.value(node, form))


def gen_avro_program(schema: TypeDescriptor, style: str = "general") -> GeneratedProgram:
    """Reader for one Avro data block; the block's entry count is pushed before running.

    ``style="general"`` accepts any block split of arrays (including negative
    counts with byte sizes) and empty arrays. ``style="single_block"`` assumes
    each array is one count, its items and a terminating zero, and
    discards that terminator unchecked.
    """
    em = _AvroEmitter(style)
    form = em.layout(schema, "", 0)
    src = em.src
    _declare(src, ["data"], em.plan)
    _seed_offsets(src, em.plan)
    src.block("0 do", "loop", lambda: em.value(schema, form))
    return GeneratedProgram(src.text(), tuple(em.plan), form)


# -- repetition levels ---------------------------------------------------------


def replevel_bit_width(max_level: int) -> int:
    return max(1, int(max_level).bit_length())


def gen_replevel_decoder(max_level: int) -> GeneratedProgram:
    """Decode a length-prefixed RLE/bit-packed hybrid stream into ``replevels``.

    The stream must hold at least one run; empty streams are handled by the
    pipeline driver before running.
    """
    if max_level < 1:
        raise ValueError("max_level must be at least 1")
    if max_level > 255:
        raise ValueError("max_level must fit in one byte")
    bits = replevel_bit_width(max_level)
    plan = [ColumnSpec("replevels", OutputDtype.UINT8, "content", 0)]
    src = _Source()
    _declare(src, ["data"], plan)
    e = src.emit
    e("data", "I->", "stack")

    def run():
        e("data", "varint->", "stack")
        e("dup", "1", "and")
        e()
        e("0=", "if")
        src.indent += 1
        e("data", "B->", "replevels")
        e("1", "rshift", "1-")
        e("replevels", "dup")
        src.indent -= 1
        e("else")
        src.indent += 1
        e("1", "rshift", "8", "*")
        e("data", f"#{bits}bit->", "replevels")
        src.indent -= 1
        e("then")
        e()
        e("dup", "data", "pos", "4", "-", "=")

    src.block("begin", "until", run)
    return GeneratedProgram(src.text(), tuple(plan), LeafForm("replevels"))


def gen_replevel_to_offsets(depth: int) -> GeneratedProgram:
    """Convert repetition levels (0..depth) into ``depth`` offsets columns."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    plan = [ColumnSpec(f"offsets{k}", OutputDtype.INT32, "offsets", k) for k in range(depth)]
    src = _Source()
    _declare(src, ["replevels"], plan)
    for k in range(depth):
        src.emit("variable", f"count{k}")
    src.emit()
    e = src.emit

    def flush(k: int):
        e(f"count{k}", "@", f"offsets{k}", "+<-", "stack", "1", f"count{k}", "!")

    def level(lv: int):
        opener = "0 = if" if lv == 0 else f"dup {lv} = if"

        def body():
            if lv >= 1:
                e("1", f"count{lv - 1}", "+!")
            for k in range(lv, depth):
                flush(k)

        src.block(opener, "then", body)

    def step():
        e("replevels", "b->", "stack")
        for lv in range(depth, -1, -1):
            level(lv)
        e("replevels", "end")

    src.block("replevels len if", "then", lambda: src.block("begin", "until", step))
    e()
    for k in range(depth):
        e(f"count{k}", "@", f"offsets{k}", "+<-", "stack")
    return GeneratedProgram(src.text(), tuple(plan), _offsets_only_form(depth))


def _offsets_only_form(depth: int) -> Form:
    form: Form = IndexForm()
    for k in reversed(range(depth)):
        form = ListForm(f"offsets{k}", form)
    return form


# -- builder template ----------------------------------------------------------


def _check_command_ids(command_ids: Mapping[str, int] | None) -> dict[str, int]:
    ids = dict(DEFAULT_COMMAND_IDS)
    if command_ids:
        unknown = set(command_ids) - set(ids)
        if unknown:
            raise InvalidCommandMap(f"unknown commands {sorted(unknown)}")
        ids.update(command_ids)
    values = [int(v) for v in ids.values()]
    if len(set(values)) != len(values):
        raise InvalidCommandMap(f"command ids are not distinct: {ids}")
    return {k: int(v) for k, v in ids.items()}


def gen_builder_program(descriptor: TypeDescriptor,
                        command_ids: Mapping[str, int] | None = None) -> GeneratedProgram:
    """Command-driven builder for nested lists of one float type.

    The host pushes a command id and resumes; for ``append`` it first places
    the value as a little-endian float64 at the start of input ``data``.
    """
    chain = list_chain(descriptor)
    if chain is None or not chain[1].dtype.is_float:
        raise UnsupportedSchema("builder programs need nested lists over float32 or float64")
    depth, leaf = chain
    ids = _check_command_ids(command_ids)
    plan = _nested_plan(depth, leaf.dtype)
    src = _Source()
    _declare(src, ["data"], plan)
    _seed_offsets(src, plan)
    e = src.emit

    e(":", f"node{depth}")
    src.indent += 1
    e(str(ids["append"]), "=", "if")
    src.indent += 1
    e("0", "data", "seek")
    e("data", "d->", "content")
    src.indent -= 1
    e("else")
    src.indent += 1
    e("halt")
    src.indent -= 1
    e("then")
    src.indent -= 1
    e(";")
    e()

    for k in reversed(range(depth)):
        e(":", f"node{k}")
        src.indent += 1
        src.block(f"{ids['begin_list']} <> if", "then", lambda: e("halt"))

        def loop_body(k=k):
            e("pause", "dup", str(ids["end_list"]), "=", "if")
            src.indent += 1
            e("drop")
            e(f"offsets{k}", "+<-", "stack")
            e("exit")
            src.indent -= 1
            e("else")
            src.indent += 1
            e(f"node{k + 1}")
            e("1+")
            src.indent -= 1
            e("then")

        src.block("0 begin", "again", loop_body)
        src.indent -= 1
        e(";")
        e()

    src.block("0 begin", "again", lambda: e("pause", "node0"))
    return GeneratedProgram(src.text(), tuple(plan), _nested_form(depth), ids)
