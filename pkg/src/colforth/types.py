"""Type descriptors that programs are generated from."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .bytecode import OutputDtype


@dataclass(frozen=True)
class Primitive:
    dtype: OutputDtype

    def __init__(self, dtype: OutputDtype | str):
        if isinstance(dtype, str):
            dtype = OutputDtype.parse(dtype)
        object.__setattr__(self, "dtype", dtype)


@dataclass(frozen=True)
class ListOf:
    item: TypeDescriptor


@dataclass(frozen=True)
class Record:
    fields: tuple[tuple[str, TypeDescriptor], ...]

    def __init__(self, fields):
        fields = tuple(fields.items()) if isinstance(fields, dict) else tuple(fields)
        names = [name for name, _ in fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in {names}")
        object.__setattr__(self, "fields", tuple((n, t) for n, t in fields))


@dataclass(frozen=True)
class String:
    pass


@dataclass(frozen=True)
class Bytes:
    pass


TypeDescriptor = Union[Primitive, ListOf, Record, String, Bytes]


def nested_list(depth: int, leaf: OutputDtype | str = OutputDtype.FLOAT32) -> TypeDescriptor:
    """``depth`` levels of lists around one primitive."""
    node: TypeDescriptor = Primitive(leaf)
    for _ in range(depth):
        node = ListOf(node)
    return node


def depth(node: TypeDescriptor) -> int:
    """Maximum number of list (or string/bytes) levels on any path."""
    if isinstance(node, ListOf):
        return 1 + depth(node.item)
    if isinstance(node, (String, Bytes)):
        return 1
    if isinstance(node, Record):
        return max((depth(t) for _, t in node.fields), default=0)
    return 0


def list_chain(node: TypeDescriptor) -> tuple[int, Primitive] | None:
    """``(depth, leaf)`` if ``node`` is lists around a single primitive, else None."""
    levels = 0
    while isinstance(node, ListOf):
        node = node.item
        levels += 1
    if isinstance(node, Primitive):
        return levels, node
    return None
