"""Columnar results: named typed columns plus the form that nests them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .bytecode import OutputDtype


class InvalidOffsets(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    dtype: OutputDtype
    role: str  # "offsets" or "content"
    level: int = 0


@dataclass(frozen=True)
class LeafForm:
    content: str


@dataclass(frozen=True)
class IndexForm:
    """Leaf without a column: items are their positions (repetition-level offsets)."""

    length: int = -1


@dataclass(frozen=True)
class ListForm:
    offsets: str
    content: Form


@dataclass(frozen=True)
class StringForm:
    offsets: str
    content: str
    utf8: bool = True


@dataclass(frozen=True)
class RecordForm:
    fields: tuple[tuple[str, Form], ...]


Form = Union[LeafForm, IndexForm, ListForm, StringForm, RecordForm]


def form_columns(form: Form) -> list[str]:
    """Column names referenced by ``form``, outer to inner."""
    if isinstance(form, LeafForm):
        return [form.content]
    if isinstance(form, IndexForm):
        return []
    if isinstance(form, ListForm):
        return [form.offsets] + form_columns(form.content)
    if isinstance(form, StringForm):
        return [form.offsets, form.content]
    return [name for _, f in form.fields for name in form_columns(f)]


@dataclass
class ColumnarResult:
    """Columns by name, the form that nests them, and the number of entries."""

    columns: dict[str, np.ndarray]
    form: Form
    length: int = -1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.length < 0:
            self.length = self._form_length(self.form)

    def _form_length(self, form: Form) -> int:
        if isinstance(form, LeafForm):
            return len(self.columns[form.content])
        if isinstance(form, IndexForm):
            return form.length
        if isinstance(form, (ListForm, StringForm)):
            return max(len(self.columns[form.offsets]) - 1, 0)
        lengths = {self._form_length(f) for _, f in form.fields}
        if len(lengths) > 1:
            raise InvalidOffsets(f"record fields disagree on length: {sorted(lengths)}")
        return lengths.pop() if lengths else 0

    def validate(self) -> ColumnarResult:
        """Check every offsets column: starts at 0, non-decreasing, ends at the inner length."""
        self._check(self.form, self.length, "")
        return self

    def _check(self, form: Form, expected: int, where: str):
        if isinstance(form, IndexForm):
            if form.length >= 0 and expected != form.length:
                raise InvalidOffsets(f"{where or 'leaf'}: {expected} items, expected {form.length}")
            return
        if isinstance(form, LeafForm):
            n = len(self.columns[form.content])
            if n != expected:
                raise InvalidOffsets(f"{form.content}: length {n}, expected {expected}")
            return
        if isinstance(form, RecordForm):
            for name, f in form.fields:
                self._check(f, expected, name)
            return
        offsets = self.columns[form.offsets]
        if len(offsets) != expected + 1:
            raise InvalidOffsets(f"{form.offsets}: length {len(offsets)}, expected {expected + 1}")
        if offsets[0] != 0:
            raise InvalidOffsets(f"{form.offsets}: first offset is {offsets[0]}, not 0")
        if len(offsets) > 1 and np.any(np.diff(offsets.astype(np.int64)) < 0):
            raise InvalidOffsets(f"{form.offsets}: offsets decrease")
        inner = int(offsets[-1])
        if isinstance(form, StringForm):
            n = len(self.columns[form.content])
            if n != inner:
                raise InvalidOffsets(f"{form.content}: length {n}, expected {inner}")
            return
        self._check(form.content, inner, form.offsets)

    def to_list(self) -> list:
        """Reconstruct the nested Python values."""
        return [self._item(self.form, i) for i in range(self.length)]

    def _item(self, form: Form, i: int):
        if isinstance(form, IndexForm):
            return i
        if isinstance(form, LeafForm):
            return self.columns[form.content][i].item()
        if isinstance(form, RecordForm):
            return {name: self._item(f, i) for name, f in form.fields}
        offsets = self.columns[form.offsets]
        start, stop = int(offsets[i]), int(offsets[i + 1])
        if isinstance(form, StringForm):
            raw = self.columns[form.content][start:stop].tobytes()
            return raw.decode("utf-8") if form.utf8 else raw
        return [self._item(form.content, j) for j in range(start, stop)]

    def equals(self, other: ColumnarResult) -> bool:
        """Element-exact comparison (floats compared bit for bit)."""
        if self.length != other.length or self.columns.keys() != other.columns.keys():
            return False
        for name, a in self.columns.items():
            b = other.columns[name]
            if a.dtype != b.dtype or a.shape != b.shape:
                return False
            if a.tobytes() != b.tobytes():
                return False
        return True


def concatenate(parts: list[ColumnarResult], form: Form) -> ColumnarResult:
    """Join per-block results; offsets of later blocks are shifted onto earlier ones."""
    names = form_columns(form)
    offsets_names = set()
    _collect_offsets(form, offsets_names)
    columns = {}
    for name in names:
        pieces = [p.columns[name] for p in parts]
        if not pieces:
            raise ValueError("nothing to concatenate")
        if name in offsets_names:
            out = [pieces[0]]
            total = pieces[0][-1] if len(pieces[0]) else 0
            for piece in pieces[1:]:
                out.append(piece[1:] + total)
                total = total + (piece[-1] if len(piece) else 0)
            columns[name] = np.concatenate(out).astype(pieces[0].dtype, copy=False)
        else:
            columns[name] = np.concatenate(pieces)
    return ColumnarResult(columns, form, sum(p.length for p in parts))


def _collect_offsets(form: Form, out: set):
    if isinstance(form, (ListForm, StringForm)):
        out.add(form.offsets)
    if isinstance(form, ListForm):
        _collect_offsets(form.content, out)
    if isinstance(form, RecordForm):
        for _, f in form.fields:
            _collect_offsets(f, out)
