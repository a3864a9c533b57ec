"""Synthetic nested-vector baskets: a payload buffer plus entry byte offsets.

Each entry is a 6-byte header (0xFF filler) followed by the nested vector:
a big-endian u32 size and then either the nested items or, at the innermost
level, the big-endian leaf values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..bytecode import ErrorKind, OutputDtype
from ..columnar import ColumnarResult, LeafForm, ListForm
from ..errors import ForthRuntimeError
from ..generators import gen_tbasket_program
from ..machine import Machine, StopReason
from .oracle import nested_columns

HEADER = b"\xff" * 6


class TruncatedBasket(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticBasket:
    data: bytes
    byte_offsets: np.ndarray  # int32, one start per entry plus the final end

    @property
    def entries(self) -> int:
        return len(self.byte_offsets) - 1

    def save(self, stem: str | Path):
        stem = Path(stem)
        stem.with_name(stem.name + ".data").write_bytes(self.data)
        stem.with_name(stem.name + ".byte_offsets").write_bytes(
            self.byte_offsets.astype("<i4").tobytes()
        )

    @classmethod
    def load(cls, stem: str | Path) -> SyntheticBasket:
        stem = Path(stem)
        data = stem.with_name(stem.name + ".data").read_bytes()
        raw = stem.with_name(stem.name + ".byte_offsets").read_bytes()
        return cls(data, np.frombuffer(raw, dtype="<i4").astype(np.int32))


def _leaf_depth(result: ColumnarResult) -> tuple[list[np.ndarray], np.ndarray]:
    offsets = []
    form = result.form
    while isinstance(form, ListForm):
        offsets.append(result.columns[form.offsets])
        form = form.content
    return offsets, result.columns[form.content]


def write_synthetic_baskets(values: Sequence | ColumnarResult, depth: int,
                            leaf: OutputDtype | str = OutputDtype.FLOAT32) -> SyntheticBasket:
    """Serialize entries given as nested lists or as offsets/content columns."""
    leaf = OutputDtype.parse(leaf) if isinstance(leaf, str) else leaf
    result = values if isinstance(values, ColumnarResult) else nested_columns(values, depth, leaf)
    offsets, content = _leaf_depth(result)
    if len(offsets) != depth:
        raise ValueError(f"values have depth {len(offsets)}, expected {depth}")
    big = content.astype(leaf.numpy.newbyteorder(">"))
    out = bytearray()
    starts = []

    def walk(level: int, i: int):
        a, b = int(offsets[level][i]), int(offsets[level][i + 1])
        out.extend((b - a).to_bytes(4, "big"))
        if level == depth - 1:
            out.extend(big[a:b].tobytes())
        else:
            for j in range(a, b):
                walk(level + 1, j)

    for i in range(result.length):
        starts.append(len(out))
        out.extend(HEADER)
        walk(0, i)
    starts.append(len(out))
    return SyntheticBasket(bytes(out), np.array(starts, dtype=np.int32))


def read_synthetic_baskets(basket: SyntheticBasket, depth: int,
                           leaf: OutputDtype | str = OutputDtype.FLOAT32,
                           machine: Machine | None = None) -> ColumnarResult:
    """Run the nested-vector program; its seek-beyond stop is the normal end.

    The stop counts as normal only when every byte offset was read and the
    last one equals the payload length.
    """
    generated = gen_tbasket_program(depth, leaf)
    machine = machine or Machine(generated.program)
    offsets = np.ascontiguousarray(basket.byte_offsets, dtype="<i4")
    machine.reset()
    machine.begin_run({"data": np.frombuffer(basket.data, np.uint8).copy(), "byte_offsets": offsets.copy()})
    reason = machine.resume()
    if reason is not StopReason.ERROR:
        raise TruncatedBasket(f"program stopped with {reason.value} instead of seek beyond")
    if machine.error is not ErrorKind.SEEK_BEYOND:
        if machine.error is ErrorKind.READ_BEYOND:
            if machine.input_position("byte_offsets") + 4 > offsets.nbytes:
                raise TruncatedBasket("byte offsets end without the closing payload length")
            if int(offsets[-1]) > len(basket.data):
                raise TruncatedBasket(f"payload has {len(basket.data)} bytes, offsets end at {int(offsets[-1])}")
        raise ForthRuntimeError(machine.error, "basket payload")
    consumed = machine.input_position("byte_offsets") == offsets.nbytes
    if not consumed or len(offsets) == 0 or int(offsets[-1]) != len(basket.data):
        raise TruncatedBasket(
            f"seek beyond after {machine.input_position('byte_offsets') // 4} of "
            f"{len(offsets)} byte offsets (payload {len(basket.data)} bytes)"
        )
    form = LeafForm("content")
    for k in reversed(range(depth)):
        form = ListForm(f"offsets{k}", form)
    return ColumnarResult(machine.outputs(), form, len(offsets) - 1).validate()
