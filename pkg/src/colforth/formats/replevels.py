"""Two-stage repetition-level pipeline: hybrid stream -> levels -> offsets."""

from __future__ import annotations

import struct

import numpy as np

from ..bytecode import ErrorKind
from ..columnar import ColumnarResult, IndexForm, ListForm
from ..errors import ForthRuntimeError
from ..generators import gen_replevel_decoder, gen_replevel_to_offsets
from ..machine import Machine, StopReason


class PipelineError(ForthRuntimeError):
    """A runtime error in one stage (``"decode"`` or ``"convert"``)."""

    def __init__(self, kind: ErrorKind, stage: str):
        super().__init__(kind, f"{stage} stage")
        self.stage = stage


def _run(machine: Machine, inputs: dict, stage: str):
    reason = machine.run(inputs)
    if reason is StopReason.ERROR:
        raise PipelineError(machine.error, stage)
    if reason is not StopReason.DONE:
        raise PipelineError(ErrorKind.USER_HALT, stage)


def decode_replevels(stream: bytes, max_level: int, num_values: int | None = None) -> np.ndarray:
    """Stage one: hybrid stream to uint8 levels (padding trimmed to ``num_values``)."""
    if len(stream) < 4:
        raise PipelineError(ErrorKind.READ_BEYOND, "decode")
    (length,) = struct.unpack_from("<I", stream, 0)
    if length == 0:
        levels = np.zeros(0, np.uint8)
    else:
        machine = Machine(gen_replevel_decoder(max_level).program)
        _run(machine, {"data": np.frombuffer(stream, np.uint8).copy()}, "decode")
        levels = machine.output("replevels")
    return levels if num_values is None else levels[:num_values]


def levels_to_offsets(levels: np.ndarray, depth: int) -> dict[str, np.ndarray]:
    """Stage two: levels to ``depth`` offsets columns."""
    machine = Machine(gen_replevel_to_offsets(depth).program)
    _run(machine, {"replevels": np.ascontiguousarray(levels, np.uint8).copy()}, "convert")
    return machine.outputs()


def decode_replevel_pipeline(stream: bytes, depth: int, num_values: int | None = None,
                             validate: bool = True) -> ColumnarResult:
    """Offsets-only result; the leaf count is the number of decoded levels."""
    levels = decode_replevels(stream, depth, num_values)
    columns = levels_to_offsets(levels, depth)
    form = IndexForm(len(levels))
    for k in reversed(range(depth)):
        form = ListForm(f"offsets{k}", form)
    result = ColumnarResult(columns, form, len(columns["offsets0"]) - 1)
    result.metadata["replevels"] = levels
    return result.validate() if validate else result
