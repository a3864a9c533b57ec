"""Host API for running compiled programs.

A :class:`Machine` owns one program's mutable state. It is cheap to build,
so multi-threaded drivers create one machine per worker and share the
immutable :class:`~colforth.compiler.Program`.
"""

from __future__ import annotations

from enum import Enum
from typing import Mapping

import numpy as np

from . import bytecode as bc
from ._vm import execute
from .buffers import Snapshot
from .bytecode import ErrorKind, OutputDtype
from .compiler import Program, compile_source
from .errors import ForthRuntimeError, MachineStateError, MissingInput, StackEmpty

DEFAULT_STACK_DEPTH = 2048
DEFAULT_CALL_DEPTH = 1024
_INITIAL_OUTPUT_BYTES = 1024


class StopReason(Enum):
    NOT_STARTED = "not started"
    PAUSED = "paused"
    DONE = "done"
    ERROR = "error"


_STATUS = {
    bc.ST_NOT_STARTED: StopReason.NOT_STARTED,
    bc.ST_PAUSED: StopReason.PAUSED,
    bc.ST_DONE: StopReason.DONE,
    bc.ST_ERROR: StopReason.ERROR,
}


def _as_bytes(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.ascontiguousarray(data).view(np.uint8).reshape(-1)
    return np.frombuffer(data, dtype=np.uint8)


class Machine:
    """Execution state for one program: stack, variables, buffers, cursor."""

    def __init__(self, program: Program | str, stack_depth: int = DEFAULT_STACK_DEPTH,
                 call_depth: int = DEFAULT_CALL_DEPTH):
        if isinstance(program, str):
            program = compile_source(program)
        self.program = program
        self._stack = np.zeros(stack_depth, np.int64)
        self._frames = np.zeros((call_depth, 3), np.int64)
        self._loops = np.zeros((call_depth, 2), np.int64)
        self._variables = np.zeros(len(program.variables), np.int64)
        self._regs = np.zeros(bc.N_REGS, np.int64)
        self._input_index = {name: k for k, name in enumerate(program.inputs)}
        self._output_index = {name: k for k, (name, _) in enumerate(program.outputs)}
        self._release()

    # -- lifecycle --

    def _release(self):
        self._ibuf = np.zeros(0, np.uint8)
        self._imeta = np.zeros((len(self.program.inputs), 3), np.int64)
        self._arena = np.zeros(0, np.uint8)
        self._ometa = np.zeros((len(self.program.outputs), 4), np.int64)
        self._begun = False
        self._regs[:] = 0
        self._variables[:] = 0

    def reset(self) -> Machine:
        """Return to the state before :meth:`begin_run`; the program is kept."""
        self._release()
        return self

    def begin_run(self, inputs: Mapping[str, object] | None = None) -> Machine:
        """Bind inputs, create empty outputs, zero variables and the stack."""
        if self._begun and self.stop_reason not in (StopReason.DONE, StopReason.NOT_STARTED):
            raise MachineStateError(
                f"cannot begin a run while {self.stop_reason.value}; call reset() first"
            )
        inputs = inputs or {}
        arrays = []
        for name in self.program.inputs:
            if name not in inputs:
                raise MissingInput(f"no data supplied for input {name!r}")
            arrays.append(_as_bytes(inputs[name]))
        if len(arrays) == 1:
            self._ibuf = arrays[0] if arrays[0].flags.writeable else arrays[0].copy()
        else:
            self._ibuf = np.concatenate(arrays) if arrays else np.zeros(0, np.uint8)
        start = 0
        for k, arr in enumerate(arrays):
            self._imeta[k] = (start, arr.size, 0)
            start += arr.size

        n_out = len(self.program.outputs)
        self._arena = np.empty(max(1, n_out) * _INITIAL_OUTPUT_BYTES, np.uint8)
        for k, (_, dtype) in enumerate(self.program.outputs):
            self._ometa[k] = (k * _INITIAL_OUTPUT_BYTES, _INITIAL_OUTPUT_BYTES, 0, dtype.value)
        self._regs[:] = 0
        self._regs[bc.R_ARENA_END] = n_out * _INITIAL_OUTPUT_BYTES
        self._variables[:] = 0
        self._begun = True
        return self

    def _execute(self, budget: int) -> int:
        if not self._begun:
            raise MachineStateError("begin_run() has not been called")
        status = self._regs[bc.R_STATUS]
        if status == bc.ST_ERROR:
            raise MachineStateError(
                f"machine stopped with {self.error.value!r}; call reset() first"
            )
        if status == bc.ST_DONE:
            raise MachineStateError("run is already done")
        p = self.program
        while True:
            execute(
                p.code, p.word_start, p.word_end, self._stack, self._variables,
                self._frames, self._loops, self._regs, self._ibuf, self._imeta,
                self._arena, self._ometa, budget,
            )
            if self._regs[bc.R_STATUS] != bc.ST_GROW:
                return int(self._regs[bc.R_STATUS])
            end = int(self._regs[bc.R_ARENA_END])
            grown = np.empty(max(2 * self._arena.size, int(self._regs[bc.R_NEED])), np.uint8)
            grown[:end] = self._arena[:end]
            self._arena = grown

    def resume(self) -> StopReason:
        """Run until ``pause``, ``halt``, the end of the main body, or an error."""
        self._execute(-1)
        return self.stop_reason

    def run(self, inputs: Mapping[str, object] | None = None, stack=()) -> StopReason:
        """``begin_run`` + push ``stack`` (bottom first) + ``resume``."""
        self.begin_run(inputs)
        for value in stack:
            self.push(value)
        return self.resume()

    def step_trace(self, max_words: int) -> list[tuple[str, list[int]]]:
        """Execute up to ``max_words`` words, recording each word and the stack after it."""
        trace = []
        for _ in range(max_words):
            before = self._regs[bc.R_STEPS]
            status = self._execute(1)
            if self._regs[bc.R_STEPS] > before and status != bc.ST_ERROR:
                trace.append((self._word_at(int(self._regs[bc.R_LAST_IP])), self.stack))
            if status != bc.ST_STEPPED:
                break
        return trace

    def _word_at(self, ip: int) -> str:
        p = self.program
        op = int(p.code[ip])
        width = bc.instruction_width(op)
        return p.spelling(op, [int(a) for a in p.code[ip + 1 : ip + width]])

    # -- status --

    @property
    def stop_reason(self) -> StopReason:
        return _STATUS.get(int(self._regs[bc.R_STATUS]), StopReason.PAUSED)

    @property
    def error(self) -> ErrorKind | None:
        code = int(self._regs[bc.R_ERROR])
        return bc.ERROR_KINDS[code] if code else None

    @property
    def words_executed(self) -> int:
        return int(self._regs[bc.R_STEPS])

    def raise_for_error(self, context: str = ""):
        if self.error is not None:
            raise ForthRuntimeError(self.error, context)

    # -- stack --

    @property
    def stack(self) -> list[int]:
        return self._stack[: self._regs[bc.R_SP]].tolist()

    def push(self, value: int):
        sp = self._regs[bc.R_SP]
        if sp >= self._stack.size:
            raise MachineStateError("stack is full")
        self._stack[sp] = np.int64(value)
        self._regs[bc.R_SP] = sp + 1

    def pop(self) -> int:
        sp = self._regs[bc.R_SP]
        if sp == 0:
            raise StackEmpty("pop from an empty stack")
        self._regs[bc.R_SP] = sp - 1
        return int(self._stack[sp - 1])

    # -- variables and inputs --

    def variable(self, name: str) -> int:
        return int(self._variables[self.program.variables.index(name)])

    def input_position(self, name: str) -> int:
        return int(self._imeta[self._input_index[name], 2])

    def input_view(self, name: str) -> np.ndarray:
        """Writable view of an input's bytes, for hosts that refill it between resumes."""
        start, length, _ = self._imeta[self._input_index[name]]
        return self._ibuf[start : start + length]

    # -- outputs --

    def output_length(self, name: str) -> int:
        return int(self._ometa[self._output_index[name], 2])

    def output(self, name: str) -> np.ndarray:
        """Copy of one output column as a typed little-endian array."""
        k = self._output_index[name]
        start, _, length, dt = self._ometa[k]
        dtype = OutputDtype(int(dt))
        raw = self._arena[start : start + length * dtype.itemsize]
        return raw.view(dtype.numpy).copy()

    def outputs(self) -> dict[str, np.ndarray]:
        return {name: self.output(name) for name in self._output_index}

    def snapshot(self, name: str) -> Snapshot:
        arr = self.output(name)
        return Snapshot(self.program.output_dtype(name), len(arr), arr.tobytes())
