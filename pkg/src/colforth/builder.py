"""Typed array builder: append-only commands driving a paused machine.

The generated program sits at a ``pause`` between commands. Sending a
command pushes its id and resumes; the program either reaches the next
pause (accepted) or halts (rejected). Append values travel through the
first 8 bytes of input ``data``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .columnar import ColumnarResult
from .generators import UnsupportedSchema, gen_builder_program
from .machine import Machine, StopReason
from .types import TypeDescriptor, list_chain


class UnsupportedDescriptor(UnsupportedSchema):
    pass


class Poisoned(RuntimeError):
    pass


class UnbalancedLists(RuntimeError):
    pass


class CommandKind(Enum):
    BEGIN_LIST = "begin_list"
    END_LIST = "end_list"
    APPEND = "append"


@dataclass(frozen=True)
class BuilderCommand:
    kind: CommandKind
    value: float | None = None

    def __post_init__(self):
        if (self.kind is CommandKind.APPEND) != (self.value is not None):
            raise ValueError("append carries exactly one value; list commands carry none")


BEGIN_LIST = BuilderCommand(CommandKind.BEGIN_LIST)
END_LIST = BuilderCommand(CommandKind.END_LIST)


def append(value: float) -> BuilderCommand:
    return BuilderCommand(CommandKind.APPEND, float(value))


class Outcome(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class TypedArrayBuilder:
    def __init__(self, descriptor: TypeDescriptor, command_ids: Mapping[str, int] | None = None):
        chain = list_chain(descriptor)
        if chain is None or chain[0] < 1 or not chain[1].dtype.is_float:
            raise UnsupportedDescriptor(
                "builders support one or more list levels over float32 or float64"
            )
        self.descriptor = descriptor
        self.depth = chain[0]
        self.generated = gen_builder_program(descriptor, command_ids)
        self.ids = {CommandKind(k): v for k, v in self.generated.placeholders.items()}
        self.machine = Machine(self.generated.program)
        self.reset()

    def reset(self) -> TypedArrayBuilder:
        """Drop all built data and any poisoning; the compiled program is kept."""
        self.machine.reset()
        self.machine.begin_run({"data": np.zeros(8, np.uint8)})
        self._scratch = self.machine.input_view("data")
        self.machine.resume()
        self.open_lists = 0
        self.poisoned = False
        return self

    def send(self, command: BuilderCommand) -> Outcome:
        if self.poisoned:
            raise Poisoned("a previous command was rejected; call reset()")
        if command.kind is CommandKind.APPEND:
            self._scratch[:] = np.frombuffer(np.float64(command.value).tobytes(), np.uint8)
        self.machine.push(self.ids[command.kind])
        if self.machine.resume() is not StopReason.PAUSED:
            self.poisoned = True
            return Outcome.REJECTED
        if command.kind is CommandKind.BEGIN_LIST:
            self.open_lists += 1
        elif command.kind is CommandKind.END_LIST:
            self.open_lists -= 1
        return Outcome.ACCEPTED

    def begin_list(self) -> Outcome:
        return self.send(BEGIN_LIST)

    def end_list(self) -> Outcome:
        return self.send(END_LIST)

    def append(self, value: float) -> Outcome:
        return self.send(append(value))

    def extend(self, commands: Iterable[BuilderCommand]) -> int:
        """Send commands until one is rejected; returns its index or -1."""
        for i, command in enumerate(commands):
            if self.send(command) is Outcome.REJECTED:
                return i
        return -1

    def snapshot(self) -> dict[str, np.ndarray]:
        return self.machine.outputs()

    def finish(self) -> ColumnarResult:
        if self.open_lists:
            raise UnbalancedLists(f"{self.open_lists} list(s) still open")
        columns = self.machine.outputs()
        return ColumnarResult(columns, self.generated.form, len(columns["offsets0"]) - 1).validate()


def new_builder(descriptor: TypeDescriptor, command_ids: Mapping[str, int] | None = None) -> TypedArrayBuilder:
    return TypedArrayBuilder(descriptor, command_ids)


def parse_replay(text: str) -> list[BuilderCommand]:
    """Replay format: ``[`` begins a list, ``]`` ends one, numbers append."""
    commands = []
    for token in text.split():
        if token == "[":
            commands.append(BEGIN_LIST)
        elif token == "]":
            commands.append(END_LIST)
        else:
            try:
                commands.append(append(float(token)))
            except ValueError:
                raise ValueError(f"bad replay token {token!r}") from None
    return commands
