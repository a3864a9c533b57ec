"""Host-level exceptions.

The interpreter loop itself never raises: it reports one of the
:class:`~colforth.bytecode.ErrorKind` values through the machine's stop
reason. These exceptions are for the host API and the format drivers.
"""

from __future__ import annotations

from .bytecode import ErrorKind


class ForthRuntimeError(Exception):
    """A runtime error kind surfaced to host code, with optional context."""

    def __init__(self, kind: ErrorKind, context: str = ""):
        self.kind = kind
        self.context = context
        super().__init__(f"{kind.value}: {context}" if context else kind.value)


class MachineStateError(Exception):
    """The host called an operation the machine's current state does not allow."""


class MissingInput(MachineStateError):
    pass


class StackEmpty(MachineStateError):
    pass
