"""A small Forth virtual machine for turning record-oriented bytes into columns."""

from .builder import TypedArrayBuilder, new_builder
from .bytecode import ErrorKind, OutputDtype
from .columnar import ColumnarResult, InvalidOffsets
from .compiler import ForthCompileError, Program, compile_source, decompile, tokenize
from .errors import ForthRuntimeError, MachineStateError, MissingInput, StackEmpty
from .generators import (
    GeneratedProgram,
    gen_avro_program,
    gen_builder_program,
    gen_replevel_decoder,
    gen_replevel_to_offsets,
    gen_tbasket_program,
)
from .machine import Machine, StopReason
from .types import Bytes, ListOf, Primitive, Record, String, nested_list

__all__ = [
    "Bytes", "ColumnarResult", "ErrorKind", "ForthCompileError", "ForthRuntimeError",
    "GeneratedProgram", "InvalidOffsets", "ListOf", "Machine", "MachineStateError",
    "MissingInput", "OutputDtype", "Primitive", "Program", "Record", "StackEmpty",
    "StopReason", "String", "TypedArrayBuilder", "compile_source", "decompile",
    "gen_avro_program", "gen_builder_program", "gen_replevel_decoder",
    "gen_replevel_to_offsets", "gen_tbasket_program", "nested_list", "new_builder", "tokenize",
]
