"""Instruction encoding shared by the compiler and the virtual machine.

Every instruction is one opcode integer followed by zero, one, or two
argument integers. The argument count is a pure function of the opcode
(see ``INSTRUCTION_WIDTH``), so a word body can be walked without any
side table.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

# -- opcodes ---------------------------------------------------------------

LIT32 = 0  # value
LIT64 = 1  # low32, high32
CALL = 2  # word
IF = 3  # then-word, else-word (-1: none)
DO = 4  # body
DO_STEP = 5  # body  (do ... +loop)
AGAIN = 6  # body
UNTIL = 7  # body
REPEAT = 8  # body  (begin ... while ... repeat)
WHILE = 9
EXIT = 10
PAUSE = 11
HALT = 12
LOOP_I = 13
LOOP_J = 14

DUP = 20
DROP = 21
SWAP = 22
OVER = 23
ROT = 24
INC = 25
DEC = 26
ADD = 27
SUB = 28
MUL = 29
DIV = 30
MOD = 31
NEGATE = 32
ABS = 33
MIN = 34
MAX = 35
AND = 36
OR = 37
XOR = 38
INVERT = 39
LSHIFT = 40
RSHIFT = 41
EQ = 42
NE = 43
GT = 44
LT = 45
GE = 46
LE = 47
ZEQ = 48

VAR_GET = 60  # variable
VAR_SET = 61  # variable
VAR_ADD = 62  # variable

SEEK = 70  # input
SKIP = 71  # input
REWIND = 72  # input
POS = 73  # input
END = 74  # input
LEN = 75  # input

READ = 80  # format, input, output (-1: stack)
WRITE = 81  # output
WRITE_ADD = 82  # output
OUT_DUP = 83  # output

# simple stack words: spelling -> opcode
STACK_WORDS = {
    "dup": DUP,
    "drop": DROP,
    "swap": SWAP,
    "over": OVER,
    "rot": ROT,
    "1+": INC,
    "1-": DEC,
    "+": ADD,
    "-": SUB,
    "*": MUL,
    "/": DIV,
    "mod": MOD,
    "negate": NEGATE,
    "abs": ABS,
    "min": MIN,
    "max": MAX,
    "and": AND,
    "or": OR,
    "xor": XOR,
    "invert": INVERT,
    "lshift": LSHIFT,
    "rshift": RSHIFT,
    "=": EQ,
    "<>": NE,
    ">": GT,
    "<": LT,
    ">=": GE,
    "<=": LE,
    "0=": ZEQ,
}

INPUT_WORDS = {
    "seek": SEEK,
    "skip": SKIP,
    "rewind": REWIND,
    "pos": POS,
    "end": END,
    "len": LEN,
}

VARIABLE_WORDS = {"@": VAR_GET, "!": VAR_SET, "+!": VAR_ADD}

MNEMONICS = {
    LIT32: "push",
    LIT64: "push",
    CALL: "call",
    IF: "if",
    DO: "do",
    DO_STEP: "do+loop",
    AGAIN: "begin-again",
    UNTIL: "begin-until",
    REPEAT: "begin-while-repeat",
    WHILE: "while",
    EXIT: "exit",
    PAUSE: "pause",
    HALT: "halt",
    LOOP_I: "i",
    LOOP_J: "j",
    DUP: "dup",
    DROP: "drop",
    SWAP: "swap",
    OVER: "over",
    ROT: "rot",
    INC: "inc",
    DEC: "dec",
    ADD: "add",
    SUB: "sub",
    MUL: "mul",
    DIV: "div",
    MOD: "mod",
    NEGATE: "negate",
    ABS: "abs",
    MIN: "min",
    MAX: "max",
    AND: "and",
    OR: "or",
    XOR: "xor",
    INVERT: "invert",
    LSHIFT: "lshift",
    RSHIFT: "rshift",
    EQ: "eq",
    NE: "ne",
    GT: "gt",
    LT: "lt",
    GE: "ge",
    LE: "le",
    ZEQ: "zero-eq",
    VAR_GET: "fetch",
    VAR_SET: "store",
    VAR_ADD: "add-store",
    SEEK: "seek",
    SKIP: "skip",
    REWIND: "rewind",
    POS: "pos",
    END: "end",
    LEN: "len",
    READ: "read",
    WRITE: "write",
    WRITE_ADD: "write-add",
    OUT_DUP: "output-dup",
}

_TWO_ARGS = {LIT64, IF}
_ONE_ARG = {
    LIT32, CALL, DO, DO_STEP, AGAIN, UNTIL, REPEAT,
    VAR_GET, VAR_SET, VAR_ADD,
    SEEK, SKIP, REWIND, POS, END, LEN,
    WRITE, WRITE_ADD, OUT_DUP,
}


def instruction_width(opcode: int) -> int:
    if opcode == READ:
        return 4
    if opcode in _TWO_ARGS:
        return 3
    if opcode in _ONE_ARG:
        return 2
    return 1


# -- read formats ----------------------------------------------------------
#
# format = kind | BIG_ENDIAN | REPEATED | (bits << BITS_SHIFT)

TYPE_CODES = "bBhHiIqQfd"
CODE_WIDTH = (1, 1, 2, 2, 4, 4, 8, 8, 4, 8)
KIND_VARINT = 10
KIND_ZIGZAG = 11
KIND_NBIT = 12
KIND_MASK = 0x0F
BIG_ENDIAN = 0x10
REPEATED = 0x20
BITS_SHIFT = 8


def read_format(kind: int, big: bool = False, repeated: bool = False, bits: int = 0) -> int:
    return kind | (BIG_ENDIAN if big else 0) | (REPEATED if repeated else 0) | (bits << BITS_SHIFT)


def read_word_spelling(fmt: int) -> str:
    kind = fmt & KIND_MASK
    prefix = ("#" if fmt & REPEATED else "") + ("!" if fmt & BIG_ENDIAN else "")
    if kind < KIND_VARINT:
        return f"{prefix}{TYPE_CODES[kind]}->"
    if kind == KIND_VARINT:
        return f"{prefix}varint->"
    if kind == KIND_ZIGZAG:
        return f"{prefix}zigzag->"
    return f"{prefix}{fmt >> BITS_SHIFT}bit->"


# -- output dtypes ---------------------------------------------------------


class OutputDtype(Enum):
    """Numeric type of an output column; the value is the VM's dtype code."""

    BOOL = 0
    INT8 = 1
    INT16 = 2
    INT32 = 3
    INT64 = 4
    UINT8 = 5
    UINT16 = 6
    UINT32 = 7
    UINT64 = 8
    FLOAT32 = 9
    FLOAT64 = 10

    @classmethod
    def parse(cls, name: str) -> OutputDtype:
        return cls[name.upper()]

    @property
    def type_name(self) -> str:
        return self.name.lower()

    @property
    def itemsize(self) -> int:
        return DTYPE_WIDTH[self.value]

    @property
    def is_float(self) -> bool:
        return self.value >= 9

    @property
    def numpy(self) -> np.dtype:
        return np.dtype(_NUMPY_NAMES[self.value])


DTYPE_WIDTH = (1, 1, 2, 4, 8, 1, 2, 4, 8, 4, 8)
_NUMPY_NAMES = ("?", "<i1", "<i2", "<i4", "<i8", "<u1", "<u2", "<u4", "<u8", "<f4", "<f8")
DTYPE_NAMES = tuple(d.type_name for d in OutputDtype)


# -- machine registers and status codes --------------------------------------

R_SP = 0
R_IP = 1
R_WORD = 2
R_FP = 3
R_LP = 4
R_STEPS = 5
R_STATUS = 6
R_ERROR = 7
R_LAST_IP = 8
R_ARENA_END = 9
R_NEED = 10  # arena size requested by a grow stop
N_REGS = 11

ST_NOT_STARTED = 0
ST_PAUSED = 1
ST_DONE = 2
ST_ERROR = 3
ST_STEPPED = 4  # instruction budget exhausted (tracing only)
ST_GROW = 5  # output arena full; host enlarges it and resumes

# frame kinds: what happens when the callee body runs off its end
F_CALL = 0
F_IF = 1
F_DO = 2
F_DO_STEP = 3
F_AGAIN = 4
F_UNTIL = 5
F_REPEAT = 6


class ErrorKind(Enum):
    """The closed set of runtime errors; values are their conventional spellings."""

    USER_HALT = "user halt"
    RECURSION_DEPTH_EXCEEDED = "recursion depth exceeded"
    STACK_UNDERFLOW = "stack underflow"
    STACK_OVERFLOW = "stack overflow"
    DIVISION_BY_ZERO = "division by zero"
    READ_BEYOND = "read beyond"
    SEEK_BEYOND = "seek beyond"
    SKIP_BEYOND = "skip beyond"
    REWIND_BEYOND = "rewind beyond"
    VARINT_TOO_BIG = "varint too big"


# error codes used inside the VM; 0 means "no error"
ERROR_CODES = {kind: code for code, kind in enumerate(ErrorKind, start=1)}
ERROR_KINDS = {code: kind for kind, code in ERROR_CODES.items()}
E_USER_HALT = ERROR_CODES[ErrorKind.USER_HALT]
E_RECURSION = ERROR_CODES[ErrorKind.RECURSION_DEPTH_EXCEEDED]
E_UNDERFLOW = ERROR_CODES[ErrorKind.STACK_UNDERFLOW]
E_OVERFLOW = ERROR_CODES[ErrorKind.STACK_OVERFLOW]
E_DIVZERO = ERROR_CODES[ErrorKind.DIVISION_BY_ZERO]
E_READ_BEYOND = ERROR_CODES[ErrorKind.READ_BEYOND]
E_SEEK_BEYOND = ERROR_CODES[ErrorKind.SEEK_BEYOND]
E_SKIP_BEYOND = ERROR_CODES[ErrorKind.SKIP_BEYOND]
E_REWIND_BEYOND = ERROR_CODES[ErrorKind.REWIND_BEYOND]
E_VARINT_TOO_BIG = ERROR_CODES[ErrorKind.VARINT_TOO_BIG]
