"""Source text to bytecode.

A program is a dictionary of word bodies. Entry 0 is the main body, named
user words and the anonymous bodies of control structures (``if``, ``do``,
``begin``) follow in the order they are opened. Control structures never
jump: they call their bodies, so every body is a straight-line sequence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import bytecode as bc
from .bytecode import OutputDtype


class ForthCompileError(Exception):
    """Base class for every error detected before a program runs."""

    def __init__(self, message: str, token: Token | None = None):
        if token is not None:
            message = f"{message} (at {token.line}:{token.column}, {token.text!r})"
        super().__init__(message)
        self.token = token


class UnclosedComment(ForthCompileError):
    pass


class UnknownWord(ForthCompileError):
    pass


class UnbalancedControlFlow(ForthCompileError):
    pass


class DuplicateName(ForthCompileError):
    pass


class BadDeclaration(ForthCompileError):
    pass


class NestedDefinition(ForthCompileError):
    pass


class LiteralOutOfRange(ForthCompileError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    position: int
    line: int = 1
    column: int = 1


def tokenize(source: str) -> list[Token]:
    """Split on whitespace after removing ``( ... )`` and ``\\ ...`` comments."""
    tokens = []
    i, n = 0, len(source)
    line, line_start = 1, 0
    while i < n:
        ch = source[i]
        if ch.isspace():
            if ch == "\n":
                line += 1
                line_start = i + 1
            i += 1
            continue
        if ch == "(":
            close = source.find(")", i + 1)
            if close < 0:
                raise UnclosedComment(
                    "comment is never closed", Token("(", i, line, i - line_start + 1)
                )
            line += source.count("\n", i, close)
            nl = source.rfind("\n", i, close)
            if nl >= 0:
                line_start = nl + 1
            i = close + 1
            continue
        if ch == "\\":
            nl = source.find("\n", i)
            i = n if nl < 0 else nl
            continue
        j = i
        while j < n and not source[j].isspace():
            j += 1
        tokens.append(Token(source[i:j], i, line, i - line_start + 1))
        i = j
    return tokens


@dataclass(frozen=True, eq=False)
class Program:
    """Compiled, immutable program. Safe to share between threads."""

    source: str
    dictionary: tuple[tuple[int, ...], ...]
    word_names: Mapping[str, int]
    variables: tuple[str, ...]
    inputs: tuple[str, ...]
    outputs: tuple[tuple[str, OutputDtype], ...]
    # flattened dictionary, as consumed by the VM
    code: np.ndarray = field(repr=False)
    word_start: np.ndarray = field(repr=False)
    word_end: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        return (
            self.dictionary == other.dictionary
            and dict(self.word_names) == dict(other.word_names)
            and self.variables == other.variables
            and self.inputs == other.inputs
            and self.outputs == other.outputs
        )

    __hash__ = None

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.outputs)

    def output_dtype(self, name: str) -> OutputDtype:
        for n, dt in self.outputs:
            if n == name:
                return dt
        raise KeyError(name)

    def instructions(self, word: int):
        """Yield ``(offset, opcode, args)`` for one dictionary entry."""
        body = self.dictionary[word]
        k = 0
        while k < len(body):
            op = body[k]
            width = bc.instruction_width(op)
            yield k, op, body[k + 1 : k + width]
            k += width

    def word_label(self, word: int) -> str:
        if word == 0:
            return "main"
        for name, idx in self.word_names.items():
            if idx == word:
                return name
        return f"anonymous {word}"

    def spelling(self, op: int, args) -> str:
        """Source-level spelling of one instruction (used by traces)."""
        if op == bc.LIT32:
            return str(args[0])
        if op == bc.LIT64:
            return str(_join64(args[0], args[1]))
        if op == bc.CALL:
            return self.word_label(args[0])
        for spelled, code in bc.STACK_WORDS.items():
            if code == op:
                return spelled
        if op in (bc.VAR_GET, bc.VAR_SET, bc.VAR_ADD):
            word = {bc.VAR_GET: "@", bc.VAR_SET: "!", bc.VAR_ADD: "+!"}[op]
            return f"{self.variables[args[0]]} {word}"
        if bc.SEEK <= op <= bc.LEN:
            return f"{self.inputs[args[0]]} {bc.MNEMONICS[op]}"
        if op == bc.READ:
            dest = "stack" if args[2] < 0 else self.outputs[args[2]][0]
            return f"{self.inputs[args[1]]} {bc.read_word_spelling(args[0])} {dest}"
        if op in (bc.WRITE, bc.WRITE_ADD):
            arrow = "<-" if op == bc.WRITE else "+<-"
            return f"{self.outputs[args[0]][0]} {arrow} stack"
        if op == bc.OUT_DUP:
            return f"{self.outputs[args[0]][0]} dup"
        return {
            bc.IF: "if",
            bc.DO: "do",
            bc.DO_STEP: "do",
            bc.AGAIN: "begin",
            bc.UNTIL: "begin",
            bc.REPEAT: "begin",
        }.get(op, bc.MNEMONICS[op])


def _join64(lo: int, hi: int) -> int:
    value = (lo & 0xFFFFFFFF) | ((hi & 0xFFFFFFFF) << 32)
    return value - (1 << 64) if value >= 1 << 63 else value


def _to_int32(value: int) -> int:
    value &= 0xFFFFFFFF
    return value - (1 << 32) if value >= 1 << 31 else value


_INTEGER = re.compile(r"-?[0-9]+\Z")
_FIXED_READ = re.compile(r"(#)?(!)?([bBhHiIqQfd])->\Z")
_VAR_READ = re.compile(r"(#)?(varint|zigzag)->\Z")
_NBIT_READ = re.compile(r"(#)?([0-9]+)bit->\Z")

RESERVED_WORDS = frozenset(
    list(bc.STACK_WORDS)
    + list(bc.INPUT_WORDS)
    + list(bc.VARIABLE_WORDS)
    + [
        ":", ";", "if", "else", "then", "do", "loop", "+loop", "begin", "again",
        "until", "while", "repeat", "exit", "pause", "halt", "i", "j",
        "variable", "input", "output", "stack", "<-", "+<-",
    ]
)


def parse_read_word(text: str) -> int | None:
    """Read-word spelling to format integer, or None if it is not a read word."""
    m = _FIXED_READ.match(text)
    if m:
        kind = bc.TYPE_CODES.index(m.group(3))
        return bc.read_format(kind, big=bool(m.group(2)), repeated=bool(m.group(1)))
    m = _VAR_READ.match(text)
    if m:
        kind = bc.KIND_VARINT if m.group(2) == "varint" else bc.KIND_ZIGZAG
        return bc.read_format(kind, repeated=bool(m.group(1)))
    m = _NBIT_READ.match(text)
    if m and not m.group(2).startswith("0"):
        bits = int(m.group(2))
        if 1 <= bits <= 32:
            return bc.read_format(bc.KIND_NBIT, repeated=bool(m.group(1)), bits=bits)
    return None


class _Context:
    """One open body during compilation."""

    def __init__(self, kind: str, index: int, loops: int):
        self.kind = kind  # "main", "word", "if", "else", "do", "begin", "while"
        self.index = index
        self.loops = loops  # enclosing do-loops within the current definition
        self.patch = -1  # slot of the else-word in this body's latest IF
        self.opener = -1  # offset of this body's latest DO/begin instruction


class _Compiler:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.k = 0
        self.bodies: list[list[int]] = [[]]
        self.words: dict[str, int] = {}
        self.variables: dict[str, int] = {}
        self.inputs: dict[str, int] = {}
        self.outputs: dict[str, int] = {}
        self.output_types: list[OutputDtype] = []

    # -- token stream --

    def next(self) -> Token:
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, after: Token, what: str, error=BadDeclaration) -> Token:
        if self.k >= len(self.tokens):
            raise error(f"expected {what} after {after.text!r}", after)
        return self.next()

    # -- names --

    def check_new_name(self, tok: Token):
        name = tok.text
        if name in RESERVED_WORDS or _INTEGER.match(name) or parse_read_word(name) is not None:
            raise DuplicateName(f"{name!r} is a built-in word", tok)
        for space in (self.words, self.variables, self.inputs, self.outputs):
            if name in space:
                raise DuplicateName(f"{name!r} is already defined", tok)

    def new_body(self) -> int:
        self.bodies.append([])
        return len(self.bodies) - 1

    # -- top level --

    def compile(self) -> Program:
        main = _Context("main", 0, 0)
        stack = [main]
        while self.k < len(self.tokens):
            tok = self.next()
            ctx = stack[-1]
            text = tok.text
            if text in ("variable", "input", "output"):
                if len(stack) > 1:
                    raise BadDeclaration("declarations must be at top level", tok)
                self.declare(tok)
            elif text == ":":
                if len(stack) > 1:
                    raise NestedDefinition("':' inside a definition or control structure", tok)
                name = self.expect(tok, "a word name", BadDeclaration)
                self.check_new_name(name)
                index = self.new_body()
                self.words[name.text] = index
                stack.append(_Context("word", index, 0))
            elif text == ";":
                if ctx.kind != "word":
                    raise UnbalancedControlFlow("';' without matching ':'", tok)
                stack.pop()
            elif text == "if":
                index = self.new_body()
                self.bodies[ctx.index].extend([bc.IF, index, -1])
                ctx.patch = len(self.bodies[ctx.index]) - 1
                stack.append(_Context("if", index, ctx.loops))
            elif text == "else":
                if ctx.kind != "if":
                    raise UnbalancedControlFlow("'else' without matching 'if'", tok)
                stack.pop()
                parent = stack[-1]
                index = self.new_body()
                self.bodies[parent.index][parent.patch] = index
                stack.append(_Context("else", index, parent.loops))
            elif text == "then":
                if ctx.kind not in ("if", "else"):
                    raise UnbalancedControlFlow("'then' without matching 'if'", tok)
                stack.pop()
            elif text == "do":
                index = self.new_body()
                ctx.opener = len(self.bodies[ctx.index])
                self.bodies[ctx.index].extend([bc.DO, index])
                stack.append(_Context("do", index, ctx.loops + 1))
            elif text in ("loop", "+loop"):
                if ctx.kind != "do":
                    raise UnbalancedControlFlow(f"{text!r} without matching 'do'", tok)
                stack.pop()
                parent = stack[-1]
                if text == "+loop":
                    self.bodies[parent.index][parent.opener] = bc.DO_STEP
            elif text == "begin":
                index = self.new_body()
                ctx.opener = len(self.bodies[ctx.index])
                self.bodies[ctx.index].extend([bc.AGAIN, index])
                stack.append(_Context("begin", index, ctx.loops))
            elif text in ("again", "until"):
                if ctx.kind != "begin":
                    raise UnbalancedControlFlow(f"{text!r} without matching 'begin'", tok)
                stack.pop()
                parent = stack[-1]
                self.bodies[parent.index][parent.opener] = bc.AGAIN if text == "again" else bc.UNTIL
            elif text == "while":
                if ctx.kind != "begin":
                    raise UnbalancedControlFlow("'while' must directly follow a 'begin' body", tok)
                self.bodies[ctx.index].append(bc.WHILE)
                ctx.kind = "while"
            elif text == "repeat":
                if ctx.kind != "while":
                    raise UnbalancedControlFlow("'repeat' without matching 'begin ... while'", tok)
                stack.pop()
                parent = stack[-1]
                self.bodies[parent.index][parent.opener] = bc.REPEAT
            else:
                self.bodies[ctx.index].extend(self.instruction(tok, ctx))
        if len(stack) > 1:
            ctx = stack[-1]
            what = {"word": "definition is missing ';'", "if": "'if' is missing 'then'",
                    "else": "'else' is missing 'then'", "do": "'do' is missing 'loop'",
                    "begin": "'begin' is missing 'again' or 'until'",
                    "while": "'while' is missing 'repeat'"}[ctx.kind]
            raise UnbalancedControlFlow(what)
        return self.finish()

    def declare(self, tok: Token):
        name = self.expect(tok, "a name")
        self.check_new_name(name)
        if tok.text == "variable":
            self.variables[name.text] = len(self.variables)
        elif tok.text == "input":
            self.inputs[name.text] = len(self.inputs)
        else:
            type_tok = self.expect(name, "an output type")
            try:
                dtype = OutputDtype.parse(type_tok.text)
            except KeyError:
                raise BadDeclaration(f"unknown output type {type_tok.text!r}", type_tok) from None
            if type_tok.text != dtype.type_name:
                raise BadDeclaration(f"unknown output type {type_tok.text!r}", type_tok)
            self.outputs[name.text] = len(self.outputs)
            self.output_types.append(dtype)

    def instruction(self, tok: Token, ctx: _Context) -> list[int]:
        text = tok.text
        if _INTEGER.match(text):
            value = int(text)
            if not -(1 << 63) <= value < (1 << 63):
                raise LiteralOutOfRange("literal does not fit in 64 bits", tok)
            if -(1 << 31) <= value < (1 << 31):
                return [bc.LIT32, value]
            return [bc.LIT64, _to_int32(value), _to_int32(value >> 32)]
        if text in bc.STACK_WORDS:
            return [bc.STACK_WORDS[text]]
        if text in ("i", "j"):
            if ctx.loops < (1 if text == "i" else 2):
                raise UnbalancedControlFlow(f"{text!r} outside of a do-loop", tok)
            return [bc.LOOP_I if text == "i" else bc.LOOP_J]
        if text == "exit":
            return [bc.EXIT]
        if text == "pause":
            return [bc.PAUSE]
        if text == "halt":
            return [bc.HALT]
        if text in self.words:
            return [bc.CALL, self.words[text]]
        if text in self.variables:
            word = self.expect(tok, "'@', '!', or '+!'", UnknownWord)
            if word.text not in bc.VARIABLE_WORDS:
                raise UnknownWord(f"expected '@', '!', or '+!' after variable {text!r}", word)
            return [bc.VARIABLE_WORDS[word.text], self.variables[text]]
        if text in self.inputs:
            return self.input_instruction(tok)
        if text in self.outputs:
            return self.output_instruction(tok)
        raise UnknownWord("unknown word", tok)

    def input_instruction(self, tok: Token) -> list[int]:
        index = self.inputs[tok.text]
        word = self.expect(tok, "a read or position word", UnknownWord)
        if word.text in bc.INPUT_WORDS:
            return [bc.INPUT_WORDS[word.text], index]
        fmt = parse_read_word(word.text)
        if fmt is None:
            raise UnknownWord(f"expected a read or position word after input {tok.text!r}", word)
        dest = self.expect(word, "'stack' or an output name", UnknownWord)
        if dest.text == "stack":
            return [bc.READ, fmt, index, -1]
        if dest.text in self.outputs:
            return [bc.READ, fmt, index, self.outputs[dest.text]]
        raise UnknownWord("read destination must be 'stack' or an output", dest)

    def output_instruction(self, tok: Token) -> list[int]:
        index = self.outputs[tok.text]
        word = self.expect(tok, "'<-', '+<-', or 'dup'", UnknownWord)
        if word.text == "dup":
            return [bc.OUT_DUP, index]
        if word.text in ("<-", "+<-"):
            src = self.expect(word, "'stack'", UnknownWord)
            if src.text != "stack":
                raise UnknownWord("write source must be 'stack'", src)
            return [bc.WRITE if word.text == "<-" else bc.WRITE_ADD, index]
        raise UnknownWord(f"expected '<-', '+<-', or 'dup' after output {tok.text!r}", word)

    def finish(self) -> Program:
        starts, ends, flat = [], [], []
        for body in self.bodies:
            starts.append(len(flat))
            flat.extend(body)
            ends.append(len(flat))
        code = np.array(flat, dtype=np.int32)
        word_start = np.array(starts, dtype=np.int64)
        word_end = np.array(ends, dtype=np.int64)
        for arr in (code, word_start, word_end):
            arr.flags.writeable = False
        names = lambda space: tuple(sorted(space, key=space.get))  # noqa: E731
        return Program(
            source=self.source,
            dictionary=tuple(tuple(b) for b in self.bodies),
            word_names=MappingProxyType(dict(self.words)),
            variables=names(self.variables),
            inputs=names(self.inputs),
            outputs=tuple(zip(names(self.outputs), self.output_types)),
            code=code,
            word_start=word_start,
            word_end=word_end,
        )


def compile_source(source: str) -> Program:
    """Compile source text; every static error is raised here."""
    return _Compiler(source).compile()


def decompile(program: Program) -> str:
    """Human-readable listing of every dictionary entry."""
    lines = []
    for word in range(len(program.dictionary)):
        label = program.word_label(word)
        if word and label.startswith("anonymous"):
            header = f"[{word}] (anonymous)"
        elif word:
            header = f"[{word}] : {label}"
        else:
            header = "[0] main"
        lines.append(header)
        for offset, op, args in program.instructions(word):
            lines.append(f"  {offset:4d}  {_describe(program, op, args)}")
    for name, dtype in program.outputs:
        lines.append(f"output {name} {dtype.type_name}")
    for name in program.inputs:
        lines.append(f"input {name}")
    for name in program.variables:
        lines.append(f"variable {name}")
    return "\n".join(lines) + "\n"


def _describe(program: Program, op: int, args) -> str:
    name = bc.MNEMONICS[op]
    if op == bc.LIT32:
        return f"push({args[0]})"
    if op == bc.LIT64:
        return f"push({_join64(args[0], args[1])})"
    if op == bc.CALL:
        return f"call({program.word_label(args[0])})"
    if op == bc.IF:
        return f"if(then=[{args[0]}], else={'none' if args[1] < 0 else f'[{args[1]}]'})"
    if op in (bc.DO, bc.DO_STEP, bc.AGAIN, bc.UNTIL, bc.REPEAT):
        return f"{name}(body=[{args[0]}])"
    if op in (bc.VAR_GET, bc.VAR_SET, bc.VAR_ADD):
        return f"{name}({program.variables[args[0]]})"
    if bc.SEEK <= op <= bc.LEN:
        return f"{name}({program.inputs[args[0]]})"
    if op == bc.READ:
        dest = "stack" if args[2] < 0 else program.outputs[args[2]][0]
        return f"read({program.inputs[args[1]]}, {bc.read_word_spelling(args[0])}, {dest})"
    if op in (bc.WRITE, bc.WRITE_ADD, bc.OUT_DUP):
        return f"{name}({program.outputs[args[0]][0]})"
    return name
