import numpy as np
import pytest

from colforth import bytecode as bc
from colforth.compiler import (
    BadDeclaration,
    DuplicateName,
    ForthCompileError,
    LiteralOutOfRange,
    NestedDefinition,
    UnbalancedControlFlow,
    UnclosedComment,
    UnknownWord,
    compile_source,
    decompile,
    parse_read_word,
    tokenize,
)
from colforth.machine import Machine, StopReason


def texts(source):
    return [t.text for t in tokenize(source)]


@pytest.mark.parametrize("source, expected", [
    ("3 4 +", ["3", "4", "+"]),
    ("1 ( note ) 2", ["1", "2"]),
    ("dup\n  drop", ["dup", "drop"]),
    ("1 \\ to end of line\n2", ["1", "2"]),
    ("( multi\nline ) 5", ["5"]),
    ("", []),
])
def test_tokenize(source, expected):
    assert texts(source) == expected


def test_token_positions():
    toks = tokenize("a\n  bb")
    assert (toks[1].line, toks[1].column, toks[1].position) == (2, 3, 4)


def test_unclosed_comment():
    with pytest.raises(UnclosedComment):
        tokenize("1 ( never closed")


def test_define_and_call():
    program = compile_source(": f 3 + ;  2 f")
    assert dict(program.word_names) == {"f": 1}
    m = Machine(program)
    assert m.run() is StopReason.DONE
    assert m.stack == [5]


def test_output_declaration_emits_no_code():
    program = compile_source("output x int32")
    assert [(n, d.type_name) for n, d in program.outputs] == [("x", "int32")]
    assert program.dictionary[0] == ()


def test_if_then_compiles_and_underflows_at_runtime():
    m = Machine("if then")
    assert m.run() is StopReason.ERROR
    assert m.error is bc.ErrorKind.STACK_UNDERFLOW


@pytest.mark.parametrize("source, error", [
    ("frobnicate", UnknownWord),
    ("1 2 Dup", UnknownWord),
    ("if", UnbalancedControlFlow),
    ("then", UnbalancedControlFlow),
    ("; ", UnbalancedControlFlow),
    (": f", UnbalancedControlFlow),
    ("do", UnbalancedControlFlow),
    ("loop", UnbalancedControlFlow),
    ("begin", UnbalancedControlFlow),
    ("begin until again", UnbalancedControlFlow),
    ("1 while", UnbalancedControlFlow),
    ("begin 1 while", UnbalancedControlFlow),
    ("repeat", UnbalancedControlFlow),
    ("i", UnbalancedControlFlow),
    ("3 0 do j loop", UnbalancedControlFlow),
    ("variable x variable x", DuplicateName),
    ("variable x input x", DuplicateName),
    (": f ; : f ;", DuplicateName),
    ("output dup int32", DuplicateName),
    ("variable", BadDeclaration),
    ("output x", BadDeclaration),
    ("output x complex128", BadDeclaration),
    (": f if variable y then ;", BadDeclaration),
    (": f : g ; ;", NestedDefinition),
    ("1 if : g ; then", NestedDefinition),
    ("9223372036854775808", LiteralOutOfRange),
    ("-9223372036854775809", LiteralOutOfRange),
    ("variable x x", UnknownWord),
    ("variable x x dup", UnknownWord),
    ("input d d i->", UnknownWord),
    ("input d d i-> nowhere", UnknownWord),
    ("input d d frob->", UnknownWord),
    ("output o int32 o <- 5", UnknownWord),
    ("output o int32 o", UnknownWord),
    ("input d d 33bit-> stack", UnknownWord),
    ("input d d 0bit-> stack", UnknownWord),
])
def test_static_errors(source, error):
    with pytest.raises(error) as info:
        compile_source(source)
    assert isinstance(info.value, ForthCompileError)


def test_error_carries_token_location():
    with pytest.raises(UnknownWord) as info:
        compile_source("1 2\n  bogus")
    assert info.value.token.text == "bogus"
    assert info.value.token.line == 2


def test_literals_span_64_bits():
    m = Machine("9223372036854775807 -9223372036854775808 2147483648 -1")
    m.run()
    assert m.stack == [2**63 - 1, -(2**63), 2**31, -1]


def test_read_word_matrix_compiles():
    words = []
    for c in "bBhHiIqQfd":
        words += [f"{c}->", f"!{c}->", f"#{c}->", f"#!{c}->"]
    words += ["varint->", "zigzag->", "#varint->", "#zigzag->"]
    words += [f"{n}bit->" for n in range(1, 33)] + [f"#{n}bit->" for n in range(1, 33)]
    for w in words:
        assert parse_read_word(w) is not None, w
    assert parse_read_word("q") is None
    src = "input d output o float64\n" + "\n".join(
        f"{'1 ' if w.startswith('#') else ''}d {w} {'o' if k % 2 else 'stack'}" for k, w in enumerate(words)
    )
    compile_source(src)


def test_full_vocabulary_compiles():
    src = """
    variable v input d output o int64
    : w 1 2 dup drop swap over rot 1+ 1- + - * / mod negate abs min max
        and or xor invert lshift rshift = <> > < >= <= 0= drop ;
    v @ v ! 1 v +! 5 0 do 2 0 do i j + drop loop loop
    0 10 0 do 2 +loop
    begin 1 until begin 0 while repeat begin exit again
    if else then pause halt
    0 d seek 0 d skip 0 d rewind d pos d end d len
    o <- stack o +<- stack 1 o dup
    """
    compile_source(src)


def test_deterministic_compilation():
    src = ": sq dup * ; 10 0 do i sq loop"
    a, b = compile_source(src), compile_source(src)
    assert a.dictionary == b.dictionary
    assert np.array_equal(a.code, b.code)


def test_every_instruction_decodes():
    program = compile_source(": f 1 2 + ; 9223372036854775807 f 3 0 do i loop input d d #!i-> stack")
    for word in range(len(program.dictionary)):
        for _, op, args in program.instructions(word):
            assert op in bc.MNEMONICS
            assert len(args) <= 3


def test_programs_are_immutable():
    program = compile_source("1 2 +")
    with pytest.raises(ValueError):
        program.code[0] = 7


def test_decompile_listing():
    assert "push(1)" in decompile(compile_source("1 2 +"))
    assert "push(2)" in decompile(compile_source("1 2 +"))
    assert "add" in decompile(compile_source("1 2 +"))
    listing = decompile(compile_source(": f ;"))
    assert "[1] : f" in listing
    listing = decompile(compile_source("10 0 do i loop"))
    assert "do(body=[1])" in listing
    assert "[1] (anonymous)" in listing
    assert "i" in listing.splitlines()[-1]


def test_case_sensitive():
    with pytest.raises(UnknownWord):
        compile_source("1 DUP")
