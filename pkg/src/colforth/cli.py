"""Command-line front end."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .builder import TypedArrayBuilder, parse_replay
from .bytecode import OutputDtype
from .columnar import InvalidOffsets
from .compiler import ForthCompileError, compile_source
from .errors import ForthRuntimeError, MachineStateError
from .formats import oracle
from .formats.avro import AvroFormatError, parse_container, read_avro, replicate_blocks, write_avro_columns
from .formats.basket import SyntheticBasket, TruncatedBasket, read_synthetic_baskets, write_synthetic_baskets
from .formats.replevels import decode_replevel_pipeline
from .generators import UnsupportedSchema, replevel_bit_width
from .machine import Machine, StopReason
from .manifest import write_columns, write_result
from .types import nested_list

EXPECTED_ERRORS = (
    ForthCompileError, ForthRuntimeError, MachineStateError, AvroFormatError, TruncatedBasket,
    InvalidOffsets, UnsupportedSchema, OSError, ValueError,
)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def cmd_run(args) -> int:
    program = compile_source(Path(args.program).read_text())
    inputs = {}
    for binding in args.input:
        name, _, path = binding.partition("=")
        if not path:
            return _fail(f"--input expects name=path, got {binding!r}")
        inputs[name] = np.fromfile(path, dtype=np.uint8)
    machine = Machine(program)
    machine.begin_run(inputs)
    for value in args.push:
        machine.push(value)
    if args.trace:
        for word, stack in machine.step_trace(args.trace):
            print(f"{word:>16s}  {' '.join(map(str, stack))}")
        reason = machine.stop_reason
    else:
        reason = machine.resume()
    print(f"stop: {reason.value}" + (f" ({machine.error.value})" if machine.error else ""))
    print("stack:", " ".join(map(str, machine.stack)))
    if args.out:
        write_columns(args.out, machine.outputs(), extra={"stop_reason": reason.value})
    return 1 if reason is StopReason.ERROR else 0


def cmd_avro(args) -> int:
    result = read_avro(np.fromfile(args.file, dtype=np.uint8), threads=args.threads, style=args.style)
    _report(args, result)
    return 0


def cmd_basket(args) -> int:
    basket = SyntheticBasket.load(args.stem)
    result = read_synthetic_baskets(basket, args.depth, args.leaf)
    _report(args, result)
    return 0


def cmd_replevels(args) -> int:
    stream = Path(args.file).read_bytes()
    result = decode_replevel_pipeline(stream, args.depth, args.num_values, validate=False)
    if args.out:
        write_columns(args.out, result.columns, length=result.length)
    result.validate()
    _report(args, result, write=False)
    return 0


def cmd_builder_replay(args) -> int:
    commands = parse_replay(Path(args.file).read_text())
    builder = TypedArrayBuilder(nested_list(args.depth, args.leaf))
    rejected = builder.extend(commands)
    if rejected >= 0:
        return _fail(f"command {rejected} ({commands[rejected].kind.value}) rejected: user halt")
    result = builder.finish()
    _report(args, result)
    return 0


def _report(args, result, write: bool = True):
    if write and args.out:
        write_result(args.out, result)
    for name, arr in result.columns.items():
        preview = " ".join(map(str, arr[:8].tolist())) + (" ..." if len(arr) > 8 else "")
        print(f"{name}: {arr.dtype.name}[{len(arr)}] {preview}")


def cmd_gen(args) -> int:
    if args.mean_length <= 0:
        return _fail("--mean-length must be positive")
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    leaf = OutputDtype.parse(args.leaf)
    truth = out.with_name(out.name + ".truth")
    if args.kind == "avro":
        result = oracle.random_nested_columns(rng, args.records, args.depth, args.mean_length, leaf)
        data = write_avro_columns(result, args.block_size, sync=rng.bytes(16))
        if args.copies > 1:
            data = replicate_blocks(data, args.copies)
            result = read_avro(data)
        out.with_name(out.name + ".avro").write_bytes(data)
        write_result(truth, result)
    elif args.kind == "basket":
        result = oracle.random_nested_columns(rng, args.records, args.depth, args.mean_length, leaf)
        write_synthetic_baskets(result, args.depth, leaf).save(out)
        write_result(truth, result)
    else:
        result = oracle.random_nested_columns(
            rng, args.records, args.depth, args.mean_length, leaf, nonempty=True
        )
        levels = oracle.replevels_from_nested(result.to_list(), args.depth)
        stream = oracle.hybrid_encode(levels, replevel_bit_width(args.depth))
        out.with_name(out.name + ".replevels").write_bytes(stream)
        offsets = oracle.offsets_from_nested(result.to_list(), args.depth)
        write_columns(truth, offsets, length=result.length)
    print(f"wrote {args.kind} corpus {out} ({args.records} records); ground truth in {truth}")
    return 0


def cmd_bench(args) -> int:
    if args.kind == "dispatch":
        ns, words = bench.dispatch_ns_per_word(args.iterations)
        print(f"dispatch: {ns:.2f} ns/word over {words} words")
        return 0
    if args.kind == "avro":
        container = parse_container(np.fromfile(args.corpus, dtype=np.uint8))
        reports = bench.bench_avro(container, args.threads, args.repeats, dataset=str(args.corpus))
    else:
        basket = SyntheticBasket.load(args.corpus)
        reports = [bench.bench_basket(basket, args.depth, args.repeats, dataset=str(args.corpus))]
    for r in reports:
        print(r.row())
    speedup = bench.scaling(reports)
    if len(speedup) > 1:
        print("scaling vs 1 thread:", ", ".join(f"{k}: {v:.2f}x" for k, v in speedup.items()))
    if args.json:
        Path(args.json).write_text(json.dumps([r.as_dict() for r in reports], indent=2) + "\n")
    ns, words = bench.dispatch_ns_per_word()
    print(f"dispatch: {ns:.2f} ns/word over {words} words")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colforth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="compile and run a program")
    p.add_argument("program")
    p.add_argument("--input", action="append", default=[], metavar="NAME=PATH")
    p.add_argument("--push", action="append", type=int, default=[], metavar="INT")
    p.add_argument("--trace", type=int, default=0, metavar="N", help="trace up to N words")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("avro", help="decode an Avro container")
    p.add_argument("file")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--style", choices=("general", "single_block"), default="general")
    p.add_argument("--out")
    p.set_defaults(func=cmd_avro)

    p = sub.add_parser("basket", help="decode a synthetic basket (<stem>.data, <stem>.byte_offsets)")
    p.add_argument("stem")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--leaf", default="float32")
    p.add_argument("--out")
    p.set_defaults(func=cmd_basket)

    p = sub.add_parser("replevels", help="decode a repetition-level stream into offsets")
    p.add_argument("file")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--num-values", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replevels)

    p = sub.add_parser("builder-replay", help="replay '[', ']' and number tokens into a builder")
    p.add_argument("file")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--leaf", default="float32", choices=("float32", "float64"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_builder_replay)

    p = sub.add_parser("gen", help="write a seeded random corpus and its ground truth")
    p.add_argument("kind", choices=("avro", "basket", "replevels"))
    p.add_argument("--records", type=int, default=1000)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--mean-length", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leaf", default="float32")
    p.add_argument("--block-size", type=int, default=1000, help="Avro entries per block")
    p.add_argument("--copies", type=int, default=1, help="repeat the Avro blocks this many times")
    p.add_argument("--out", required=True, help="output path stem")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="measure decoding throughput and word dispatch")
    p.add_argument("kind", choices=("avro", "basket", "dispatch"))
    p.add_argument("corpus", nargs="?")
    p.add_argument("--threads", type=int, nargs="+", default=[1])
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--iterations", type=int, default=4_000_000)
    p.add_argument("--json")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.kind != "dispatch" and not args.corpus:
        return _fail("bench needs a corpus path")
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        return _fail(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
