"""One test per acceptance criterion. Measured numbers are shown in the run summary."""

import time

import numpy as np
import pytest

from colforth import columnar
from colforth.builder import BEGIN_LIST, END_LIST, Outcome, TypedArrayBuilder, append
from colforth.bench import bench_avro, dispatch_ns_per_word
from colforth.bytecode import ErrorKind, OutputDtype
from colforth.formats import oracle
from colforth.formats.avro import parse_container, read_avro, replicate_blocks, write_avro_columns, write_avro_oracle
from colforth.formats.basket import read_synthetic_baskets, write_synthetic_baskets
from colforth.formats.replevels import decode_replevel_pipeline
from colforth.generators import gen_tbasket_program, replevel_bit_width
from colforth.machine import Machine, StopReason
from colforth.types import nested_list

from conftest import MEASUREMENTS, RESULTS_CHECKED
from test_machine import ERROR_TABLE, FIB, FIB_STACK

F32 = OutputDtype.FLOAT32


def same_columns(a, b):
    return a.columns.keys() == b.columns.keys() and all(
        a.columns[k].dtype == b.columns[k].dtype and a.columns[k].tobytes() == b.columns[k].tobytes()
        for k in a.columns
    )


def test_fibonacci_conformance():
    Machine("1").run()  # load the compiled interpreter
    t0 = time.perf_counter()
    m = Machine(FIB)
    reason = m.run()
    elapsed = time.perf_counter() - t0
    MEASUREMENTS["fibonacci compile+run"] = f"{elapsed * 1e3:.2f} ms"
    assert reason is StopReason.DONE
    assert m.stack == FIB_STACK
    assert elapsed < 1.0


def test_error_closure():
    seen = set()
    for source, inputs, kind in ERROR_TABLE:
        assert len(source.split()) <= 5, source
        m = Machine(source)
        assert m.run(inputs) is StopReason.ERROR, source
        assert m.error is kind, source
        seen.add(m.error)
    assert seen == set(ErrorKind)
    assert len(ErrorKind) == 10


def test_avro_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    records = 0
    for _ in range(100):
        descriptor = oracle.random_descriptor(rng, max_depth=4)
        n = int(rng.integers(1_000, 10_001))
        values = oracle.random_values(rng, descriptor, n, lam=1.5)
        data = write_avro_oracle(values, descriptor, block_size=int(rng.integers(200, 5_000)), splits=rng)
        decoded = read_avro(data)
        assert same_columns(decoded, oracle.columnarize(values, descriptor))
        records += n
    elapsed = time.perf_counter() - t0
    MEASUREMENTS["avro 100 schemas"] = f"{records} records in {elapsed:.1f} s"
    assert elapsed < 60.0


def test_tbasket_oracle_equivalence():
    rng = np.random.default_rng(7)
    for depth in (1, 2, 3):
        truth = oracle.random_nested_columns(rng, 10_000, depth, 3.0, F32)
        basket = write_synthetic_baskets(truth, depth)
        result = read_synthetic_baskets(basket, depth)
        assert same_columns(result, truth)
        raw = Machine(gen_tbasket_program(depth).program)
        raw.run({"data": basket.data, "byte_offsets": basket.byte_offsets})
        assert raw.error is ErrorKind.SEEK_BEYOND


def test_parquet_replevel_equivalence():
    worked = decode_replevel_pipeline(oracle.hybrid_encode([0, 3, 2, 1], 2), 3)
    assert {k: v.tolist() for k, v in worked.columns.items()} == {
        "offsets0": [0, 2], "offsets1": [0, 2, 3], "offsets2": [0, 2, 3, 4]}
    rng = np.random.default_rng(11)
    for depth in (1, 2, 3, 4):
        for _ in range(10):
            values = oracle.random_nested_columns(rng, 500, depth, 3.0, F32, nonempty=True).to_list()
            levels = oracle.replevels_from_nested(values, depth)
            stream = oracle.hybrid_encode(levels, replevel_bit_width(depth))
            result = decode_replevel_pipeline(stream, depth, len(levels))
            expected = oracle.offsets_from_nested(values, depth)
            assert {k: v.tolist() for k, v in result.columns.items()} == \
                {k: v.tolist() for k, v in expected.items()}


def test_builder_equivalence():
    rng = np.random.default_rng(5)
    builders = {d: TypedArrayBuilder(nested_list(d)) for d in range(1, 5)}
    rejections = 0
    for _ in range(1_000):
        depth = int(rng.integers(1, 5))
        values = oracle.random_nested_columns(rng, int(rng.integers(0, 12)), depth, 2.0, F32).to_list()
        pairs = oracle.commands_for(values, depth)
        commands = [append(v) if k == "append" else (BEGIN_LIST if k == "begin_list" else END_LIST)
                    for k, v in pairs]
        b = builders[depth].reset()
        assert b.extend(commands) == -1
        result = b.finish()
        expected, rejected = oracle.build_from_commands(pairs, depth)
        assert rejected == -1
        assert all(result.columns[k].tobytes() == v.tobytes() for k, v in expected.items())

        # every kind of ill-typed command at a random point is rejected without side effects
        cut = int(rng.integers(0, len(commands) + 1))
        level = sum(1 if c is BEGIN_LIST else -1 if c is END_LIST else 0 for c in commands[:cut])
        bad = [c for c, ok in ((append(1.0), level < depth), (BEGIN_LIST, level == depth),
                               (END_LIST, level == 0)) if ok]
        for command in bad:
            b.reset()
            b.extend(commands[:cut])
            before = {k: v.tobytes() for k, v in b.snapshot().items()}
            assert b.send(command) is Outcome.REJECTED
            assert b.machine.error is ErrorKind.USER_HALT
            assert {k: v.tobytes() for k, v in b.snapshot().items()} == before
            rejections += 1
    MEASUREMENTS["builder ill-typed commands rejected"] = str(rejections)


def test_offsets_validity_everywhere():
    # Every ColumnarResult built anywhere in the suite is validated at teardown by
    # the autouse fixture in conftest; this test checks the hook is live and
    # sweeps each producer once more.
    assert columnar.ColumnarResult.__post_init__.__name__ == "_recording_post_init"
    rng = np.random.default_rng(3)
    truth = oracle.random_nested_columns(rng, 300, 3, 2.0, F32)
    produced = [
        truth,
        read_avro(write_avro_columns(truth, 50), threads=3),
        read_synthetic_baskets(write_synthetic_baskets(truth, 3), 3),
        decode_replevel_pipeline(oracle.hybrid_encode([0, 1, 1, 0, 2], 2), 2),
        TypedArrayBuilder(nested_list(2)).finish(),
        columnar.concatenate([truth, truth], truth.form),
    ]
    for result in produced:
        result.validate()
        for name, col in result.columns.items():
            if name.split(".")[-1].startswith("offsets"):
                assert col[0] == 0 and np.all(np.diff(col) >= 0)
    MEASUREMENTS["results validated before this test"] = str(RESULTS_CHECKED["count"])


def test_dispatch_performance():
    ns, words = dispatch_ns_per_word(iterations=5_000_000)
    MEASUREMENTS["dispatch"] = f"{ns:.2f} ns/word over {words} words"
    assert words >= 10_000_000
    assert ns <= 100.0


@pytest.mark.slow
def test_thread_scaling():
    rng = np.random.default_rng(8)
    truth = oracle.random_nested_columns(rng, 8_200, 3, 8.0, F32)
    block = write_avro_columns(truth, block_size=8_200, sync=rng.bytes(16))
    corpus = replicate_blocks(block, 16)
    container = parse_container(corpus)
    assert len(corpus) >= 256 * 2**20 and len(container.blocks) >= 16

    one = read_avro(container, threads=1)
    four = read_avro(container, threads=4)
    assert same_columns(one, four)
    del one, four

    reports = {r.threads: r for r in bench_avro(container, [1, 4], repeats=1)}
    speedup = reports[4].values_per_s / reports[1].values_per_s
    MEASUREMENTS["avro scaling 4 vs 1 thread"] = (
        f"{speedup:.2f}x ({reports[1].bytes_per_s / 2**20:.0f} -> {reports[4].bytes_per_s / 2**20:.0f} MiB/s,"
        f" {len(corpus) / 2**20:.0f} MiB, {len(container.blocks)} blocks)"
    )
    assert speedup >= 2.5
