"""Throughput measurements: word dispatch and block-parallel decoding."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

from .columnar import LeafForm, ListForm
from .formats.avro import AvroContainer, parse_container, read_avro
from .formats.basket import SyntheticBasket, read_synthetic_baskets
from .machine import Machine


@dataclass(frozen=True)
class BenchReport:
    format: str
    dataset: str
    threads: int
    wall_s: float
    values_per_s: float
    bytes_per_s: float
    words: int = 0

    def row(self) -> str:
        return (f"{self.format:8s} {self.threads:3d} thr  {self.wall_s:8.3f} s  "
                f"{self.values_per_s / 1e6:9.2f} Mvalues/s  {self.bytes_per_s / 2**20:9.1f} MiB/s")

    def as_dict(self) -> dict:
        return asdict(self)


DISPATCH_PROGRAM = "0 swap 0 do 1 + loop"


def dispatch_ns_per_word(iterations: int = 4_000_000, repeats: int = 3) -> tuple[float, int]:
    """Best-of-``repeats`` nanoseconds per executed word on a counted add loop."""
    machine = Machine(DISPATCH_PROGRAM)
    best = float("inf")
    words = 0
    for _ in range(repeats):
        machine.reset()
        machine.begin_run({})
        machine.push(iterations)
        t0 = time.perf_counter()
        machine.resume()
        elapsed = time.perf_counter() - t0
        words = machine.words_executed
        if machine.stack != [iterations]:
            raise RuntimeError(f"dispatch loop produced {machine.stack}")
        best = min(best, elapsed * 1e9 / words)
    return best, words


def _leaf_count(result) -> int:
    form = result.form
    while isinstance(form, ListForm):
        form = form.content
    return len(result.columns[form.content]) if isinstance(form, LeafForm) else result.length


def bench_avro(data, threads: list[int], repeats: int = 1, dataset: str = "") -> list[BenchReport]:
    container = data if isinstance(data, AvroContainer) else parse_container(data)
    nbytes = sum(b.size for b in container.blocks)
    Machine("1 drop").run()  # load the compiled interpreter before timing
    reports = []
    for n in threads:
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            result = read_avro(container, threads=n)
            best = min(best, time.perf_counter() - t0)
        values = _leaf_count(result)
        reports.append(BenchReport("avro", dataset, n, best, values / best, nbytes / best))
    return reports


def bench_basket(basket: SyntheticBasket, depth: int, repeats: int = 1, dataset: str = "") -> BenchReport:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = read_synthetic_baskets(basket, depth)
        best = min(best, time.perf_counter() - t0)
    return BenchReport("basket", dataset, 1, best, _leaf_count(result) / best, len(basket.data) / best)


def scaling(reports: list[BenchReport]) -> dict[int, float]:
    """Throughput of each thread count relative to the one-thread run."""
    base = next((r.values_per_s for r in reports if r.threads == 1), None)
    if not base:
        return {}
    return {r.threads: r.values_per_s / base for r in reports}

