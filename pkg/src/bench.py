"""
Throughput of the scalar per-node loop against the batched evaluator on random rows.
The scalar path is timed on at most SCALAR_CAP rows and extrapolated beyond that;
the remaining rows are still evaluated by the scalar loop, untimed, so the identity
check covers every row.
"""
from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.infer import evaluate, evaluate_batch
from src.sdd import Circuit

logger = logging.getLogger(__name__)

SCALAR_CAP = 20_000
ROW_COUNTS = (1_000, 10_000, 100_000, 1_000_000)


@dataclass(frozen=True)
class BenchRow:
    rows: int
    scalar_seconds: float
    batched_seconds: float
    scalar_extrapolated: bool
    speedup: float
    identical: bool
    compared_rows: int


def _timed(fn, repeats: int) -> tuple[float, object]:
    times = []
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times), out


def _scalar(c: Circuit, xs: np.ndarray) -> np.ndarray:
    return np.array([evaluate(c, x) for x in xs], dtype=np.uint8)


def _scalar_reference(c: Circuit, xs: np.ndarray, threads: int) -> np.ndarray:
    """Scalar results for every row of xs, in order."""
    if threads <= 1:
        return _scalar(c, xs)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda chunk: _scalar(c, chunk), np.array_split(xs, threads)))
    return np.concatenate(parts)


def bench_circuit(
    c: Circuit,
    row_counts: Sequence[int] = ROW_COUNTS,
    seed: int = 0,
    repeats: int = 3,
    batch_size: Optional[int] = None,
    threads: int = 1,
) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    out = []
    for n in row_counts:
        xs = rng.integers(0, 2, size=(n, c.plan.n_vars), dtype=np.uint8)
        m = min(n, SCALAR_CAP)
        t_scalar, scalar = _timed(lambda: _scalar(c, xs[:m]), repeats)
        t_batch, batched = _timed(lambda: evaluate_batch(c, xs, batch_size, threads), repeats)
        if m < n:
            t_scalar *= n / m
            logger.info("Checking the remaining %d rows with the scalar loop (untimed)", n - m)
            scalar = np.concatenate([scalar, _scalar_reference(c, xs[m:], threads)])
        row = BenchRow(
            rows=n,
            scalar_seconds=t_scalar,
            batched_seconds=t_batch,
            scalar_extrapolated=m < n,
            speedup=t_scalar / t_batch if t_batch > 0 else float("inf"),
            identical=bool(np.array_equal(scalar, batched)),
            compared_rows=len(scalar),
        )
        logger.info(
            "%d rows: scalar %.4fs%s, batched %.4fs (x%.1f)",
            n, t_scalar, " (extrapolated)" if row.scalar_extrapolated else "", t_batch, row.speedup,
        )
        if not row.identical:
            logger.error("Scalar and batched results differ on %d rows", n)
        out.append(row)
    return out


def write_bench(rows: Sequence[BenchRow], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bench.json", "w", encoding="utf-8") as f:
        json.dump([asdict(r) for r in rows], f, indent=2)
    with open(out_dir / "bench.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(BenchRow.__dataclass_fields__))
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
