from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from src import bench
from src.bench import bench_circuit, write_bench
from src.datagen import generate_ontology
from src.fixtures import REFERENCE_GEN
from src.infer import evaluate_batch
from src.pipeline import compile_ontology


def test_bench_rows(music_co, monkeypatch, tmp_path):
    monkeypatch.setattr(bench, "SCALAR_CAP", 150)
    rows = bench_circuit(music_co.circuit, (100, 300), seed=1, repeats=1, batch_size=64, threads=2)
    assert [r.rows for r in rows] == [100, 300]
    assert [r.scalar_extrapolated for r in rows] == [False, True]
    assert [r.compared_rows for r in rows] == [100, 300]
    assert all(r.identical for r in rows)
    assert all(r.speedup > 0 for r in rows)

    write_bench(rows, tmp_path / "out")
    assert [r["rows"] for r in json.loads((tmp_path / "out" / "bench.json").read_text())] == [100, 300]
    with open(tmp_path / "out" / "bench.csv", newline="") as f:
        table = list(csv.DictReader(f))
    assert table[1]["scalar_extrapolated"] == "True"


@pytest.mark.parametrize("threads", [1, 3])
def test_mismatch_past_scalar_cap_is_reported(music_co, monkeypatch, threads):
    monkeypatch.setattr(bench, "SCALAR_CAP", 50)

    def last_row_flipped(c, xs, batch_size=None, threads=1):
        out = np.array(evaluate_batch(c, xs, batch_size, threads), copy=True)
        out[-1] ^= 1
        return out

    monkeypatch.setattr(bench, "evaluate_batch", last_row_flipped)
    (row,) = bench_circuit(music_co.circuit, (200,), seed=2, repeats=1, threads=threads)
    assert row.scalar_extrapolated
    assert row.compared_rows == 200
    assert not row.identical


@pytest.mark.slow
def test_batched_is_ten_times_faster():
    co = compile_ontology(generate_ontology(REFERENCE_GEN))
    (row,) = bench_circuit(co.circuit, (1_000_000,), seed=0, repeats=1, threads=4)
    assert row.compared_rows == 1_000_000
    assert row.identical
    assert row.speedup >= 10
