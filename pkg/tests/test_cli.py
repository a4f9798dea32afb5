from __future__ import annotations

import json
import shutil

import numpy as np
import pytest

from src import config
from src.cli import build_parser, main
from src.datagen import ObservationDataset, read_dataset, write_dataset
from src.errors import EXIT_IO, EXIT_OK, EXIT_RESOURCE, EXIT_UNSAT, EXIT_USAGE
from src.fixtures import FIXTURE_DIR
from src.infer import write_assignments
from src.pipeline import load_bundle


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "CONFIG_FILE", tmp_path / "settings.json")
    monkeypatch.delenv(config.NODE_CAP_ENV, raising=False)


@pytest.fixture
def bundle(tmp_path):
    out = tmp_path / "music"
    assert main(["compile", str(FIXTURE_DIR / "music.dsl"), str(out)]) == EXIT_OK
    return out


def test_compile_writes_bundle_and_manifest(bundle, capsys):
    manifest = json.loads((bundle / "manifest.json").read_text())
    assert manifest["command"] == "compile"
    assert manifest["inputs"] == [str(FIXTURE_DIR / "music.dsl")]
    assert "settings" in manifest["config"]
    assert load_bundle(bundle).varmap.total == 14


def test_compile_prints_summary(tmp_path, capsys):
    main(["compile", str(FIXTURE_DIR / "music.dsl"), str(tmp_path / "b")])
    assert capsys.readouterr().out.startswith("6 parts, 14 variables")


def test_compile_unsat_exit_code(tmp_path):
    out = tmp_path / "unsat"
    assert main(["compile", str(FIXTURE_DIR / "unsat.dsl"), str(out)]) == EXIT_UNSAT
    assert (out / "circuit.sdd").exists()


def test_node_cap_exit_code(tmp_path):
    assert main(["compile", str(FIXTURE_DIR / "music.dsl"), str(tmp_path / "b"), "--node-cap", "5"]) == EXIT_RESOURCE


def test_node_cap_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(config.NODE_CAP_ENV, "5")
    assert main(["compile", str(FIXTURE_DIR / "music.dsl"), str(tmp_path / "b")]) == EXIT_RESOURCE


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["compile"])
    assert err.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == EXIT_USAGE


def test_syntax_error_and_missing_file(tmp_path):
    bad = tmp_path / "bad.dsl"
    bad.write_text("concept A\n", encoding="utf-8")
    assert main(["compile", str(bad), str(tmp_path / "b")]) == EXIT_USAGE
    assert main(["compile", str(tmp_path / "missing.dsl"), str(tmp_path / "b")]) == EXIT_IO


def test_reason_assignments(bundle, tmp_path, capsys):
    co = load_bundle(bundle)
    names = co.varmap.names()
    xs = np.random.default_rng(0).integers(0, 2, size=(50, len(names)), dtype=np.uint8)
    path = tmp_path / "rows.tsv"
    write_assignments(path, names, xs)
    assert main(["reason", str(bundle), str(path), "--threads", "2", "--batch-size", "8"]) == EXIT_OK
    results = (tmp_path / "rows.results.tsv").read_text().splitlines()
    assert results[0].split("\t")[-1] == "consistent"
    assert len(results) == 51
    assert "rows/sec" in capsys.readouterr().err


def test_reason_empty_input(bundle, tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("", encoding="utf-8")
    out = tmp_path / "out.tsv"
    assert main(["reason", str(bundle), str(path), "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines() == ["\t".join(load_bundle(bundle).varmap.names() + ["consistent"])]


def test_reason_bad_header(bundle, tmp_path):
    path = tmp_path / "rows.tsv"
    path.write_text("a\tb\n0\t1\n", encoding="utf-8")
    assert main(["reason", str(bundle), str(path)]) == EXIT_IO


def test_reason_needs_input(bundle):
    assert main(["reason", str(bundle)]) == EXIT_USAGE


def test_reason_abox(bundle, tmp_path, capsys):
    out = tmp_path / "abox.tsv"
    assert main(["reason", str(bundle), "--abox", str(FIXTURE_DIR / "music.dsl"), "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "Fugazi\tThe Smiths\t1" in printed
    assert out.read_text().splitlines()[0] == "subject\tobject\tconsistent"


def test_reason_abox_inconsistent(bundle, tmp_path, capsys):
    abox = tmp_path / "abox.dsl"
    text = (FIXTURE_DIR / "music.dsl").read_text(encoding="utf-8")
    abox.write_text(text + 'assert "Dischord Records" influence "The Smiths".\n', encoding="utf-8")
    assert main(["reason", str(bundle), "--abox", str(abox)]) == EXIT_OK
    assert "Dischord Records\tThe Smiths\t0" in capsys.readouterr().out


def test_generate_ontology_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", "--ontology", "--concepts", "4", "--roles", "2", "--seed", "3", "--out", str(tmp_path / name)]) == EXIT_OK
    assert (tmp_path / "a" / "ontology.dsl").read_text() == (tmp_path / "b" / "ontology.dsl").read_text()
    meta = json.loads((tmp_path / "a" / "generator.json").read_text())
    assert meta["config"]["n_concepts"] == 4


def test_generate_kg_and_dataset(bundle, tmp_path):
    out = tmp_path / "data"
    assert main(["generate", "--kg", "5", "--bundle", str(bundle), "--out", str(out)]) == EXIT_OK
    assert (out / "kg.tsv").read_text().startswith("i\tj\troles\tdomino")
    args = ["generate", "--dataset", "identity", "2", "--individuals", "6", "--split", "10", "--bundle", str(bundle), "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "d1")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "d2")]) == EXIT_OK
    train = read_dataset(tmp_path / "d1" / "train.csv")
    assert len(train) == 10
    assert (tmp_path / "d1" / "test.csv").read_bytes() == (tmp_path / "d2" / "test.csv").read_bytes()
    meta = json.loads((tmp_path / "d1" / "generator.json").read_text())
    assert meta["scheme"] == "identity"


def test_generate_errors(bundle, tmp_path):
    assert main(["generate", "--kg", "5", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["generate", "--dataset", "banana", "3", "--bundle", str(bundle), "--out", str(tmp_path / "x")]) == EXIT_USAGE


def test_generate_cnf_grid(tmp_path):
    out = tmp_path / "grid"
    args = ["generate", "--cnf-grid", "--concept-counts", "3,4", "--role-counts", "2", "--grid-seeds", "0,1", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert len((out / "cnf_grid.csv").read_text().splitlines()) == 5


def test_train_and_eval(bundle, tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--dataset", "diag-normal", "2", "--individuals", "6", "--split", "30", "--bundle", str(bundle), "--out", str(data)]) == EXIT_OK
    models = tmp_path / "models"
    args = [
        "train", str(bundle), str(data / "train.csv"), "--mode", "spl", "--seeds", "0,1",
        "--epochs", "2", "--test", str(data / "test.csv"), "--out", str(models),
    ]
    assert main(args) == EXIT_OK
    losses = json.loads((models / "losses.json").read_text())
    assert set(losses) == {"0", "1"} and len(losses["0"]) == 2
    metrics = json.loads((models / "metrics.json").read_text())
    assert metrics["summary"]["consistent"]["mean"] == 1.0
    manifest = json.loads((models / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]

    ckpts = [str(models / f"spl-seed{s}.ckpt") for s in (0, 1)]
    capsys.readouterr()
    assert main(["eval", str(bundle), str(data / "test.csv"), *ckpts, "--out", str(tmp_path / "eval")]) == EXIT_OK
    assert "consistent\t1.000 ± 0.000" in capsys.readouterr().out
    assert json.loads((tmp_path / "eval" / "metrics.json").read_text())["seeds"] == [0, 1]


def test_eval_rejects_foreign_checkpoint(bundle, tmp_path):
    data = tmp_path / "data"
    main(["generate", "--dataset", "identity", "1", "--individuals", "4", "--bundle", str(bundle), "--out", str(data)])
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"{}\n")
    assert main(["eval", str(bundle), str(data / "dataset.csv"), str(bogus), "--out", str(tmp_path / "e")]) == EXIT_IO


def test_dataset_width_mismatch_is_a_schema_error(bundle, tmp_path):
    narrow = tmp_path / "narrow.csv"
    rng = np.random.default_rng(0)
    write_dataset(
        ObservationDataset(rng.normal(size=(4, 5)), np.zeros((4, 5), dtype=np.uint8), np.zeros((4, 2), dtype=np.int64)),
        narrow,
    )
    args = ["train", str(bundle), str(narrow), "--mode", "baseline", "--seeds", "0", "--epochs", "1", "--out", str(tmp_path / "m")]
    assert main(args) == EXIT_IO

    data = tmp_path / "data"
    assert main(["generate", "--dataset", "identity", "1", "--individuals", "4", "--bundle", str(bundle), "--out", str(data)]) == EXIT_OK
    models = tmp_path / "models"
    args = ["train", str(bundle), str(data / "dataset.csv"), "--mode", "baseline", "--seeds", "0", "--epochs", "1", "--out", str(models)]
    assert main(args) == EXIT_OK
    ckpt = str(models / "baseline-seed0.ckpt")
    assert main(["eval", str(bundle), str(narrow), ckpt, "--out", str(tmp_path / "e")]) == EXIT_IO


def test_bench(bundle, tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", str(bundle), "--rows", "200,400", "--repeat", "1", "--out", str(out)]) == EXIT_OK
    rows = json.loads((out / "bench.json").read_text())
    assert [r["rows"] for r in rows] == [200, 400]
    assert all(r["identical"] for r in rows)
    assert (out / "bench.csv").exists()


def test_recipe_cnf_growth(tmp_path):
    assert main(["recipe", "cnf-growth", "--seeds", "0", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "cnf_growth.csv").read_text().startswith("n_concepts")


def test_missing_bundle(tmp_path):
    assert main(["reason", str(tmp_path / "nope"), str(tmp_path / "x.tsv")]) == EXIT_IO


def test_parser_lists_every_command():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {"compile", "reason", "generate", "train", "eval", "bench", "recipe"}


def test_bundle_copy_still_loads(bundle, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(bundle, copy)
    assert main(["reason", str(copy), "--abox", str(FIXTURE_DIR / "music.dsl")]) == EXIT_OK
