"""
Command-line surface: compile, reason, generate, train, eval, bench and recipe.
Every command writes a manifest.json next to its outputs; exceptions are mapped
to the exit codes in src.errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from src import __version__, config
from src.bench import ROW_COUNTS, bench_circuit, write_bench
from src.datagen import (
    SCHEMES,
    ZERO_SCHEME,
    GenConfig,
    cnf_grid_stats,
    generate_ontology,
    read_dataset,
    sample_individuals,
    sample_kg,
    synthesize_dataset,
    write_dataset,
    write_generator_meta,
    write_kg,
    write_ontology,
    write_rows_csv,
)
from src.dl import parse_ontology
from src.errors import EXIT_IO, EXIT_OK, EXIT_UNSAT, EXIT_USAGE, DlCircuitError
from src.fixtures import (
    recipe_clusters,
    recipe_cnf_growth,
    recipe_table2,
    recipe_table3,
    run_plan,
)
from src.infer import evaluate_batch, read_assignments, write_assignments
from src.nesy import MODES, TrainConfig, evaluate_model, load_checkpoint, save_checkpoint, train, write_report
from src.pipeline import abox_label_vectors, compile_ontology, load_bundle, write_bundle

logger = logging.getLogger(__name__)

RECIPES = ("table2", "table3", "clusters", "cnf-growth")


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    seeds: list[int] = field(default_factory=list)
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seconds: float = 0.0
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        return path


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for unsatisfiable ontologies."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _node_cap(args: argparse.Namespace, settings: dict[str, Any]) -> int:
    return args.node_cap if getattr(args, "node_cap", None) is not None else settings["node_cap"]


def _train_config(args: argparse.Namespace, settings: dict[str, Any]) -> TrainConfig:
    return TrainConfig.from_settings(
        settings,
        epochs=getattr(args, "epochs", None),
        minibatch=getattr(args, "minibatch", None),
        learning_rate=getattr(args, "lr", None),
    )


# ---- commands ----


def cmd_compile(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    onto, kg = parse_ontology(Path(args.ontology).read_text(encoding="utf-8"))
    kg.validate(onto)
    co = compile_ontology(
        onto,
        vtree=args.vtree or settings["vtree"],
        split_inverses=args.split_inverses or settings["split_inverses"],
        node_cap=_node_cap(args, settings),
    )
    out = Path(args.out)
    write_bundle(co, out)
    manifest.inputs.append(args.ontology)
    manifest.outputs.append(str(out))
    print(f"{co.meta['parts']} parts, {co.meta['variables']} variables, {co.meta['circuit_nodes']} nodes")
    if not co.satisfiable:
        logger.error("%s is unsatisfiable; bundle written to %s", args.ontology, out)
        return EXIT_UNSAT
    return EXIT_OK


def cmd_reason(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    co = load_bundle(Path(args.bundle), _node_cap(args, settings))
    batch_size = args.batch_size or settings["batch_size"]
    threads = args.threads or settings["threads"]
    manifest.inputs.append(args.bundle)
    if args.abox:
        _, kg = parse_ontology(Path(args.abox).read_text(encoding="utf-8"))
        kg.validate(co.ontology)
        pairs = abox_label_vectors(co, kg)
        ys = np.array([y for _, _, y in pairs], dtype=np.uint8).reshape(-1, co.label_width)
        ok = evaluate_batch(co.label_circuit, ys, batch_size, threads)
        manifest.inputs.append(args.abox)
        lines = [f"{s}\t{o}\t{int(good)}" for (s, o, _), good in zip(pairs, ok)]
        if args.out:
            Path(args.out).write_text("subject\tobject\tconsistent\n" + "".join(l + "\n" for l in lines), encoding="utf-8")
            manifest.outputs.append(args.out)
        for line in lines:
            print(line)
        return EXIT_OK
    if not args.assignments:
        raise DlCircuitError("reason needs an assignments file or --abox")
    names = co.varmap.names()
    xs = read_assignments(Path(args.assignments), names)
    start = time.perf_counter()
    results = evaluate_batch(co.circuit, xs, batch_size, threads)
    elapsed = time.perf_counter() - start
    out = Path(args.out) if args.out else Path(args.assignments).with_suffix(".results.tsv")
    write_assignments(out, names, xs, results)
    rate = len(xs) / elapsed if elapsed > 0 else float("inf")
    print(f"{len(xs)} rows in {elapsed:.4f}s ({rate:,.0f} rows/sec)", file=sys.stderr)
    manifest.inputs.append(args.assignments)
    manifest.outputs.append(str(out))
    manifest.config.update(batch_size=batch_size, threads=threads)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.seeds.append(args.seed)
    if args.cnf_grid:
        rows = cnf_grid_stats(args.concept_counts, args.role_counts, args.grid_seeds)
        write_rows_csv(rows, out / "cnf_grid.csv")
        manifest.outputs.append(str(out / "cnf_grid.csv"))
        return EXIT_OK
    if args.ontology:
        cfg = GenConfig(args.concepts, args.roles, args.p_domain, args.p_range, args.p_disjoint, args.seed)
        write_ontology(generate_ontology(cfg), out / "ontology.dsl")
        write_generator_meta(out / "generator.json", cfg)
        manifest.outputs += [str(out / "ontology.dsl"), str(out / "generator.json")]
        return EXIT_OK
    if not args.bundle:
        raise DlCircuitError("--kg and --dataset need --bundle")
    co = load_bundle(Path(args.bundle), _node_cap(args, settings))
    manifest.inputs.append(args.bundle)
    rng = np.random.default_rng(args.seed)
    m = args.kg if args.kg is not None else args.individuals
    kg = sample_kg(co, sample_individuals(co, m, rng), rng)
    write_kg(kg, co, out / "kg.tsv")
    manifest.outputs.append(str(out / "kg.tsv"))
    if args.dataset is None:
        write_generator_meta(out / "generator.json", individuals=m, seed=args.seed, kg=kg.diagnostics)
        return EXIT_OK
    scheme, k = args.dataset
    if scheme not in SCHEMES + (ZERO_SCHEME,):
        raise DlCircuitError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    meta: dict[str, Any] = {}
    ds = synthesize_dataset(kg, co, scheme, int(k), rng, meta)
    if args.split is not None:
        train_ds, test_ds = ds.split(min(args.split, len(ds)), rng)
        written = [("train.csv", train_ds), ("test.csv", test_ds)]
    else:
        written = [("dataset.csv", ds)]
    for name, part in written:
        write_dataset(part, out / name)
        manifest.outputs.append(str(out / name))
    write_generator_meta(out / "generator.json", individuals=m, seed=args.seed, kg=kg.diagnostics, rows=len(ds), **meta)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    co = load_bundle(Path(args.bundle), _node_cap(args, settings))
    ds = read_dataset(Path(args.dataset))
    test = read_dataset(Path(args.test)) if args.test else None
    cfg = _train_config(args, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    losses, runs = {}, []
    for seed in args.seeds:
        result = train(co, ds, args.mode, args.lam, args.bg, replace(cfg, seed=seed))
        path = out / f"{args.mode}-seed{seed}.ckpt"
        save_checkpoint(result.model, path)
        manifest.outputs.append(str(path))
        losses[str(seed)] = result.epoch_losses
        if test is not None:
            runs.append(evaluate_model(result.model, test, args.threshold, args.threads or settings["threads"]))
    with open(out / "losses.json", "w", encoding="utf-8") as f:
        json.dump(losses, f, indent=2)
    if runs:
        write_report(out / "metrics.json", runs, args.seeds, {"mode": args.mode, "lambda": args.lam, "bg": args.bg})
        manifest.outputs.append(str(out / "metrics.json"))
    manifest.inputs += [args.bundle, args.dataset] + ([args.test] if args.test else [])
    manifest.seeds += args.seeds
    manifest.config.update(asdict(cfg), mode=args.mode, lam=args.lam, bg=args.bg)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    co = load_bundle(Path(args.bundle), _node_cap(args, settings))
    ds = read_dataset(Path(args.dataset))
    runs, seeds = [], []
    for ckpt in args.checkpoints:
        model = load_checkpoint(Path(ckpt), co)
        runs.append(evaluate_model(model, ds, args.threshold, args.threads or settings["threads"]))
        seeds.append(model.seed)
        manifest.inputs.append(ckpt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = write_report(out / "metrics.json", runs, seeds)
    for name, s in report["summary"].items():
        print(f"{name}\t{s['mean']:.3f} ± {s['std']:.3f}")
    manifest.inputs += [args.bundle, args.dataset]
    manifest.outputs.append(str(out / "metrics.json"))
    manifest.seeds += seeds
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    co = load_bundle(Path(args.bundle), _node_cap(args, settings))
    rows = bench_circuit(
        co.circuit, args.rows, args.seed, args.repeat, args.batch_size or settings["batch_size"], args.threads or 1
    )
    out = Path(args.out)
    write_bench(rows, out)
    for r in rows:
        print(f"{r.rows}\t{r.scalar_seconds:.4f}\t{r.batched_seconds:.4f}\t{r.speedup:.1f}x")
    manifest.inputs.append(args.bundle)
    manifest.outputs += [str(out / "bench.json"), str(out / "bench.csv")]
    manifest.seeds.append(args.seed)
    return EXIT_OK


def cmd_recipe(args: argparse.Namespace, settings: dict[str, Any], manifest: RunManifest) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.seeds += args.seeds
    if args.name in ("table2", "table3"):
        recipe = recipe_table2 if args.name == "table2" else recipe_table3
        plan = recipe(
            args.seeds,
            individuals=args.individuals,
            n_train=args.n_train,
            n_test=args.n_test,
            train_cfg=_train_config(args, settings),
        )
        report = run_plan(plan, workers=args.workers)
        with open(out / f"{args.name}.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
        (out / f"{args.name}.txt").write_text(report["table"], encoding="utf-8")
        print(report["table"], end="")
        manifest.outputs += [str(out / f"{args.name}.json"), str(out / f"{args.name}.txt")]
    elif args.name == "clusters":
        rows = recipe_clusters(args.seeds[0], out_dir=out, train_cfg=replace(_train_config(args, settings), seed=args.seeds[0]))
        write_rows_csv(rows, out / "clusters.csv")
        manifest.outputs.append(str(out / "clusters.csv"))
    else:
        write_rows_csv(recipe_cnf_growth(seeds=args.seeds), out / "cnf_growth.csv")
        manifest.outputs.append(str(out / "cnf_growth.csv"))
    return EXIT_OK


# ---- parser ----


def _add_bundle_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--node-cap", type=int, default=None, help="abort beyond this many nodes")
    p.add_argument("--threads", type=int, default=None, help="parallel-map width")


def _add_train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--minibatch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dl-circuits", description="Compile ALCI ontologies to circuits and train constrained classifiers.")
    parser.add_argument("--version", action="version", version=f"dl-circuits {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile an ontology to a circuit bundle")
    p.add_argument("ontology")
    p.add_argument("out", help="bundle directory")
    p.add_argument("--vtree", choices=("balanced", "right-linear"), default=None)
    p.add_argument("--split-inverses", action="store_true")
    p.add_argument("--node-cap", type=int, default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("reason", help="check assignments (or an ABox) against a bundle")
    p.add_argument("bundle")
    p.add_argument("assignments", nargs="?")
    p.add_argument("--out", default=None, help="results file (default: <assignments>.results.tsv)")
    p.add_argument("--abox", default=None, help="DSL file whose assertions are checked pair by pair")
    p.add_argument("--batch-size", type=int, default=None)
    _add_bundle_opts(p)
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("generate", help="random ontologies, knowledge graphs and datasets")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--ontology", action="store_true")
    what.add_argument("--kg", type=int, metavar="M", default=None, help="individuals to sample")
    what.add_argument("--dataset", nargs=2, metavar=("SCHEME", "K"), default=None)
    what.add_argument("--cnf-grid", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bundle", default=None)
    p.add_argument("--concepts", type=int, default=10)
    p.add_argument("--roles", type=int, default=5)
    p.add_argument("--p-domain", type=float, default=0.5)
    p.add_argument("--p-range", type=float, default=0.5)
    p.add_argument("--p-disjoint", type=float, default=1.0)
    p.add_argument("--individuals", type=int, default=100)
    p.add_argument("--split", type=int, default=None, metavar="N_TRAIN", help="write train.csv/test.csv")
    p.add_argument("--concept-counts", type=_int_list, default=[5, 10, 25])
    p.add_argument("--role-counts", type=_int_list, default=[5])
    p.add_argument("--grid-seeds", type=_int_list, default=[0])
    p.add_argument("--node-cap", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train baseline, SL or SPL classifiers")
    p.add_argument("bundle")
    p.add_argument("dataset")
    p.add_argument("--mode", choices=MODES, default="baseline")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--bg", action="store_true", help="subject/object blocks are given as evidence")
    p.add_argument("--seeds", "--seed", dest="seeds", type=_int_list, default=[0])
    p.add_argument("--test", default=None, help="evaluate on this dataset after training")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_bundle_opts(p)
    _add_train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a dataset")
    p.add_argument("bundle")
    p.add_argument("dataset")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_bundle_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="scalar vs batched evaluation throughput")
    p.add_argument("bundle")
    p.add_argument("--rows", type=_int_list, default=list(ROW_COUNTS))
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_bundle_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("recipe", help="run an experiment recipe")
    p.add_argument("name", choices=RECIPES)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--individuals", type=int, default=100)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_train_opts(p)
    p.set_defaults(func=cmd_recipe)
    return parser


def _out_dir(args: argparse.Namespace) -> Path:
    if args.command == "compile":
        return Path(args.out)
    if args.command == "reason":
        if args.out:
            return Path(args.out).parent
        return Path(args.assignments).parent if args.assignments else Path(args.bundle)
    return Path(args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    root = logging.getLogger()
    if args.verbose:
        root.setLevel(logging.DEBUG)
    elif args.quiet:
        root.setLevel(logging.WARNING)
    settings = config.load()
    snapshot = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = RunManifest(args.command, {"settings": settings, "args": snapshot})
    func: Callable[..., int] = args.func
    start = time.perf_counter()
    try:
        code = func(args, settings, manifest)
    except DlCircuitError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_IO
    except ValueError as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_USAGE
    except Exception:
        logger.exception("%s failed with an unexpected error", args.command)
        return EXIT_USAGE
    manifest.seconds = round(time.perf_counter() - start, 6)
    manifest.write(_out_dir(args))
    return code
