from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from src import config
from src.datagen import ObservationDataset, sample_individuals, sample_kg, synthesize_dataset
from src.errors import SchemaError
from src.infer import evaluate_batch
from src.nesy import (
    Metrics,
    TrainConfig,
    aggregate,
    build_model,
    compute_metrics,
    evaluate_model,
    factorized_predict,
    factorized_predict_bg,
    load_checkpoint,
    model_loss,
    predict,
    save_checkpoint,
    semantic_loss,
    spl_forward,
    spl_predict,
    train,
    train_sl,
    train_spl,
    write_report,
)
from src.nesy.metrics import format_cell
from src.nesy.tape import (
    Tensor,
    bce_with_logits,
    circuit_log_mass,
    cross_entropy,
    log_softmax_groups,
    scatter_columns,
)
from src.nesy.train import most_frequent_accuracy, train_classifier

SMALL = TrainConfig(epochs=3, minibatch=16, learning_rate=0.01, hidden=(8,), seed=0)


@pytest.fixture(scope="module")
def music_ds(music_co):
    rng = np.random.default_rng(21)
    kg = sample_kg(music_co, sample_individuals(music_co, 10, rng), rng)
    return synthesize_dataset(kg, music_co, "diag-normal", 2, rng)


def _numeric_grad(f, t: Tensor, eps: float = 1e-6, limit: int = 12) -> tuple[np.ndarray, np.ndarray]:
    flat = t.value.reshape(-1)
    idx = np.random.default_rng(0).choice(flat.size, size=min(limit, flat.size), replace=False)
    out = np.zeros(len(idx))
    for k, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out[k] = (up - down) / (2 * eps)
    return idx, out


def _check_grads(loss_fn, params):
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, analytic):
        idx, num = _numeric_grad(lambda: float(loss_fn().value), p)
        np.testing.assert_allclose(g.reshape(-1)[idx], num, rtol=1e-4, atol=1e-6)


# ---- tape ----


def test_tape_elementwise_grads():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((4, 3)))
    b = Tensor(rng.standard_normal((3, 5)))
    c = Tensor(rng.standard_normal(5))

    def f():
        h = (a @ b + c).sigmoid() * 2.0 - 0.5
        return (h.log_sigmoid().sum(axis=1) + (-h).relu().sum(axis=1)).mean()

    _check_grads(f, [a, b, c])


def test_tape_structured_grads():
    rng = np.random.default_rng(2)
    z = Tensor(rng.standard_normal((3, 7)))
    starts = np.array([0, 2, 5])
    y = rng.integers(0, 2, size=(3, 2))

    def f():
        part = z.columns([1, 4])
        placed = scatter_columns(np.zeros((3, 7)), [0, 6], part)
        return log_softmax_groups(placed + z, starts).sum() + bce_with_logits(part, y)

    _check_grads(f, [z])


def test_cross_entropy_grad():
    rng = np.random.default_rng(3)
    z = Tensor(rng.standard_normal((6, 4)))
    labels = rng.integers(0, 4, size=6)
    _check_grads(lambda: cross_entropy(z, labels), [z])


def test_log_softmax_groups_normalizes():
    z = Tensor(np.random.default_rng(4).standard_normal((2, 6)))
    out = np.exp(log_softmax_groups(z, np.array([0, 1, 4])).value)
    assert np.allclose(out[:, 0], 1.0)
    assert np.allclose(out[:, 1:4].sum(axis=1), 1.0)
    assert np.allclose(out[:, 4:].sum(axis=1), 1.0)


def test_circuit_log_mass_grad(music_co):
    plan = music_co.label_circuit.plan
    rng = np.random.default_rng(5)
    pos = Tensor(rng.normal(-0.7, 0.3, size=(3, plan.n_vars)))
    neg = Tensor(rng.normal(-0.7, 0.3, size=(3, plan.n_vars)))
    lw = Tensor(rng.normal(0.0, 0.5, size=(3, plan.n_elements)))
    _check_grads(lambda: circuit_log_mass(plan, pos, neg, lw).sum(), [pos, neg, lw])


# ---- semantic loss ----


def test_semantic_loss_values(music_co):
    c = music_co.label_circuit
    models = np.array([[1, 0, 1, 0, 1, 0]], dtype=float)
    assert semantic_loss(c, models) == pytest.approx(0.0, abs=1e-12)
    n_models = int(evaluate_batch(c, np.array(list(itertools.product((0, 1), repeat=6)))).sum())
    assert semantic_loss(c, np.full((1, 6), 0.5)) == pytest.approx(-np.log(n_models / 64))
    clamp = config.DEFAULTS["sl_clamp"]
    assert semantic_loss(c, np.array([[1, 1, 0, 0, 0, 0]], dtype=float)) == pytest.approx(-np.log(clamp))
    with pytest.raises(ValueError):
        semantic_loss(c, np.full((1, 5), 0.5))


@pytest.mark.parametrize("mode,lam,bg", [("baseline", 0.0, False), ("sl", 0.5, False), ("sl", 0.5, True), ("spl", 0.0, False), ("spl", 0.0, True)])
def test_loss_gradients(music_co, music_ds, mode, lam, bg):
    model = build_model(music_co, 6, mode, lam, bg, hidden=(5,), seed=3)
    x, y = music_ds.rows[:8], music_ds.targets[:8]
    _check_grads(lambda: model_loss(model, x, y), model.parameters())


def test_sl_with_zero_weight_is_baseline(music_co, music_ds):
    base = train(music_co, music_ds, "baseline", cfg=SMALL)
    sl = train_sl(music_ds, music_co, 0.0, SMALL)
    assert base.epoch_losses == sl.epoch_losses
    assert np.array_equal(factorized_predict(base.model, music_ds.rows), factorized_predict(sl.model, music_ds.rows))


def test_training_reduces_loss(music_co, music_ds):
    cfg = TrainConfig(epochs=8, minibatch=16, learning_rate=0.01, hidden=(16,), seed=1)
    for result in (train(music_co, music_ds, cfg=cfg), train_sl(music_ds, music_co, 0.1, cfg), train_spl(music_ds, music_co, cfg)):
        assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_training_is_seeded(music_co, music_ds):
    a = train_spl(music_ds, music_co, SMALL)
    b = train_spl(music_ds, music_co, SMALL)
    assert a.epoch_losses == b.epoch_losses


def test_width_mismatch(music_co, music_ds):
    narrow = ObservationDataset(music_ds.rows[:, :5], music_ds.targets[:, :5], music_ds.pairs)
    with pytest.raises(SchemaError):
        train(music_co, narrow, cfg=SMALL)


# ---- SPL ----


ALL_LABELS = np.array(list(itertools.product((0, 1), repeat=6)), dtype=np.uint8)


def test_spl_is_a_distribution_over_models(music_co, music_ds):
    model = build_model(music_co, 6, "spl", hidden=(8,), seed=2)
    x = music_ds.rows[:3]
    ok = evaluate_batch(music_co.label_circuit, ALL_LABELS).astype(bool)
    for row in x:
        p = spl_forward(model, np.tile(row, (64, 1)), ALL_LABELS)
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p[~ok] == 0)
        assert np.all(p[ok] > 0)


def test_spl_bg_conditions_on_evidence(music_co, music_ds):
    model = build_model(music_co, 6, "spl", bg=True, hidden=(8,), seed=2)
    y = np.array([1, 0, 0, 0, 1, 0], dtype=np.uint8)
    match = ALL_LABELS[(ALL_LABELS[:, [0, 1, 4, 5]] == y[[0, 1, 4, 5]]).all(axis=1)]
    p = spl_forward(model, np.tile(music_ds.rows[0], (len(match), 1)), match)
    assert p.sum() == pytest.approx(1.0)


def test_spl_predictions_are_consistent(music_co, music_ds):
    for bg in (False, True):
        model = build_model(music_co, 6, "spl", bg=bg, hidden=(8,), seed=4)
        m = evaluate_model(model, music_ds)
        assert m.consistent == 1.0
    model = build_model(music_co, 6, "spl", hidden=(8,), seed=4)
    pred = spl_predict(model, music_ds.rows)
    probs = [spl_forward(model, np.tile(x, (64, 1)), ALL_LABELS) for x in music_ds.rows[:5]]
    for row, p in zip(pred, probs):
        assert p[int("".join(map(str, row)), 2)] == pytest.approx(p.max())


def test_bg_predictions_keep_evidence(music_co, music_ds):
    model = build_model(music_co, 6, "sl", lam=0.1, bg=True, hidden=(8,), seed=0)
    with pytest.raises(ValueError):
        predict(model, music_ds.rows)
    pred = predict(model, music_ds.rows, music_ds.targets)
    cols = model.evidence_columns
    assert np.array_equal(pred[:, cols], music_ds.targets[:, cols])
    _, _, o = music_co.label_blocks()
    with pytest.raises(ValueError):
        factorized_predict_bg(model, music_ds.rows, music_ds.targets[:, :1], music_ds.targets[:, o])


def test_build_model_errors(music_co):
    with pytest.raises(ValueError):
        build_model(music_co, 6, "svm")
    with pytest.raises(ValueError):
        build_model(music_co, 6, "sl", lam=-1.0)
    with pytest.raises(SchemaError):
        build_model(music_co, 7)


# ---- checkpoints ----


@pytest.mark.parametrize("mode", ["baseline", "spl"])
def test_checkpoint_round_trip(tmp_path, music_co, music_ds, mode):
    model = train(music_co, music_ds, mode, cfg=SMALL).model
    save_checkpoint(model, tmp_path / "m.ckpt")
    again = load_checkpoint(tmp_path / "m.ckpt", music_co)
    assert again.mode == mode
    assert np.array_equal(predict(again, music_ds.rows), predict(model, music_ds.rows))


def test_checkpoint_errors(tmp_path, music_co, music_ds):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"garbage\n")
    with pytest.raises(SchemaError):
        load_checkpoint(path, music_co)
    save_checkpoint(build_model(music_co, 6, hidden=(4,)), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(SchemaError):
        load_checkpoint(path, music_co)
    header = json.loads(raw.split(b"\n", 1)[0])
    header["format"] = "other"
    path.write_bytes(json.dumps(header).encode() + b"\n")
    with pytest.raises(SchemaError):
        load_checkpoint(path, music_co)


# ---- metrics ----


def test_compute_metrics():
    pred = np.array([[1, 0, 1], [0, 0, 1]])
    gold = np.array([[1, 1, 0], [0, 0, 1]])
    m = compute_metrics(pred, gold, np.array([1, 0]))
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(2 / 3)
    assert m.exact_match == 0.5
    assert m.consistent == 0.5
    empty = compute_metrics(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    assert empty == Metrics(0.0, 0.0, 0.0, 0.0, 0.0)


def test_aggregate_and_report(tmp_path):
    runs = [Metrics(1.0, 0.5, 0.6, 0.2, 1.0), Metrics(0.0, 0.5, 0.4, 0.4, 1.0)]
    summary = aggregate(runs)
    assert summary["precision"] == {"mean": 0.5, "std": 0.5}
    assert summary["recall"]["std"] == 0.0
    assert format_cell(summary, "f1") == "0.500 ± 0.100"
    report = write_report(tmp_path / "metrics.json", runs, [0, 1], {"mode": "sl"})
    assert json.loads((tmp_path / "metrics.json").read_text()) == report
    assert report["mode"] == "sl" and len(report["per_seed"]) == 2


def test_evaluate_model_bg_scores_roles(music_co, music_ds):
    model = build_model(music_co, 6, "baseline", bg=True, hidden=(4,), seed=0)
    m = evaluate_model(model, music_ds)
    pred = predict(model, music_ds.rows, music_ds.targets)
    cols = model.role_columns
    assert m == compute_metrics(pred[:, cols], music_ds.targets[:, cols], evaluate_batch(music_co.label_circuit, pred))


# ---- cluster classifier ----


def test_classifier_separates_clusters():
    rng = np.random.default_rng(0)
    centers = np.eye(3) * 4
    labels = np.repeat(np.arange(3), 60)
    x = centers[labels] + rng.standard_normal((180, 3)) * 0.3
    clf = train_classifier(x, labels, 3, hidden=(16,), cfg=TrainConfig(epochs=20, minibatch=32, learning_rate=0.01))
    assert np.mean(clf.predict(x) == labels) > 0.95
    assert most_frequent_accuracy(np.array([0, 1, 1]), np.array([1, 1, 0, 2])) == 0.5
    assert most_frequent_accuracy(np.array([0]), np.array([], dtype=int)) == 0.0


def test_train_config_from_settings():
    cfg = TrainConfig.from_settings(config.DEFAULTS, epochs=2, seed=None)
    assert cfg.epochs == 2
    assert cfg.hidden == tuple(config.DEFAULTS["hidden"])
    assert cfg.seed == 0
