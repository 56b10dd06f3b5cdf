"""Acceptance gate: one PASS/FAIL line per criterion in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""
import json
import sys
import time

import numpy as np
import pytest

from graphfraud.cli import run as cli_run
from graphfraud.graph import HeteroGraph, normalize_adjacency
from graphfraud.metrics import ConfusionMatrix, auc, compute_metrics, round_half_up, state_counts
from graphfraud.model import GradCheckConfig, ModelConfig, forward, grad_check, init_params
from graphfraud.synth import GenConfig, generate
from graphfraud.trainer import (
    SplitSpec,
    TrainConfig,
    confusion_for,
    evaluate,
    fit_and_prepare,
    fraud_margin,
    stratified_split,
    train,
)

from conftest import ACCEPTANCE_RESULTS
from oracles import dense_adjacency, dense_forward


def record(name, ok, detail):
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def test_1_reference_metric_oracle():
    t0 = time.perf_counter()
    rep = compute_metrics(ConfusionMatrix(tp=1639, fp=4, fn=31726, tn=1239155))
    got = {
        "fraud": [round_half_up(v) for v in (rep.by_label(1).precision, rep.by_label(1).recall, rep.by_label(1).f1)],
        "legit": [round_half_up(v) for v in (rep.by_label(0).precision, rep.by_label(0).recall, rep.by_label(0).f1)],
        "accuracy": round_half_up(rep.accuracy),
        "macro": [round_half_up(v) for v in (rep.macro.precision, rep.macro.recall, rep.macro.f1)],
        "weighted": [round_half_up(v) for v in (rep.weighted.precision, rep.weighted.recall, rep.weighted.f1)],
    }
    elapsed = time.perf_counter() - t0
    want = {
        "fraud": ["1.00", "0.05", "0.09"],
        "legit": ["0.98", "1.00", "0.99"],
        "accuracy": "0.98",
        "macro": ["0.99", "0.52", "0.54"],
        "weighted": ["0.98", "0.98", "0.96"],
    }
    record("1 reference metrics", got == want and elapsed < 1.0, f"{got} in {elapsed:.3f}s")


def test_2_gradient_correctness():
    t0 = time.perf_counter()
    cfg = GradCheckConfig()
    assert cfg.n_consumers + cfg.n_merchants == 10 and cfg.n_edges == 15 and cfg.h1 == cfg.h2 == 8
    errors = [grad_check(cfg, seed).max_rel_error for seed in range(20)]
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    record("2 gradient check", worst < 1e-4 and elapsed < 30.0,
           f"20 seeds, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_3_sparse_dense_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(100):
        n_nodes = int(rng.integers(2, 9))
        nc = int(rng.integers(1, n_nodes))
        nm = n_nodes - nc
        ne = int(rng.integers(1, 13))
        src = rng.integers(0, nc, ne)
        dst = nc + rng.integers(0, nm, ne)
        g = HeteroGraph.from_edges(nc, nm, src, dst)
        p = init_params(ModelConfig(4, 3, 6, 5, 0), seed=k)
        p = p.map(lambda a: a + rng.normal(scale=0.2, size=a.shape))
        X, Xe = rng.normal(size=(n_nodes, 4)), rng.normal(size=(ne, 3))
        for mode in ("symmetric", "random_walk"):
            ref = dense_forward(dense_adjacency(n_nodes, src, dst, mode), X, Xe, src, dst, dict(p.items()))
            got = forward(g, normalize_adjacency(g, mode), X, Xe, p)
            worst = max(worst, float(np.abs(got - ref).max()))
    record("3 sparse/dense forward", worst <= 1e-12, f"100 graphs x 2 norms, max abs diff {worst:.1e}")


@pytest.mark.slow
def test_4_weighted_loss_effect():
    t0 = time.perf_counter()
    ds = generate(GenConfig(n_txns=50_000, fraud_rate=0.01, signal_strength=0.7, seed=11))
    tr, va, te = stratified_split(ds, SplitSpec(seed=11))
    _, prepared = fit_and_prepare(ds, tr)
    recalls = {}
    for weights in ("balanced", "uniform"):
        res = train(prepared, tr, va, TrainConfig(class_weights=weights))
        recalls[weights] = evaluate(prepared, res.params, te).by_label(1).recall
    elapsed = time.perf_counter() - t0
    ok = recalls["balanced"] >= recalls["uniform"] and recalls["balanced"] >= 0.3 and elapsed < 60.0
    record("4 weighted loss", ok,
           f"fraud recall balanced {recalls['balanced']:.3f} vs uniform {recalls['uniform']:.3f}, {elapsed:.1f}s")


def test_5_generator_fidelity():
    ds = generate(GenConfig(n_txns=100_000, fraud_rate=0.0021, seed=0))
    fraud = np.array([t.amount for t in ds if t.label == 1])
    below = float(np.mean(fraud < 25_000))
    above = float(np.mean(fraud > 100_000))
    rel = abs(fraud.size / len(ds) - 0.0021) / 0.0021
    counts = [c for _, c in state_counts(ds)]
    skew = counts[0] / float(np.median(counts))
    ok = below >= 0.6 and above <= 0.05 and rel <= 0.1 and skew >= 3.0
    record("5 generator fidelity", ok,
           f"<$250 {below:.3f}, >$1000 {above:.4f}, rate err {rel:.3f}, top/median state {skew:.1f}x")


def _pipeline(d):
    data, model, report = d / "d.csv", d / "m.npz", d / "r.json"
    assert cli_run(["synth", "--n-txns", "5000", "--n-consumers", "300", "--n-merchants", "15",
                    "--fraud-rate", "0.02", "--seed", "5", "--out", str(data)]) == 0
    assert cli_run(["train", "--data", str(data), "--out", str(model), "--seed", "5", "--epochs", "50"]) == 0
    assert cli_run(["eval", "--data", str(data), "--model", str(model), "--seed", "5", "--out", str(report)]) == 0
    return data.read_bytes(), report.read_bytes()


def test_6_determinism(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    data_a, rep_a = _pipeline(tmp_path / "a")
    data_b, rep_b = _pipeline(tmp_path / "b")
    json.loads(rep_a)
    record("6 determinism", data_a == data_b and rep_a == rep_b,
           f"dataset {len(data_a)} bytes identical={data_a == data_b}, report identical={rep_a == rep_b}")


@pytest.mark.slow
def test_7_null_signal_control():
    ds = generate(GenConfig(n_txns=50_000, fraud_rate=0.05, signal_strength=0.0, seed=3))
    tr, va, te = stratified_split(ds, SplitSpec(seed=3))
    _, prepared = fit_and_prepare(ds, tr)
    res = train(prepared, tr, va, TrainConfig())
    score = auc(fraud_margin(prepared, res.params, te), prepared.labels[te])
    record("7 null-signal AUC", 0.45 <= score <= 0.55, f"test AUC {score:.4f} at signal 0")


def test_8_merge_associativity():
    ds = generate(GenConfig(n_txns=4000, n_consumers=300, n_merchants=12, fraud_rate=0.05, seed=8))
    tr, va, te = stratified_split(ds, SplitSpec(seed=8))
    _, prepared = fit_and_prepare(ds, tr)
    params = train(prepared, tr, va, TrainConfig(epochs=20, h1=16, h2=8)).params
    whole = confusion_for(prepared, params, te)
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(50):
        k = int(rng.integers(2, 11))
        shard = rng.integers(0, k, te.size)
        merged = ConfusionMatrix()
        for s in range(k):
            part = te[shard == s]
            if part.size:
                merged = merged + confusion_for(prepared, params, part)
        mismatches += merged != whole
    record("8 confusion merge", mismatches == 0, f"50 random partitions, {mismatches} mismatches, whole={whole}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
