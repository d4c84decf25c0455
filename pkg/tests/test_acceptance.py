"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see only these lines.
"""
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from i2bgnn.baselines import binarized, fgsd_signature, netlsd_signature
from i2bgnn.cli import main as cli_main
from i2bgnn.features import FeatureSchema
from i2bgnn.gnn import TrainConfig, cross_entropy, forward, loss_and_backward, make_batch, normalize
from i2bgnn.graph_store import ingest_edges
from i2bgnn.harness import ExperimentConfig, run_comparison, run_split_sweep
from i2bgnn.metrics import confusion, evaluate
from i2bgnn.sampler import SamplingConfig, extract_dataset, extract_subgraph
from i2bgnn.splits import SWEEP_RATIOS
from i2bgnn.synth import SynthConfig, generate

from .oracles import (
    brute_force_extract,
    finite_difference,
    random_batch,
    random_params,
    random_raw_graph,
    random_subgraph_arrays,
    relative_error,
)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def synthetic_table_data():
    t0 = time.perf_counter()
    d = generate(SynthConfig(seed=7, n_per_class=500, noise=0.1, n_u_target=10))
    schema = FeatureSchema(d.calls.vocabulary)
    sgs = extract_dataset(d.graph, d.labeled, SamplingConfig(hops=2, max_neighbors=10), d.calls, schema)
    return sgs, time.perf_counter() - t0


def test_1_gradient_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, n = 0.0, 24
    for _ in range(n):
        batch = random_batch(rng, int(rng.integers(1, 4)), m_max=6, f=4)
        p = random_params(rng, 4, 5)

        def loss():
            return cross_entropy(forward(batch, p).logits, batch.labels)

        _, g = loss_and_backward(forward(batch, p), batch.labels, p, input_grad=True)
        for name, arr in p.arrays().items():
            worst = max(worst, relative_error(getattr(g, name), finite_difference(loss, arr, 1e-5)).max())
        worst = max(worst, relative_error(g.X, finite_difference(loss, batch.X, 1e-5)).max())
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 10
    report(1, "gradient oracle", ok, f"max rel err {worst:.2e} over {n} instances incl. dX, {dt:.2f} s")
    assert ok


def test_2_normalized_adjacency_spectrum(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    asym = lo = 0.0
    lam_min, lam_max = np.inf, -np.inf
    for i in range(100):
        m = int(rng.integers(1, 65))
        dens = rng.uniform(0.0, 0.6)
        W = np.triu(rng.lognormal(1.0, 2.0, (m, m)) * (rng.random((m, m)) < dens), 1)
        A_hat = normalize(sp.csr_matrix(W + W.T), ("log1p", "raw", "binary")[i % 3]).A_hat
        asym = max(asym, abs(A_hat - A_hat.T).max() if A_hat.nnz else 0.0)
        lo = min(lo, A_hat.data.min())
        lam = np.linalg.eigvalsh(A_hat.toarray())
        lam_min, lam_max = min(lam_min, lam.min()), max(lam_max, lam.max())
    dt = time.perf_counter() - t0
    ok = asym <= 1e-12 and lo >= 0 and lam_min >= -1 - 1e-9 and lam_max <= 1 + 1e-9 and dt < 30
    report(2, "normalized adjacency spectrum", ok,
           f"asym {asym:.1e}, min entry {lo:.2e}, eig [{lam_min:.6f}, {lam_max:.6f}], {dt:.2f} s")
    assert ok


def test_3_permutation_invariance(report):
    rng = np.random.default_rng(5)
    dz = dsig = 0.0
    for _ in range(50):
        A, X = random_subgraph_arrays(rng, m_max=24, f=4, density=0.3)
        perm = rng.permutation(len(A))
        Ap, Xp = A[np.ix_(perm, perm)], X[perm]
        p = random_params(rng, 4, 5)
        z = forward(make_batch([normalize(sp.csr_matrix(A))], [X]), p).Z
        zp = forward(make_batch([normalize(sp.csr_matrix(Ap))], [Xp]), p).Z
        dz = max(dz, np.abs(z - zp).max())
        for sig in (lambda a: fgsd_signature(a, 128, 0.05), lambda a: netlsd_signature(a)):
            dsig = max(dsig, np.abs(sig(A).vector - sig(Ap).vector).max())
    ok = dz < 1e-12 and dsig < 1e-9
    report(3, "permutation invariance", ok, f"max |dZ| {dz:.1e}, max signature change {dsig:.1e} on 50 graphs")
    assert ok


def test_4_extraction_oracle(report):
    rng = np.random.default_rng(99)
    mismatches = bound_violations = 0
    for _ in range(200):
        rows = random_raw_graph(rng, n_max=50)
        g = ingest_edges(rows)
        center = g.names[int(rng.integers(g.n_accounts))]
        cfg = SamplingConfig(hops=int(rng.integers(1, 3)), max_neighbors=int(rng.integers(1, 6)))
        sg = extract_subgraph(g, center, cfg)
        names, Av, At = brute_force_extract(rows, center, cfg.max_neighbors, cfg.hops)
        if sg.names != names or not np.array_equal(sg.A_v.toarray(), Av) or not np.array_equal(sg.A_t.toarray(), At):
            mismatches += 1
        n = cfg.max_neighbors
        if sg.m > (1 + n if cfg.hops == 1 else 1 + n + n * n):
            bound_violations += 1
    ok = mismatches == 0 and bound_violations == 0
    report(4, "extraction oracle", ok, f"{mismatches} mismatches, {bound_violations} size-bound violations of 200")
    assert ok


def test_5_batching_equivalence(report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        B = int(rng.integers(2, 8))
        adjs, feats = [], []
        for _ in range(B):
            A, X = random_subgraph_arrays(rng, m_max=12, f=4)
            adjs.append(normalize(sp.csr_matrix(A)))
            feats.append(X)
        p = random_params(rng, 4, 5)
        Z = forward(make_batch(adjs, feats), p).Z
        single = np.vstack([forward(make_batch([a], [x]), p).Z for a, x in zip(adjs, feats)])
        worst = max(worst, np.abs(Z - single).max())
    ok = worst <= 1e-10
    report(5, "batching equivalence", ok, f"max |dZ| {worst:.1e} on 20 batches")
    assert ok


@pytest.mark.slow
def test_6_method_comparison(report, synthetic_table_data):
    sgs, prep_time = synthetic_table_data
    t0 = time.perf_counter()
    exp = ExperimentConfig(ratio="1:1", n_seeds=3, base_seed=7,
                           train=TrainConfig(hidden=128, epochs=50, batch_size=30, dropout=0.3))
    table, reps = run_comparison(sgs, ["i2bgnn-t", "fgsd+knn"], exp)
    dt = prep_time + time.perf_counter() - t0
    f_gnn, f_fgsd = reps["i2bgnn-t"].f1, reps["fgsd+knn"].f1
    ok = f_gnn >= 0.95 and f_gnn >= f_fgsd and dt < 600
    per = ", ".join(f"{t[2]:.4f}" for t in reps["i2bgnn-t"].per_seed)
    report(6, "synthetic method comparison", ok,
           f"i2bgnn-t F1 {f_gnn:.4f} (seeds {per}) vs fgsd+knn {f_fgsd:.4f}, {dt:.0f} s")
    assert ok


@pytest.mark.slow
def test_7_split_ratio_sweep(report, synthetic_table_data):
    sgs, _ = synthetic_table_data
    exp = ExperimentConfig(n_seeds=3, base_seed=7, train=TrainConfig())
    table = run_split_sweep(sgs, SWEEP_RATIOS, ["i2bgnn-t"], exp)
    f1 = dict(zip(table.column("ratio"), table.column("f1")))
    ok = f1["3:1"] >= f1["1:9"]
    curve = ", ".join(f"{r} {f1[r]:.4f}" for r in SWEEP_RATIOS)
    report(7, "split-ratio sweep", ok, curve)
    assert ok


def test_8_metrics(report):
    checked = bad = 0
    for n in range(1, 7):
        for pred, y in product(product((0, 1), repeat=n), repeat=2):
            tp = sum(a & b for a, b in zip(pred, y))
            fp = sum(a & (1 - b) for a, b in zip(pred, y))
            fn = sum((1 - a) & b for a, b in zip(pred, y))
            p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
            r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
            f = 2 * p * r / (p + r) if p + r else Fraction(0)
            rep = evaluate(pred, y)
            checked += 1
            if confusion(pred, y)[:3] != (tp, fp, fn) or (rep.precision, rep.recall, rep.f1) != (
                    float(p), float(r), float(f)):
                bad += 1
    ok = bad == 0
    report(8, "metrics", ok, f"{checked} enumerated prediction/label pairs, {bad} inexact")
    assert ok


def _pipeline(workdir):
    workdir.mkdir()
    cfg = workdir / "run.cfg"
    cfg.write_text("seed = 7\nper_class = 200\nstrict_determinism = true\n")
    for cmd in ("synth", "extract", "train", "eval"):
        assert cli_main([cmd, "--workdir", str(workdir), "--config", str(cfg)]) == 0
    return (workdir / "metrics.csv").read_bytes()


@pytest.mark.slow
def test_9_determinism(report, tmp_path, capsys):
    a = _pipeline(tmp_path / "run1")
    b = _pipeline(tmp_path / "run2")
    capsys.readouterr()
    ok = a == b
    report(9, "pipeline determinism", ok, f"metrics.csv byte-identical across two runs: {ok} ({len(a)} bytes)")
    assert ok


def _random_graphs(n):
    rng = np.random.default_rng(31)
    for _ in range(n):
        m = int(rng.integers(1, 40))
        W = np.triu(rng.random((m, m)) < rng.uniform(0.0, 0.2), 1).astype(float)
        yield W + W.T


@pytest.mark.xfail(strict=True, reason="absolute 1e-6 at t=1e-6 is below the first-order gap t*tr(L)")
def test_10_netlsd_limits(report):
    worst_small = worst_large = 0.0
    for A in _random_graphs(50):
        m = len(A)
        c = connected_components(sp.csr_matrix(binarized(A)), directed=False)[0]
        h = netlsd_signature(A, [1e-6, 1e6]).vector
        worst_small = max(worst_small, abs(h[0] - m))
        worst_large = max(worst_large, abs(h[1] - c))
    ok = worst_small <= 1e-6 and worst_large <= 1e-6
    report(10, "heat-trace limits", ok,
           f"max |h(1e-6) - m| {worst_small:.2e} (tol 1e-6), max |h(1e6) - components| {worst_large:.2e}")
    assert ok


def test_10b_netlsd_limits_first_order(report):
    """What is attainable: the large-t limit exactly, and the small-t gap equal to t*tr(L) to O(t^2)."""
    first = worst_large = 0.0
    for A in _random_graphs(50):
        m = len(A)
        B = binarized(A)
        c = connected_components(sp.csr_matrix(B), directed=False)[0]
        trace_L = float((B.sum(axis=1) > 0).sum())
        h = netlsd_signature(A, [1e-6, 1e6]).vector
        first = max(first, abs((m - h[0]) - 1e-6 * trace_L))
        worst_large = max(worst_large, abs(h[1] - c))
    ok = first <= 1e-9 and worst_large <= 1e-6
    report(10, "heat-trace limits, first-order form", ok,
           f"max |(m - h(1e-6)) - 1e-6 tr L| {first:.1e}, max |h(1e6) - components| {worst_large:.2e}")
    assert ok
