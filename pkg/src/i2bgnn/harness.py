"""Method comparison over seeded resplits, and the depth and split-ratio studies built on it."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import baselines as bl
from .features import CallTable, FeatureSchema
from .gnn import TrainConfig, predict, prepare, train
from .graph_store import TransactionGraph
from .metrics import MetricsReport, evaluate
from .sampler import SamplingConfig, extract_dataset
from .splits import SWEEP_RATIOS, Split, make_splits, parse_ratio

log = logging.getLogger(__name__)

METHODS = ("i2bgnn-v", "i2bgnn-t", "fgsd+knn", "netlsd+knn")


@dataclass
class BaselineConfig:
    k: int = 5
    bins: int = 128
    timescales: int = 128


@dataclass
class ExperimentConfig:
    ratio: str = "1:1"
    n_seeds: int = 3
    base_seed: int = 0
    val_fraction: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)


def _check_methods(methods: Sequence[str]):
    if not methods:
        raise ValueError("method list is empty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown method {bad[0]!r}; choose from {', '.join(METHODS)}")


class _MethodRunner:
    """Caches per-dataset work (normalized adjacencies, signatures) across splits."""

    def __init__(self, subgraphs, exp: ExperimentConfig):
        self.subgraphs = subgraphs
        self.labels = np.array([sg.y for sg in subgraphs], dtype=np.int64)
        self.exp = exp
        self._prepared = {}
        self._netlsd = None
        self._fgsd_dist = None

    def prepared(self, variant):
        if variant not in self._prepared:
            t = self.exp.train
            self._prepared[variant] = prepare(self.subgraphs, variant, t.weight_transform, t.row_normalize)
        return self._prepared[variant]

    def run(self, method: str, split: Split) -> MetricsReport:
        y = self.labels
        train_idx = np.concatenate([split.train, split.val])
        if method.startswith("i2bgnn"):
            variant = method[-1]
            cfg = TrainConfig(**{**self.exp.train.to_dict(), "variant": variant, "seed": split.seed})
            prepared = self.prepared(variant)
            result = train(self.subgraphs, cfg, split.train, split.val, prepared=prepared)
            pred = predict(result.params, prepared, split.test)
        elif method == "fgsd+knn":
            pred = self._fgsd(train_idx, split.test)
        else:
            if self._netlsd is None:
                ts = bl.default_timescales(self.exp.baseline.timescales)
                self._netlsd = np.array([bl.netlsd_signature(sg, ts).vector for sg in self.subgraphs])
            model = bl.knn_fit(self._netlsd[train_idx], y[train_idx], self.exp.baseline.k)
            pred = model.predict(self._netlsd[split.test])
        return evaluate(pred, y[split.test])

    def _fgsd(self, train_idx, test_idx):
        if self._fgsd_dist is None:
            self._fgsd_dist = [bl.harmonic_distances(sg) for sg in self.subgraphs]
        bins = self.exp.baseline.bins
        s_max = max((float(d.max()) for d in (self._fgsd_dist[i] for i in train_idx) if len(d)), default=0.0)
        width = 2.0 * s_max / bins if s_max > 0 else 1.0 / bins
        sig = np.zeros((len(self.subgraphs), bins))
        for i, d in enumerate(self._fgsd_dist):
            k = np.clip(np.floor(np.maximum(d, 0.0) / width).astype(np.int64), 0, bins - 1)
            sig[i] = np.bincount(k, minlength=bins)
        model = bl.knn_fit(sig[train_idx], self.labels[train_idx], self.exp.baseline.k)
        return model.predict(sig[test_idx])


@dataclass
class Table:
    columns: list[str]
    rows: list[list]

    def to_csv(self, path=None, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def render(self) -> str:
        cells = [self.columns] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def run_comparison(subgraphs, methods: Sequence[str], exp: ExperimentConfig | None = None,
                   splits: list[Split] | None = None) -> tuple[Table, dict[str, MetricsReport]]:
    """Mean precision / recall / F1 per method over seeded resplits."""
    _check_methods(methods)
    exp = exp or ExperimentConfig()
    labels = [sg.y for sg in subgraphs]
    splits = splits or make_splits(labels, exp.ratio, exp.n_seeds, exp.base_seed, exp.val_fraction)
    runner = _MethodRunner(subgraphs, exp)
    reports = {}
    for method in methods:
        per_seed = [runner.run(method, s) for s in splits]
        reports[method] = MetricsReport.mean_of(per_seed)
        log.info("%s: F1 %.4f", method, reports[method].f1)
    seeds = ";".join(str(s.seed) for s in splits)
    rows = [[m, r.precision, r.recall, r.f1, seeds, ";".join(f"{t[2]:.6f}" for t in r.per_seed)]
            for m, r in reports.items()]
    return Table(["method", "precision", "recall", "f1", "seeds", "f1_per_seed"], rows), reports


def run_depth_study(graph: TransactionGraph, accounts, calls: CallTable | None, schema: FeatureSchema,
                    sampling: SamplingConfig, methods: Sequence[str] = ("i2bgnn-v", "i2bgnn-t"),
                    exp: ExperimentConfig | None = None) -> Table:
    """Same accounts and splits at 1 and 2 hops; rows carry the paired 2-hop minus 1-hop delta."""
    _check_methods(methods)
    exp = exp or ExperimentConfig()
    accounts = list(accounts) if accounts is not None else graph.labeled_accounts()
    labels = [y for _, y in accounts]
    splits = make_splits(labels, exp.ratio, exp.n_seeds, exp.base_seed, exp.val_fraction)
    by_depth = {}
    sizes = {}
    for hops in (1, 2):
        cfg = SamplingConfig(hops, sampling.max_neighbors, sampling.eosio, sampling.symmetrize)
        sgs = extract_dataset(graph, accounts, cfg, calls, schema)
        sizes[hops] = float(np.mean([sg.m for sg in sgs]))
        _, by_depth[hops] = run_comparison(sgs, methods, exp, splits)
    rows = []
    for m in methods:
        f1 = by_depth[1][m].f1, by_depth[2][m].f1
        rows.append([m, f1[0], f1[1], f1[1] - f1[0], sizes[1], sizes[2]])
    return Table(["method", "f1_1hop", "f1_2hop", "delta", "avg_nodes_1hop", "avg_nodes_2hop"], rows)


def run_split_sweep(subgraphs, ratios: Sequence[str] = SWEEP_RATIOS, methods: Sequence[str] = ("i2bgnn-t",),
                    exp: ExperimentConfig | None = None) -> Table:
    """F1 (mean over seeds) for every (ratio, method) cell."""
    _check_methods(methods)
    for r in ratios:
        parse_ratio(r)
    exp = exp or ExperimentConfig()
    rows = []
    for r in ratios:
        sub = ExperimentConfig(r, exp.n_seeds, exp.base_seed, exp.val_fraction, exp.train, exp.baseline)
        _, reports = run_comparison(subgraphs, methods, sub)
        for m in methods:
            rep = reports[m]
            rows.append([r, parse_ratio(r), m, rep.precision, rep.recall, rep.f1])
    return Table(["ratio", "train_fraction", "method", "precision", "recall", "f1"], rows)
