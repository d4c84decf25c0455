"""Seeded synthetic transaction graphs with two planted account behaviours.

Class 1 ("bot-like") accounts transact with many counterparties, many of
them fresh single-use accounts (star bursts) calling the same contracts.
Their edges carry small similar volumes at high frequency, and their calls
concentrate on a few contracts. Class 0 ("normal-like") accounts trade with
fewer partners from a shared background population, with heavy-tailed
volumes and a broad contract-call mix.

``noise`` moves every class parameter linearly toward the two-class average;
at ``noise=1`` both classes are drawn from the same distribution.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .features import CallTable
from .graph_store import (
    TransactionGraph,
    ingest_calls,
    ingest_edges,
    write_calls_csv,
    write_edges_csv,
    write_labels_csv,
)

BOT = {
    "degree": 1.2,  # mean degree as a multiple of n_u_target
    "leaf_prob": 0.6,
    "out_prob": 0.8,
    "log_volume_mu": 0.0,
    "log_volume_sigma": 0.3,
    "extra_tx": 8.0,
    "calls": 40.0,
    "focus": 0.9,  # share of calls that go to the focused contract block
    "leaf_calls": 0.8,  # chance a fresh counterparty calls contracts with the same mix
}
NORMAL = {
    "degree": 0.5,
    "leaf_prob": 0.1,
    "out_prob": 0.5,
    "log_volume_mu": 2.0,
    "log_volume_sigma": 1.5,
    "extra_tx": 0.5,
    "calls": 15.0,
    "focus": 0.125,
    "leaf_calls": 0.2,
}
FOCUS_BLOCK = 4
# gamma shape of the Poisson rate behind each degree; smaller is more overdispersed
DEGREE_SHAPE = 4.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_per_class: int = 500
    noise: float = 0.1
    n_u_target: int = 10
    vocab_size: int = 32
    background_factor: int = 4

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.vocab_size < FOCUS_BLOCK:
            raise ValueError(f"vocab_size must be >= {FOCUS_BLOCK}")

    def profile(self, label: int) -> dict[str, float]:
        own = BOT if label == 1 else NORMAL
        return {k: (1 - self.noise) * own[k] + self.noise * 0.5 * (BOT[k] + NORMAL[k]) for k in own}


@dataclass
class SynthData:
    edge_rows: list[tuple[str, str, float, int]]
    label_rows: list[tuple[str, int]]
    call_rows: list[tuple[str, str, int]]
    graph: TransactionGraph
    calls: CallTable
    config: SynthConfig
    degrees: dict[str, int] = field(default_factory=dict)

    @property
    def labeled(self) -> list[tuple[str, int]]:
        return list(self.label_rows)

    def write(self, directory) -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {k: os.path.join(directory, f"{k}.csv") for k in ("edges", "labels", "calls")}
        write_edges_csv(paths["edges"], self.edge_rows)
        write_labels_csv(paths["labels"], self.label_rows)
        write_calls_csv(paths["calls"], self.call_rows)
        return paths


def _contract_probs(vocab: int, focus: float) -> np.ndarray:
    p = np.full(vocab, (1.0 - focus) / (vocab - FOCUS_BLOCK))
    p[:FOCUS_BLOCK] = focus / FOCUS_BLOCK
    return p / p.sum()


def generate(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    n_lab = 2 * config.n_per_class
    labels = np.array([0, 1] * config.n_per_class)[rng.permutation(n_lab)]
    names = [f"acct{i:05d}" for i in range(n_lab)]
    contracts = [f"contract{j:03d}" for j in range(config.vocab_size)]
    broad = np.full(config.vocab_size, 1.0 / config.vocab_size)

    n_bg = config.background_factor * n_lab
    bg = [f"bg{i:06d}" for i in range(n_bg)]
    edges: dict[tuple[str, str], list] = {}
    calls: list[tuple[str, str, int]] = []

    def add_edge(src, dst, volume, count):
        cell = edges.get((src, dst))
        if cell is None:
            edges[(src, dst)] = [volume, count]
        else:
            cell[0] += volume
            cell[1] += count

    def add_calls(name, total, probs):
        counts = rng.multinomial(total, probs)
        for j in np.flatnonzero(counts):
            calls.append((name, contracts[j], int(counts[j])))

    # background population: sparse random trading among itself, broad calls
    for i, name in enumerate(bg):
        for j in rng.choice(n_bg, size=1 + rng.poisson(2), replace=False):
            if j != i:
                add_edge(name, bg[j], float(rng.lognormal(1.0, 1.0)), 1 + int(rng.poisson(1.0)))
        if rng.random() < 0.7:
            add_calls(name, 1 + int(rng.poisson(8)), broad)

    n_leaf = 0
    degrees = {}
    for name, y in zip(names, labels):
        p = config.profile(int(y))
        mix = _contract_probs(config.vocab_size, p["focus"])
        mean = p["degree"] * config.n_u_target
        deg = 1 + int(rng.poisson(rng.gamma(DEGREE_SHAPE, max(mean - 1.0, 1e-9) / DEGREE_SHAPE)))
        degrees[name] = deg
        is_leaf = rng.random(deg) < p["leaf_prob"]
        partners = rng.choice(n_bg, size=int((~is_leaf).sum()), replace=False)
        nbrs = []
        for leaf in is_leaf:
            if leaf:
                nbrs.append(f"leaf{n_leaf:06d}")
                n_leaf += 1
        nbrs.extend(bg[j] for j in partners)
        for nb in nbrs:
            vol = float(rng.lognormal(p["log_volume_mu"], p["log_volume_sigma"]))
            count = 1 + int(rng.poisson(p["extra_tx"]))
            if rng.random() < p["out_prob"]:
                add_edge(name, nb, vol, count)
            else:
                add_edge(nb, name, vol, count)
            if nb.startswith("leaf") and rng.random() < p["leaf_calls"]:
                add_calls(nb, 1 + int(rng.poisson(4)), mix)
        add_calls(name, 1 + int(rng.poisson(p["calls"])), mix)

    edge_rows = [(s, d, v, c) for (s, d), (v, c) in edges.items()]
    label_rows = [(n, int(y)) for n, y in zip(names, labels)]
    graph = ingest_edges(edge_rows)
    graph, _ = graph.with_labels(dict(label_rows))
    table = ingest_calls(calls, config.vocab_size)
    return SynthData(edge_rows, label_rows, calls, graph, table, config, degrees)
