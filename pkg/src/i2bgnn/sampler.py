"""Top-volume k-hop ego-subgraph extraction and the subgraph bundle file."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .features import CallTable, FeatureSchema, SchemaMismatch, build_features, eosio_stoplist
from .graph_store import TransactionGraph

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "i2bgnn-bundle"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class SamplingConfig:
    hops: int = 2
    max_neighbors: int = 10
    eosio: bool = False
    symmetrize: bool = True

    def __post_init__(self):
        if self.hops not in (1, 2):
            raise ValueError(f"hops must be 1 or 2, got {self.hops}")
        if self.max_neighbors < 1:
            raise ValueError("max_neighbors must be >= 1")

    @property
    def stoplist(self) -> Callable[[str], bool] | None:
        return eosio_stoplist if self.eosio else None

    def size_bound(self) -> int:
        n = self.max_neighbors
        return 1 + n if self.hops == 1 else 1 + n + n * n

    def to_dict(self) -> dict:
        return {"hops": self.hops, "max_neighbors": self.max_neighbors,
                "eosio": self.eosio, "symmetrize": self.symmetrize}


@dataclass
class Subgraph:
    """One labeled ego-network. Local index 0 is the center account."""

    nodes: np.ndarray
    names: list[str]
    A_v: sp.csr_matrix
    A_t: sp.csr_matrix
    X: sp.csr_matrix | None = None
    y: int | None = None
    graph_id: int = 0
    isolated: bool = False
    center: int = 0

    @property
    def m(self) -> int:
        return len(self.names)

    def adjacency(self, variant: str) -> sp.csr_matrix:
        if variant == "v":
            return self.A_v
        if variant == "t":
            return self.A_t
        raise ValueError(f"unknown variant {variant!r}; expected 'v' or 't'")


def _neighbor_volumes(graph: TransactionGraph, u: int) -> dict[int, float]:
    tot: dict[int, float] = {}
    for idx, vol, _ in (graph.out_edges(u), graph.in_edges(u)):
        for v, w in zip(idx.tolist(), vol.tolist()):
            tot[v] = tot.get(v, 0.0) + w
    return tot


def rank_neighbors(graph: TransactionGraph, account: int | str, n_u: int) -> list[int]:
    """Neighbors of ``account`` by volume in both directions, top ``n_u`` kept.

    Ties go to the smaller handle.
    """
    u = graph.handle(account)
    tot = _neighbor_volumes(graph, u)
    ranked = sorted(tot, key=lambda v: (-tot[v], v))
    return ranked[:n_u]


def extract_subgraph(graph: TransactionGraph, account: int | str, config: SamplingConfig) -> Subgraph:
    center = graph.handle(account)
    stop = config.stoplist
    order = [center]
    seen = {center}
    first = rank_neighbors(graph, center, config.max_neighbors)
    for v in first:
        if v not in seen:
            seen.add(v)
            order.append(v)
    if config.hops == 2:
        for v in first:
            if stop is not None and stop(graph.names[v]):
                continue
            for w in rank_neighbors(graph, v, config.max_neighbors):
                if w not in seen:
                    seen.add(w)
                    order.append(w)

    nodes = np.asarray(order, dtype=np.int64)
    local = {h: i for i, h in enumerate(order)}
    rows, cols, vols, freqs = [], [], [], []
    for i, h in enumerate(order):
        idx, vol, freq = graph.out_edges(h)
        for v, w, f in zip(idx.tolist(), vol.tolist(), freq.tolist()):
            j = local.get(v)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vols.append(w)
                freqs.append(float(f))
    m = len(order)
    A_v = sp.csr_matrix((np.asarray(vols, dtype=np.float64), (rows, cols)), shape=(m, m))
    A_t = sp.csr_matrix((np.asarray(freqs, dtype=np.float64), (rows, cols)), shape=(m, m))
    if config.symmetrize:
        A_v = (A_v + A_v.T).tocsr()
        A_t = (A_t + A_t.T).tocsr()
    for A in (A_v, A_t):
        A.sort_indices()
    isolated = m == 1
    if isolated:
        log.info("account %s has no neighbors", graph.names[center])
    return Subgraph(nodes, [graph.names[h] for h in order], A_v, A_t, isolated=isolated)


def extract_dataset(
    graph: TransactionGraph,
    accounts: Sequence[tuple[str, int]] | None,
    config: SamplingConfig,
    calls: CallTable | None = None,
    schema: FeatureSchema | None = None,
    threads: int = 1,
) -> list[Subgraph]:
    """One featured, labeled subgraph per ``(account, label)`` in input order.

    ``accounts`` defaults to every labeled account in the graph.
    """
    if accounts is None:
        accounts = graph.labeled_accounts()
    accounts = list(accounts)

    def one(item):
        gid, (name, y) = item
        if y is None:
            raise ValueError(f"account {name!r} has no label")
        sg = extract_subgraph(graph, name, config)
        sg.y = int(y)
        sg.graph_id = gid
        if schema is not None:
            sg.X = build_features(sg, calls, schema)
        return sg

    items = list(enumerate(accounts))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, items))
    return [one(it) for it in items]


# ---------------------------------------------------------------- bundle I/O


@dataclass
class Bundle:
    config: SamplingConfig
    schema: FeatureSchema
    subgraphs: list[Subgraph]
    run_config: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        return np.array([sg.y for sg in self.subgraphs], dtype=np.int64)


def _edge_list(sg: Subgraph, symmetric: bool) -> list[list]:
    # A_t carries every edge (frequency >= 1); A_v may hold zero volumes
    pattern = sg.A_t.tocoo()
    keep = pattern.data != 0
    if symmetric:
        keep &= pattern.col >= pattern.row
    r, c = pattern.row[keep], pattern.col[keep]
    order = np.lexsort((c, r))
    r, c = r[order], c[order]
    vol = np.asarray(sg.A_v[r, c]).ravel()
    freq = np.asarray(sg.A_t[r, c]).ravel()
    return [[int(i), int(j), float(v), float(f)] for i, j, v, f in zip(r, c, vol, freq)]


def _feature_rows(X: sp.csr_matrix) -> list[str]:
    rows = []
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        rows.append(" ".join(f"{c}:{v!r}" for c, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist())))
    return rows


def write_bundle(path, bundle: Bundle) -> None:
    header = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "sampling": bundle.config.to_dict(),
        "schema": bundle.schema.to_dict(),
        "schema_hash": bundle.schema.digest(),
        # both adjacencies travel with every record; training picks one
        "variants": ["v", "t"],
        "n_graphs": len(bundle.subgraphs),
        "run_config": bundle.run_config,
    }
    sym = bundle.config.symmetrize
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for sg in bundle.subgraphs:
            rec = {
                "id": sg.graph_id,
                "center": sg.names[sg.center],
                "nodes": sg.names,
                "edges": _edge_list(sg, sym),
                "x": _feature_rows(sg.X) if sg.X is not None else None,
                "label": sg.y,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_bundle(path, expect_schema_hash: str | None = None) -> Bundle:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"{path}: not a subgraph bundle")
        if header.get("version") != BUNDLE_VERSION:
            raise ValueError(f"{path}: unsupported bundle version {header.get('version')}")
        config = SamplingConfig(**header["sampling"])
        schema = FeatureSchema.from_dict(header["schema"])
        if header.get("schema_hash") != schema.digest():
            raise SchemaMismatch(f"{path}: schema hash does not match header schema")
        if expect_schema_hash is not None and expect_schema_hash != schema.digest():
            raise SchemaMismatch(
                f"feature schema hash mismatch: expected {expect_schema_hash}, bundle has {schema.digest()}"
            )
        subgraphs = [_parse_record(json.loads(line), config, schema) for line in fh if line.strip()]
    return Bundle(config, schema, subgraphs, header.get("run_config", {}))


def _parse_record(rec: dict, config: SamplingConfig, schema: FeatureSchema) -> Subgraph:
    names = rec["nodes"]
    m = len(names)
    edges = rec["edges"]
    rows = [e[0] for e in edges]
    cols = [e[1] for e in edges]
    if config.symmetrize:
        off = [k for k, e in enumerate(edges) if e[0] != e[1]]
        rows = rows + [edges[k][1] for k in off]
        cols = cols + [edges[k][0] for k in off]
        vols = [e[2] for e in edges] + [edges[k][2] for k in off]
        freqs = [e[3] for e in edges] + [edges[k][3] for k in off]
    else:
        vols = [e[2] for e in edges]
        freqs = [e[3] for e in edges]
    A_v = sp.csr_matrix((np.asarray(vols, dtype=np.float64), (rows, cols)), shape=(m, m))
    A_t = sp.csr_matrix((np.asarray(freqs, dtype=np.float64), (rows, cols)), shape=(m, m))
    for A in (A_v, A_t):
        A.sort_indices()
    X = None
    if rec.get("x") is not None:
        if len(rec["x"]) != m:
            raise SchemaMismatch(f"graph {rec['id']}: {len(rec['x'])} feature rows for {m} nodes")
        r, c, v = [], [], []
        for i, row in enumerate(rec["x"]):
            for tok in row.split():
                ci, _, val = tok.partition(":")
                r.append(i)
                c.append(int(ci))
                v.append(float(val))
        if c and max(c) >= schema.dim:
            raise SchemaMismatch(f"graph {rec['id']}: feature index beyond schema dimension {schema.dim}")
        X = sp.csr_matrix((np.asarray(v, dtype=np.float64), (r, c)), shape=(m, schema.dim))
        X.sort_indices()
    return Subgraph(
        nodes=np.full(m, -1, dtype=np.int64),
        names=list(names),
        A_v=A_v,
        A_t=A_t,
        X=X,
        y=rec["label"],
        graph_id=rec["id"],
        isolated=m == 1,
        center=names.index(rec["center"]),
    )


def with_features(sg: Subgraph, calls: CallTable | None, schema: FeatureSchema) -> Subgraph:
    return replace(sg, X=build_features(sg, calls, schema))
