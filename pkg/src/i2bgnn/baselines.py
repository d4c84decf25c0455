"""Spectral graph signatures (harmonic-distance histogram, heat trace) and a kNN classifier."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

PINV_CUTOFF = 1e-10
# harmonic distances are snapped to this many decimals before binning so
# round-off from the eigensolver cannot move a value across a bin edge
DISTANCE_DECIMALS = 8


@dataclass
class GraphSignature:
    vector: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.vector)


def binarized(sg_or_adj) -> np.ndarray:
    """Dense symmetric 0/1 adjacency with an empty diagonal."""
    A = sg_or_adj
    if hasattr(A, "A_t"):
        # frequency >= 1 on every edge, so A_t holds the full pattern
        A = A.A_t
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    B = ((A != 0) | (A.T != 0)).astype(np.float64)
    np.fill_diagonal(B, 0.0)
    return B


def normalized_laplacian(adj) -> np.ndarray:
    """I - D^-1/2 A D^-1/2 on the binarized graph; degree-0 nodes get an all-zero row."""
    A = binarized(adj)
    d = A.sum(axis=1)
    s = np.zeros_like(d)
    nz = d > 0
    s[nz] = 1.0 / np.sqrt(d[nz])
    L = np.diag(nz.astype(np.float64)) - (s[:, None] * A) * s[None, :]
    return 0.5 * (L + L.T)


def harmonic_distances(adj) -> np.ndarray:
    """Pairwise S(x, y) = L+(x,x) + L+(y,y) - 2 L+(x,y) for x < y, row-major order."""
    L = normalized_laplacian(adj)
    m = L.shape[0]
    if m < 2:
        return np.zeros(0)
    lam, V = np.linalg.eigh(L)
    inv = np.zeros_like(lam)
    keep = lam > PINV_CUTOFF
    inv[keep] = 1.0 / lam[keep]
    Lp = (V * inv) @ V.T
    diag = np.diag(Lp)
    S = diag[:, None] + diag[None, :] - 2.0 * Lp
    iu = np.triu_indices(m, 1)
    return np.round(S[iu], DISTANCE_DECIMALS)


def fgsd_signature(adj, bins: int = 128, bin_width: float = 1.0) -> GraphSignature:
    """Histogram of harmonic distances: ``bins`` bins of ``bin_width`` from 0, last bin open."""
    m = binarized(adj).shape[0]
    if m == 0:
        raise ValueError("empty graph")
    if bins < 1 or bin_width <= 0:
        raise ValueError("need bins >= 1 and bin_width > 0")
    S = harmonic_distances(adj)
    k = np.floor(np.maximum(S, 0.0) / bin_width).astype(np.int64)
    np.clip(k, 0, bins - 1, out=k)
    hist = np.bincount(k, minlength=bins).astype(np.float64)
    return GraphSignature(hist, "fgsd", {"bins": bins, "bin_width": bin_width})


def calibrate_bin_width(adjs: Sequence, bins: int = 128) -> float:
    """Bin width whose histogram spans twice the largest distance seen in ``adjs``."""
    s_max = 0.0
    for a in adjs:
        S = harmonic_distances(a)
        if len(S):
            s_max = max(s_max, float(S.max()))
    return 2.0 * s_max / bins if s_max > 0 else 1.0 / bins


def laplacian_spectrum(adj) -> np.ndarray:
    return np.linalg.eigvalsh(normalized_laplacian(adj))


def default_timescales(n: int = 128) -> np.ndarray:
    return np.logspace(-2, 2, n)


def netlsd_signature(adj, timescales=None) -> GraphSignature:
    """Heat trace h(t) = sum_j exp(-t lambda_j) at each timescale."""
    ts = default_timescales() if timescales is None else np.asarray(timescales, dtype=np.float64)
    lam = laplacian_spectrum(adj)
    if len(lam) == 0:
        raise ValueError("empty graph")
    lam = np.clip(lam, 0.0, None)
    h = np.exp(-np.outer(ts, lam)).sum(axis=1)
    return GraphSignature(h, "netlsd", {"tmin": float(ts[0]), "tmax": float(ts[-1]), "n": len(ts)})


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    def predict(self, queries) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if Q.shape[1] != self.X.shape[1]:
            raise ValueError(f"query dim {Q.shape[1]} != training dim {self.X.shape[1]}")
        n_classes = int(self.y.max()) + 1
        out = np.empty(len(Q), dtype=np.int64)
        for i, q in enumerate(Q):
            d = np.sqrt(((self.X - q) ** 2).sum(axis=1))
            # stable sort: equal distances keep training order
            nn = np.argsort(d, kind="stable")[: self.k]
            votes = np.bincount(self.y[nn], minlength=n_classes)
            out[i] = int(np.argmax(votes))
        return out


def knn_fit(signatures, labels, k: int = 5) -> KnnModel:
    X = np.asarray([s.vector if isinstance(s, GraphSignature) else s for s in signatures], dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError("signatures and labels differ in length")
    if not 1 <= k <= len(X):
        raise ValueError(f"k must lie in [1, {len(X)}], got {k}")
    return KnnModel(X, y, k)


def knn_predict(model: KnnModel, signature) -> int:
    v = signature.vector if isinstance(signature, GraphSignature) else signature
    return int(model.predict(v)[0])


def write_signatures_csv(path, signatures: Sequence[GraphSignature], labels, graph_ids=None) -> None:
    graph_ids = range(len(signatures)) if graph_ids is None else graph_ids
    d = signatures[0].dim if signatures else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph_id", *(f"v{i}" for i in range(d)), "label"])
        for gid, s, y in zip(graph_ids, signatures, labels):
            w.writerow([gid, *(repr(float(x)) for x in s.vector), int(y)])
