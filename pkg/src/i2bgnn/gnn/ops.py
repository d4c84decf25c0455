"""Sparse symmetric normalization and the graph convolution, plus block-diagonal batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

WEIGHT_TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "log1p": np.log1p,
    "raw": lambda w: w,
    "binary": lambda w: (w > 0).astype(np.float64),
}


@dataclass(frozen=True)
class NormalizedAdjacency:
    A_hat: sp.csr_matrix
    A_tilde: sp.csr_matrix
    degree: np.ndarray  # diagonal of D~

    @property
    def m(self) -> int:
        return self.A_hat.shape[0]


def normalize(A, weight_transform: str | Callable = "log1p") -> NormalizedAdjacency:
    """D~^-1/2 (T(A) + I) D~^-1/2, with T applied to the edge weights first."""
    A = sp.csr_matrix(A, dtype=np.float64)
    m = A.shape[0]
    if A.shape != (m, m):
        raise ValueError(f"adjacency must be square, got {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("adjacency contains NaN or Inf")
    if np.any(A.data < 0):
        raise ValueError("adjacency has negative weights")
    fn = WEIGHT_TRANSFORMS[weight_transform] if isinstance(weight_transform, str) else weight_transform
    A = A.tocoo()
    # raw self-loops are dropped; the identity below supplies the self-connection
    keep = (A.row != A.col) & (A.data != 0)
    A = sp.csr_matrix((np.asarray(fn(A.data[keep]), dtype=np.float64), (A.row[keep], A.col[keep])), shape=(m, m))
    A_tilde = (A + sp.identity(m, format="csr")).tocsr()
    A_tilde.sort_indices()
    deg = np.asarray(A_tilde.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(deg)
    coo = A_tilde.tocoo()
    # s_i * s_j computed once per entry keeps the result exactly symmetric
    A_hat = sp.csr_matrix((coo.data * (s[coo.row] * s[coo.col]), (coo.row, coo.col)), shape=(m, m))
    A_hat.sort_indices()
    return NormalizedAdjacency(A_hat, A_tilde, deg)


def relu(x):
    return np.maximum(x, 0.0)


def gcn_layer(A_hat, H, W, activation: Callable | None = relu):
    A_hat = A_hat.A_hat if isinstance(A_hat, NormalizedAdjacency) else A_hat
    if A_hat.shape[1] != H.shape[0] or H.shape[1] != W.shape[0]:
        raise ValueError(f"shape mismatch: A {A_hat.shape}, H {H.shape}, W {W.shape}")
    out = A_hat @ np.asarray(H @ W)
    return activation(out) if activation is not None else out


@dataclass
class BatchedGraphs:
    A_hat: sp.csr_matrix
    X: sp.csr_matrix | np.ndarray
    segments: np.ndarray  # node -> graph id, non-decreasing
    starts: np.ndarray  # first node of each graph
    labels: np.ndarray | None = None
    variant: str | None = None

    @property
    def n_graphs(self) -> int:
        return len(self.starts)

    @property
    def n_nodes(self) -> int:
        return len(self.segments)

    def check(self):
        if self.n_graphs == 0:
            raise ValueError("empty batch")
        sizes = np.diff(np.append(self.starts, self.n_nodes))
        if self.starts[0] != 0 or np.any(sizes <= 0):
            raise ValueError("segment map inconsistent: empty or unordered segments")
        if not np.array_equal(self.segments, np.repeat(np.arange(self.n_graphs), sizes)):
            raise ValueError("segment map inconsistent with segment starts")
        if self.A_hat.shape != (self.n_nodes, self.n_nodes) or self.X.shape[0] != self.n_nodes:
            raise ValueError("segment map inconsistent with matrix shapes")


def make_batch(
    adjs: Sequence[sp.spmatrix | NormalizedAdjacency],
    features: Sequence,
    labels: Sequence[int] | None = None,
    variant: str | None = None,
) -> BatchedGraphs:
    """Pack already-normalized adjacencies and their feature matrices block-diagonally."""
    if len(adjs) == 0:
        raise ValueError("empty batch")
    if len(adjs) != len(features):
        raise ValueError("need one feature matrix per graph")
    mats = [a.A_hat if isinstance(a, NormalizedAdjacency) else a for a in adjs]
    sizes = np.array([a.shape[0] for a in mats], dtype=np.int64)
    A = sp.block_diag(mats, format="csr")
    A.sort_indices()
    if all(sp.issparse(x) for x in features):
        X = sp.vstack(features, format="csr")
    else:
        X = np.vstack([x.toarray() if sp.issparse(x) else np.asarray(x, dtype=np.float64) for x in features])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    segments = np.repeat(np.arange(len(mats), dtype=np.int64), sizes)
    y = None if labels is None else np.asarray(labels, dtype=np.int64)
    return BatchedGraphs(A, X, segments, starts, y, variant)
