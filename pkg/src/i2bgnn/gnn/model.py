"""Two GCN layers feeding per-graph max pooling and a softmax head; gradients by hand."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .ops import BatchedGraphs, relu


@dataclass
class ModelParams:
    W0: np.ndarray  # f x h
    W1: np.ndarray  # h x h
    W2: np.ndarray  # h x n_classes
    b: np.ndarray  # n_classes

    @property
    def in_dim(self) -> int:
        return self.W0.shape[0]

    @property
    def hidden(self) -> int:
        return self.W0.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def check(self):
        f, h = self.W0.shape
        if self.W1.shape != (h, h) or self.W2.shape[0] != h or self.b.shape != (self.W2.shape[1],):
            raise ValueError("inconsistent parameter shapes")
        for k, v in self.arrays().items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite entries in {k}")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(in_dim: int, hidden: int = 128, n_classes: int = 2, rng=None) -> ModelParams:
    rng = np.random.default_rng(rng)
    return ModelParams(
        W0=glorot_uniform(rng, in_dim, hidden),
        W1=glorot_uniform(rng, hidden, hidden),
        W2=glorot_uniform(rng, hidden, n_classes),
        b=np.zeros(n_classes),
    )


@dataclass
class ForwardTrace:
    batch: BatchedGraphs
    XW0: np.ndarray
    P1: np.ndarray  # pre-activation of layer 1
    H1: np.ndarray  # after ReLU and dropout
    AH1: np.ndarray  # A_hat @ H1, input to W1
    P2: np.ndarray
    H2: np.ndarray  # after ReLU and dropout
    mask1: np.ndarray | None
    mask2: np.ndarray | None
    g: np.ndarray  # pooled, B x h
    argmax: np.ndarray  # B x h node indices into the batch
    logits: np.ndarray
    Z: np.ndarray


@dataclass
class Gradients:
    W0: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    b: np.ndarray
    X: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W0": self.W0, "W1": self.W1, "W2": self.W2, "b": self.b}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def segment_max(H: np.ndarray, starts: np.ndarray):
    """Per-segment column max and the lowest row index attaining it."""
    g = np.maximum.reduceat(H, starts, axis=0)
    n = H.shape[0]
    seg = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, n)))
    rows = np.arange(n)[:, None]
    cand = np.where(H == g[seg], rows, n)
    arg = np.minimum.reduceat(cand, starts, axis=0)
    return g, arg


def _dropout_mask(rng, shape, rate):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(
    batch: BatchedGraphs,
    params: ModelParams,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    batch.check()
    if batch.X.shape[1] != params.in_dim:
        raise ValueError(f"feature dim {batch.X.shape[1]} != model input dim {params.in_dim}")
    use_dropout = training and dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("training with dropout needs an rng")
    A = batch.A_hat

    XW0 = np.asarray(batch.X @ params.W0)
    P1 = A @ XW0
    H1 = relu(P1)
    mask1 = None
    if use_dropout:
        mask1 = _dropout_mask(rng, H1.shape, dropout_rate)
        H1 = H1 * mask1
    AH1 = A @ H1
    P2 = AH1 @ params.W1
    H2 = relu(P2)
    mask2 = None
    if use_dropout:
        mask2 = _dropout_mask(rng, H2.shape, dropout_rate)
        H2 = H2 * mask2
    g, arg = segment_max(H2, batch.starts)
    logits = g @ params.W2 + params.b
    return ForwardTrace(batch, XW0, P1, H1, AH1, P2, H2, mask1, mask2, g, arg, logits, softmax(logits))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_backward(
    trace: ForwardTrace,
    labels,
    params: ModelParams,
    input_grad: bool = False,
) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch and its gradients, derived by hand."""
    labels = np.asarray(labels, dtype=np.int64)
    B = trace.g.shape[0]
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got {labels.shape}")
    loss = cross_entropy(trace.logits, labels)
    if not np.isfinite(loss):
        raise FloatingPointError("loss is NaN or infinite")

    dlogits = trace.Z.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    dW2 = trace.g.T @ dlogits
    db = dlogits.sum(axis=0)
    dg = dlogits @ params.W2.T

    # max pooling routes each feature's gradient to its recorded node
    dH2 = np.zeros_like(trace.H2)
    cols = np.broadcast_to(np.arange(dg.shape[1]), dg.shape)
    dH2[trace.argmax, cols] = dg
    if trace.mask2 is not None:
        dH2 *= trace.mask2
    dP2 = dH2 * (trace.P2 > 0)
    dW1 = trace.AH1.T @ dP2

    At = trace.batch.A_hat.T
    dH1 = At @ (dP2 @ params.W1.T)
    if trace.mask1 is not None:
        dH1 *= trace.mask1
    dP1 = dH1 * (trace.P1 > 0)
    dXW0 = At @ dP1
    X = trace.batch.X
    dW0 = np.asarray(X.T @ dXW0)
    dX = dXW0 @ params.W0.T if input_grad else None
    return loss, Gradients(dW0, dW1, dW2, db, dX)


def predict_proba(batch: BatchedGraphs, params: ModelParams) -> np.ndarray:
    return forward(batch, params, training=False).Z


def as_dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)
