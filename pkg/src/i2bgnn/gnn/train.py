"""Seeded Adam training loop that keeps the best-validation epoch."""
from __future__ import annotations

import contextlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..metrics import f1_score
from ..splits import stratified_partition
from .model import ModelParams, forward, init_params, loss_and_backward
from .ops import make_batch, normalize

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    variant: str = "t"
    hidden: int = 128
    epochs: int = 50
    batch_size: int = 30
    dropout: float = 0.3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    weight_transform: str = "log1p"
    row_normalize: bool = False
    val_fraction: float = 0.1
    strict_determinism: bool = False

    def __post_init__(self):
        if self.variant not in ("v", "t"):
            raise ValueError(f"variant must be 'v' or 't', got {self.variant!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.hidden < 1:
            raise ValueError("batch_size, epochs and hidden must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.arrays().items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@contextlib.contextmanager
def deterministic_kernels(strict: bool):
    """Pin BLAS to one thread so reductions happen in a fixed order."""
    if not strict:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def _row_normalize(X):
    s = np.asarray(X.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return sp.diags(1.0 / s) @ X


def prepare(subgraphs: Sequence, variant: str = "t", weight_transform: str = "log1p", row_normalize=False):
    """Normalized adjacency and feature matrix per subgraph, computed once."""
    out = []
    for sg in subgraphs:
        if sg.X is None:
            raise ValueError(f"subgraph {sg.graph_id} has no features")
        X = sp.csr_matrix(sg.X, dtype=np.float64)
        if row_normalize:
            X = sp.csr_matrix(_row_normalize(X))
        out.append((normalize(sg.adjacency(variant), weight_transform).A_hat, X))
    return out


def batch_of(prepared, idx, labels=None, variant=None):
    return make_batch([prepared[i][0] for i in idx], [prepared[i][1] for i in idx],
                      None if labels is None else np.asarray(labels)[idx], variant)


def predict(params: ModelParams, prepared, idx=None, chunk: int = 256) -> np.ndarray:
    idx = np.arange(len(prepared)) if idx is None else np.asarray(idx)
    out = []
    for s in range(0, len(idx), chunk):
        tr = forward(batch_of(prepared, idx[s : s + chunk]), params, training=False)
        out.append(np.argmax(tr.Z, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def train(
    subgraphs: Sequence,
    config: TrainConfig,
    train_idx=None,
    val_idx=None,
    prepared=None,
) -> TrainResult:
    """Fit the model on ``train_idx``; keep the epoch with the best validation F1.

    Without ``val_idx`` a stratified ``config.val_fraction`` slice of the
    training indices is held out. Ties in validation F1 go to the later epoch.
    """
    labels = np.array([sg.y for sg in subgraphs], dtype=np.int64)
    if len(subgraphs) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    train_idx = np.arange(len(subgraphs)) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
    if val_idx is None and config.val_fraction > 0:
        v, t = stratified_partition(labels[train_idx], config.val_fraction, rng)
        if len(v) and len(np.unique(labels[train_idx[t]])) == len(np.unique(labels[train_idx])):
            val_idx, train_idx = train_idx[v], train_idx[t]
    val_idx = np.zeros(0, dtype=np.int64) if val_idx is None else np.asarray(val_idx, dtype=np.int64)
    if len(train_idx) == 0:
        raise ValueError("empty training split")

    if prepared is None:
        prepared = prepare(subgraphs, config.variant, config.weight_transform, config.row_normalize)
    in_dim = prepared[0][1].shape[1]
    n_classes = max(2, int(labels.max()) + 1)

    with deterministic_kernels(config.strict_determinism):
        params = init_params(in_dim, config.hidden, n_classes, rng)
        opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
        best, best_f1, best_epoch = params.copy(), -1.0, 0
        history = []
        for epoch in range(1, config.epochs + 1):
            order = train_idx[rng.permutation(len(train_idx))]
            losses, sizes = [], []
            for bi, s in enumerate(range(0, len(order), config.batch_size)):
                idx = order[s : s + config.batch_size]
                batch = batch_of(prepared, idx, labels, config.variant)
                trace = forward(batch, params, config.dropout, training=True, rng=rng)
                try:
                    loss, grads = loss_and_backward(trace, batch.labels, params)
                except FloatingPointError:
                    raise TrainingDiverged(f"NaN loss at epoch {epoch}, batch {bi}") from None
                opt.step(params, grads.arrays())
                losses.append(loss)
                sizes.append(len(idx))
            train_loss = float(np.average(losses, weights=sizes))
            if len(val_idx):
                val_f1 = f1_score(predict(params, prepared, val_idx), labels[val_idx])
            else:
                val_f1 = float("nan")
            history.append({"epoch": epoch, "train_loss": train_loss, "val_f1": val_f1})
            log.debug("epoch %d loss %.5f val_f1 %.4f", epoch, train_loss, val_f1)
            # no validation slice: the last epoch wins
            score = val_f1 if len(val_idx) else 0.0
            if score >= best_f1:
                best, best_f1, best_epoch = params.copy(), score, epoch
    return TrainResult(best, history, best_epoch)
