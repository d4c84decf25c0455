"""Seeded stratified train/validation/test splits."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SWEEP_RATIOS = ("1:9", "1:7", "1:5", "1:3", "1:1", "3:1")


def parse_ratio(token) -> float:
    """Train fraction from ``"a:b"`` (train:test) or a float in (0, 1)."""
    if isinstance(token, (int, float)) and not isinstance(token, bool):
        frac = float(token)
    else:
        s = str(token).strip()
        try:
            if ":" in s:
                a, b = (Fraction(x) for x in s.split(":"))
                frac = float(a / (a + b))
            else:
                frac = float(s)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"unknown ratio token {token!r}; use train:test like 1:1 or a fraction") from None
    if not 0.0 < frac < 1.0:
        raise ValueError(f"unknown ratio token {token!r}; train fraction must lie in (0, 1)")
    return frac


def stratified_partition(labels, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split indices so each class contributes ``round(fraction * n_class)`` to the first part."""
    labels = np.asarray(labels)
    first, second = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(fraction * len(idx)))
        first.append(idx[:k])
        second.append(idx[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


@dataclass
class Split:
    train: np.ndarray
    test: np.ndarray
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ratio: str = "1:1"
    seed: int = 0


def make_split(labels, ratio="1:1", seed: int = 0, val_fraction: float = 0.1) -> Split:
    labels = np.asarray(labels)
    frac = parse_ratio(ratio)
    rng = np.random.default_rng(seed)
    train, test = stratified_partition(labels, frac, rng)
    classes = np.unique(labels)
    for side, idx in (("train", train), ("test", test)):
        missing = sorted(set(classes.tolist()) - set(labels[idx].tolist()))
        if missing:
            raise ValueError(
                f"ratio {ratio} leaves class {missing[0]} absent from the {side} side; "
                "use a less extreme ratio or more graphs per class"
            )
    val = np.zeros(0, dtype=np.int64)
    if val_fraction > 0:
        val_local, _ = stratified_partition(labels[train], val_fraction, rng)
        val = train[val_local]
        rest = np.setdiff1d(train, val)
        # keep the validation slice only if training still sees every class
        if len(np.unique(labels[rest])) == len(classes):
            train = rest
        else:
            val = np.zeros(0, dtype=np.int64)
    return Split(train, test, val, str(ratio), seed)


def make_splits(labels, ratio="1:1", n_seeds: int = 3, base_seed: int = 0, val_fraction: float = 0.1) -> list[Split]:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    return [make_split(labels, ratio, base_seed + i, val_fraction) for i in range(n_seeds)]
