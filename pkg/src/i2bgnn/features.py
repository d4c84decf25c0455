"""Node features: contract-calling counts plus the EOSIO name-kind indicator."""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

TRANSFORMS = ("log1p", "binary")


class NameKind(enum.IntEnum):
    GENERAL = 0
    AUCTION = 1
    SUBACCOUNT = 2


GENERAL_NAME_LENGTH = 12


def classify_name(name: str) -> NameKind:
    """Classify an EOSIO-style account name.

    A dot anywhere makes it a sub-account; otherwise names shorter than 12
    characters are auction names and everything else is a general account.
    """
    if "." in name:
        return NameKind.SUBACCOUNT
    if len(name) < GENERAL_NAME_LENGTH:
        return NameKind.AUCTION
    return NameKind.GENERAL


def eosio_stoplist(name: str) -> bool:
    return name.startswith("EOSIO.") or name.startswith("eosio.")


@dataclass(frozen=True)
class FeatureSchema:
    vocabulary: tuple[str, ...]
    use_name_kind: bool = False
    transform: str = "log1p"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown feature transform {self.transform!r}")
        if self.dim == 0:
            raise ValueError("feature schema has zero dimension")

    @property
    def dim(self) -> int:
        return len(self.vocabulary) + (3 if self.use_name_kind else 0)

    def to_dict(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "use_name_kind": self.use_name_kind,
            "transform": self.transform,
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        schema = cls(tuple(d["vocabulary"]), bool(d["use_name_kind"]), d.get("transform", "log1p"))
        if "dim" in d and int(d["dim"]) != schema.dim:
            raise SchemaMismatch(f"schema dim {d['dim']} does not match vocabulary ({schema.dim})")
        return schema

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class SchemaMismatch(ValueError):
    pass


@dataclass
class CallTable:
    """Aggregated contract calls restricted to a ranked vocabulary.

    ``by_account`` maps an account name to ``(column indices, counts)`` with
    columns sorted ascending.
    """

    vocabulary: tuple[str, ...]
    by_account: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def records(self):
        from .graph_store import CallRecord

        for name, (cols, counts) in self.by_account.items():
            for c, n in zip(cols, counts):
                yield CallRecord(name, self.vocabulary[c], int(n))


def build_features(subgraph, calls: CallTable | None, schema: FeatureSchema) -> sp.csr_matrix:
    """Feature matrix with one row per subgraph node, in local order.

    ``subgraph`` may also be a plain sequence of account names.
    """
    nodes = getattr(subgraph, "names", subgraph)
    if calls is not None and tuple(calls.vocabulary) != tuple(schema.vocabulary):
        raise SchemaMismatch("call table vocabulary differs from feature schema")
    n_cc = len(schema.vocabulary)
    rows, cols, vals = [], [], []
    for i, name in enumerate(nodes):
        if calls is not None and name in calls.by_account:
            c, n = calls.by_account[name]
            rows.extend([i] * len(c))
            cols.extend(c.tolist())
            if schema.transform == "log1p":
                vals.extend(np.log1p(n.astype(np.float64)).tolist())
            else:
                vals.extend([1.0] * len(c))
        if schema.use_name_kind:
            rows.append(i)
            cols.append(n_cc + int(classify_name(name)))
            vals.append(1.0)
    X = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(nodes), schema.dim),
    )
    X.sort_indices()
    return X
