"""Immutable transaction graph: ingest from delimited text, binary persistence."""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from .features import CallTable, NameKind, classify_name

log = logging.getLogger(__name__)

MAGIC = b"I2BG"
FORMAT_VERSION = 1

DEFAULT_LABEL_MAP = {"0": 0, "1": 1}


class IngestError(ValueError):
    pass


class GraphFormatError(ValueError):
    pass


class VersionError(GraphFormatError):
    pass


class ChecksumError(GraphFormatError):
    pass


@dataclass(frozen=True)
class AccountId:
    id: int
    name: str


@dataclass(frozen=True)
class CallRecord:
    caller: str
    contract: str
    count: int


@dataclass(frozen=True, eq=False)
class TransactionGraph:
    """Per-ordered-pair aggregated transaction graph in CSR form.

    Row ``u`` of the CSR holds the out-edges of account ``u`` sorted by
    neighbor handle, with summed volume and transaction count.
    """

    names: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    volume: np.ndarray
    frequency: np.ndarray
    labels: dict[int, int] = field(default_factory=dict)
    kinds: np.ndarray | None = None
    dropped_self_loops: int = 0

    @property
    def n_accounts(self) -> int:
        return len(self.names)

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def account(self, name: str) -> AccountId:
        try:
            return AccountId(self.index[name], name)
        except KeyError:
            raise KeyError(f"unknown account {name!r}") from None

    def handle(self, account: int | str) -> int:
        if isinstance(account, str):
            return self.account(account).id
        if not 0 <= account < self.n_accounts:
            raise KeyError(f"unknown account handle {account}")
        return int(account)

    def out_edges(self, u: int):
        lo, hi = self.indptr[u], self.indptr[u + 1]
        return self.indices[lo:hi], self.volume[lo:hi], self.frequency[lo:hi]

    @cached_property
    def _transpose(self):
        # in-edges of each account, again sorted by neighbor handle
        n = self.n_accounts
        src = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        order = np.lexsort((src, self.indices))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.indices, minlength=n), out=indptr[1:])
        return indptr, src[order], self.volume[order], self.frequency[order]

    def in_edges(self, v: int):
        indptr, idx, vol, freq = self._transpose
        lo, hi = indptr[v], indptr[v + 1]
        return idx[lo:hi], vol[lo:hi], freq[lo:hi]

    def edge(self, u: int, v: int):
        """(volume, frequency) of the aggregated edge u->v, or None."""
        idx, vol, freq = self.out_edges(u)
        k = np.searchsorted(idx, v)
        if k < len(idx) and idx[k] == v:
            return float(vol[k]), int(freq[k])
        return None

    def labeled_accounts(self) -> list[tuple[str, int]]:
        return [(self.names[h], y) for h, y in self.labels.items()]

    def with_labels(self, labels: dict[str, int]) -> tuple["TransactionGraph", list[str]]:
        """Attach a name->class map; returns the new graph and the label names absent from it."""
        merged = dict(self.labels)
        missing = []
        for name, y in labels.items():
            h = self.index.get(name)
            if h is None:
                missing.append(name)
                continue
            merged[h] = y
        if missing:
            log.warning("%d labeled accounts have no transactions", len(missing))
        return replace(self, labels=merged), missing

    def __eq__(self, other):
        if not isinstance(other, TransactionGraph):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.volume, other.volume)
            and np.array_equal(self.frequency, other.frequency)
            and self.labels == other.labels
            and np.array_equal(self.kinds, other.kinds)
            and self.dropped_self_loops == other.dropped_self_loops
        )

    __hash__ = None


# ---------------------------------------------------------------- ingest


def _read_table(source, columns: tuple[str, ...], optional: tuple[str, ...] = ()) -> Iterator[tuple[int, list[str]]]:
    """Yield (line number, fields) from a delimited file or already-split rows."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from _read_table(fh, columns, optional)
        return
    if isinstance(source, io.IOBase) or hasattr(source, "readline"):
        sample = source.readline()
        dialect = csv.excel
        if "\t" in sample and "," not in sample:
            dialect = csv.excel_tab
        header = next(csv.reader([sample], dialect))
        header = [h.strip() for h in header]
        if tuple(header[: len(columns)]) != columns or any(h not in optional for h in header[len(columns):]):
            raise IngestError(f"line 1: expected header {','.join(columns)}, got {','.join(header)}")
        for lineno, row in enumerate(csv.reader(source, dialect), start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield lineno, row
        return
    for lineno, row in enumerate(source, start=1):
        yield lineno, list(row)


def ingest_edges(source) -> TransactionGraph:
    """Aggregate raw transaction rows ``(src, dst, volume, count[, timestamp])``.

    ``source`` is a path, an open text file with a header line, or an iterable
    of row tuples. Duplicate ordered pairs are summed; self-loops are dropped
    and counted. Handles follow first appearance (src before dst).
    """
    index: dict[str, int] = {}
    names: list[str] = []
    agg: dict[tuple[int, int], list] = {}
    dropped = 0
    n_rows = 0

    def handle(name):
        h = index.get(name)
        if h is None:
            h = index[name] = len(names)
            names.append(name)
        return h

    for lineno, row in _read_table(source, ("src", "dst", "volume", "count"), ("timestamp",)):
        n_rows += 1
        if len(row) not in (4, 5):
            raise IngestError(f"line {lineno}: expected 4 or 5 fields, got {len(row)}")
        try:
            src, dst = str(row[0]).strip(), str(row[1]).strip()
            volume = float(row[2])
            count = int(row[3])
        except (TypeError, ValueError) as exc:
            raise IngestError(f"line {lineno}: malformed row ({exc})") from None
        if not src or not dst:
            raise IngestError(f"line {lineno}: empty account name")
        if not np.isfinite(volume) or volume < 0:
            raise IngestError(f"line {lineno}: volume must be finite and non-negative")
        if count < 1:
            raise IngestError(f"line {lineno}: count must be >= 1")
        u, v = handle(src), handle(dst)
        if u == v:
            dropped += 1
            continue
        cell = agg.get((u, v))
        if cell is None:
            agg[(u, v)] = [volume, count]
        else:
            cell[0] += volume
            cell[1] += count

    if n_rows == 0:
        raise IngestError("empty graph")
    if dropped:
        log.warning("dropped %d self-loop rows", dropped)
    return _from_pairs(names, agg, dropped)


def _from_pairs(names, agg, dropped, labels=None) -> TransactionGraph:
    n = len(names)
    keys = sorted(agg)
    src = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
    dst = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
    vol = np.fromiter((agg[k][0] for k in keys), dtype=np.float64, count=len(keys))
    freq = np.fromiter((agg[k][1] for k in keys), dtype=np.int64, count=len(keys))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    kinds = np.fromiter((classify_name(s) for s in names), dtype=np.uint8, count=n)
    return TransactionGraph(tuple(names), indptr, dst, vol, freq, dict(labels or {}), kinds, dropped)


def parse_label_map(spec: str | dict | None) -> dict[str, int]:
    """``"phisher=1,normal=0"`` -> {"phisher": 1, "normal": 0}."""
    if spec is None:
        return dict(DEFAULT_LABEL_MAP)
    if isinstance(spec, dict):
        out = {str(k): int(v) for k, v in spec.items()}
    else:
        out = {}
        for item in spec.split(","):
            if not item.strip():
                continue
            token, _, value = item.partition("=")
            out[token.strip()] = int(value)
    if not out or any(v not in (0, 1) for v in out.values()):
        raise IngestError("label map must send tokens to classes 0/1")
    return out


def ingest_labels(source, label_map: dict[str, int] | str | None = None) -> dict[str, int]:
    mapping = parse_label_map(label_map)
    labels: dict[str, int] = {}
    for lineno, row in _read_table(source, ("account", "label")):
        if len(row) != 2:
            raise IngestError(f"line {lineno}: expected 2 fields, got {len(row)}")
        name, token = str(row[0]).strip(), str(row[1]).strip()
        if token not in mapping:
            raise IngestError(f"line {lineno}: unknown class token {token!r}")
        y = mapping[token]
        if labels.get(name, y) != y:
            raise IngestError(f"conflicting label for {name}")
        labels[name] = y
    return labels


def ingest_calls(source, top_c: int) -> CallTable:
    """Aggregate ``(account, contract, count)`` rows and keep the ``top_c`` most-called contracts."""
    if top_c < 1:
        raise IngestError("top_c must be >= 1")
    per_pair: dict[tuple[str, str], int] = {}
    totals: dict[str, int] = {}
    for lineno, row in _read_table(source, ("account", "contract", "count")):
        if len(row) != 3:
            raise IngestError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            name, contract, count = str(row[0]).strip(), str(row[1]).strip(), int(row[2])
        except ValueError as exc:
            raise IngestError(f"line {lineno}: malformed row ({exc})") from None
        if count < 1:
            raise IngestError(f"line {lineno}: count must be >= 1")
        per_pair[(name, contract)] = per_pair.get((name, contract), 0) + count
        totals[contract] = totals.get(contract, 0) + count
    # dicts keep first-appearance order and sorted() is stable
    ranked = sorted(totals, key=lambda c: -totals[c])[:top_c]
    col = {c: i for i, c in enumerate(ranked)}
    by_account: dict[str, list[tuple[int, int]]] = {}
    for (name, contract), count in per_pair.items():
        if contract in col:
            by_account.setdefault(name, []).append((col[contract], count))
    table = CallTable(tuple(ranked))
    for name, pairs in by_account.items():
        pairs.sort()
        table.by_account[name] = (
            np.array([p[0] for p in pairs], dtype=np.int64),
            np.array([p[1] for p in pairs], dtype=np.int64),
        )
    return table


# ---------------------------------------------------------------- persistence


def _section(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def dump_graph(graph: TransactionGraph) -> bytes:
    buf = io.BytesIO()
    for name in graph.names:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    accounts = struct.pack("<Q", graph.n_accounts) + buf.getvalue()

    csr = b"".join([
        struct.pack("<QQQ", graph.n_accounts, graph.n_edges, graph.dropped_self_loops),
        graph.indptr.astype("<i8").tobytes(),
        graph.indices.astype("<i8").tobytes(),
        graph.volume.astype("<f8").tobytes(),
        graph.frequency.astype("<i8").tobytes(),
    ])
    items = sorted(graph.labels.items())
    labels = struct.pack("<Q", len(items)) + b"".join(struct.pack("<qB", h, y) for h, y in items)
    kinds = graph.kinds if graph.kinds is not None else np.zeros(graph.n_accounts, np.uint8)
    body = MAGIC + struct.pack("<H", FORMAT_VERSION) + b"".join(
        _section(s) for s in (accounts, csr, labels, kinds.astype(np.uint8).tobytes())
    )
    return body + struct.pack("<Q", _checksum(body))


def save_graph(graph: TransactionGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_graph(graph))


def parse_graph(data: bytes) -> TransactionGraph:
    if len(data) < 6 or data[:4] != MAGIC:
        raise GraphFormatError("not an I2BG graph file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported graph format version {version}")
    if len(data) < 14:
        raise ChecksumError("checksum mismatch (truncated file)")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if _checksum(body) != stored:
        raise ChecksumError("checksum mismatch")

    sections = []
    off = 6
    while off < len(body):
        (n,) = struct.unpack_from("<Q", body, off)
        sections.append(body[off + 8 : off + 8 + n])
        off += 8 + n
    if len(sections) != 4:
        raise GraphFormatError(f"expected 4 sections, found {len(sections)}")
    accounts, csr, labels, kinds = sections

    (n,) = struct.unpack_from("<Q", accounts, 0)
    names, off = [], 8
    for _ in range(n):
        (k,) = struct.unpack_from("<I", accounts, off)
        names.append(accounts[off + 4 : off + 4 + k].decode("utf-8"))
        off += 4 + k

    n2, nnz, dropped = struct.unpack_from("<QQQ", csr, 0)
    off = 24
    arrays = []
    for count, dt in ((n2 + 1, "<i8"), (nnz, "<i8"), (nnz, "<f8"), (nnz, "<i8")):
        arrays.append(np.frombuffer(csr, dtype=dt, count=count, offset=off).astype(dt[1:]))
        off += 8 * count
    indptr, indices, volume, frequency = arrays

    (n_lab,) = struct.unpack_from("<Q", labels, 0)
    lab = {}
    for i in range(n_lab):
        h, y = struct.unpack_from("<qB", labels, 8 + 9 * i)
        lab[h] = y
    return TransactionGraph(
        tuple(names), indptr, indices, volume, frequency, lab,
        np.frombuffer(kinds, dtype=np.uint8).copy(), int(dropped),
    )


def load_graph(path) -> TransactionGraph:
    with open(path, "rb") as fh:
        return parse_graph(fh.read())


def write_edges_csv(path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "volume", "count"])
        for src, dst, vol, cnt in rows:
            w.writerow([src, dst, repr(float(vol)), int(cnt)])


def write_labels_csv(path, labels: Iterable[tuple[str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["account", "label"])
        for name, y in labels:
            w.writerow([name, int(y)])


def write_calls_csv(path, rows: Iterable[tuple[str, str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["account", "contract", "count"])
        for name, contract, count in rows:
            w.writerow([name, contract, int(count)])


__all__ = [
    "AccountId", "CallRecord", "TransactionGraph", "NameKind", "IngestError", "GraphFormatError",
    "VersionError", "ChecksumError", "ingest_edges", "ingest_labels", "ingest_calls",
    "save_graph", "load_graph", "dump_graph", "parse_graph", "parse_label_map",
    "write_edges_csv", "write_labels_csv", "write_calls_csv",
]
