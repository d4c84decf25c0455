import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from i2bgnn.graph_store import (
    ChecksumError,
    IngestError,
    VersionError,
    dump_graph,
    ingest_calls,
    ingest_edges,
    ingest_labels,
    load_graph,
    parse_graph,
    save_graph,
)

rows_strategy = st.lists(
    st.tuples(
        st.sampled_from("ABCDEF"),
        st.sampled_from("ABCDEF"),
        st.floats(min_value=0, max_value=1e6, allow_nan=False),
        st.integers(min_value=1, max_value=50),
    ),
    min_size=1,
    max_size=40,
)


def test_duplicate_rows_aggregate():
    g = ingest_edges([("A", "B", 5.0, 1), ("A", "B", 2.0, 2)])
    assert g.n_edges == 1
    assert g.edge(g.handle("A"), g.handle("B")) == (7.0, 3)


def test_self_loop_dropped_and_counted():
    g = ingest_edges([("A", "A", 9.0, 1)])
    assert g.names == ("A",)
    assert g.n_edges == 0
    assert g.dropped_self_loops == 1


def test_handles_follow_first_appearance():
    g = ingest_edges([("C", "A", 1.0, 1), ("B", "C", 1.0, 1)])
    assert g.names == ("C", "A", "B")
    assert g.account("B").id == 2


def test_empty_stream():
    with pytest.raises(IngestError, match="empty graph"):
        ingest_edges([])
    with pytest.raises(IngestError, match="empty graph"):
        ingest_edges(io.StringIO("src,dst,volume,count\n"))


def test_malformed_row_names_line():
    text = "src,dst,volume,count\nA,B,1.0,1\nA,C,notanumber,1\n"
    with pytest.raises(IngestError, match="line 3"):
        ingest_edges(io.StringIO(text))


def test_negative_volume_and_zero_count_rejected():
    with pytest.raises(IngestError, match="line 1"):
        ingest_edges([("A", "B", -1.0, 1)])
    with pytest.raises(IngestError, match="line 2"):
        ingest_edges([("A", "B", 1.0, 1), ("A", "B", 1.0, 0)])


def test_timestamp_column_accepted_and_ignored():
    text = "src,dst,volume,count,timestamp\nA,B,1.5,2,1600000000\nA,B,1.0,1,1600000100\n"
    g = ingest_edges(io.StringIO(text))
    assert g.edge(0, 1) == (2.5, 3)


def test_bad_header():
    with pytest.raises(IngestError, match="line 1"):
        ingest_edges(io.StringIO("from,to,amount\nA,B,1\n"))


def test_labels():
    assert ingest_labels([("A", "1"), ("B", "0")]) == {"A": 1, "B": 0}
    assert ingest_labels([("A", "1"), ("A", "1")]) == {"A": 1}
    with pytest.raises(IngestError, match="conflicting label for A"):
        ingest_labels([("A", "1"), ("A", "0")])
    with pytest.raises(IngestError, match="unknown class token"):
        ingest_labels([("A", "phisher")])
    assert ingest_labels([("A", "phisher"), ("B", "normal")], "phisher=1,normal=0") == {"A": 1, "B": 0}


def test_labels_for_absent_accounts_are_flagged():
    g = ingest_edges([("A", "B", 1.0, 1)])
    g2, missing = g.with_labels({"A": 1, "Z": 0})
    assert missing == ["Z"]
    assert g2.labels == {0: 1}


def test_calls_top_c():
    rows = [("a", "c1", 6), ("b", "c2", 5), ("a", "c1", 4), ("a", "c3", 1)]
    table = ingest_calls(rows, top_c=2)
    assert table.vocabulary == ("c1", "c2")
    cols, counts = table.by_account["a"]
    assert cols.tolist() == [0] and counts.tolist() == [10]
    assert {r.contract for r in table.records()} == {"c1", "c2"}


def test_calls_tie_break_first_appearance():
    table = ingest_calls([("a", "x", 2), ("a", "y", 2), ("a", "z", 3)], top_c=2)
    assert table.vocabulary == ("z", "x")


def test_save_load_roundtrip(tmp_path):
    g = ingest_edges([("A", "B", 5.0, 1), ("B", "C", 0.25, 3), ("C", "A", 1e-9, 7), ("A", "A", 1.0, 1)])
    g, _ = g.with_labels({"A": 1, "C": 0})
    p = tmp_path / "g.i2bg"
    save_graph(g, p)
    assert load_graph(p) == g
    assert p.read_bytes()[:4] == b"I2BG"


def test_truncated_file_checksum(tmp_path):
    g = ingest_edges([("A", "B", 5.0, 1), ("B", "C", 2.0, 1)])
    data = dump_graph(g)
    with pytest.raises(ChecksumError):
        parse_graph(data[:-5])
    flipped = bytearray(data)
    flipped[20] ^= 0xFF
    with pytest.raises(ChecksumError):
        parse_graph(bytes(flipped))


def test_unknown_version(tmp_path):
    data = bytearray(dump_graph(ingest_edges([("A", "B", 1.0, 1)])))
    data[4] = 99
    with pytest.raises(VersionError):
        parse_graph(bytes(data))


@given(rows_strategy)
@settings(max_examples=60, deadline=None)
def test_frequency_sum_matches_raw_rows(rows):
    g = ingest_edges(rows)
    for name in g.names:
        u = g.handle(name)
        _, _, freq = g.out_edges(u)
        raw = sum(c for s, d, _, c in rows if s == name and d != name)
        assert freq.sum() == raw
    assert np.all(g.frequency >= 1) and np.all(g.volume >= 0)
    for u in range(g.n_accounts):
        idx, _, _ = g.out_edges(u)
        assert np.all(np.diff(idx) > 0)
        assert u not in idx


@given(rows_strategy, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_aggregation_order_independent(rows, rnd):
    g1 = ingest_edges(rows)
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    g2 = ingest_edges(shuffled)
    assert set(g1.names) == set(g2.names)
    for u in range(g1.n_accounts):
        idx, vol, freq = g1.out_edges(u)
        for v, w, f in zip(idx, vol, freq):
            w2, f2 = g2.edge(g2.handle(g1.names[u]), g2.handle(g1.names[v]))
            assert f2 == f
            assert w2 == pytest.approx(w, rel=1e-12, abs=1e-12)


@given(rows_strategy)
@settings(max_examples=40, deadline=None)
def test_persistence_bitwise_stable(rows):
    g = ingest_edges(rows)
    assert dump_graph(g) == dump_graph(ingest_edges(rows))
    assert parse_graph(dump_graph(g)) == g
