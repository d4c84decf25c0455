import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from i2bgnn.features import FeatureSchema, SchemaMismatch
from i2bgnn.graph_store import ingest_edges
from i2bgnn.sampler import (
    Bundle,
    SamplingConfig,
    extract_dataset,
    extract_subgraph,
    rank_neighbors,
    read_bundle,
    write_bundle,
)

from .oracles import brute_force_extract, random_raw_graph


def names(g, handles):
    return [g.names[h] for h in handles]


def test_rank_top_k():
    g = ingest_edges([("x", "a", 5.0, 1), ("x", "b", 3.0, 1), ("c", "x", 1.0, 1)])
    assert names(g, rank_neighbors(g, "x", 2)) == ["a", "b"]


def test_rank_tie_break_by_handle():
    g = ingest_edges([("x", "a", 4.0, 1), ("x", "b", 4.0, 1)])
    assert names(g, rank_neighbors(g, "x", 1)) == ["a"]


def test_rank_below_threshold_takes_all():
    g = ingest_edges([("x", "a", 5.0, 1)])
    assert names(g, rank_neighbors(g, "x", 10)) == ["a"]


def test_rank_sums_both_directions():
    g = ingest_edges([("x", "a", 3.0, 1), ("b", "x", 4.0, 1), ("a", "x", 2.0, 1)])
    assert names(g, rank_neighbors(g, "x", 2)) == ["a", "b"]


def test_unknown_account():
    g = ingest_edges([("x", "a", 1.0, 1)])
    with pytest.raises(KeyError):
        rank_neighbors(g, "nope", 3)
    with pytest.raises(KeyError):
        extract_subgraph(g, "nope", SamplingConfig())


def test_star_one_hop():
    g = ingest_edges([("c", "a", 1.0, 1), ("c", "b", 2.0, 1), ("d", "c", 3.0, 1)])
    sg = extract_subgraph(g, "c", SamplingConfig(hops=1, max_neighbors=10))
    assert sg.m == 4
    assert sg.A_v.nnz == 6
    assert (sg.A_v != sg.A_v.T).nnz == 0


def test_symmetrization_adds_transpose():
    g = ingest_edges([("A", "B", 3.0, 1), ("B", "A", 2.0, 4)])
    sg = extract_subgraph(g, "A", SamplingConfig(hops=1))
    assert sg.A_v[0, 1] == sg.A_v[1, 0] == 5.0
    assert sg.A_t[0, 1] == 5.0


def test_directed_mode_keeps_direction():
    g = ingest_edges([("A", "B", 3.0, 1)])
    sg = extract_subgraph(g, "A", SamplingConfig(hops=1, symmetrize=False))
    assert sg.A_v[0, 1] == 3.0 and sg.A_v[1, 0] == 0.0


def test_isolated_account():
    g = ingest_edges([("A", "A", 1.0, 1), ("B", "C", 1.0, 1)])
    sg = extract_subgraph(g, "A", SamplingConfig())
    assert sg.m == 1 and sg.isolated and sg.A_v.nnz == 0


def test_induced_edges_between_selected_neighbors():
    g = ingest_edges([("c", "a", 1.0, 1), ("c", "b", 1.0, 1), ("a", "b", 7.0, 2)])
    sg = extract_subgraph(g, "c", SamplingConfig(hops=1))
    ia, ib = sg.names.index("a"), sg.names.index("b")
    assert sg.A_v[ia, ib] == 7.0


def test_stoplist_blocks_expansion_only_in_eosio_mode():
    rows = [("alice", "eosio.token", 9.0, 1), ("eosio.token", "bob", 1.0, 1), ("alice", "carol", 1.0, 1),
            ("carol", "dave", 1.0, 1)]
    g = ingest_edges(rows)
    off = extract_subgraph(g, "alice", SamplingConfig(hops=2))
    on = extract_subgraph(g, "alice", SamplingConfig(hops=2, eosio=True))
    assert "bob" in off.names
    assert "eosio.token" in on.names and "bob" not in on.names and "dave" in on.names


def test_hops_validated():
    with pytest.raises(ValueError):
        SamplingConfig(hops=3)
    with pytest.raises(ValueError):
        SamplingConfig(max_neighbors=0)


def test_two_hop_bound_n10(small_synth):
    g = small_synth.graph
    for name, _ in small_synth.labeled[:30]:
        assert extract_subgraph(g, name, SamplingConfig(2, 10)).m <= 111


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.sampled_from([1, 2]))
@settings(max_examples=80, deadline=None)
def test_matches_brute_force(seed, n_u, hops):
    rng = np.random.default_rng(seed)
    rows = random_raw_graph(rng, n_max=15)
    g = ingest_edges(rows)
    center = g.names[int(rng.integers(g.n_accounts))]
    sg = extract_subgraph(g, center, SamplingConfig(hops, n_u))
    ref_names, Av, At = brute_force_extract(rows, center, n_u, hops)
    assert sg.names == ref_names
    np.testing.assert_array_equal(sg.A_v.toarray(), Av)
    np.testing.assert_array_equal(sg.A_t.toarray(), At)
    assert sg.m <= SamplingConfig(hops, n_u).size_bound()
    assert np.all(sg.A_v.diagonal() == 0)


def test_symmetrized_sum_matches_directed(rng):
    rows = random_raw_graph(rng, n_max=20, int_volumes=False)
    g = ingest_edges(rows)
    for name in g.names[:5]:
        d = extract_subgraph(g, name, SamplingConfig(2, 3, symmetrize=False))
        s = extract_subgraph(g, name, SamplingConfig(2, 3))
        assert s.names == d.names
        assert s.A_v.sum() == pytest.approx(2 * d.A_v.sum())
        assert abs(s.A_v - s.A_v.T).max() == 0


def test_extract_dataset_order_and_labels(small_synth):
    d = small_synth
    cfg = SamplingConfig(2, 10)
    schema = FeatureSchema(d.calls.vocabulary)
    seq = extract_dataset(d.graph, d.labeled, cfg, d.calls, schema)
    par = extract_dataset(d.graph, d.labeled, cfg, d.calls, schema, threads=4)
    assert [sg.y for sg in seq] == [y for _, y in d.labeled]
    assert [sg.names[0] for sg in seq] == [n for n, _ in d.labeled]
    for a, b in zip(seq, par):
        assert a.names == b.names
        assert (a.A_v != b.A_v).nnz == 0 and (a.X != b.X).nnz == 0


def test_extract_dataset_requires_labels():
    g = ingest_edges([("A", "B", 1.0, 1)])
    with pytest.raises(ValueError):
        extract_dataset(g, [("A", None)], SamplingConfig())


def test_bundle_roundtrip(tmp_path, small_dataset):
    sgs, schema = small_dataset
    p = tmp_path / "b.jsonl"
    write_bundle(p, Bundle(SamplingConfig(2, 10), schema, sgs, {"seed": 1}))
    back = read_bundle(p)
    assert back.schema == schema and back.config == SamplingConfig(2, 10)
    assert back.run_config == {"seed": 1}
    for a, b in zip(sgs, back.subgraphs):
        assert a.names == b.names and a.y == b.y and a.graph_id == b.graph_id
        assert abs(a.A_v - b.A_v).max() == 0 if a.A_v.nnz else b.A_v.nnz == 0
        assert (a.A_t != b.A_t).nnz == 0
        assert (a.X != b.X).nnz == 0
    with pytest.raises(SchemaMismatch):
        read_bundle(p, expect_schema_hash="0" * 16)


def test_bundle_keeps_zero_volume_edges(tmp_path):
    g = ingest_edges([("A", "B", 0.0, 2), ("A", "C", 1.0, 1)])
    g, _ = g.with_labels({"A": 1})
    schema = FeatureSchema((), use_name_kind=True)
    sgs = extract_dataset(g, None, SamplingConfig(1, 5), None, schema)
    p = tmp_path / "z.jsonl"
    write_bundle(p, Bundle(SamplingConfig(1, 5), schema, sgs))
    back = read_bundle(p).subgraphs[0]
    ib = back.names.index("B")
    assert back.A_t[0, ib] == 2.0 and back.A_v[0, ib] == 0.0
