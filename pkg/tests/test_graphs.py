import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cograph.autodiff import Tensor, spmm
from cograph.errors import DataFormatError, UsageError
from cograph.graphs import (Graph, GraphBatch, SparseMatrix, featurize,
                            load_node_dataset, load_tudataset, make_batches,
                            normalized_adjacency, raw_adjacency)
from cograph.rng import stream


def write_toy_tu(directory, name="TOY"):
    """Two graphs: a triangle (label 1) and an edge pair (label -1)."""
    (directory / f"{name}_A.txt").write_text(
        "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n")
    (directory / f"{name}_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (directory / f"{name}_graph_labels.txt").write_text("1\n-1\n")
    (directory / f"{name}_node_labels.txt").write_text("0\n1\n0\n2\n1\n")
    return directory


def write_triangle_interchange(directory):
    (directory / "edges.tsv").write_text("0\t1\n1\t2\n0\t2\n2\t0\n")
    (directory / "features.tsv").write_text("1.0\t0.0\n0.0\t1.0\n1.0\t1.0\n")
    (directory / "labels.tsv").write_text("0\n1\n0\n")
    (directory / "meta.tsv").write_text(
        "num_nodes\t3\nnum_classes\t2\nfeature_dim\t2\n")
    return directory


class TestTUDatasetParser:
    def test_round_trip_counts_and_labels(self, tmp_path):
        graphs = load_tudataset(write_toy_tu(tmp_path), "TOY")
        assert len(graphs) == 2
        assert [g.num_nodes for g in graphs] == [3, 2]
        assert [g.num_edges for g in graphs] == [3, 1]
        # labels remapped to 0..C-1 in sorted order: -1 -> 0, 1 -> 1
        assert [g.graph_label for g in graphs] == [1, 0]
        # node labels one-hot encoded (3 categories across the dataset)
        assert graphs[0].features.shape == (3, 3)
        assert np.array_equal(graphs[0].features[1], [0.0, 1.0, 0.0])

    def test_missing_mandatory_file(self, tmp_path):
        write_toy_tu(tmp_path)
        (tmp_path / "TOY_graph_labels.txt").unlink()
        with pytest.raises(DataFormatError, match="graph_labels"):
            load_tudataset(tmp_path, "TOY")

    def test_edge_crossing_graph_boundary(self, tmp_path):
        write_toy_tu(tmp_path)
        (tmp_path / "TOY_A.txt").write_text("1, 2\n3, 4\n")
        with pytest.raises(DataFormatError, match="TOY_A.txt:2"):
            load_tudataset(tmp_path, "TOY")

    def test_ragged_attribute_row(self, tmp_path):
        write_toy_tu(tmp_path)
        (tmp_path / "TOY_node_attributes.txt").write_text(
            "1.0,2.0\n1.0,2.0\n1.0\n1.0,2.0\n1.0,2.0\n")
        with pytest.raises(DataFormatError, match="TOY_node_attributes.txt:3"):
            load_tudataset(tmp_path, "TOY")

    def test_attributes_take_precedence_over_label_onehot(self, tmp_path):
        write_toy_tu(tmp_path)
        (tmp_path / "TOY_node_attributes.txt").write_text(
            "0.5,1.5\n2.5,3.5\n4.5,5.5\n6.5,7.5\n8.5,9.5\n")
        graphs = load_tudataset(tmp_path, "TOY")
        assert graphs[0].features.shape == (3, 2)
        assert graphs[1].features[0, 0] == 6.5


class TestInterchangeParser:
    def test_triangle_fixture(self, tmp_path):
        g = load_node_dataset(write_triangle_interchange(tmp_path))
        assert g.num_nodes == 3
        assert g.num_edges == 3  # duplicate 2-0 edge deduplicated
        assert g.features.shape == (3, 2)
        assert np.array_equal(g.node_labels, [0, 1, 0])

    def test_inconsistent_row_counts(self, tmp_path):
        write_triangle_interchange(tmp_path)
        (tmp_path / "labels.tsv").write_text("0\n1\n")
        with pytest.raises(DataFormatError, match="labels.tsv"):
            load_node_dataset(tmp_path)

    def test_out_of_range_endpoint(self, tmp_path):
        write_triangle_interchange(tmp_path)
        (tmp_path / "edges.tsv").write_text("0\t9\n")
        with pytest.raises(DataFormatError, match="edges.tsv:1"):
            load_node_dataset(tmp_path)

    def test_meta_mismatch(self, tmp_path):
        write_triangle_interchange(tmp_path)
        (tmp_path / "meta.tsv").write_text("num_nodes\t5\n")
        with pytest.raises(DataFormatError, match="meta.tsv"):
            load_node_dataset(tmp_path)


class TestFeaturize:
    def test_constant(self):
        g = Graph(3, [(0, 1)])
        out = featurize([g], "constant")[0]
        assert np.array_equal(out.features, np.ones((3, 1)))

    def test_one_hot_degree_isolated_node(self):
        g = Graph(1, [])
        out = featurize([g], "one_hot_degree", max_degree=5)[0]
        assert np.array_equal(out.features, [[1, 0, 0, 0, 0, 0]])

    def test_one_hot_degree_triangle(self):
        g = Graph(3, [(0, 1), (1, 2), (0, 2)])
        out = featurize([g], "one_hot_degree", max_degree=5)[0]
        assert np.array_equal(out.features[0], [0, 0, 1, 0, 0, 0])

    def test_one_hot_degree_defaults_to_observed_max(self):
        star = Graph(4, [(0, 1), (0, 2), (0, 3)])
        out = featurize([star], "one_hot_degree")[0]
        assert out.features.shape == (4, 4)

    def test_degree_cap_exceeded(self):
        star = Graph(4, [(0, 1), (0, 2), (0, 3)])
        with pytest.raises(UsageError, match="degree"):
            featurize([star], "one_hot_degree", max_degree=2)

    def test_default_requires_features(self):
        with pytest.raises(UsageError):
            featurize([Graph(2, [(0, 1)])], "default")


class TestBatching:
    def graphs(self, n):
        return featurize([Graph(3, [(0, 1), (1, 2)], graph_label=i % 2)
                          for i in range(n)], "constant")

    def test_five_graphs_batch_two_drops_singleton(self):
        batches = make_batches(self.graphs(5), 2, stream(0, "b"))
        assert [b.size for b in batches] == [2, 2]

    def test_batch_larger_than_dataset(self):
        batches = make_batches(self.graphs(4), 256, stream(0, "b"))
        assert [b.size for b in batches] == [4]

    def test_shuffle_determinism(self):
        a = make_batches(self.graphs(7), 3, stream(5, "shuffle"))
        b = make_batches(self.graphs(7), 3, stream(5, "shuffle"))
        assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))

    def test_empty_list_rejected(self):
        with pytest.raises(UsageError):
            make_batches([], 2, stream(0, "b"))

    def test_batch_size_below_two_rejected(self):
        with pytest.raises(UsageError):
            make_batches(self.graphs(4), 1, stream(0, "b"))

    def test_ranges_partition_nodes(self):
        batch = make_batches(self.graphs(4), 4, stream(1, "b"))[0]
        flat = [i for start, stop in batch.graph_ranges for i in range(start, stop)]
        assert flat == list(range(batch.num_nodes))
        assert all(batch.graph_of_node[s:e].tolist() == [g] * (e - s)
                   for g, (s, e) in enumerate(batch.graph_ranges))

    def test_unbatch_is_lossless(self):
        rng = stream(3, "lossless")
        gs = [Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)],
                    features=rng.uniform(-1, 1, (4, 3)), graph_label=1),
              Graph(2, [(0, 1)], features=rng.uniform(-1, 1, (2, 3)), graph_label=0)]
        back = GraphBatch.from_graphs(gs).unbatch()
        for orig, rec in zip(gs, back):
            assert rec.num_nodes == orig.num_nodes
            assert np.array_equal(rec.edges, orig.edges)
            assert np.array_equal(rec.features, orig.features)
            assert rec.graph_label == orig.graph_label

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=6),
           st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_unbatch_lossless_property(self, sizes, seed):
        rng = np.random.default_rng(seed)
        gs = []
        for n in sizes:
            pairs = [(u, v) for u in range(n) for v in range(u + 1, n)
                     if rng.random() < 0.5]
            gs.append(Graph(n, pairs, features=rng.normal(0, 1, (n, 2)),
                            graph_label=int(rng.integers(0, 3))))
        back = GraphBatch.from_graphs(gs).unbatch()
        for orig, rec in zip(gs, back):
            assert rec.num_nodes == orig.num_nodes
            assert np.array_equal(rec.edges, orig.edges)
            assert np.array_equal(rec.features, orig.features)
            assert rec.graph_label == orig.graph_label


class TestAdjacency:
    def test_normalized_two_node_path(self):
        adj = normalized_adjacency(Graph(2, [(0, 1)]))
        assert np.allclose(adj.to_dense(), [[0.5, 0.5], [0.5, 0.5]])

    def test_normalized_isolated_node(self):
        adj = normalized_adjacency(Graph(1, []))
        assert np.array_equal(adj.to_dense(), [[1.0]])

    def test_normalized_regular_graph_rows_sum_to_one(self):
        # 4-cycle is 2-regular: each row sums to (r+1)/(r+1) = 1
        adj = normalized_adjacency(Graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
        assert np.allclose(adj.to_dense().sum(axis=1), 1.0)

    def test_raw_triangle_entries(self):
        adj = raw_adjacency(Graph(3, [(0, 1), (1, 2), (0, 2)]), self_loops=False)
        assert adj.nnz == 6
        assert np.array_equal(np.unique(adj.values), [1.0])

    def test_raw_path_with_loops(self):
        adj = raw_adjacency(Graph(2, [(0, 1)]), self_loops=True)
        assert adj.nnz == 4

    def test_raw_symmetric(self):
        adj = raw_adjacency(Graph(5, [(0, 3), (1, 4), (2, 3)]))
        dense = adj.to_dense()
        assert np.array_equal(dense, dense.T)

    def test_constant_features_with_raw_adjacency_computes_degree(self):
        g = Graph(4, [(0, 1), (0, 2), (0, 3), (2, 3)])
        g = featurize([g], "constant")[0]
        deg = spmm(raw_adjacency(g), Tensor(g.features)).data[:, 0]
        assert np.array_equal(deg, g.degrees().astype(float))


class TestGraphValidation:
    def test_endpoint_out_of_range(self):
        with pytest.raises(DataFormatError):
            Graph(2, [(0, 5)])

    def test_self_loop_rejected(self):
        with pytest.raises(DataFormatError):
            Graph(2, [(1, 1)])

    def test_sparse_matrix_invariants(self):
        m = SparseMatrix.from_entries([0, 1], [1, 0], [2.0, 3.0], (2, 2))
        assert m.row_offsets.tolist() == [0, 1, 2]
        with pytest.raises(DataFormatError):
            SparseMatrix.from_entries([0], [0], [np.inf], (1, 1))
