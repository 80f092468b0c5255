import numpy as np
import pytest

from cograph.embeddings import EmbeddingSet, export_embeddings, read_embeddings
from cograph.encoders import EncoderSpec, init_params
from cograph.errors import UsageError
from cograph.evaluation import (LinearProbe, RepeatStats, embed_dataset, finetune,
                                linear_probe_graph, make_node_split, node_probe,
                                repeat_runs, stratified_folds)
from cograph.rng import stream
from cograph.synthetic import community_node_graph, two_class_graphs
from cograph.trainer import TrainConfig, pretrain_graph_level


def separable_embeddings(n_per_class=30, dim=8, gap=4.0, seed=0):
    rng = stream(seed, "sep")
    a = rng.normal(0.0, 0.3, (n_per_class, dim)) + gap
    b = rng.normal(0.0, 0.3, (n_per_class, dim)) - gap
    matrix = np.concatenate([a, b])
    labels = np.array([0] * n_per_class + [1] * n_per_class)
    return EmbeddingSet(matrix, ids=list(range(2 * n_per_class)), labels=labels)


class TestEmbedDataset:
    def setup_method(self):
        self.graphs = two_class_graphs(12, stream(30, "embed"))
        spec = EncoderSpec("gin", input_dim=4, hidden_dim=8, num_layers=2)
        self.params = init_params(spec, stream(30, "init"))

    def test_deterministic(self):
        a = embed_dataset(self.params, self.graphs)
        b = embed_dataset(self.params, self.graphs)
        assert a.matrix.tobytes() == b.matrix.tobytes()

    def test_row_count_matches_dataset(self):
        emb = embed_dataset(self.params, self.graphs)
        assert len(emb) == 12
        assert emb.labels is not None and len(emb.labels) == 12

    def test_embeddings_finite_and_nonzero_after_training(self):
        graphs = two_class_graphs(20, stream(31, "sanity"))
        cfg = TrainConfig(seed=1, learning_rate=0.01, batch_size=10, epochs=5,
                          temperature=0.2, hidden_dim=8, mode="graph_level")
        specs = [EncoderSpec("gin", 4, 8, 2), EncoderSpec("gcn", 4, 8, 2)]
        result = pretrain_graph_level(graphs, specs, cfg)
        emb = embed_dataset(result.params[0], graphs)
        assert np.isfinite(emb.matrix).all()
        assert (np.abs(emb.matrix).max(axis=1) > 0).all()


class TestLinearProbe:
    def test_separable_embeddings_reach_full_accuracy(self):
        mean, std = linear_probe_graph(separable_embeddings(), repeats=2)
        assert mean == 1.0
        assert std == 0.0

    def test_label_shuffle_drops_to_majority_rate(self):
        # permutation null: average the probe over several label shuffles
        emb = separable_embeddings(n_per_class=60)
        rng = stream(32, "shuffle")
        null = []
        for _ in range(5):
            shuffled = EmbeddingSet(emb.matrix, emb.ids,
                                    labels=emb.labels[rng.permutation(len(emb))])
            null.append(linear_probe_graph(shuffled, repeats=1, seed=5)[0])
        assert abs(float(np.mean(null)) - 0.5) <= 0.05

    def test_missing_labels_rejected(self):
        emb = EmbeddingSet(np.ones((4, 2)), ids=list(range(4)))
        with pytest.raises(UsageError):
            linear_probe_graph(emb)

    def test_small_class_stratification_error(self):
        emb = EmbeddingSet(np.ones((12, 2)), ids=list(range(12)),
                           labels=np.array([0] * 9 + [1] * 3))
        with pytest.raises(UsageError, match="class"):
            linear_probe_graph(emb, folds=10)

    def test_probe_solver_deterministic(self):
        emb = separable_embeddings(seed=4)
        x, y = emb.matrix, emb.labels
        a = LinearProbe(10.0).fit(x, y).weights_
        b = LinearProbe(10.0).fit(x, y).weights_
        assert np.array_equal(a, b)

    def test_stratified_folds_cover_everything(self):
        labels = np.array([0] * 25 + [1] * 15)
        folds = stratified_folds(labels, 5, stream(33, "folds"))
        joined = np.sort(np.concatenate(folds))
        assert np.array_equal(joined, np.arange(40))
        for f in folds:
            assert set(labels[f]) == {0, 1}


class TestNodeSplit:
    def test_seven_class_protocol_counts(self):
        labels = np.repeat(np.arange(7), 300)
        split = make_node_split(labels, per_class=40, val=500, test=1000,
                                rng=stream(34, "split"))
        assert len(split.train) == 280
        assert len(split.val) == 500
        assert len(split.test) == 1000
        assert not set(split.train) & set(split.val)
        assert not set(split.train) & set(split.test)
        assert not set(split.val) & set(split.test)
        counts = np.bincount(labels[split.train], minlength=7)
        assert (counts == 40).all()

    def test_degenerate_per_class_one(self):
        labels = np.repeat(np.arange(3), 10)
        split = make_node_split(labels, per_class=1, val=5, test=10,
                                rng=stream(35, "deg"))
        assert len(split.train) == 3
        assert not set(split.train) & set(split.val) | set(split.train) & set(split.test)

    def test_same_seed_same_split(self):
        labels = np.repeat(np.arange(4), 50)
        a = make_node_split(labels, 5, 20, 40, rng=stream(36, "s"))
        b = make_node_split(labels, 5, 20, 40, rng=stream(36, "s"))
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.val, b.val)
        assert np.array_equal(a.test, b.test)

    def test_insufficient_nodes(self):
        labels = np.array([0, 0, 1])
        with pytest.raises(UsageError):
            make_node_split(labels, per_class=2, val=1, test=1, rng=stream(37, "x"))


class TestNodeProbe:
    def test_clustered_embeddings_near_perfect(self):
        rng = stream(38, "clust")
        labels = np.repeat(np.arange(3), 60)
        centers = rng.normal(0, 1, (3, 8)) * 3.0
        matrix = centers[labels] + rng.normal(0, 0.1, (180, 8))
        emb = EmbeddingSet(matrix, list(range(180)), labels)
        split = make_node_split(labels, per_class=10, val=50, test=100,
                                rng=stream(38, "split"))
        acc = node_probe(emb, split, seed=1)
        assert acc >= 0.99

    def test_random_embeddings_near_chance(self):
        rng = stream(39, "rand")
        labels = np.repeat(np.arange(4), 100)
        matrix = rng.normal(0, 1, (400, 16))
        emb = EmbeddingSet(matrix, list(range(400)), labels)
        split = make_node_split(labels, per_class=20, val=100, test=200,
                                rng=stream(39, "split"))
        acc = node_probe(emb, split, seed=1)
        assert abs(acc - 0.25) <= 0.05


class TestFinetune:
    def setup_method(self):
        self.graphs = two_class_graphs(60, stream(40, "ft"))
        self.specs = [EncoderSpec("gin", 4, 16, 2), EncoderSpec("gcn", 4, 16, 2)]
        cfg = TrainConfig(seed=3, learning_rate=0.003, batch_size=16, epochs=30,
                          temperature=0.5, hidden_dim=16, mode="graph_level",
                          similarity="cosine", early_stop_patience=1000)
        self.pretrained = pretrain_graph_level(self.graphs, self.specs, cfg).params

    def test_step_counter_exact(self):
        result = finetune(self.pretrained[0], self.graphs, steps=120, seed=0)
        assert result.steps == 120

    def test_beats_frozen_probe_within_tolerance(self):
        # compared at matched supervision: probe folds train on 90% of the
        # labels, so the finetune side gets a comparable labeled half
        emb = embed_dataset(self.pretrained[0], self.graphs)
        frozen_mean, _ = linear_probe_graph(emb, repeats=2, seed=0)
        ft = finetune(self.pretrained[0], self.graphs, label_fraction=0.5,
                      steps=120, seed=0)
        assert ft.accuracy >= frozen_mean - 0.02

    def test_full_label_fraction_is_supervised_training(self):
        result = finetune(self.pretrained[0], self.graphs, label_fraction=1.0,
                          steps=40, seed=0)
        assert result.steps == 40
        assert result.accuracy >= 0.9  # training accuracy, learnable set

    def test_does_not_mutate_pretrained_params(self):
        before = self.pretrained[0].snapshot()
        finetune(self.pretrained[0], self.graphs, steps=5, seed=0)
        after = self.pretrained[0].snapshot()
        assert all(np.array_equal(before[k], after[k]) for k in before)


class TestRepeatRuns:
    def test_constant_protocol_zero_std(self):
        stats = repeat_runs(lambda seed: 0.75, n=5)
        assert stats.mean == 0.75
        assert stats.std == 0.0

    def test_two_value_hand_arithmetic(self):
        values = {0: 0.8, 1: 0.9}
        stats = repeat_runs(lambda seed: values[seed], n=2, seeds=[0, 1])
        assert stats.mean == pytest.approx(0.85)
        assert stats.std == pytest.approx(0.07071067811865478, abs=1e-12)

    def test_results_archived_per_seed(self):
        stats = repeat_runs(lambda seed: seed / 10.0, n=4, seeds=[1, 2, 3, 4])
        assert stats.accuracies == [0.1, 0.2, 0.3, 0.4]
        assert stats.seeds == [1, 2, 3, 4]

    def test_identical_seeds_identical_statistics(self):
        def protocol(seed):
            return float(stream(seed, "p").random())

        a = repeat_runs(protocol, n=3)
        b = repeat_runs(protocol, n=3)
        assert a.accuracies == b.accuracies


class TestExport:
    def test_round_trip_exact(self, tmp_path):
        rng = stream(41, "export")
        emb = EmbeddingSet(rng.normal(0, 1, (7, 5)) * 1e3, list(range(7)),
                           labels=np.arange(7) % 3)
        path = tmp_path / "emb.tsv"
        export_embeddings(emb, path)
        back = read_embeddings(path)
        assert np.array_equal(back.matrix, emb.matrix)
        assert np.array_equal(back.labels, emb.labels)

    def test_header_and_row_count(self, tmp_path):
        emb = EmbeddingSet(np.zeros((3, 2)), ids=["a", "b", "c"])
        path = tmp_path / "emb.tsv"
        export_embeddings(emb, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "id\tlabel\te0\te1"
        assert len(lines) == 4

    def test_extreme_values_round_trip(self, tmp_path):
        matrix = np.array([[1e-308, -1e308], [np.pi, -0.0],
                           [1.0 / 3.0, 6.02214076e23]])
        emb = EmbeddingSet(matrix, ids=[0, 1, 2], labels=np.array([0, 1, 0]))
        path = tmp_path / "extreme.tsv"
        export_embeddings(emb, path)
        back = read_embeddings(path)
        assert np.array_equal(back.matrix, matrix)


def test_pretrained_beats_random_init_under_identical_probe():
    graphs = two_class_graphs(100, stream(42, "beat"))
    specs = [EncoderSpec("gin", 4, 32, 2), EncoderSpec("gcn", 4, 32, 2)]
    cfg = TrainConfig(seed=5, learning_rate=0.003, batch_size=16, epochs=40,
                      temperature=0.5, hidden_dim=32, mode="graph_level",
                      similarity="cosine", early_stop_patience=1000)
    trained = pretrain_graph_level(graphs, specs, cfg).params[0]
    random_init = init_params(specs[0], stream(cfg.seed, "init", 0))
    probe = lambda p: linear_probe_graph(embed_dataset(p, graphs), repeats=2, seed=0)[0]
    assert probe(trained) > probe(random_init)
