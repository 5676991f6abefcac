"""Marker insertion, synthetic tasks, metrics and the fine-tuning loop."""

import numpy as np
import pytest

from synlm.distances import compute_distances
from synlm.finetune import (
    AT_ID,
    HASH_ID,
    TaskExample,
    evaluate,
    finetune_loop,
    make_synthetic_task,
    mark_entities,
    read_task_file,
    word_tree_distances,
    write_task_file,
)
from synlm.model import ModelConfig, init_params
from synlm.pretrain import init_heads
from synlm.synthetic import random_corpus
from synlm.tokenizer import SPECIALS, Vocab, encode, subword_graph, train_vocab
from synlm.treebank import make_tree


def word_vocab(words):
    return Vocab(units=SPECIALS + tuple(sorted(set(words))))


class TestMarkEntities:
    def test_single_entity_adds_two_tokens(self):
        tree = make_tree(["a", "b", "c", "d"], [0, 1, 1, 3], "t")
        vocab = word_vocab(tree.forms)
        marked = mark_entities(TaskExample(tree, (2, 2), None, 0), vocab)
        assert len(marked.ids) == 6
        # opening marker immediately before the entity's first subword
        open_at = marked.markers[0]
        assert marked.ids[open_at] == AT_ID
        assert vocab.units[marked.ids[open_at + 1]] == "b"
        assert marked.ids[open_at + 2] == AT_ID

    def test_pair_markers_and_positions(self):
        tree = make_tree(["a", "b", "c", "d"], [0, 1, 1, 3], "t")
        vocab = word_vocab(tree.forms)
        marked = mark_entities(TaskExample(tree, (1, 1), (3, 4), 1), vocab)
        at, hsh = marked.markers
        assert marked.ids[at] == AT_ID
        assert marked.ids[hsh] == HASH_ID
        tokens = [vocab.units[i] for i in marked.ids]
        assert tokens == ["@", "a", "@", "b", "#", "c", "d", "#"]

    def test_marker_rows_and_columns_zero(self):
        tree = make_tree(["a", "b", "c"], [2, 0, 2], "t")
        vocab = word_vocab(tree.forms)
        marked = mark_entities(TaskExample(tree, (1, 1), (3, 3), 0), vocab)
        for pos in range(len(marked.ids)):
            if marked.ids[pos] in (AT_ID, HASH_ID):
                assert not marked.dist[pos].any()
                assert not marked.dist[:, pos].any()
                assert not marked.strength[pos].any()

    def test_original_distances_preserved_exactly(self):
        rng = np.random.default_rng(1)
        trees = random_corpus(rng, 10, min_words=4, max_words=8, n_word_types=15)
        vocab = train_vocab([t.forms for t in trees], target_size=40)
        for tree in trees:
            n_words = len(tree)
            i, j = sorted(rng.choice(n_words, size=2, replace=False) + 1)
            marked = mark_entities(TaskExample(tree, (int(i), int(i)), (int(j), int(j)), 0),
                                   vocab)
            ids, align = encode(tree, vocab)
            dist = compute_distances(subword_graph(tree, align), len(ids))
            # map original subword indices to marked positions via word spans
            for w_old, w_new in zip(align.spans, marked.align.spans):
                assert w_old[1] - w_old[0] == w_new[1] - w_new[0]
            old_to_new = {}
            for (o_start, o_stop), (n_start, _) in zip(align.spans, marked.align.spans):
                for off in range(o_stop - o_start):
                    old_to_new[o_start + off] = n_start + off
            for a in range(len(ids)):
                for b in range(len(ids)):
                    assert marked.dist[old_to_new[a], old_to_new[b]] == dist[a, b]

    def test_adjacent_spans_close_before_open(self):
        tree = make_tree(["a", "b"], [0, 1], "t")
        vocab = word_vocab(tree.forms)
        marked = mark_entities(TaskExample(tree, (1, 1), (2, 2), 0), vocab)
        tokens = [vocab.units[i] for i in marked.ids]
        assert tokens == ["@", "a", "@", "#", "b", "#"]

    def test_span_errors(self):
        tree = make_tree(["a", "b", "c"], [0, 1, 1], "t")
        vocab = word_vocab(tree.forms)
        with pytest.raises(ValueError, match="out of range"):
            mark_entities(TaskExample(tree, (0, 1), None, 0), vocab)
        with pytest.raises(ValueError, match="out of range"):
            mark_entities(TaskExample(tree, (1, 4), None, 0), vocab)
        with pytest.raises(ValueError, match="overlap"):
            mark_entities(TaskExample(tree, (1, 2), (2, 3), 0), vocab)


class TestSyntheticTask:
    def test_distance_one_is_class_zero(self):
        tree = make_tree(["playing", "frisbee"], [0, 1], "f")
        dist = word_tree_distances(tree)
        assert dist[0, 1] == 1
        assert min(int(dist[0, 1]), 4) - 1 == 0

    def test_head_pair_label(self):
        # "playing" heads "frisbee" -> label 1 for (playing, frisbee)
        tree = make_tree(["my", "dog", "playing", "frisbee"], [2, 3, 0, 3], "f")
        rng = np.random.default_rng(2)
        examples = make_synthetic_task([tree], "head-pair", rng, 40)
        for ex in examples:
            i, j = ex.span1[0], ex.span2[0]
            want = int(ex.tree.words[j - 1].head == i)
            assert ex.label == want

    def test_balanced_labels(self):
        rng = np.random.default_rng(3)
        trees = random_corpus(rng, 150, min_words=7, max_words=12)
        examples = make_synthetic_task(trees, "distance-label", rng, 10_000)
        counts = np.bincount([ex.label for ex in examples], minlength=4)
        assert len(examples) == 10_000
        for c in counts:
            assert abs(c / 10_000 - 0.25) <= 0.05

    def test_word_distance_equals_first_subword_distance(self):
        rng = np.random.default_rng(4)
        trees = random_corpus(rng, 10, min_words=4, max_words=9, n_word_types=12)
        vocab = train_vocab([t.forms for t in trees], target_size=30)
        for tree in trees:
            ids, align = encode(tree, vocab)
            sub = compute_distances(subword_graph(tree, align), len(ids),
                                    mode="undirected")
            words = word_tree_distances(tree)
            first = align.first_subword
            for i in range(len(tree)):
                for j in range(len(tree)):
                    assert sub[first[i], first[j]] == words[i, j]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_synthetic_task([], "parity", np.random.default_rng(0), 4)


class TestEvaluate:
    def test_perfect_predictions(self):
        r = evaluate([1, 2, 3], [1, 2, 3])
        assert r.precision == r.recall == r.f1 == r.accuracy == 1.0

    def test_all_wrong(self):
        r = evaluate([0, 0], [1, 2])
        assert r.accuracy == 0.0

    def test_multi_label_micro(self):
        # TP=2, FP=1, FN=1 -> P = R = F1 = 2/3
        r = evaluate([{1, 2, 3}], [{1, 2, 4}], multi_label=True)
        assert r.precision == pytest.approx(2 / 3)
        assert r.recall == pytest.approx(2 / 3)
        assert r.f1 == pytest.approx(2 / 3)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            evaluate([], [])

    def test_alpha_carried(self):
        r = evaluate([1], [1], alpha=0.125)
        assert r.alpha == 0.125
        assert "alpha=0.125" in r.to_text()


class TestTaskFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        trees = random_corpus(rng, 12, min_words=4, max_words=8)
        examples = make_synthetic_task(trees, "distance-label", rng, 30)
        path = tmp_path / "task.tsv"
        write_task_file(path, examples)
        back = read_task_file(path, trees)
        assert back == examples

    def test_unknown_sentence_id(self, tmp_path):
        path = tmp_path / "task.tsv"
        path.write_text("nope\t1:1\t-\t0\n")
        with pytest.raises(ValueError, match="unknown sentence"):
            read_task_file(path, [])


class TestFinetuneLoop:
    def _prepare(self, seed, n_train=40, n_dev=20):
        rng = np.random.default_rng(seed)
        trees = random_corpus(rng, 30, min_words=5, max_words=9, n_word_types=25)
        vocab = train_vocab([t.forms for t in trees], target_size=48)
        cfg = ModelConfig(n_layers=2, d_model=16, n_heads=2, d_ff=24,
                          vocab_size=len(vocab), max_len=32, dist_classes=8,
                          dropout=0.0, dtype="float64")
        task = make_synthetic_task(trees, "distance-label", rng, n_train + n_dev)
        marked = [mark_entities(ex, vocab, distance_mode="undirected") for ex in task]
        backbone = init_params(cfg, seed)
        backbone.update(init_heads(cfg, seed))
        return cfg, backbone, marked[:n_train], marked[n_train:]

    def test_deterministic_reports(self):
        cfg, backbone, train, dev = self._prepare(6)
        a = finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=2, seed=3)
        b = finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=2, seed=3)
        assert a.log_lines == b.log_lines
        assert a.report == b.report

    def test_alpha_report_matches_params_exactly(self):
        cfg, backbone, train, dev = self._prepare(7)
        res = finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=1, seed=4)
        assert res.report.alpha == float(res.params["alpha"])

    def test_freeze_alpha_keeps_it_pinned(self):
        cfg, backbone, train, dev = self._prepare(8)
        res = finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=2,
                            seed=5, freeze_alpha=True)
        assert float(res.params["alpha"]) == float(backbone["alpha"])

    def test_label_out_of_range(self):
        cfg, backbone, train, dev = self._prepare(9, n_train=6, n_dev=2)
        train[0].label = 7
        with pytest.raises(ValueError, match="label"):
            finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=1)

    def test_loss_falls_on_small_task(self):
        cfg, backbone, train, dev = self._prepare(10, n_train=60, n_dev=12)
        res = finetune_loop(backbone, cfg, train, dev, n_classes=4, epochs=4,
                            seed=6, lr=3e-3)
        first = float(res.log_lines[0].split("train_loss=")[1].split()[0])
        last = float(res.log_lines[-2].split("train_loss=")[1].split()[0])
        assert last < first
