"""Vocabulary training, greedy encoding, alignment and the subword edge set."""

import numpy as np
import pytest

from synlm.tokenizer import (
    SPECIALS,
    UNK,
    Alignment,
    Vocab,
    encode,
    subword_graph,
    train_vocab,
)
from synlm.treebank import make_tree


def vocab_from_units(extra):
    return Vocab(units=SPECIALS + tuple(extra))


class TestTrainVocab:
    def test_most_frequent_pair_merged_first(self):
        # "aaab" has pairs (a,a) x2 and (a,b) x1 per word, so "aa" merges first
        vocab = train_vocab([["aaab"], ["aaab"]], target_size=12)
        assert "aa" in vocab.units
        assert len(vocab) == 12

    def test_target_not_above_specials_plus_chars(self):
        with pytest.raises(ValueError):
            train_vocab([["ab"]], target_size=len(SPECIALS))
        with pytest.raises(ValueError):
            train_vocab([["ab"]], target_size=len(SPECIALS) + 2)

    def test_deterministic_save(self, tmp_path):
        corpus = [["banana", "bandana"], ["cabana", "banana"]]
        a = train_vocab(corpus, target_size=24)
        b = train_vocab(corpus, target_size=24)
        pa, pb = tmp_path / "a.vocab", tmp_path / "b.vocab"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()
        assert Vocab.load(pa) == a

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train_vocab([], target_size=32)

    def test_merge_exhaustion_stops_early(self):
        # tiny corpus runs out of pairs before reaching the target
        vocab = train_vocab([["ab"]], target_size=64)
        assert len(vocab) < 64
        assert "ab" in vocab.units

    def test_specials_keep_lowest_ids(self):
        vocab = train_vocab([["xy"]], target_size=12)
        assert vocab.units[: len(SPECIALS)] == SPECIALS


class TestEncode:
    def test_whole_word_in_vocab(self):
        vocab = vocab_from_units(["p", "l", "a", "y", "playing"])
        ids, align = encode(make_tree(["playing"], [0]), vocab)
        assert len(ids) == 1
        assert align.spans == ((0, 1),)
        assert align.first_subword == (0,)

    def test_longest_match_segmentation(self):
        vocab = vocab_from_units(["p", "l", "a", "y", "i", "n", "g", "play", "ing"])
        ids, align = encode(make_tree(["playing"], [0]), vocab)
        assert [vocab.units[i] for i in ids] == ["play", "ing"]
        assert align.spans == ((0, 2),)
        assert align.first_subword == (0,)

    def test_unknown_glyph_becomes_unk(self):
        vocab = vocab_from_units(["a"])
        ids, _ = encode(make_tree(["aZa"], [0]), vocab)
        assert [vocab.units[i] for i in ids] == ["a", UNK, "a"]

    def test_alignment_tiles_random_corpora(self):
        rng = np.random.default_rng(3)
        letters = "abcdefg"
        corpus = [
            ["".join(rng.choice(list(letters), size=rng.integers(1, 8))) for _ in range(5)]
            for _ in range(20)
        ]
        vocab = train_vocab(corpus, target_size=40)
        for words in corpus:
            tree = make_tree(words, [0] + [1] * (len(words) - 1))
            ids1, align1 = encode(tree, vocab)
            ids2, align2 = encode(tree, vocab)
            assert ids1 == ids2 and align1 == align2  # deterministic
            assert align1.n_subwords == len(ids1)
            pos = 0
            for start, stop in align1.spans:
                assert start == pos and stop > start
                pos = stop
            assert pos == len(ids1)

    def test_overlapping_or_empty_spans_rejected(self):
        with pytest.raises(ValueError):
            Alignment(spans=((0, 2), (1, 3)))  # overlap
        with pytest.raises(ValueError):
            Alignment(spans=((0, 0),))  # empty
        with pytest.raises(ValueError):
            Alignment(spans=((2, 3), (0, 1)))  # out of order


class TestSubwordGraph:
    def test_single_subword_words(self):
        tree = make_tree(["a", "b", "c"], [2, 0, 2])
        align = Alignment(spans=((0, 1), (1, 2), (2, 3)))
        edges = subword_graph(tree, align)
        assert sorted(edges) == [(1, 0), (1, 2)]

    def test_head_first_subword_points_at_all_dependent_subwords(self):
        # "playing" -> "frisbee", frisbee split into 2 subwords
        tree = make_tree(["playing", "frisbee"], [0, 1])
        align = Alignment(spans=((0, 1), (1, 3)))
        edges = subword_graph(tree, align, intra_word=False)
        assert sorted(edges) == [(0, 1), (0, 2)]

    def test_intra_word_edges(self):
        tree = make_tree(["multipart"], [0])
        align = Alignment(spans=((0, 3),))
        assert sorted(subword_graph(tree, align)) == [(0, 1), (0, 2)]
        assert subword_graph(tree, align, intra_word=False) == []

    def test_single_single_subword_word(self):
        tree = make_tree(["a"], [0])
        align = Alignment(spans=((0, 1),))
        assert subword_graph(tree, align) == []

    def test_mismatched_lengths(self):
        tree = make_tree(["a", "b"], [0, 1])
        with pytest.raises(ValueError):
            subword_graph(tree, Alignment(spans=((0, 1),)))

    def test_edge_count_and_sources_on_random_sentences(self):
        rng = np.random.default_rng(5)
        letters = "abcd"
        corpus = [
            ["".join(rng.choice(list(letters), size=rng.integers(1, 7))) for _ in range(6)]
            for _ in range(30)
        ]
        vocab = train_vocab(corpus, target_size=16)
        for words in corpus:
            n = len(words)
            heads = [0] + [int(rng.integers(1, i + 1)) for i in range(1, n)]
            tree = make_tree(words, heads)
            ids, align = encode(tree, vocab)
            edges = subword_graph(tree, align)
            span_len = [stop - start for start, stop in align.spans]
            expected = sum(span_len[w] for w in range(n) if heads[w] != 0)
            expected += sum(s - 1 for s in span_len)
            assert len(edges) == expected
            firsts = set(align.first_subword)
            assert all(src in firsts for src, _ in edges)
            assert all(src != dst for src, dst in edges)
