"""Treebank reader, validator and statistics."""

import numpy as np
import pytest

from synlm.treebank import (
    ConlluParseError,
    DependencyTree,
    TreeValidationError,
    WordNode,
    corpus_stats,
    make_tree,
    parse_conllu,
    to_conllu,
    tree_depth,
    validate_tree,
)

FIG_SENTENCE = """\
# sent_id = fig1
1\tMy\tmy\tPRON\tPRP$\t_\t2\tnmod:poss\t_\t_
2\tdog\tdog\tNOUN\tNN\t_\t4\tnsubj\t_\t_
3\tis\tbe\tAUX\tVBZ\t_\t4\taux\t_\t_
4\tplaying\tplay\tVERB\tVBG\t_\t0\troot\t_\t_
5\tfrisbee\tfrisbee\tNOUN\tNN\t_\t4\tobj\t_\t_
6\toutside\toutside\tADP\tIN\t_\t8\tcase\t_\t_
7\tthe\tthe\tDET\tDT\t_\t8\tdet\t_\t_
8\troom\troom\tNOUN\tNN\t_\t4\tobl\t_\t_
"""


def _line(idx, form, head):
    return f"{idx}\t{form}\t_\t_\t_\t_\t{head}\t_\t_\t_"


class TestParse:
    def test_minimal_two_word_sentence(self):
        trees = parse_conllu(_line(1, "dog", 2) + "\n" + _line(2, "barks", 0) + "\n")
        assert len(trees) == 1
        assert trees[0].heads == [2, 0]
        assert trees[0].words[1].head == 0  # root at word 2

    def test_head_of_frisbee_is_playing(self):
        (tree,) = parse_conllu(FIG_SENTENCE)
        forms = tree.forms
        frisbee = tree.words[forms.index("frisbee")]
        assert frisbee.head == forms.index("playing") + 1
        assert tree.sentence_id == "fig1"

    def test_non_integer_head_is_a_parse_error_with_line_number(self):
        text = _line(1, "a", 2) + "\n" + _line(2, "b", "x") + "\n"
        with pytest.raises(ConlluParseError) as err:
            parse_conllu(text)
        assert err.value.line_no == 2

    def test_wrong_column_count(self):
        with pytest.raises(ConlluParseError):
            parse_conllu("1\tdog\t0\n")

    def test_multiword_ranges_and_empty_nodes_skipped(self):
        text = "\n".join([
            "1-2\tcannot\t_\t_\t_\t_\t_\t_\t_\t_",
            _line(1, "can", 2),
            _line(2, "not", 0),
            "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_",
        ])
        (tree,) = parse_conllu(text)
        assert tree.forms == ["can", "not"]

    def test_multi_root_sentence_rejected_with_sentence_id(self):
        text = "# sent_id = bad\n" + _line(1, "a", 0) + "\n" + _line(2, "b", 0) + "\n"
        with pytest.raises(TreeValidationError) as err:
            parse_conllu(text)
        assert err.value.sentence_id == "bad"

    def test_accepts_bytes_and_file_objects(self, tmp_path):
        text = _line(1, "x", 0) + "\n"
        assert parse_conllu(text.encode()) == parse_conllu(text)
        p = tmp_path / "a.conllu"
        p.write_text(text)
        with open(p) as fh:
            assert parse_conllu(fh) == parse_conllu(text)


class TestValidate:
    def test_chain_is_valid(self):
        tree = make_tree(["a", "b", "c"], [0, 1, 2])
        assert validate_tree(tree) is tree

    def test_two_cycle_without_root(self):
        words = (WordNode(1, "a", 2), WordNode(2, "b", 1))
        with pytest.raises(TreeValidationError, match="no root"):
            validate_tree(DependencyTree(words=words, sentence_id="s"))

    def test_cycle_with_root_elsewhere(self):
        words = (WordNode(1, "a", 0), WordNode(2, "b", 3), WordNode(3, "c", 2))
        with pytest.raises(TreeValidationError, match="cycle"):
            validate_tree(DependencyTree(words=words, sentence_id="s"))

    def test_double_root(self):
        words = (WordNode(1, "a", 0), WordNode(2, "b", 0))
        with pytest.raises(TreeValidationError, match="multiple roots"):
            validate_tree(DependencyTree(words=words, sentence_id="s"))

    def test_head_out_of_range(self):
        words = (WordNode(1, "a", 0), WordNode(2, "b", 5))
        with pytest.raises(TreeValidationError, match="out of range"):
            validate_tree(DependencyTree(words=words, sentence_id="s"))

    def test_self_head_rejected_at_construction(self):
        with pytest.raises(ValueError):
            WordNode(2, "b", 2)

    def test_matches_brute_force_reachability_oracle(self):
        # Oracle: valid iff exactly one zero head and following head pointers
        # from every node reaches that root without revisiting a node.
        rng = np.random.default_rng(7)
        agree = 0
        for _ in range(500):
            n = int(rng.integers(1, 11))
            heads = [int(h) for h in rng.integers(0, n + 1, size=n)]
            heads = [h if h != i + 1 else 0 for i, h in enumerate(heads)]

            def oracle_ok(heads):
                if heads.count(0) != 1:
                    return False
                for start in range(1, len(heads) + 1):
                    seen, cur = set(), start
                    while heads[cur - 1] != 0:
                        cur = heads[cur - 1]
                        if cur in seen:
                            return False
                        seen.add(cur)
                return True

            words = tuple(WordNode(i + 1, "w", h) for i, h in enumerate(heads))
            tree = DependencyTree(words=words, sentence_id="r")
            try:
                validate_tree(tree)
                ok = True
            except TreeValidationError:
                ok = False
            assert ok == oracle_ok(heads)
            agree += 1
        assert agree == 500


class TestDepth:
    def test_single_word(self):
        assert tree_depth(make_tree(["a"], [0])) == 1

    def test_chain_of_four(self):
        # longest root-to-leaf path visits all 4 nodes
        assert tree_depth(make_tree(list("abcd"), [0, 1, 2, 3])) == 4

    def test_star_of_five(self):
        # every leaf hangs directly off the root
        assert tree_depth(make_tree(list("abcde"), [0, 1, 1, 1, 1])) == 2


class TestStats:
    def test_mean_token_length(self):
        trees = [make_tree(["a"] * 3, [0, 1, 1]), make_tree(["b"] * 5, [0, 1, 1, 1, 1])]
        stats = corpus_stats(trees)
        assert stats.mean_token_length == 4.0
        assert stats.sentence_count == 2

    def test_single_word_corpus(self):
        stats = corpus_stats([make_tree(["a"], [0])])
        assert stats.mean_token_length == 1.0
        assert stats.mean_tree_depth == 1.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            corpus_stats([])


class TestRoundTrip:
    def test_random_trees_round_trip(self):
        rng = np.random.default_rng(11)
        forms_pool = ["alpha", "beta", "gamma", "delta", "x", "longerword"]
        for case in range(200):
            n = int(rng.integers(1, 12))
            heads = [0] + [int(rng.integers(1, i + 1)) for i in range(1, n)]
            forms = [forms_pool[int(rng.integers(len(forms_pool)))] for _ in range(n)]
            tree = make_tree(forms, heads, sentence_id=f"s{case}")
            (back,) = parse_conllu(to_conllu(tree))
            assert back == tree

    def test_fig_sentence_round_trips(self):
        (tree,) = parse_conllu(FIG_SENTENCE)
        (back,) = parse_conllu(to_conllu(tree))
        assert back == tree
