"""Subword vocabulary, word/subword alignment and the subword edge set.

Word-level head relations are rewritten at the subword level: the head
word's first subword points at every subword of the dependent word, and
(optionally) at its own trailing subwords. All subword indices are 0-based.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from synlm.treebank import DependencyTree

PAD, UNK, MASK, SEP_OPEN, SEP_CLOSE, ENT_AT, ENT_HASH = (
    "<pad>", "<unk>", "<mask>", "<sep>", "</sep>", "@", "#",
)
SPECIALS = (PAD, UNK, MASK, SEP_OPEN, SEP_CLOSE, ENT_AT, ENT_HASH)


@dataclass(frozen=True)
class Vocab:
    """Dense subword vocabulary; special tokens occupy the lowest ids."""

    units: tuple[str, ...]

    def __post_init__(self):
        if self.units[: len(SPECIALS)] != SPECIALS:
            raise ValueError("special tokens must occupy the lowest ids")
        if len(set(self.units)) != len(self.units):
            raise ValueError("duplicate vocabulary units")

    def __len__(self) -> int:
        return len(self.units)

    @property
    def id_of(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.units)}

    @property
    def n_specials(self) -> int:
        return len(SPECIALS)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for u in self.units:
                fh.write(u + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            units = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
        return cls(units=units)


def train_vocab(corpus, target_size: int) -> Vocab:
    """Learn a byte-pair-merge vocabulary from an iterable of word lists.

    Starts from single characters and repeatedly merges the most frequent
    adjacent pair, ties broken lexicographically, until target_size units
    exist or no pairs remain. Deterministic for a fixed corpus.
    """
    word_freq: Counter[str] = Counter()
    for sentence in corpus:
        word_freq.update(sentence)
    if not word_freq:
        raise ValueError("empty corpus")

    chars = sorted({c for w in word_freq for c in w})
    if target_size <= len(SPECIALS) + len(chars):
        raise ValueError(
            f"target_size {target_size} must exceed "
            f"{len(SPECIALS)} specials + {len(chars)} characters"
        )

    units = list(SPECIALS) + [c for c in chars if c not in SPECIALS]
    # words as mutable symbol sequences, weighted by frequency
    pieces = {w: list(w) for w in word_freq}

    while len(units) < target_size:
        pairs: Counter[tuple[str, str]] = Counter()
        for w, seq in pieces.items():
            f = word_freq[w]
            for a, b in zip(seq, seq[1:]):
                pairs[(a, b)] += f
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merged = best[0] + best[1]
        for w, seq in pieces.items():
            out, i = [], 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            pieces[w] = out
        if merged not in units:  # distinct merges can yield the same string
            units.append(merged)
    return Vocab(units=tuple(units))


@dataclass(frozen=True)
class Alignment:
    """Per word, the half-open subword index range it occupies.

    Spans are ordered and non-overlapping; they tile the sequence exactly
    when it contains no special tokens (gaps may only sit at marker tokens
    inserted later by task encoding).
    """

    spans: tuple[tuple[int, int], ...]

    @property
    def first_subword(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.spans)

    @property
    def n_subwords(self) -> int:
        return self.spans[-1][1] if self.spans else 0

    def __post_init__(self):
        pos = 0
        for start, stop in self.spans:
            if start < pos or stop <= start:
                raise ValueError(f"spans must be ordered and non-empty, bad span ({start},{stop})")
            pos = stop


def encode(tree: DependencyTree, vocab: Vocab) -> tuple[list[int], Alignment]:
    """Greedy longest-match segmentation of each word; UNK per unmatched char.

    No sequence-level special tokens are added; task heads insert their own.
    """
    id_of = vocab.id_of
    unk = id_of[UNK]
    max_unit = max(len(u) for u in vocab.units)
    ids: list[int] = []
    spans: list[tuple[int, int]] = []
    for w in tree.words:
        start = len(ids)
        text, i = w.form, 0
        while i < len(text):
            for j in range(min(len(text), i + max_unit), i, -1):
                unit_id = id_of.get(text[i:j])
                if unit_id is not None:
                    ids.append(unit_id)
                    i = j
                    break
            else:
                ids.append(unk)
                i += 1
        spans.append((start, len(ids)))
    return ids, Alignment(spans=tuple(spans))


def subword_graph(tree: DependencyTree, align: Alignment,
                  intra_word: bool = True) -> list[tuple[int, int]]:
    """Directed subword edges induced by the tree's head relations.

    For each head relation (v heads u): first_subword(v) -> every subword
    of u. With intra_word, each word's first subword additionally points at
    its own trailing subwords so they stay reachable in the directed graph.
    """
    if len(tree.words) != len(align.spans):
        raise ValueError(
            f"tree has {len(tree.words)} words but alignment has {len(align.spans)} spans"
        )
    first = align.first_subword
    edges: list[tuple[int, int]] = []
    for w in tree.words:
        if w.head != 0:
            src = first[w.head - 1]
            start, stop = align.spans[w.index - 1]
            edges.extend((src, s) for s in range(start, stop))
        if intra_word:
            start, stop = align.spans[w.index - 1]
            edges.extend((start, s) for s in range(start + 1, stop))
    return edges
