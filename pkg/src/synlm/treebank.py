"""CoNLL-U dependency treebank reading, validation and summary statistics."""

from __future__ import annotations

import io
from dataclasses import dataclass


class ConlluParseError(ValueError):
    """Malformed CoNLL-U input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TreeValidationError(ValueError):
    """Structurally invalid dependency tree; carries the sentence id."""

    def __init__(self, sentence_id: str, message: str):
        super().__init__(f"sentence {sentence_id!r}: {message}")
        self.sentence_id = sentence_id


@dataclass(frozen=True)
class WordNode:
    """One syntactic word: 1-based index, surface form, head index (0 = root)."""

    index: int
    form: str
    head: int
    deprel: str = "_"

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"word index must be >= 1, got {self.index}")
        if self.head < 0:
            raise ValueError(f"head must be >= 0, got {self.head}")
        if self.head == self.index:
            raise ValueError(f"word {self.index} cannot head itself")


@dataclass(frozen=True)
class DependencyTree:
    words: tuple[WordNode, ...]
    sentence_id: str = ""

    def __len__(self) -> int:
        return len(self.words)

    @property
    def heads(self) -> list[int]:
        return [w.head for w in self.words]

    @property
    def forms(self) -> list[str]:
        return [w.form for w in self.words]


def make_tree(forms: list[str], heads: list[int], sentence_id: str = "",
              deprels: list[str] | None = None) -> DependencyTree:
    """Build and validate a tree from parallel form/head lists."""
    if deprels is None:
        deprels = ["_"] * len(forms)
    words = tuple(
        WordNode(index=i + 1, form=f, head=h, deprel=r)
        for i, (f, h, r) in enumerate(zip(forms, heads, deprels))
    )
    return validate_tree(DependencyTree(words=words, sentence_id=sentence_id))


def validate_tree(tree: DependencyTree) -> DependencyTree:
    """Check single-rootedness and acyclicity; return the tree unchanged.

    Every word must reach the unique root by following head pointers.
    """
    n = len(tree.words)
    sid = tree.sentence_id
    roots = [w.index for w in tree.words if w.head == 0]
    if len(roots) == 0:
        raise TreeValidationError(sid, "no root word (no head == 0)")
    if len(roots) > 1:
        raise TreeValidationError(sid, f"multiple roots at words {roots}")
    for w in tree.words:
        if w.head > n:
            raise TreeValidationError(sid, f"word {w.index} head {w.head} out of range (n={n})")
    heads = tree.heads
    for w in tree.words:
        # Walk up; more than n steps means a cycle.
        cur = w.index
        for _ in range(n + 1):
            h = heads[cur - 1]
            if h == 0:
                break
            cur = h
        else:
            raise TreeValidationError(sid, f"cycle reachable from word {w.index}")
    return tree


def tree_depth(tree: DependencyTree) -> int:
    """Node count on the longest root-to-leaf path; a bare root has depth 1."""
    heads = tree.heads
    depth = [0] * (len(heads) + 1)

    def node_depth(i: int) -> int:
        if depth[i]:
            return depth[i]
        h = heads[i - 1]
        d = 1 if h == 0 else node_depth(h) + 1
        depth[i] = d
        return d

    return max(node_depth(i) for i in range(1, len(heads) + 1))


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    mean_token_length: float
    mean_tree_depth: float


def corpus_stats(trees: list[DependencyTree]) -> CorpusStats:
    """Arithmetic per-sentence means of token count and tree depth."""
    if not trees:
        raise ValueError("empty corpus")
    n = len(trees)
    return CorpusStats(
        sentence_count=n,
        mean_token_length=sum(len(t) for t in trees) / n,
        mean_tree_depth=sum(tree_depth(t) for t in trees) / n,
    )


_N_COLUMNS = 10


def parse_conllu(text) -> list[DependencyTree]:
    """Parse CoNLL-U text into validated dependency trees.

    Accepts str, bytes, or a file-like object. Sentences are blank-line
    separated; token lines carry 10 tab-separated columns; comment lines
    start with '#'. Multiword-token ranges ("3-4") and empty nodes ("5.1")
    are skipped. Only index/form/head/deprel are kept.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    elif hasattr(text, "read"):
        text = text.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    trees: list[DependencyTree] = []
    words: list[WordNode] = []
    sent_id: str | None = None

    def flush():
        nonlocal words, sent_id
        if not words:
            sent_id = None
            return
        sid = sent_id if sent_id is not None else str(len(trees) + 1)
        tree = DependencyTree(words=tuple(words), sentence_id=sid)
        trees.append(validate_tree(tree))
        words = []
        sent_id = None

    for line_no, line in enumerate(io.StringIO(text), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "sent_id":
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != _N_COLUMNS:
            raise ConlluParseError(line_no, f"expected {_N_COLUMNS} columns, got {len(cols)}")
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword range / empty node
        try:
            index = int(tok_id)
        except ValueError:
            raise ConlluParseError(line_no, f"non-integer token id {tok_id!r}") from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(line_no, f"non-integer head {cols[6]!r}") from None
        try:
            words.append(WordNode(index=index, form=cols[1], head=head, deprel=cols[7]))
        except ValueError as exc:
            raise ConlluParseError(line_no, str(exc)) from None
    flush()
    return trees


def to_conllu(tree: DependencyTree) -> str:
    """Serialize one tree back to CoNLL-U (unused columns written as '_')."""
    lines = [f"# sent_id = {tree.sentence_id}"]
    for w in tree.words:
        cols = [str(w.index), w.form, "_", "_", "_", "_", str(w.head), w.deprel, "_", "_"]
        lines.append("\t".join(cols))
    lines.append("")
    return "\n".join(lines) + "\n"
