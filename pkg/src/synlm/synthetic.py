"""Random tree corpora for desk-scale experiments.

Structures are uniform labeled trees (decoded from random sequences per
Pruefer), so tree distance carries no information about linear word order or
word identity: a model can only recover it from the syntax input.
"""

from __future__ import annotations

import heapq

import numpy as np

from synlm.treebank import DependencyTree, make_tree


def pruefer_heads(rng: np.random.Generator, n: int) -> list[int]:
    """Heads of a uniform random labeled tree on n nodes, rooted at a random
    node (standard Pruefer-sequence decoding)."""
    if n == 1:
        return [0]
    if n == 2:
        root = int(rng.integers(2))
        return [0, 1] if root == 0 else [2, 0]
    seq = rng.integers(0, n, size=n - 2)
    deg = np.ones(n, dtype=np.int64)
    for x in seq:
        deg[x] += 1
    edges = []
    leaves = [i for i in range(n) if deg[i] == 1]
    heapq.heapify(leaves)
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(x)))
        deg[x] -= 1
        if deg[x] == 1:
            heapq.heappush(leaves, int(x))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))

    root = int(rng.integers(n))
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    heads = [0] * n
    seen = [False] * n
    stack = [root]
    seen[root] = True
    while stack:
        node = stack.pop()
        for nxt in adj[node]:
            if not seen[nxt]:
                seen[nxt] = True
                heads[nxt] = node + 1
                stack.append(nxt)
    return heads


def random_word(rng: np.random.Generator, alphabet: str = "abcdefgh") -> str:
    length = int(rng.integers(3, 7))
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=length))


def random_corpus(rng: np.random.Generator, n_sentences: int,
                  min_words: int = 6, max_words: int = 12,
                  n_word_types: int = 120) -> list[DependencyTree]:
    """Random trees over a fixed word pool, one tree per sentence."""
    pool = sorted({random_word(rng) for _ in range(n_word_types * 2)})[:n_word_types]
    trees = []
    for s in range(n_sentences):
        n = int(rng.integers(min_words, max_words + 1))
        forms = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        heads = pruefer_heads(rng, n)
        trees.append(make_tree(forms, heads, sentence_id=f"s{s + 1}"))
    return trees
