"""Marker-token fine-tuning: task encoding, classifier head, training, metrics.

Entities are wrapped in "@" markers (and "#" for a second entity); markers are
not tree nodes, so their distance rows and columns stay zero. The classifier
reads the opening markers' final-layer states: one marker for single-entity
tasks, the concatenation of both for pair tasks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synlm.distances import compute_distances, normalize
from synlm.model import ModelConfig, backward, forward, init_tensor
from synlm.optim import Adam
from synlm.pretrain import _xent_sum
from synlm.tokenizer import ENT_AT, ENT_HASH, SPECIALS, Alignment, Vocab, encode, subword_graph
from synlm.treebank import DependencyTree

AT_ID = SPECIALS.index(ENT_AT)
HASH_ID = SPECIALS.index(ENT_HASH)


@dataclass(frozen=True)
class TaskExample:
    """Classification instance: marked word span(s) in a tree plus a label."""

    tree: DependencyTree
    span1: tuple[int, int]              # inclusive 1-based word range
    span2: tuple[int, int] | None
    label: int


@dataclass
class MarkedExample:
    """Task example after subword encoding and marker insertion."""

    ids: np.ndarray
    strength: np.ndarray
    dist: np.ndarray
    align: Alignment
    markers: tuple[int, ...]            # opening marker positions, span1 first
    label: int


def _check_span(span, n_words, name):
    a, b = span
    if not (1 <= a <= b <= n_words):
        raise ValueError(f"{name} {span} out of range for {n_words} words")


def mark_entities(example: TaskExample, vocab: Vocab, *,
                  distance_mode: str = "directed",
                  intra_word: bool = True) -> MarkedExample:
    """Insert entity markers at the subword level and re-index distances.

    Distances among original tokens are preserved exactly; marker rows and
    columns are zero. Returns the marked ids, the re-normalized strength
    matrix, the shifted alignment and the opening-marker positions.
    """
    tree = example.tree
    n_words = len(tree)
    _check_span(example.span1, n_words, "span1")
    spans = [(example.span1, AT_ID)]
    if example.span2 is not None:
        _check_span(example.span2, n_words, "span2")
        a1, b1 = example.span1
        a2, b2 = example.span2
        if not (b1 < a2 or b2 < a1):
            raise ValueError(f"spans {example.span1} and {example.span2} overlap")
        spans.append((example.span2, HASH_ID))

    ids, align = encode(tree, vocab)
    n = len(ids)
    dist = compute_distances(subword_graph(tree, align, intra_word=intra_word),
                             n, mode=distance_mode)

    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for (a, b), marker in spans:
        opens.setdefault(align.spans[a - 1][0], []).append(marker)
        closes.setdefault(align.spans[b - 1][1], []).append(marker)

    new_ids: list[int] = []
    new_index = np.zeros(n, dtype=np.int64)
    open_pos: dict[int, int] = {}
    for i in range(n + 1):
        for marker in closes.get(i, ()):   # a closing marker precedes any
            new_ids.append(marker)         # opener at the same boundary
        for marker in opens.get(i, ()):
            open_pos[marker] = len(new_ids)
            new_ids.append(marker)
        if i < n:
            new_index[i] = len(new_ids)
            new_ids.append(ids[i])

    m = len(new_ids)
    new_dist = np.zeros((m, m), dtype=dist.dtype)
    new_dist[np.ix_(new_index, new_index)] = dist
    new_spans = tuple((int(new_index[s]), int(new_index[e - 1]) + 1) for s, e in align.spans)
    markers = (open_pos[AT_ID],) if example.span2 is None else (open_pos[AT_ID], open_pos[HASH_ID])
    return MarkedExample(
        ids=np.array(new_ids, dtype=np.int64),
        strength=normalize(new_dist),
        dist=new_dist,
        align=Alignment(spans=new_spans),
        markers=markers,
        label=example.label,
    )


# ---------------------------------------------------------------------------
# synthetic tasks
# ---------------------------------------------------------------------------

def word_tree_distances(tree: DependencyTree) -> np.ndarray:
    """Undirected word-level tree distances (equals the undirected distance
    between the words' first subwords in the extended graph)."""
    n = len(tree)
    edges = [(w.head - 1, w.index - 1) for w in tree.words if w.head != 0]
    return compute_distances(edges, n, mode="undirected")


def make_synthetic_task(trees: list[DependencyTree], kind: str,
                        rng: np.random.Generator, n_examples: int,
                        n_classes: int = 4) -> list[TaskExample]:
    """Syntax-labeled tasks over random word pairs, with balanced labels.

    distance-label: class = bucketized undirected tree distance of the pair.
    head-pair: class 1 iff span1's word is the head of span2's word.
    """
    if kind not in ("distance-label", "head-pair"):
        raise ValueError(f"unknown task kind {kind!r}")
    if kind == "head-pair":
        n_classes = 2
    quota = [n_examples // n_classes + (1 if c < n_examples % n_classes else 0)
             for c in range(n_classes)]
    out: list[TaskExample] = []
    dist_cache = {id(t): word_tree_distances(t) for t in trees}
    attempts = 0
    max_attempts = 400 * n_examples
    while sum(quota) > 0 and attempts < max_attempts:
        attempts += 1
        tree = trees[int(rng.integers(len(trees)))]
        n = len(tree)
        if n < 3:
            continue  # too short to pick two distinct marked words
        i, j = rng.choice(n, size=2, replace=False) + 1
        i, j = int(i), int(j)
        if kind == "distance-label":
            d = int(dist_cache[id(tree)][i - 1, j - 1])
            label = min(d, n_classes) - 1
        else:
            label = int(tree.words[j - 1].head == i)
        if quota[label] <= 0:
            continue
        quota[label] -= 1
        out.append(TaskExample(tree=tree, span1=(i, i), span2=(j, j), label=label))
    if sum(quota) > 0:
        raise ValueError(f"could not balance labels; remaining quota {quota}")
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    alpha: float | None

    def to_text(self) -> str:
        alpha = "NA" if self.alpha is None else repr(self.alpha)
        return (f"precision={self.precision:.6f} recall={self.recall:.6f} "
                f"f1={self.f1:.6f} accuracy={self.accuracy:.6f} alpha={alpha}")


def evaluate(predictions, golds, *, multi_label: bool = False,
             alpha: float | None = None) -> EvalReport:
    """Micro precision/recall/F1 plus accuracy.

    Single-label mode scores int predictions, where micro P = R = F1 =
    accuracy. Multi-label mode scores label sets; accuracy is exact match.
    """
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds differ in length")
    if len(predictions) == 0:
        raise ValueError("empty evaluation set")
    if multi_label:
        tp = fp = fn = exact = 0
        for p, g in zip(predictions, golds):
            p, g = set(p), set(g)
            tp += len(p & g)
            fp += len(p - g)
            fn += len(g - p)
            exact += p == g
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return EvalReport(precision, recall, f1, exact / len(predictions), alpha)
    hits = sum(int(p == g) for p, g in zip(predictions, golds))
    acc = hits / len(predictions)
    return EvalReport(acc, acc, acc, acc, alpha)


# ---------------------------------------------------------------------------
# fine-tuning loop
# ---------------------------------------------------------------------------

@dataclass
class FinetuneResult:
    params: dict[str, np.ndarray]
    report: EvalReport
    log_lines: list[str]


def _batch_marked(chunk: list[MarkedExample], cfg: ModelConfig):
    B = len(chunk)
    T = max(len(ex.ids) for ex in chunk)
    dt = cfg.np_dtype
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=dt)
    strength = np.zeros((B, T, T), dtype=dt)
    for b, ex in enumerate(chunk):
        n = len(ex.ids)
        ids[b, :n] = ex.ids
        mask[b, :n] = 1.0
        strength[b, :n, :n] = ex.strength
    markers = np.array([ex.markers for ex in chunk], dtype=np.int64)
    labels = np.array([ex.label for ex in chunk], dtype=np.int64)
    return ids, mask, strength, markers, labels


def _classify(h_final, markers):
    reps = [h_final[np.arange(len(markers)), markers[:, k]] for k in range(markers.shape[1])]
    return np.concatenate(reps, axis=1)


def predict(params: dict, cfg: ModelConfig, examples: list[MarkedExample],
            batch_size: int = 32) -> np.ndarray:
    """Greedy class predictions, dropout off."""
    preds = []
    for lo in range(0, len(examples), batch_size):
        ids, mask, strength, markers, _ = _batch_marked(examples[lo:lo + batch_size], cfg)
        trace = forward(params, cfg, ids, strength if cfg.syntax_enabled else None, mask)
        x = _classify(trace.h_final, markers)
        logits = x @ params["cls_w"] + params["cls_b"]
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds)


def finetune_loop(backbone: dict[str, np.ndarray], cfg: ModelConfig,
                  train_examples: list[MarkedExample],
                  dev_examples: list[MarkedExample], n_classes: int, *,
                  lr: float = 1e-4, epochs: int = 5, batch_size: int = 16,
                  seed: int = 42, freeze_alpha: bool = False,
                  log=None) -> FinetuneResult:
    """Cross-entropy over a linear head on the marker states; Adam at a fixed
    small learning rate; the best-dev parameter set is retained."""
    if not train_examples:
        raise ValueError("no training examples")
    arity = len(train_examples[0].markers)
    for ex in train_examples + dev_examples:
        if not 0 <= ex.label < n_classes:
            raise ValueError(f"label {ex.label} out of range for {n_classes} classes")
        if len(ex.markers) != arity:
            raise ValueError("mixed task arities in one run")

    params = {k: v.copy() for k, v in backbone.items()}
    dt = cfg.np_dtype
    params["cls_w"] = init_tensor("cls_w", (arity * cfg.d_model, n_classes), seed, dt)
    params["cls_b"] = np.zeros(n_classes, dtype=dt)
    opt = Adam(params, weight_decay=0.0)
    frozen = frozenset({"alpha"}) if freeze_alpha else frozenset()

    root = np.random.SeedSequence(seed)
    sq_shuffle, sq_dropout = root.spawn(2)
    rng_shuffle = np.random.default_rng(sq_shuffle)
    rng_dropout = np.random.default_rng(sq_dropout)

    lines: list[str] = []

    def emit(line):
        lines.append(line)
        if log is not None:
            log(line)

    best_acc, best_params = -1.0, None
    for epoch in range(1, epochs + 1):
        order = rng_shuffle.permutation(len(train_examples))
        loss_sum, n_batches = 0.0, 0
        for lo in range(0, len(order), batch_size):
            chunk = [train_examples[i] for i in order[lo:lo + batch_size]]
            ids, mask, strength, markers, labels = _batch_marked(chunk, cfg)
            trace = forward(params, cfg, ids, strength if cfg.syntax_enabled else None,
                            mask, train=True, rng=rng_dropout)
            x = _classify(trace.h_final, markers)
            logits = x @ params["cls_w"] + params["cls_b"]
            total, dlogits, _ = _xent_sum(logits, labels)
            dlogits /= len(labels)
            dx = dlogits @ params["cls_w"].T
            dh = np.zeros_like(trace.h_final)
            rows = np.arange(len(chunk))
            for k in range(arity):
                np.add.at(dh, (rows, markers[:, k]),
                          dx[:, k * cfg.d_model:(k + 1) * cfg.d_model])
            grads = backward(params, cfg, trace, dh)
            grads["cls_w"] = x.T @ dlogits
            grads["cls_b"] = dlogits.sum(axis=0)
            if frozen:
                grads = {k: v for k, v in grads.items() if k not in frozen}
            opt.step(params, grads, lr)
            loss_sum += total / len(labels)
            n_batches += 1
        dev_acc = float("nan")
        if dev_examples:
            preds = predict(params, cfg, dev_examples)
            golds = np.array([ex.label for ex in dev_examples])
            dev_acc = float((preds == golds).mean())
            if dev_acc > best_acc:
                best_acc = dev_acc
                best_params = {k: v.copy() for k, v in params.items()}
        emit(f"epoch={epoch} train_loss={loss_sum / n_batches:.6f} dev_acc={dev_acc:.4f}")

    if best_params is not None:
        params = best_params
    preds = predict(params, cfg, dev_examples or train_examples)
    golds = np.array([ex.label for ex in (dev_examples or train_examples)])
    alpha = float(params["alpha"]) if "alpha" in params and params["alpha"].ndim == 0 else (
        float(params["alpha"].mean()) if "alpha" in params else None)
    report = evaluate(list(preds), list(golds), alpha=alpha)
    emit("report " + report.to_text())
    return FinetuneResult(params=params, report=report, log_lines=lines)


# ---------------------------------------------------------------------------
# task files
# ---------------------------------------------------------------------------

def write_task_file(path, examples: list[TaskExample]) -> None:
    """One record per line: sentence_id, span1, span2 ("-" if absent), label."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            s2 = "-" if ex.span2 is None else f"{ex.span2[0]}:{ex.span2[1]}"
            fh.write(f"{ex.tree.sentence_id}\t{ex.span1[0]}:{ex.span1[1]}\t{s2}\t{ex.label}\n")


def read_task_file(path, trees: list[DependencyTree]) -> list[TaskExample]:
    by_id = {t.sentence_id: t for t in trees}
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                sid, s1, s2, label = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{line_no}: expected 4 tab-separated fields") from None
            if sid not in by_id:
                raise ValueError(f"{path}:{line_no}: unknown sentence id {sid!r}")
            a, b = s1.split(":")
            span2 = None
            if s2 != "-":
                c, d = s2.split(":")
                span2 = (int(c), int(d))
            out.append(TaskExample(tree=by_id[sid], span1=(int(a), int(b)),
                                   span2=span2, label=int(label)))
    return out
