"""Command-line entry point: one executable, eight subcommands.

  stats        corpus summary of a CoNLL-U file
  build-vocab  learn a subword vocabulary
  preprocess   encode a treebank into a binary pre-training corpus
  pretrain     run the joint pre-training loop
  finetune     fine-tune a checkpoint on a marker-token task
  eval         score a fine-tuned checkpoint on a task file
  distances    dump the distance and strength matrices of one sentence
  gradcheck    verify analytic gradients against finite differences

Every command accepts `--config FILE` plus `--key value` overrides and echoes
the resolved configuration. Exit codes: 1 usage, 2 config, 3 data, 4 numeric.
"""

from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from synlm.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from synlm.distances import compute_distances, normalize
from synlm.finetune import finetune_loop, mark_entities, predict, evaluate, read_task_file
from synlm.model import NumericsError
from synlm.pretrain import preprocess_trees, pretrain_loop, read_corpus, run_gradcheck, write_corpus
from synlm.runconfig import ConfigError, RunConfig, load_config
from synlm.tokenizer import Vocab, encode, subword_graph, train_vocab
from synlm.treebank import ConlluParseError, TreeValidationError, corpus_stats, parse_conllu

USAGE = __doc__

COMMANDS = ("stats", "build-vocab", "preprocess", "pretrain", "finetune",
            "eval", "distances", "gradcheck")

EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_args(argv: list[str]) -> tuple[str, str | None, dict[str, str]]:
    if not argv or argv[0] in ("-h", "--help"):
        raise UsageError(USAGE)
    command = argv[0]
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    config_path = None
    overrides: dict[str, str] = {}
    rest = argv[1:]
    i = 0
    while i < len(rest):
        flag = rest[i]
        if not flag.startswith("--"):
            raise UsageError(f"expected --key value pairs, got {flag!r}")
        if i + 1 >= len(rest):
            raise UsageError(f"flag {flag} is missing a value")
        key, value = flag[2:].replace("-", "_"), rest[i + 1]
        if key == "config":
            config_path = value
        else:
            overrides[key] = value
        i += 2
    return command, config_path, overrides


def _need(cfg: RunConfig, *keys: str):
    for key in keys:
        if not getattr(cfg, key):
            raise ConfigError(f"{key} must be set for this command")


def _read_trees(cfg: RunConfig):
    try:
        with open(cfg.conllu_path, "rb") as fh:
            return parse_conllu(fh)
    except FileNotFoundError:
        raise DataError(f"CoNLL-U file not found: {cfg.conllu_path}") from None


def _load_vocab(cfg: RunConfig) -> Vocab:
    try:
        return Vocab.load(cfg.vocab_path)
    except FileNotFoundError:
        raise DataError(f"vocabulary file not found: {cfg.vocab_path}") from None


def _run_dir(cfg: RunConfig) -> str:
    out = cfg.out_dir or os.path.join("runs", f"{cfg.digest()}-{time.strftime('%Y%m%d-%H%M%S')}")
    os.makedirs(out, exist_ok=True)
    return out


def _echo(cfg: RunConfig):
    print("# resolved configuration")
    print(cfg.to_text())


def cmd_stats(cfg: RunConfig) -> int:
    _need(cfg, "conllu_path")
    trees = _read_trees(cfg)
    if not trees:
        raise DataError(f"no sentences in {cfg.conllu_path}")
    stats = corpus_stats(trees)
    print(f"sentence_count = {stats.sentence_count}")
    print(f"mean_token_length = {stats.mean_token_length:.6f}")
    print(f"mean_tree_depth = {stats.mean_tree_depth:.6f}")
    return 0


def cmd_build_vocab(cfg: RunConfig) -> int:
    _need(cfg, "conllu_path", "vocab_path")
    trees = _read_trees(cfg)
    try:
        vocab = train_vocab([t.forms for t in trees], target_size=cfg.vocab_target)
    except ValueError as exc:
        if "target_size" in str(exc):
            raise ConfigError(str(exc)) from None
        raise DataError(str(exc)) from None
    vocab.save(cfg.vocab_path)
    print(f"vocab_size = {len(vocab)}")
    print(f"vocab_path = {cfg.vocab_path}")
    return 0


def cmd_preprocess(cfg: RunConfig) -> int:
    _need(cfg, "conllu_path", "vocab_path", "corpus_path")
    trees = _read_trees(cfg)
    vocab = _load_vocab(cfg)

    def work(chunk):
        return preprocess_trees(chunk, vocab, distance_mode=cfg.distance_mode,
                                intra_word=cfg.intra_word_edges, max_len=cfg.max_len)

    if cfg.workers > 1 and len(trees) > 1:
        size = (len(trees) + cfg.workers - 1) // cfg.workers
        chunks = [trees[i:i + size] for i in range(0, len(trees), size)]
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, chunks))
        examples = [ex for exs, _ in parts for ex in exs]
        skipped = sum(sk for _, sk in parts)
    else:
        examples, skipped = work(trees)
    if not examples:
        raise DataError("no usable sentences after preprocessing")
    write_corpus(cfg.corpus_path, examples)
    print(f"examples = {len(examples)}")
    print(f"skipped_overlong = {skipped}")
    print(f"corpus_path = {cfg.corpus_path}")
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    _need(cfg, "corpus_path")
    try:
        examples = read_corpus(cfg.corpus_path)
    except FileNotFoundError:
        raise DataError(f"corpus file not found: {cfg.corpus_path}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = _run_dir(cfg)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(cfg.to_text())
    model_cfg = cfg.model_config()
    with open(os.path.join(out, "metrics.log"), "w") as fh:
        result = pretrain_loop(
            examples, model_cfg, cfg.schedule(), enable_dp=cfg.enable_dp,
            enable_hp=cfg.enable_hp, mlm_rate=cfg.mlm_rate, dp_rate=cfg.dp_rate,
            dp_mask_policy=cfg.dp_mask_policy, out_dir=out,
            checkpoint_every=cfg.checkpoint_every,
            log=lambda line: print(line, file=fh),
        )
    for key, value in sorted(result.final_metrics.items()):
        print(f"{key} = {value:.6f}")
    print(f"checkpoint = {os.path.join(out, 'model.ckpt')}")
    print(f"metrics = {os.path.join(out, 'metrics.log')}")
    return 0


def _prepare_task(cfg: RunConfig, vocab: Vocab, trees, path: str):
    try:
        examples = read_task_file(path, trees)
    except FileNotFoundError:
        raise DataError(f"task file not found: {path}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return [mark_entities(ex, vocab, distance_mode=cfg.distance_mode,
                          intra_word=cfg.intra_word_edges) for ex in examples]


def cmd_finetune(cfg: RunConfig) -> int:
    _need(cfg, "checkpoint_path", "conllu_path", "vocab_path", "task_path")
    model_cfg, backbone = load_checkpoint(cfg.checkpoint_path)
    trees = _read_trees(cfg)
    vocab = _load_vocab(cfg)
    train = _prepare_task(cfg, vocab, trees, cfg.task_path)
    dev = _prepare_task(cfg, vocab, trees, cfg.dev_task_path) if cfg.dev_task_path else []
    out = _run_dir(cfg)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(cfg.to_text())
    try:
        with open(os.path.join(out, "metrics.log"), "w") as fh:
            result = finetune_loop(
                backbone, model_cfg, train, dev, n_classes=cfg.ft_classes,
                lr=cfg.ft_lr, epochs=cfg.ft_epochs, batch_size=cfg.ft_batch_size,
                seed=cfg.seed, freeze_alpha=cfg.freeze_alpha,
                log=lambda line: print(line, file=fh),
            )
    except ValueError as exc:
        raise DataError(str(exc)) from None
    ckpt = os.path.join(out, "model.ckpt")
    save_checkpoint(ckpt, model_cfg, result.params)
    # quote alpha as stored, so the report matches the checkpoint bit for bit
    _, reloaded = load_checkpoint(ckpt)
    report = result.report
    if "alpha" in reloaded:
        report = evaluate([0], [0], alpha=float(reloaded["alpha"]))._replace_with(result.report)
    print(report.to_text())
    print(f"checkpoint = {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _need(cfg, "checkpoint_path", "conllu_path", "vocab_path", "task_path")
    model_cfg, params = load_checkpoint(cfg.checkpoint_path)
    if "cls_w" not in params:
        raise DataError("checkpoint has no classifier head; run finetune first")
    trees = _read_trees(cfg)
    vocab = _load_vocab(cfg)
    examples = _prepare_task(cfg, vocab, trees, cfg.task_path)
    if not examples:
        raise DataError("empty evaluation set")
    preds = predict(params, model_cfg, examples)
    golds = [ex.label for ex in examples]
    alpha = float(params["alpha"]) if "alpha" in params and params["alpha"].ndim == 0 else None
    report = evaluate(list(preds), golds, alpha=alpha)
    print(report.to_text())
    return 0


def cmd_distances(cfg: RunConfig) -> int:
    _need(cfg, "conllu_path")
    trees = _read_trees(cfg)
    if not trees:
        raise DataError(f"no sentences in {cfg.conllu_path}")
    if cfg.sentence_id:
        match = [t for t in trees if t.sentence_id == cfg.sentence_id]
        if not match:
            raise DataError(f"sentence id {cfg.sentence_id!r} not found")
        tree = match[0]
    else:
        tree = trees[0]
    if cfg.vocab_path:
        vocab = _load_vocab(cfg)
        ids, align = encode(tree, vocab)
        tokens = [vocab.units[i] for i in ids]
    else:
        # word-identity tokenization: one subword per word
        from synlm.tokenizer import Alignment

        tokens = tree.forms
        align = Alignment(spans=tuple((i, i + 1) for i in range(len(tokens))))
    edges = subword_graph(tree, align, intra_word=cfg.intra_word_edges)
    dist = compute_distances(edges, len(tokens), mode=cfg.distance_mode)
    strength = normalize(dist)
    print(f"sentence_id = {tree.sentence_id}")
    print("tokens: " + " ".join(f"{i}={tok}" for i, tok in enumerate(tokens)))
    width = max(2, len(str(int(dist.max())))) if dist.size else 2
    print("D:")
    for row in dist:
        print(" ".join(f"{int(v):>{width}d}" for v in row))
    print("Dt:")
    for row in strength:
        print(" ".join(f"{v:8.5f}" for v in row))
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    err = run_gradcheck(cfg.model_config(), seed=cfg.seed,
                        n_samples=cfg.gradcheck_samples,
                        epsilon=cfg.gradcheck_epsilon)
    print(f"max_rel_err = {err:.6e}")
    print(f"threshold = {cfg.gradcheck_threshold:.6e}")
    if err >= cfg.gradcheck_threshold:
        raise NumericsError(f"gradient check failed: {err:.3e} >= {cfg.gradcheck_threshold:.3e}")
    print("gradcheck = pass")
    return 0


HANDLERS = {
    "stats": cmd_stats,
    "build-vocab": cmd_build_vocab,
    "preprocess": cmd_preprocess,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "distances": cmd_distances,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, config_path, overrides = _parse_args(argv)
        try:
            cfg = load_config(config_path, overrides)
        except KeyError as exc:
            raise UsageError(f"unknown flag --{exc.args[0]}") from None
        _echo(cfg)
        return HANDLERS[command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ConlluParseError, TreeValidationError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
