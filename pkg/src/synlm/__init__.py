"""Syntax-aware transformer language model, desk scale, pure numpy.

Pipeline: CoNLL-U trees -> subword encoding with word/subword alignment ->
directed tree-distance matrices -> inverse-distance attention strengths ->
transformer with a learned mix of contextual and syntax-aggregated states,
jointly pre-trained on masked-token, head-position and tree-distance
prediction, then fine-tuned on marker-token classification tasks.
"""

from synlm.treebank import (
    DependencyTree,
    WordNode,
    ConlluParseError,
    TreeValidationError,
    parse_conllu,
    to_conllu,
    tree_depth,
    corpus_stats,
    validate_tree,
)
from synlm.tokenizer import Vocab, Alignment, SPECIALS, train_vocab, encode, subword_graph
from synlm.distances import (
    DIST_MASK,
    DpCorruption,
    bucketize,
    compute_distances,
    corrupt_for_dp,
    corrupted_strength,
    normalize,
)
from synlm.model import ModelConfig, init_params, forward, backward, finite_diff_check
from synlm.checkpoint import save_checkpoint, load_checkpoint, CheckpointError

__version__ = "0.1.0"
