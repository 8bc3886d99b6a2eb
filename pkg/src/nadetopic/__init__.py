"""Supervised neural autoregressive topic model for bag-of-visual-words
classification and annotation."""

from nadetopic.corpus import (
    Document,
    JointVocab,
    annotation_index,
    gen_synthetic,
    joint_index,
    load_corpus,
    save_corpus,
)
from nadetopic.errors import (
    BoundsError,
    FormatError,
    NadeTopicError,
    ShapeMismatchError,
    ValidationError,
)
from nadetopic.model import (
    HiddenState,
    ModelParams,
    class_posterior,
    extract_representation,
    init_params,
    inspect_class_associations,
    joint_nll,
    predict_annotations,
    predict_class,
)
from nadetopic.trainer import (
    Gradients,
    TrainConfig,
    compute_gradients,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
    train_epoch,
)
from nadetopic.wordtree import WordTree, build_balanced

__version__ = "0.1.0"
