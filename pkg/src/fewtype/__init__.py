"""Few-shot fine-grained entity typing over a frozen masked language model.

The engine learns a label-by-token correlation matrix (the verbalizer)
from K-shot mentions and a label hierarchy, and enlarges the training
set by generating new same-type mentions through multi-mask prompt
infilling against a masked-LM provider.
"""

from .backend import (
    CachedProvider,
    HttpProvider,
    LexicalOracle,
    MaskedLMProvider,
    RenderedPrompt,
    SyntheticOracle,
    Vocab,
)
from .config import Hyperparams, RunConfig, load_config
from .correlation import CorrelationMatrix, init_correlation, map_to_labels, word_to_type
from .data import MentionExample, load_dataset, sample_few_shot
from .errors import ConfigError, ContractError, DataError, FewtypeError, TransportError
from .estimator import FewShotTypeClassifier
from .generation import fill_masks, generate_instances, predict_type_word
from .hierarchy import LabelHierarchy, LabelPath, build_hierarchy, parse_label_path
from .metrics import EvalResult, evaluate
from .prompts import TemplateSpec, render_generation, render_typing
from .training import Trainer, beta_schedule, predict, smooth_label, train

__version__ = "0.1.0"

__all__ = [
    "CachedProvider",
    "ConfigError",
    "ContractError",
    "CorrelationMatrix",
    "DataError",
    "EvalResult",
    "FewShotTypeClassifier",
    "FewtypeError",
    "HttpProvider",
    "Hyperparams",
    "LabelHierarchy",
    "LabelPath",
    "LexicalOracle",
    "MaskedLMProvider",
    "MentionExample",
    "RenderedPrompt",
    "RunConfig",
    "SyntheticOracle",
    "TemplateSpec",
    "Trainer",
    "TransportError",
    "Vocab",
    "beta_schedule",
    "build_hierarchy",
    "evaluate",
    "fill_masks",
    "generate_instances",
    "init_correlation",
    "load_config",
    "load_dataset",
    "map_to_labels",
    "parse_label_path",
    "predict",
    "predict_type_word",
    "render_generation",
    "render_typing",
    "sample_few_shot",
    "smooth_label",
    "train",
    "word_to_type",
]
