"""Scikit-learn style front door for the typing engine.

``FewShotTypeClassifier`` wraps the training loop behind the familiar
fit/predict surface so the engine drops into sklearn pipelines and grid
searches. X is a sequence of mention examples (``MentionExample``
objects or dicts with id/text/start/end keys); y holds the gold label
paths as strings when X does not carry them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .backend import MaskedLMProvider
from .config import Hyperparams
from .correlation import map_to_labels
from .data import MentionExample
from .errors import DataError
from .hierarchy import build_hierarchy, parse_label_path
from .prompts import TemplateSpec, render_typing
from .training import Trainer


def as_examples(X, y=None) -> list[MentionExample]:
    """Normalize estimator inputs into MentionExample objects."""
    if y is not None and len(y) != len(X):
        raise DataError(f"X has {len(X)} rows but y has {len(y)}")
    out = []
    for i, row in enumerate(X):
        if isinstance(row, MentionExample):
            ex = row
            if y is not None:
                ex = MentionExample(ex.id, ex.text, ex.start, ex.end, parse_label_path(str(y[i])))
            out.append(ex)
            continue
        if not isinstance(row, dict):
            raise DataError(f"row {i}: expected MentionExample or dict, got {type(row).__name__}")
        label = row.get("label") if y is None else y[i]
        if label is None:
            raise DataError(f"row {i}: no label given (pass y or a 'label' key)")
        out.append(
            MentionExample(
                id=str(row.get("id", i)),
                text=str(row["text"]),
                start=int(row["start"]),
                end=int(row["end"]),
                label=parse_label_path(str(label)),
            )
        )
    return out


def as_mention_pairs(X) -> list[tuple[str, str]]:
    """(context, mention) pairs for prediction-time inputs."""
    pairs = []
    for i, row in enumerate(X):
        if isinstance(row, MentionExample):
            pairs.append((row.text, row.mention))
        elif isinstance(row, dict):
            text = str(row["text"])
            start, end = int(row["start"]), int(row["end"])
            pairs.append((text, text[start:end]))
        else:
            raise DataError(f"row {i}: expected MentionExample or dict")
    return pairs


class FewShotTypeClassifier(ClassifierMixin, BaseEstimator):
    """Few-shot hierarchical mention classifier over a frozen masked LM.

    Parameters mirror the training hyperparameters; ``provider``
    supplies the masked LM (a synthetic oracle or an HTTP client) and
    ``extra_names`` maps label paths to additional surface names for
    seeding the correlation matrix.
    """

    def __init__(
        self,
        provider: MaskedLMProvider | None = None,
        alpha: float = 0.1,
        epsilon: float = 0.1,
        reg_weight: float = 1.0,
        aug_weight: float = 1.0,
        instances: int = 5,
        epochs: int = 30,
        lr: float = 1e-2,
        beam_width: int = 10,
        batch_size: int = 8,
        m_scope: str = "mention",
        regen_every: int = 1,
        typing_pattern: str | None = None,
        generation_pattern: str | None = None,
        extra_names: dict | None = None,
        seed: int = 0,
    ):
        self.provider = provider
        self.alpha = alpha
        self.epsilon = epsilon
        self.reg_weight = reg_weight
        self.aug_weight = aug_weight
        self.instances = instances
        self.epochs = epochs
        self.lr = lr
        self.beam_width = beam_width
        self.batch_size = batch_size
        self.m_scope = m_scope
        self.regen_every = regen_every
        self.typing_pattern = typing_pattern
        self.generation_pattern = generation_pattern
        self.extra_names = extra_names
        self.seed = seed

    def fit(self, X, y=None, dev=None, dev_y=None):
        """Train the correlation matrix on K-shot examples.

        ``dev`` (optional) provides held-out examples for checkpoint
        selection; without it the final-epoch matrix is kept.
        """
        if self.provider is None:
            raise DataError("a provider must be set before fitting")
        train = as_examples(X, y)
        dev_examples = as_examples(dev, dev_y) if dev is not None else []
        labels = {ex.label for ex in train} | {ex.label for ex in dev_examples}
        hierarchy = build_hierarchy(labels, self.extra_names)

        trainer = Trainer(
            provider=self.provider,
            hierarchy=hierarchy,
            train_examples=train,
            dev_examples=dev_examples,
            hyper=self._hyper(),
            templates=self._templates(),
            seed=self.seed,
        )
        result = trainer.run(out_dir=None)

        self.matrix_ = result.matrix
        self.hierarchy_ = hierarchy
        self.classes_ = np.array([str(label) for label in hierarchy.labels])
        self.records_ = result.records
        self.best_epoch_ = result.best_epoch
        self.provider_ = trainer.provider  # keeps the warm query cache
        return self

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def predict_proba(self, X):
        self._check_fitted()
        rows = []
        for text, mention in as_mention_pairs(X):
            prompt = render_typing(self._templates(), text, mention)
            dist = self.provider_.mask_distributions(prompt)[0]
            rows.append(map_to_labels(self.matrix_, dist))
        return np.vstack(rows)

    def _check_fitted(self) -> None:
        if not hasattr(self, "matrix_"):
            raise NotFittedError("fit the classifier before predicting")

    def _hyper(self) -> Hyperparams:
        return Hyperparams(
            alpha=self.alpha,
            epsilon=self.epsilon,
            reg_weight=self.reg_weight,
            aug_weight=self.aug_weight,
            instances=self.instances,
            epochs=self.epochs,
            lr=self.lr,
            beam_width=self.beam_width,
            batch_size=self.batch_size,
            m_scope=self.m_scope,
            regen_every=self.regen_every,
        )

    def _templates(self) -> TemplateSpec:
        return TemplateSpec(
            typing_pattern=self.typing_pattern or TemplateSpec.typing_pattern,
            generation_pattern=self.generation_pattern or TemplateSpec.generation_pattern,
        )
