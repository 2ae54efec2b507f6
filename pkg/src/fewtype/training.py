"""Few-shot training loop with scheduled instance augmentation.

Training alternates plain cross-entropy on the K-shot split with the
two hierarchy regularizers for the first half of the epochs; from the
midpoint on, an augmentation pool of generated instances enters the
objective through a KL term whose weight ramps linearly to one. The
matrix with the best dev strict accuracy is kept.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import CachedProvider, MaskedLMProvider, RenderedPrompt
from .config import Hyperparams, RunConfig, build_provider, load_config_extra_names
from .correlation import (
    Batch,
    CorrelationMatrix,
    OptimizerState,
    adam_step,
    grad_total,
    init_correlation,
    load_checkpoint,
    loss_components,
    map_to_labels,
    save_checkpoint,
)
from .data import MentionExample, load_dataset, read_label_paths, sample_few_shot
from .errors import ContractError, DataError, TransportError
from .generation import GeneratedInstance, generate_instances, predict_type_word
from .hierarchy import LabelHierarchy, LabelPath, build_hierarchy
from .metrics import EvalResult, evaluate
from .prompts import TemplateSpec, render_typing

logger = logging.getLogger(__name__)


def smooth_label(gold_index: int, epsilon: float, n_labels: int) -> np.ndarray:
    """Smoothed one-hot target: 1 - eps + eps/n at gold, eps/n elsewhere.

    The gold entry absorbs the float residual so the exact (fsum) total
    is 1.0 for every (epsilon, n); the adjustment is a few ulp at most.
    """
    if not 0 <= epsilon < 1:
        raise ContractError(f"epsilon must be in [0, 1), got {epsilon}")
    if not 0 <= gold_index < n_labels:
        raise ContractError(f"gold index {gold_index} outside {n_labels} labels")
    vec = np.full(n_labels, epsilon / n_labels, dtype=np.float64)
    vec[gold_index] = 1.0 - epsilon + epsilon / n_labels
    for _ in range(8):
        delta = 1.0 - math.fsum(vec)
        if delta == 0.0:
            break
        vec[gold_index] += delta
    return vec


def beta_schedule(epoch: int, total: int) -> float:
    """Augmentation weight: zero through the first half, then (2t-T)/T."""
    if not 1 <= epoch <= total:
        raise ContractError(f"epoch {epoch} outside 1..{total}")
    return max(0.0, (2 * epoch - total) / total)


@dataclass(frozen=True)
class AugmentedExample:
    """A generated instance rendered back through the typing template."""

    instance: GeneratedInstance
    prompt: RenderedPrompt
    target: np.ndarray

    def __post_init__(self) -> None:
        if abs(float(self.target.sum()) - 1.0) > 1e-9:
            raise ContractError("augmented target must sum to 1")


@dataclass
class TrainResult:
    matrix: CorrelationMatrix
    hierarchy: LabelHierarchy
    records: list[dict]
    best_epoch: int
    best_dev_acc: float
    config_echo: dict
    train_examples: list[MentionExample] = field(default_factory=list)
    dev_examples: list[MentionExample] = field(default_factory=list)


def predict(
    cm: CorrelationMatrix,
    provider: MaskedLMProvider,
    spec: TemplateSpec,
    example: MentionExample,
) -> LabelPath:
    """Most probable label for one mention; ties go to the smallest path."""
    prompt = render_typing(spec, example.text, example.mention)
    dist = provider.mask_distributions(prompt)[0]
    scores = map_to_labels(cm, dist)
    return cm.labels[int(np.argmax(scores))]  # labels are sorted, argmax takes the first


def predict_many(cm, provider, spec, examples) -> list[LabelPath]:
    return [predict(cm, provider, spec, ex) for ex in examples]


def _substituted_context(example: MentionExample, surface: str) -> str:
    return example.text[: example.start] + surface + example.text[example.end :]


def build_augmented_pool(
    provider: MaskedLMProvider,
    cm: CorrelationMatrix,
    templates: TemplateSpec,
    train_examples: list[MentionExample],
    epsilon: float,
    instances: int,
    beam_width: int,
    m_scope: str = "mention",
) -> list[AugmentedExample]:
    """Generate, smooth, and re-render new instances for the train split.

    Each source mention contributes up to M instances ("mention" scope);
    under "type" scope only the best M per label survive. The smoothing
    target always uses the source example's gold label, and the typing
    prompt re-renders the source context with the generated surface in
    the mention's place.
    """
    train_surfaces = {ex.mention for ex in train_examples}
    per_source: list[tuple[MentionExample, list[GeneratedInstance]]] = []
    for ex in train_examples:
        type_id, _ = predict_type_word(provider, cm, templates, ex.text, ex.mention)
        gen = generate_instances(
            provider,
            cm,
            templates,
            example_id=ex.id,
            context=ex.text,
            mention=ex.mention,
            type_word_id=type_id,
            instances=instances,
            beam_width=beam_width,
            exclude_surfaces=train_surfaces,
        )
        per_source.append((ex, gen))

    if m_scope == "type":
        per_source = _prune_to_type_scope(per_source, instances)

    pool: list[AugmentedExample] = []
    n_labels = len(cm.labels)
    for ex, gen in per_source:
        gold = cm.label_index[ex.label]
        target = smooth_label(gold, epsilon, n_labels)
        for inst in gen:
            context = _substituted_context(ex, inst.surface)
            prompt = render_typing(templates, context, inst.surface)
            pool.append(AugmentedExample(instance=inst, prompt=prompt, target=target))
    return pool


def _prune_to_type_scope(per_source, instances: int):
    """Keep only the best M instances per label across its mentions."""
    by_label: dict[LabelPath, list[tuple[float, int, GeneratedInstance]]] = {}
    for order, (ex, gen) in enumerate(per_source):
        for inst in gen:
            by_label.setdefault(ex.label, []).append((inst.score, order, inst))
    kept: dict[int, set[str]] = {}
    for label in sorted(by_label):
        ranked = sorted(by_label[label], key=lambda it: (-it[0], it[1], it[2].token_ids))
        seen: set[str] = set()
        count = 0
        for score, order, inst in ranked:
            key = " ".join(inst.surface.lower().split())
            if key in seen:
                continue
            seen.add(key)
            kept.setdefault(order, set()).add(key)
            count += 1
            if count == instances:
                break
    pruned = []
    for order, (ex, gen) in enumerate(per_source):
        keys = kept.get(order, set())
        pruned.append(
            (ex, [g for g in gen if " ".join(g.surface.lower().split()) in keys])
        )
    return pruned


class Trainer:
    """Owns the matrix and optimizer for one run; single training thread."""

    def __init__(
        self,
        provider: MaskedLMProvider,
        hierarchy: LabelHierarchy,
        train_examples: list[MentionExample],
        dev_examples: list[MentionExample] | None = None,
        hyper: Hyperparams | None = None,
        templates: TemplateSpec | None = None,
        seed: int = 0,
        config_echo: dict | None = None,
    ):
        if not train_examples:
            raise DataError("training split is empty")
        self.provider = provider if isinstance(provider, CachedProvider) else CachedProvider(provider)
        self.hierarchy = hierarchy
        self.train_examples = list(train_examples)
        self.dev_examples = list(dev_examples or [])
        self.hyper = hyper or Hyperparams()
        self.templates = templates or TemplateSpec()
        self.seed = seed
        self.config_echo = config_echo or {}
        self.matrix = init_correlation(hierarchy, self.provider, self.hyper.alpha)
        n_batches = -(-len(self.train_examples) // self.hyper.batch_size)
        self.optimizer = OptimizerState(
            lr=self.hyper.lr, total_steps=self.hyper.epochs * n_batches
        )
        self.start_epoch = 1
        self.records: list[dict] = []

    def resume(self, state_path: str | Path) -> None:
        # best-checkpoint tracking restarts at the resume point; the
        # appended run log still holds the earlier epochs
        cm, opt, extra = load_checkpoint(state_path, self.provider.vocab())
        if tuple(cm.labels) != tuple(self.hierarchy.labels):
            raise DataError("resume checkpoint labels do not match the dataset")
        self.matrix = cm
        if opt is not None:
            self.optimizer = opt
        self.start_epoch = int(extra.get("next_epoch", 1))

    def run(self, out_dir: str | Path | None = None) -> TrainResult:
        hyper = self.hyper
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

        train_dists, train_gold = self._typing_distributions(self.train_examples)
        pool_batch: tuple[np.ndarray, np.ndarray] | None = None
        first_beta_epoch: int | None = None

        best = self.matrix.copy()
        best_epoch = 0
        best_acc = -1.0
        self._emit(out, {"type": "config", "config": self.config_echo})
        resume_point = self._snapshot(self.start_epoch)

        try:
            for epoch in range(self.start_epoch, hyper.epochs + 1):
                resume_point = self._snapshot(epoch)
                beta = beta_schedule(epoch, hyper.epochs)
                if beta > 0.0 and hyper.aug_weight > 0.0:
                    if first_beta_epoch is None:
                        first_beta_epoch = epoch
                    if pool_batch is None or (epoch - first_beta_epoch) % hyper.regen_every == 0:
                        pool = build_augmented_pool(
                            self.provider,
                            self.matrix,
                            self.templates,
                            self.train_examples,
                            epsilon=hyper.epsilon,
                            instances=hyper.instances,
                            beam_width=hyper.beam_width,
                            m_scope=hyper.m_scope,
                        )
                        pool_batch = self._stack_pool(pool)
                record = self._run_epoch(
                    epoch, beta, train_dists, train_gold, pool_batch if beta > 0 else None
                )
                self.records.append(record)
                self._emit(out, record)
                acc = record["dev_acc"]
                if acc is not None and acc > best_acc:
                    best_acc = acc
                    best_epoch = epoch
                    best = self.matrix.copy()
        except TransportError:
            # resume from the epoch-start snapshot: partially applied
            # batches are discarded so a resumed run replays the epoch
            # exactly as an uninterrupted one would have
            if out is not None:
                self._save_state(out, *resume_point)
            raise

        if best_epoch == 0:  # no dev set: report the final matrix
            best = self.matrix.copy()
            best_epoch = hyper.epochs
            best_acc = float("nan")

        summary = {
            "type": "result",
            "best_epoch": best_epoch,
            "best_dev_acc": best_acc if best_acc == best_acc else None,
        }
        self._emit(out, summary)
        if out is not None:
            save_checkpoint(
                out / "checkpoint.json",
                best,
                self.provider.vocab(),
                extra={"best_epoch": best_epoch},
            )
            self._save_state(out, hyper.epochs + 1, self.matrix, self.optimizer)
        return TrainResult(
            matrix=best,
            hierarchy=self.hierarchy,
            records=list(self.records),
            best_epoch=best_epoch,
            best_dev_acc=best_acc,
            config_echo=self.config_echo,
            train_examples=self.train_examples,
            dev_examples=self.dev_examples,
        )

    # -- internals ------------------------------------------------------------

    def _run_epoch(self, epoch, beta, train_dists, train_gold, pool_batch) -> dict:
        hyper = self.hyper
        order = list(range(len(self.train_examples)))
        random.Random(f"{self.seed}:{epoch}").shuffle(order)
        sums = {"ce": 0.0, "inc": 0.0, "exc": 0.0, "new": 0.0}
        n_batches = 0
        empty_d = np.zeros((0, self.matrix.vocab_size))
        empty_t = np.zeros((0, len(self.matrix.labels)))
        for lo in range(0, len(order), hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            batch = Batch(
                ce_dists=train_dists[idx],
                ce_gold=train_gold[idx],
                kl_dists=pool_batch[0] if pool_batch is not None else empty_d,
                kl_targets=pool_batch[1] if pool_batch is not None else empty_t,
            )
            parts = loss_components(self.matrix, batch, self.hierarchy)
            grad = grad_total(
                self.matrix, batch, self.hierarchy, hyper.reg_weight, hyper.aug_weight, beta
            )
            adam_step(self.matrix, self.optimizer, grad)
            sums["ce"] += parts.ce
            sums["inc"] += parts.inc
            sums["exc"] += parts.exc
            sums["new"] += parts.new
            n_batches += 1

        record = {
            "type": "epoch",
            "epoch": epoch,
            "beta": beta,
            "ce": sums["ce"] / n_batches,
            "inc": sums["inc"] / n_batches,
            "exc": sums["exc"] / n_batches,
            "new": sums["new"] / n_batches,
            "dev_acc": None,
            "dev_micro": None,
            "dev_macro": None,
        }
        if self.dev_examples:
            result = self._dev_metrics()
            record["dev_acc"] = result.strict_acc
            record["dev_micro"] = result.loose_micro_f1
            record["dev_macro"] = result.loose_macro_f1
        return record

    def _dev_metrics(self) -> EvalResult:
        preds = predict_many(self.matrix, self.provider, self.templates, self.dev_examples)
        pairs = [(ex.label, pred) for ex, pred in zip(self.dev_examples, preds)]
        return evaluate(pairs, self.hierarchy)

    def _typing_distributions(self, examples) -> tuple[np.ndarray, np.ndarray]:
        dists = np.empty((len(examples), self.matrix.vocab_size))
        gold = np.empty(len(examples), dtype=np.int64)
        for i, ex in enumerate(examples):
            prompt = render_typing(self.templates, ex.text, ex.mention)
            dists[i] = self.provider.mask_distributions(prompt)[0]
            gold[i] = self.matrix.label_index[ex.label]
        return dists, gold

    def _stack_pool(self, pool: list[AugmentedExample]) -> tuple[np.ndarray, np.ndarray]:
        dists = np.empty((len(pool), self.matrix.vocab_size))
        targets = np.empty((len(pool), len(self.matrix.labels)))
        for i, aug in enumerate(pool):
            dists[i] = self.provider.mask_distributions(aug.prompt)[0]
            targets[i] = aug.target
        return dists, targets

    def _snapshot(self, epoch: int) -> tuple[int, CorrelationMatrix, OptimizerState]:
        opt = self.optimizer
        copy = OptimizerState(
            lr=opt.lr,
            total_steps=opt.total_steps,
            step=opt.step,
            m=None if opt.m is None else opt.m.copy(),
            v=None if opt.v is None else opt.v.copy(),
        )
        return epoch, self.matrix.copy(), copy

    def _save_state(
        self, out: Path, next_epoch: int, cm: CorrelationMatrix, opt: OptimizerState
    ) -> None:
        save_checkpoint(
            out / "state.json",
            cm,
            self.provider.vocab(),
            state=opt,
            extra={"next_epoch": next_epoch},
        )

    @staticmethod
    def _emit(out: Path | None, record: dict) -> None:
        if out is None:
            return
        with open(out / "runlog.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_run_data(
    cfg: RunConfig,
) -> tuple[LabelHierarchy, list[MentionExample], list[MentionExample]]:
    """Build the hierarchy and train/dev splits a config describes."""
    extra_names = load_config_extra_names(cfg)
    if cfg.data.train is not None:
        paths = set(read_label_paths(cfg.data.train))
        if cfg.data.dev is not None:
            paths |= set(read_label_paths(cfg.data.dev))
        hierarchy = build_hierarchy(paths, extra_names)
        train_examples = load_dataset(cfg.data.train, hierarchy)
        dev_examples = load_dataset(cfg.data.dev, hierarchy) if cfg.data.dev else []
    else:
        paths = set(read_label_paths(cfg.data.corpus))
        hierarchy = build_hierarchy(paths, extra_names)
        corpus = load_dataset(cfg.data.corpus, hierarchy)
        train_examples, dev_examples = sample_few_shot(corpus, cfg.hyper.shots, cfg.seed)
    return hierarchy, train_examples, dev_examples


def train(
    cfg: RunConfig,
    provider: MaskedLMProvider | None = None,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Run the full training loop described by a config."""
    hierarchy, train_examples, dev_examples = load_run_data(cfg)
    trainer = Trainer(
        provider=provider or build_provider(cfg.provider),
        hierarchy=hierarchy,
        train_examples=train_examples,
        dev_examples=dev_examples,
        hyper=cfg.hyper,
        templates=cfg.templates,
        seed=cfg.seed,
        config_echo=cfg.echo(),
    )
    if resume_from is not None:
        trainer.resume(resume_from)
    if out_dir is None and cfg.out is not None:
        out_dir = cfg.out
    if out_dir is not None:
        log = Path(out_dir) / "runlog.jsonl"
        if log.exists() and resume_from is None:
            log.unlink()
    return trainer.run(out_dir)
