"""Type-based contextualized instance generation.

Given a mention, the typing prompt's top predicted word becomes the
type word. New same-type surfaces are produced by infilling 1..l
contiguous masks (l = the mention's subword length) strictly left to
right: at each step a partial candidate asks the provider for the
leftmost unfilled mask's distribution conditioned on its fills, keeps
its top-B extensions by running pseudo log-likelihood, and the pooled
beam is pruned back to B. Completed candidates across all mask counts
compete on raw summed log step probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .backend import MaskedLMProvider, RenderedPrompt
from .correlation import CorrelationMatrix, map_to_labels
from .errors import ContractError
from .prompts import TemplateSpec, render_generation, render_typing


@dataclass(frozen=True)
class Candidate:
    """One completed mask filling with its per-step probabilities."""

    token_ids: tuple[int, ...]
    per_step_prob: tuple[float, ...]
    mask_count: int

    def __post_init__(self) -> None:
        if len(self.token_ids) != self.mask_count or len(self.per_step_prob) != self.mask_count:
            raise ContractError("candidate fills must match the mask count")
        if any(not 0.0 < p <= 1.0 for p in self.per_step_prob):
            raise ContractError("step probabilities must lie in (0, 1]")

    @property
    def score(self) -> float:
        return float(sum(np.log(p) for p in self.per_step_prob))


@dataclass(frozen=True)
class GeneratedInstance:
    """A deduplicated generated surface with its provenance and score."""

    surface: str
    source_id: str
    type_word: str
    score: float
    mask_count: int
    token_ids: tuple[int, ...]
    smoothed_label: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.surface:
            raise ContractError("generated surface must be non-empty")
        if self.smoothed_label is not None:
            total = float(sum(self.smoothed_label))
            if abs(total - 1.0) > 1e-6:
                raise ContractError(f"smoothed label sums to {total}, not 1")


def predict_type_word(
    provider: MaskedLMProvider,
    cm: CorrelationMatrix,
    spec: TemplateSpec,
    context: str,
    mention: str,
) -> tuple[int, np.ndarray]:
    """Top predicted token at the typing mask, plus the label distribution.

    Special tokens carry zero probability by the provider contract, so
    the argmax never lands on one; exact ties resolve to the lowest id.
    """
    prompt = render_typing(spec, context, mention)
    dist = provider.mask_distributions(prompt)[0]
    type_id = int(np.argmax(dist))  # argmax takes the first (lowest id) maximum
    return type_id, map_to_labels(cm, dist)


def _sort_key(item: tuple[tuple[int, ...], float]) -> tuple[float, tuple[int, ...]]:
    ids, score = item
    return (-score, ids)


def fill_masks(
    provider: MaskedLMProvider, prompt: RenderedPrompt, k: int, beam_width: int
) -> list[Candidate]:
    """Beam-decode the prompt's k masks; best-scored candidates first.

    Exact ties in cumulative score order by ascending token ids so the
    result is deterministic. Zero-probability tokens are never chosen.
    """
    if k < 1:
        raise ContractError(f"mask count must be >= 1, got {k}")
    if beam_width < 1:
        raise ContractError(f"beam width must be >= 1, got {beam_width}")
    if len(prompt.mask_positions) != k:
        raise ContractError(f"prompt has {len(prompt.mask_positions)} masks, expected {k}")

    beam: list[tuple[tuple[int, ...], tuple[float, ...], float]] = [((), (), 0.0)]
    for step in range(k):
        expansions: list[tuple[tuple[int, ...], tuple[float, ...], float]] = []
        for ids, probs, logp in beam:
            filled = {prompt.mask_positions[i]: tid for i, tid in enumerate(ids)}
            dist = provider.mask_distributions(prompt, filled)[0]
            order = np.argsort(-dist, kind="stable")[:beam_width]
            for tid in order:
                p = float(dist[tid])
                if p <= 0.0:
                    break  # stable descending sort: the rest are zero too
                expansions.append((ids + (int(tid),), probs + (p,), logp + float(np.log(p))))
        if not expansions:
            return []
        expansions.sort(key=lambda e: (-e[2], e[0]))
        beam = expansions[:beam_width]
    return [Candidate(ids, probs, k) for ids, probs, _ in beam]


def generate_instances(
    provider: MaskedLMProvider,
    cm: CorrelationMatrix,
    spec: TemplateSpec,
    example_id: str,
    context: str,
    mention: str,
    type_word_id: int,
    instances: int,
    beam_width: int,
    exclude_surfaces: Iterable[str] = (),
) -> list[GeneratedInstance]:
    """Top new same-type surfaces for one mention, best score first.

    Candidates are pooled over mask counts 1..len(tokenize(mention)),
    deduplicated by case-insensitive surface, and stripped of the source
    mention and any surface in ``exclude_surfaces`` (the training-set
    mentions). Returns fewer than ``instances`` results when fewer
    distinct surfaces survive.
    """
    if instances < 1:
        raise ContractError(f"instance count must be >= 1, got {instances}")
    vocab = provider.vocab()
    type_word = vocab.id_to_token[type_word_id]
    length = len(provider.tokenize(mention))
    if length < 1:
        raise ContractError(f"mention {mention!r} tokenizes to nothing")

    banned = {_surface_key(mention)}
    banned.update(_surface_key(s) for s in exclude_surfaces)

    pooled: list[tuple[float, int, str, Candidate]] = []
    for k in range(1, length + 1):
        prompt = render_generation(spec, context, mention, type_word, k)
        for cand in fill_masks(provider, prompt, k, beam_width):
            surface = provider.detokenize(cand.token_ids)
            if not surface:
                continue
            pooled.append((cand.score, k, surface, cand))

    pooled.sort(key=lambda item: (-item[0], item[3].token_ids))
    seen: set[str] = set()
    out: list[GeneratedInstance] = []
    for score, k, surface, cand in pooled:
        key = _surface_key(surface)
        if key in banned or key in seen:
            continue
        seen.add(key)
        out.append(
            GeneratedInstance(
                surface=surface,
                source_id=example_id,
                type_word=type_word,
                score=score,
                mask_count=k,
                token_ids=cand.token_ids,
            )
        )
        if len(out) == instances:
            break
    return out


def _surface_key(surface: str) -> str:
    return " ".join(surface.lower().split())
