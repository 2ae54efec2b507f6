"""Cloze template rendering for typing and instance generation.

Two patterns are configurable: the typing template puts the mention in
front of a single mask slot ("{x}. {m} is a {mask}."), and the
generation template asks for a parallel instance of a given type word
through a run of contiguous masks ("{x}. {m}, as well as {masks}, is a
{t}."). When the context is empty the dangling sentence separator is
dropped, leaving the mention-only form.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backend import MASK_SENTINEL, RenderedPrompt
from .errors import ConfigError, ContractError

DEFAULT_TYPING_PATTERN = "{x}. {m} is a {mask}."
DEFAULT_GENERATION_PATTERN = "{x}. {m}, as well as {masks}, is a {t}."


@dataclass(frozen=True)
class TemplateSpec:
    """Validated pair of typing and generation patterns."""

    typing_pattern: str = DEFAULT_TYPING_PATTERN
    generation_pattern: str = DEFAULT_GENERATION_PATTERN

    def __post_init__(self) -> None:
        if self.typing_pattern.count("{mask}") != 1:
            raise ConfigError("typing pattern must contain {mask} exactly once")
        for ph in ("{x}", "{m}"):
            if ph not in self.typing_pattern:
                raise ConfigError(f"typing pattern missing {ph}")
        if self.generation_pattern.count("{masks}") != 1:
            raise ConfigError("generation pattern must contain {masks} exactly once")
        if self.generation_pattern.count("{t}") != 1:
            raise ConfigError("generation pattern must contain {t} exactly once")
        for ph in ("{x}", "{m}"):
            if ph not in self.generation_pattern:
                raise ConfigError(f"generation pattern missing {ph}")


def _strip_empty_context(text: str, context: str) -> str:
    if context.strip():
        return text
    return text.lstrip(". ").lstrip()


def render_typing(spec: TemplateSpec, context: str, mention: str) -> RenderedPrompt:
    """Render the typing prompt with its single mask slot."""
    if not mention.strip():
        raise ContractError("mention must be non-empty")
    text = spec.typing_pattern.format(x=context, m=mention, mask=MASK_SENTINEL)
    text = _strip_empty_context(text, context)
    return RenderedPrompt(text=text, mask_positions=(0,))


def render_generation(
    spec: TemplateSpec, context: str, mention: str, type_word: str, k: int
) -> RenderedPrompt:
    """Render the generation prompt with ``k`` contiguous mask slots."""
    if not mention.strip():
        raise ContractError("mention must be non-empty")
    if k < 1:
        raise ContractError(f"mask count must be >= 1, got {k}")
    if not type_word or " " in type_word:
        raise ContractError(f"type word must be a single token, got {type_word!r}")
    masks = " ".join([MASK_SENTINEL] * k)
    text = spec.generation_pattern.format(x=context, m=mention, masks=masks, t=type_word)
    text = _strip_empty_context(text, context)
    return RenderedPrompt(text=text, mask_positions=tuple(range(k)))
