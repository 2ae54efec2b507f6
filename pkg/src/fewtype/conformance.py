"""Contract checks every masked-LM provider must pass.

The same suite runs against the synthetic oracle, the HTTP client, and
(through the client) the live inference service, so the engine can swap
providers freely. Each check raises AssertionError on violation;
``run_conformance`` returns the list of check names that ran.
"""

from __future__ import annotations

import numpy as np

from .backend import MASK_SENTINEL, MaskedLMProvider, RenderedPrompt
from .errors import ContractError

SUM_TOL = 1e-4


def _default_prompts(provider: MaskedLMProvider) -> list[RenderedPrompt]:
    return [
        RenderedPrompt(f"the capital is a {MASK_SENTINEL}.", (0,)),
        RenderedPrompt(f"both {MASK_SENTINEL} and {MASK_SENTINEL} were mentioned.", (0, 1)),
    ]


def check_vocab(provider: MaskedLMProvider) -> None:
    v1 = provider.vocab()
    v2 = provider.vocab()
    assert v1.id_to_token == v2.id_to_token, "vocabulary changed between calls"
    assert v1.mask_token == v2.mask_token
    assert v1.special_ids == v2.special_ids
    assert v1.mask_token in v1.token_to_id, "mask token not resolvable"
    assert v1.token_to_id[v1.id_to_token[0]] == 0, "token/id maps disagree"
    assert all(0 <= i < len(v1) for i in v1.special_ids)


def check_tokenize(provider: MaskedLMProvider, samples: list[str] | None = None) -> None:
    assert provider.tokenize("") == []
    vocab = provider.vocab()
    for text in samples or []:
        ids = provider.tokenize(text)
        assert all(0 <= i < len(vocab) for i in ids), f"out-of-range ids for {text!r}"
        rebuilt = provider.detokenize(ids)
        # round-trip up to whitespace and case normalization
        assert " ".join(rebuilt.lower().split()) == " ".join(text.lower().split()), (
            f"tokenize round-trip failed: {text!r} -> {rebuilt!r}"
        )


def check_distributions(
    provider: MaskedLMProvider, prompts: list[RenderedPrompt] | None = None
) -> None:
    vocab = provider.vocab()
    for prompt in prompts or _default_prompts(provider):
        dists = provider.mask_distributions(prompt)
        assert len(dists) == len(prompt.mask_positions), "one distribution per unfilled mask"
        for dist in dists:
            assert dist.shape == (len(vocab),)
            assert np.all(dist >= 0), "negative probability"
            assert abs(float(dist.sum()) - 1.0) <= SUM_TOL, f"sum {dist.sum()} != 1"
            for sid in vocab.special_ids:
                assert dist[sid] == 0.0, "special token carries probability"


def check_determinism(
    provider: MaskedLMProvider, prompts: list[RenderedPrompt] | None = None
) -> None:
    for prompt in prompts or _default_prompts(provider):
        first = provider.mask_distributions(prompt)
        second = provider.mask_distributions(prompt)
        for a, b in zip(first, second):
            assert np.array_equal(a, b), "identical queries returned different distributions"


def check_conditioning(provider: MaskedLMProvider, prompt: RenderedPrompt | None = None) -> None:
    if prompt is None:
        prompt = _default_prompts(provider)[1]
    assert len(prompt.mask_positions) >= 2, "conditioning check needs a multi-mask prompt"
    base = provider.mask_distributions(prompt)
    assert len(base) == len(prompt.mask_positions)
    fill_token = int(np.argmax(base[0]))
    rest = provider.mask_distributions(prompt, {prompt.mask_positions[0]: fill_token})
    assert len(rest) == len(prompt.mask_positions) - 1, "filled masks must not be predicted"
    try:
        provider.mask_distributions(prompt, {p: fill_token for p in prompt.mask_positions})
    except ContractError:
        pass
    else:
        raise AssertionError("fully filled prompt must be rejected")


def check_no_mask_rejected(provider: MaskedLMProvider) -> None:
    prompt = RenderedPrompt("nothing to predict here.", ())
    try:
        provider.mask_distributions(prompt)
    except ContractError:
        return
    raise AssertionError("prompt without masks must be rejected")


def run_conformance(
    provider: MaskedLMProvider,
    prompts: list[RenderedPrompt] | None = None,
    tokenize_samples: list[str] | None = None,
) -> list[str]:
    """Run every provider contract check; raises AssertionError on failure."""
    check_vocab(provider)
    check_tokenize(provider, tokenize_samples)
    check_distributions(provider, prompts)
    check_determinism(provider, prompts)
    multi = [p for p in (prompts or _default_prompts(provider)) if len(p.mask_positions) >= 2]
    if multi:
        check_conditioning(provider, multi[0])
    check_no_mask_rejected(provider)
    return [
        "vocab",
        "tokenize",
        "distributions",
        "determinism",
        "conditioning" if multi else "conditioning (skipped)",
        "no_mask_rejected",
    ]
