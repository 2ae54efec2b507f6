import pytest

from fewtype.errors import ConfigError, ContractError
from fewtype.prompts import TemplateSpec, render_generation, render_typing


SPEC = TemplateSpec()


class TestTypingTemplate:
    def test_default_pattern(self):
        prompt = render_typing(SPEC, "Kauai is beautiful", "Kauai")
        assert prompt.text == "Kauai is beautiful. Kauai is a [MASK]."
        assert prompt.mask_positions == (0,)

    def test_alternate_pattern(self):
        spec = TemplateSpec(typing_pattern="{x}. In this sentence, {m} is a {mask}.")
        prompt = render_typing(spec, "Kauai is beautiful", "Kauai")
        assert prompt.text == "Kauai is beautiful. In this sentence, Kauai is a [MASK]."

    def test_empty_mention_rejected(self):
        with pytest.raises(ContractError, match="non-empty"):
            render_typing(SPEC, "some text", "")

    def test_empty_context_drops_separator(self):
        prompt = render_typing(SPEC, "", "Kauai")
        assert prompt.text == "Kauai is a [MASK]."

    def test_mention_appears_once(self):
        prompt = render_typing(SPEC, "the festival was loud", "festival band")
        assert prompt.text.count("festival band") == 1


class TestGenerationTemplate:
    def test_two_masks(self):
        prompt = render_generation(
            SPEC, "The review praised it", "New York Times", "newspaper", k=2
        )
        assert prompt.text == (
            "The review praised it. New York Times, as well as [MASK] [MASK], is a newspaper."
        )
        assert prompt.mask_positions == (0, 1)

    def test_single_mask(self):
        prompt = render_generation(SPEC, "ctx", "Reuters", "newspaper", k=1)
        assert prompt.text == "ctx. Reuters, as well as [MASK], is a newspaper."

    def test_no_context_form(self):
        prompt = render_generation(SPEC, "", "Reuters", "newspaper", k=1)
        assert prompt.text == "Reuters, as well as [MASK], is a newspaper."

    def test_mask_count_matches_k(self):
        for k in range(1, 6):
            prompt = render_generation(SPEC, "ctx", "m", "t", k=k)
            assert prompt.text.count("[MASK]") == k
            assert prompt.mask_positions == tuple(range(k))

    def test_k_zero_rejected(self):
        with pytest.raises(ContractError, match=">= 1"):
            render_generation(SPEC, "ctx", "m", "t", k=0)

    def test_multiword_type_word_rejected(self):
        with pytest.raises(ContractError, match="single token"):
            render_generation(SPEC, "ctx", "m", "two words", k=1)


class TestTemplateSpecValidation:
    def test_typing_needs_exactly_one_mask(self):
        with pytest.raises(ConfigError):
            TemplateSpec(typing_pattern="{x} {m} no mask here.")
        with pytest.raises(ConfigError):
            TemplateSpec(typing_pattern="{x} {m} {mask} {mask}")

    def test_generation_needs_masks_and_type(self):
        with pytest.raises(ConfigError):
            TemplateSpec(generation_pattern="{x} {m} {t} only.")
        with pytest.raises(ConfigError):
            TemplateSpec(generation_pattern="{x} {m} {masks} no type.")

    def test_missing_mention_placeholder(self):
        with pytest.raises(ConfigError):
            TemplateSpec(typing_pattern="{x} is a {mask}.")
