"""Masked-token probability providers.

The engine never runs a language model in-process. It talks to a
provider that exposes three operations: the vocabulary, tokenization,
and per-mask probability distributions for a rendered prompt. Two
implementations ship here: a deterministic synthetic oracle (table- or
rule-driven, for tests and fixtures) and an HTTP client speaking the
wire protocol of the companion inference service.

Prompts carry the canonical mask sentinel ``[MASK]``; each provider maps
it onto its own mask token. Distributions returned by a provider always
have special-token probability masked to zero and are renormalized, so
downstream consumers never generate padding or separator tokens.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import requests

from .errors import ContractError, DataError, TransportError

MASK_SENTINEL = "[MASK]"

DISTRIBUTION_SUM_TOL = 1e-4


@dataclass(frozen=True)
class Vocab:
    """Ordered token list with its inverse map and special-token ids."""

    id_to_token: tuple[str, ...]
    mask_token: str
    special_ids: frozenset[int]
    token_to_id: dict[str, int] = field(compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        inverse = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(inverse) != len(self.id_to_token):
            raise DataError("vocabulary tokens must be unique")
        if self.mask_token not in inverse:
            raise DataError(f"mask token {self.mask_token!r} missing from vocabulary")
        for sid in self.special_ids:
            if not 0 <= sid < len(self.id_to_token):
                raise DataError(f"special id {sid} outside vocabulary")
        object.__setattr__(self, "token_to_id", inverse)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def mask_id(self) -> int:
        return self.token_to_id[self.mask_token]


@dataclass(frozen=True)
class RenderedPrompt:
    """Prompt text plus the occurrence indices of its mask sentinels."""

    text: str
    mask_positions: tuple[int, ...]

    def __post_init__(self) -> None:
        found = self.text.count(MASK_SENTINEL)
        if found != len(self.mask_positions):
            raise ContractError(
                f"prompt has {found} mask sentinels but {len(self.mask_positions)} positions"
            )


def validate_distribution(probs: np.ndarray, vocab_size: int) -> np.ndarray:
    """Check shape, non-negativity and normalization of one distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (vocab_size,):
        raise ContractError(f"distribution has shape {probs.shape}, expected ({vocab_size},)")
    if np.any(probs < 0):
        raise ContractError("distribution has negative entries")
    total = float(probs.sum())
    if abs(total - 1.0) > DISTRIBUTION_SUM_TOL:
        raise ContractError(f"distribution sums to {total}, not 1")
    return probs


def _strip_specials(probs: np.ndarray, special_ids) -> np.ndarray:
    """Zero special-token mass and renormalize."""
    out = np.array(probs, dtype=np.float64)
    for sid in special_ids:
        out[sid] = 0.0
    total = out.sum()
    if total <= 0:
        raise ContractError("distribution has no mass outside special tokens")
    return out / total


def filled_fingerprint(filled: Mapping[int, int]) -> str:
    """Canonical string for a partial fill map, e.g. ``0=3,2=17``."""
    return ",".join(f"{pos}={tid}" for pos, tid in sorted(filled.items()))


def prompt_template_id(text: str) -> str:
    """Stable identifier for a rendered (unfilled) prompt text."""
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]


def apply_fills(text: str, filled: Mapping[int, int], vocab: Vocab) -> str:
    """Substitute filled mask occurrences with their token strings."""
    out = []
    cursor = 0
    occurrence = 0
    while True:
        idx = text.find(MASK_SENTINEL, cursor)
        if idx < 0:
            out.append(text[cursor:])
            break
        out.append(text[cursor:idx])
        if occurrence in filled:
            out.append(vocab.id_to_token[filled[occurrence]])
        else:
            out.append(MASK_SENTINEL)
        cursor = idx + len(MASK_SENTINEL)
        occurrence += 1
    return "".join(out)


def join_tokens(tokens: Sequence[str]) -> str:
    """Detokenize subword tokens back into a surface string.

    Handles the common subword conventions: ``##`` continuation pieces
    and ``Ġ``/``▁`` word-start markers. Round-trips are only guaranteed
    up to whitespace normalization.
    """
    gpt_style = any(t.startswith(("Ġ", "▁")) for t in tokens)
    parts: list[str] = []
    for tok in tokens:
        if tok.startswith("##"):
            parts.append(tok[2:])
        elif tok.startswith(("Ġ", "▁")):
            parts.append(" " + tok[1:])
        elif gpt_style:
            parts.append(tok)
        else:
            if parts:
                parts.append(" " + tok)
            else:
                parts.append(tok)
    return "".join(parts).strip()


class MaskedLMProvider(ABC):
    """Read-only source of masked-token distributions.

    Implementations must be pure with respect to queries: identical
    (prompt, filled) inputs yield identical outputs, and the vocabulary
    is stable for the provider's lifetime. Concurrent read-only use is
    safe.
    """

    @abstractmethod
    def vocab(self) -> Vocab: ...

    @abstractmethod
    def tokenize(self, text: str) -> list[int]: ...

    @abstractmethod
    def mask_distributions(
        self, prompt: RenderedPrompt, filled: Mapping[int, int] | None = None
    ) -> list[np.ndarray]:
        """One distribution per unfilled mask, ordered left to right."""

    def detokenize(self, ids: Sequence[int]) -> str:
        vocab = self.vocab()
        return join_tokens([vocab.id_to_token[i] for i in ids])

    def _check_query(self, prompt: RenderedPrompt, filled: Mapping[int, int]) -> list[int]:
        """Validate a mask query; returns the unfilled occurrence indices."""
        positions = list(prompt.mask_positions)
        if not positions:
            raise ContractError("prompt contains no mask sentinel")
        extra = set(filled) - set(positions)
        if extra:
            raise ContractError(f"filled positions {sorted(extra)} not in prompt")
        vocab = self.vocab()
        for tid in filled.values():
            if not 0 <= tid < len(vocab):
                raise ContractError(f"filled token id {tid} outside vocabulary")
        unfilled = [p for p in positions if p not in filled]
        if not unfilled:
            raise ContractError("at least one mask must remain unfilled")
        return unfilled


class SyntheticOracle(MaskedLMProvider):
    """Deterministic table-backed provider for tests and fixtures.

    Stored rules are keyed on (prompt template id, mask index,
    filled-fingerprint). Unkeyed queries fall back to a pluggable
    deterministic rule; the default derives a pseudo-random distribution
    from a hash of the key, so the oracle stays pure without exhaustive
    tables.
    """

    def __init__(
        self,
        tokens: Sequence[str],
        mask_token: str = MASK_SENTINEL,
        special_tokens: Sequence[str] = (),
        rules: Mapping[str, Sequence[float]] | None = None,
        fallback: Callable[[str, int], np.ndarray] | None = None,
    ):
        toks = list(dict.fromkeys(tokens))
        if mask_token not in toks:
            toks.insert(0, mask_token)
        specials = {toks.index(mask_token)}
        for sp in special_tokens:
            if sp in toks:
                specials.add(toks.index(sp))
        self._vocab = Vocab(tuple(toks), mask_token, frozenset(specials))
        self._rules: dict[str, np.ndarray] = {}
        for key, vec in (rules or {}).items():
            self._rules[key] = self._prepare(np.asarray(vec, dtype=np.float64))
        self._fallback = fallback or self._hashed_fallback

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def rule_key(text: str, mask_index: int, filled: Mapping[int, int] | None = None) -> str:
        return f"{prompt_template_id(text)}:{mask_index}:{filled_fingerprint(filled or {})}"

    def add_rule(
        self,
        text: str,
        mask_index: int,
        probs: Sequence[float],
        filled: Mapping[int, int] | None = None,
    ) -> None:
        vec = self._prepare(np.asarray(probs, dtype=np.float64))
        self._rules[self.rule_key(text, mask_index, filled)] = vec

    def probs_from(self, weights: Mapping[str, float]) -> np.ndarray:
        """Convenience: build a vector from token -> weight, normalized."""
        vec = np.zeros(len(self._vocab))
        for token, w in weights.items():
            vec[self._vocab.token_to_id[token]] = w
        total = vec.sum()
        if total <= 0:
            raise ContractError("weights must have positive total mass")
        return vec / total

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticOracle":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read oracle file {path}: {exc}") from exc
        for key in ("tokens", "mask_token", "rules"):
            if key not in raw:
                raise DataError(f"oracle file {path} missing {key!r}")
        return cls(
            tokens=raw["tokens"],
            mask_token=raw["mask_token"],
            special_tokens=raw.get("special_tokens", ()),
            rules=raw["rules"],
        )

    def to_file(self, path: str | Path) -> None:
        payload = {
            "tokens": list(self._vocab.id_to_token),
            "mask_token": self._vocab.mask_token,
            "special_tokens": [self._vocab.id_to_token[i] for i in sorted(self._vocab.special_ids)],
            "rules": {k: [float(x) for x in v] for k, v in sorted(self._rules.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)

    # -- provider interface ---------------------------------------------------

    def vocab(self) -> Vocab:
        return self._vocab

    def tokenize(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in text.split():
            tid = self._vocab.token_to_id.get(word)
            if tid is None:
                tid = self._vocab.token_to_id.get(word.lower())
            if tid is not None:
                ids.append(tid)
                continue
            # unknown word: split into character pieces ("c", "##h", ...)
            for i, ch in enumerate(word.lower()):
                piece = ch if i == 0 else "##" + ch
                pid = self._vocab.token_to_id.get(piece)
                if pid is None:
                    raise ContractError(
                        f"cannot tokenize {word!r}: piece {piece!r} not in oracle vocabulary"
                    )
                ids.append(pid)
        return ids

    def mask_distributions(
        self, prompt: RenderedPrompt, filled: Mapping[int, int] | None = None
    ) -> list[np.ndarray]:
        filled = dict(filled or {})
        unfilled = self._check_query(prompt, filled)
        template_id = prompt_template_id(prompt.text)
        fp = filled_fingerprint(filled)
        filled_text = apply_fills(prompt.text, filled, self._vocab)
        out = []
        for mask_index in unfilled:
            key = f"{template_id}:{mask_index}:{fp}"
            vec = self._rules.get(key)
            if vec is None:
                vec = self._prepare(self._rule_for(filled_text, mask_index, key))
            out.append(validate_distribution(vec, len(self._vocab)))
        return out

    # -- internals ------------------------------------------------------------

    def _rule_for(self, filled_text: str, mask_index: int, key: str) -> np.ndarray:
        return self._fallback(filled_text, mask_index)

    def _prepare(self, vec: np.ndarray) -> np.ndarray:
        if vec.shape != (len(self._vocab),):
            raise DataError(
                f"oracle vector has length {vec.shape}, vocabulary has {len(self._vocab)}"
            )
        if np.any(vec < 0):
            raise DataError("oracle vector has negative entries")
        return _strip_specials(vec, self._vocab.special_ids)

    def _hashed_fallback(self, filled_text: str, mask_index: int) -> np.ndarray:
        digest = hashlib.sha256(f"{filled_text}\x00{mask_index}".encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng(seed)
        return rng.random(len(self._vocab)) + 1e-3


class LexicalOracle(SyntheticOracle):
    """Rule-driven oracle emulating an MLM over a tiny entity lexicon.

    The lexicon assigns each entity surface a label and a descriptor
    word. Typing prompts (``... {m} is a [MASK].``) peak on the
    mention's descriptor; generation prompts (``... {m}, as well as
    [MASK]..., is a {t}.``) rank same-label entities not already present
    in the text by a geometric decay over lexicon order. Everything is a
    pure function of the query, so full training runs are reproducible
    bit for bit.
    """

    def __init__(
        self,
        entities: Sequence[Mapping[str, str]],
        filler_words: Sequence[str] = ("thing", "item", "object", "stuff"),
        extra_tokens: Sequence[str] = (),
        peak_mass: float = 0.9,
        decay: float = 0.7,
        mask_token: str = MASK_SENTINEL,
        special_tokens: Sequence[str] = ("[PAD]",),
    ):
        self._entities = [dict(e) for e in entities]
        for ent in self._entities:
            for key in ("surface", "label", "type_word"):
                if key not in ent:
                    raise DataError(f"lexicon entity missing {key!r}: {ent}")
        self._fillers = list(filler_words)
        self._peak = float(peak_mass)
        self._decay = float(decay)
        if not 0 < self._peak <= 1:
            raise DataError("peak_mass must be in (0, 1]")
        if not 0 < self._decay < 1:
            raise DataError("decay must be in (0, 1)")
        tokens = [mask_token, *special_tokens, *self._fillers, *extra_tokens]
        for ent in self._entities:
            tokens.append(ent["surface"])
        for ent in self._entities:
            tokens.append(ent["type_word"])
        super().__init__(tokens, mask_token, special_tokens)
        self._by_surface = {e["surface"].lower(): e for e in self._entities}

    @classmethod
    def from_file(cls, path: str | Path) -> "LexicalOracle":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read lexicon file {path}: {exc}") from exc
        if "entities" not in raw:
            raise DataError(f"lexicon file {path} missing 'entities'")
        return cls(
            entities=raw["entities"],
            filler_words=raw.get("filler_words", ("thing", "item", "object", "stuff")),
            extra_tokens=raw.get("extra_tokens", ()),
            peak_mass=raw.get("peak_mass", 0.9),
            decay=raw.get("decay", 0.7),
            mask_token=raw.get("mask_token", MASK_SENTINEL),
            special_tokens=raw.get("special_tokens", ("[PAD]",)),
        )

    def _rule_for(self, filled_text: str, mask_index: int, key: str) -> np.ndarray:
        if ", as well as " in filled_text:
            vec = self._generation_rule(filled_text)
        else:
            vec = self._typing_rule(filled_text)
        if vec is None:
            vec = self._hashed_fallback(filled_text, mask_index)
        return vec

    def _typing_rule(self, text: str) -> np.ndarray | None:
        tail = " is a " + MASK_SENTINEL + "."
        if not text.endswith(tail):
            return None
        head = text[: -len(tail)]
        mention = head.rsplit(". ", 1)[-1].strip().lower()
        entity = self._by_surface.get(mention)
        if entity is None:
            return None
        weights = {entity["type_word"]: self._peak}
        share = (1.0 - self._peak) / len(self._fillers)
        for filler in self._fillers:
            weights[filler] = weights.get(filler, 0.0) + share
        return self.probs_from(weights)

    def _generation_rule(self, text: str) -> np.ndarray | None:
        head = text.split(", as well as ", 1)[0]
        mention = head.rsplit(". ", 1)[-1].strip().lower()
        entity = self._by_surface.get(mention)
        if entity is None:
            return None
        present = {
            surf
            for surf in self._by_surface
            if re.search(rf"(?<![0-9a-z]){re.escape(surf)}(?![0-9a-z])", text.lower())
        }
        weights: dict[str, float] = {}
        w = 1.0
        for other in self._entities:
            if other["label"] != entity["label"]:
                continue
            if other["surface"].lower() in present:
                continue
            weights[other["surface"]] = w
            w *= self._decay
        if not weights:
            weights = {filler: 1.0 for filler in self._fillers}
        return self.probs_from(weights)


class HttpProvider(MaskedLMProvider):
    """Client for the JSON-over-HTTP masked-LM wire protocol.

    Endpoints: ``GET /v1/vocab``, ``POST /v1/tokenize``,
    ``POST /v1/mask_probs``. Transport failures are retried with
    backoff before surfacing as TransportError. In-flight requests are
    bounded when querying many prompts at once.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self._session = requests.Session()
        self._vocab: Vocab | None = None

    def vocab(self) -> Vocab:
        if self._vocab is None:
            raw = self._request("GET", "/v1/vocab")
            self._vocab = Vocab(
                id_to_token=tuple(raw["tokens"]),
                mask_token=raw["mask_token"],
                special_ids=frozenset(int(i) for i in raw.get("special_ids", ())),
            )
        return self._vocab

    def tokenize(self, text: str) -> list[int]:
        raw = self._request("POST", "/v1/tokenize", {"text": text})
        return [int(i) for i in raw["ids"]]

    def mask_distributions(
        self, prompt: RenderedPrompt, filled: Mapping[int, int] | None = None
    ) -> list[np.ndarray]:
        filled = dict(filled or {})
        unfilled = self._check_query(prompt, filled)
        payload = {
            "text": prompt.text,
            "filled": {str(pos): int(tid) for pos, tid in filled.items()},
        }
        raw = self._request("POST", "/v1/mask_probs", payload)
        dists = raw.get("distributions", [])
        if len(dists) != len(unfilled):
            raise ContractError(
                f"service returned {len(dists)} distributions for {len(unfilled)} unfilled masks"
            )
        vocab = self.vocab()
        out = []
        for vec in dists:
            arr = validate_distribution(np.asarray(vec, dtype=np.float64), len(vocab))
            out.append(_strip_specials(arr, vocab.special_ids))
        return out

    def map_prompts(
        self, queries: Sequence[tuple[RenderedPrompt, Mapping[int, int]]]
    ) -> list[list[np.ndarray]]:
        """Issue many mask queries with bounded concurrency, order preserved."""
        if len(queries) <= 1:
            return [self.mask_distributions(p, f) for p, f in queries]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(lambda q: self.mask_distributions(q[0], q[1]), queries))

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.request(method, url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise TransportError(f"invalid JSON from {url}: {exc}") from exc
                if resp.status_code in (429, 500, 502, 503, 504):
                    last = TransportError(f"{url} returned {resp.status_code}")
                else:
                    raise ContractError(f"{url} rejected request: {resp.status_code} {resp.text}")
            if attempt < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"request to {url} failed after {self.retries + 1} attempts: {last}")


class CachedProvider(MaskedLMProvider):
    """Memoizing wrapper; sound because providers are pure."""

    def __init__(self, inner: MaskedLMProvider):
        self.inner = inner
        self._dist_cache: dict[tuple[str, str], list[np.ndarray]] = {}
        self._tok_cache: dict[str, list[int]] = {}

    def vocab(self) -> Vocab:
        return self.inner.vocab()

    def tokenize(self, text: str) -> list[int]:
        if text not in self._tok_cache:
            self._tok_cache[text] = self.inner.tokenize(text)
        return list(self._tok_cache[text])

    def detokenize(self, ids: Sequence[int]) -> str:
        return self.inner.detokenize(ids)

    def mask_distributions(
        self, prompt: RenderedPrompt, filled: Mapping[int, int] | None = None
    ) -> list[np.ndarray]:
        filled = dict(filled or {})
        key = (prompt.text, filled_fingerprint(filled))
        if key not in self._dist_cache:
            self._dist_cache[key] = self.inner.mask_distributions(prompt, filled)
        return self._dist_cache[key]
