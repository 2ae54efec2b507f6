"""FastAPI application wrapping a pretrained masked language model.

Wire protocol (JSON over HTTP):

  GET  /v1/vocab      -> {"tokens": [...], "mask_token": ..., "special_ids": [...]}
  POST /v1/tokenize   {"text": ...} -> {"ids": [...]}
  POST /v1/mask_probs {"text": ..., "filled": {"0": 123, ...}}
                      -> {"distributions": [[...], ...]}

Incoming texts carry the canonical ``[MASK]`` sentinel, which is mapped
to the model's own mask token. Distributions cover the full vocabulary
and are returned for the unfilled masks in left-to-right order; fills
are applied at the token level. The model runs in inference mode on a
single thread, so identical requests produce byte-identical responses.
Malformed requests get a 400 with a JSON error; requests beyond the
concurrency limit get a 429.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.gzip import GZipMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from transformers import AutoModelForMaskedLM, AutoTokenizer

MASK_SENTINEL = "[MASK]"


@dataclass
class ServiceConfig:
    """Startup settings; the model must load or the service refuses to start."""

    model: str = "roberta-base"
    host: str = "127.0.0.1"
    port: int = 8400
    max_concurrent: int = 8
    gzip: bool = True
    max_length: int = 512


class RequestError(ValueError):
    """Client-side mistake in a request body; maps to HTTP 400."""


class TokenizeBody(BaseModel):
    text: str


class MaskProbsBody(BaseModel):
    text: str
    filled: dict[str, int] = {}


class MaskedLMBackend:
    """Loads the model once and serves tokenization and mask queries."""

    def __init__(self, model_id: str, max_length: int = 512):
        torch.set_num_threads(1)  # keeps responses byte-identical
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForMaskedLM.from_pretrained(model_id)
        self.model.eval()
        self.vocab_size = int(self.model.config.vocab_size)
        model_max = getattr(self.model.config, "max_position_embeddings", max_length)
        self.max_length = min(max_length, int(model_max))
        if self.tokenizer.mask_token is None:
            raise ValueError(f"model {model_id!r} has no mask token; not a masked LM")
        self._tokens = self._token_list()
        self._vocab_payload = {
            "tokens": self._tokens,
            "mask_token": self.tokenizer.mask_token,
            "special_ids": sorted(
                i for i in set(self.tokenizer.all_special_ids) if 0 <= i < self.vocab_size
            ),
        }

    def _token_list(self) -> list[str]:
        tokens = []
        for i in range(self.vocab_size):
            tok = self.tokenizer.convert_ids_to_tokens(i)
            tokens.append(tok if isinstance(tok, str) else f"[unused{i}]")
        if len(set(tokens)) != len(tokens):
            raise ValueError("model vocabulary contains duplicate token strings")
        return tokens

    def vocab_payload(self) -> dict:
        return self._vocab_payload

    def tokenize(self, text: str) -> list[int]:
        prepared = text.replace(MASK_SENTINEL, self.tokenizer.mask_token)
        return self.tokenizer(
            prepared, add_special_tokens=False, truncation=True, max_length=self.max_length
        ).input_ids

    def mask_probs(self, text: str, filled: dict[str, int]) -> list[list[float]]:
        prepared = text.replace(MASK_SENTINEL, self.tokenizer.mask_token)
        enc = self.tokenizer(
            prepared, return_tensors="pt", truncation=True, max_length=self.max_length
        )
        ids = enc.input_ids[0]
        mask_token_id = self.tokenizer.mask_token_id
        positions = (ids == mask_token_id).nonzero().flatten().tolist()
        if not positions:
            raise RequestError("text contains no mask sentinel")

        fills: dict[int, int] = {}
        for key, value in filled.items():
            try:
                occurrence = int(key)
            except ValueError:
                raise RequestError(f"filled key {key!r} is not a mask index") from None
            if not 0 <= occurrence < len(positions):
                raise RequestError(
                    f"filled index {occurrence} out of range for {len(positions)} masks"
                )
            if not 0 <= value < self.vocab_size:
                raise RequestError(f"filled token id {value} outside the vocabulary")
            fills[occurrence] = value
        if len(fills) >= len(positions):
            raise RequestError("at least one mask must remain unfilled")
        for occurrence, token_id in fills.items():
            ids[positions[occurrence]] = token_id

        with torch.inference_mode():
            logits = self.model(**enc).logits[0]
        out = []
        for occurrence, position in enumerate(positions):
            if occurrence in fills:
                continue
            probs = torch.softmax(logits[position].double(), dim=-1)
            out.append(probs.tolist())
        return out


def create_app(config: ServiceConfig) -> FastAPI:
    backend = MaskedLMBackend(config.model, max_length=config.max_length)
    app = FastAPI(title="mlm-service", version="0.1.0")
    if config.gzip:
        app.add_middleware(GZipMiddleware, minimum_size=500)
    app.state.backend = backend
    app.state.inflight = 0

    @app.exception_handler(RequestError)
    async def bad_request(request: Request, exc: RequestError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.middleware("http")
    async def throttle(request: Request, call_next):
        if app.state.inflight >= config.max_concurrent:
            return JSONResponse(status_code=429, content={"error": "too many requests"})
        app.state.inflight += 1
        try:
            return await call_next(request)
        finally:
            app.state.inflight -= 1

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model": config.model}

    @app.get("/v1/vocab")
    def vocab():
        return backend.vocab_payload()

    @app.post("/v1/tokenize")
    def tokenize(body: TokenizeBody):
        return {"ids": backend.tokenize(body.text)}

    @app.post("/v1/mask_probs")
    def mask_probs(body: MaskProbsBody):
        return {"distributions": backend.mask_probs(body.text, body.filled)}

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
