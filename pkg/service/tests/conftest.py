import socket
import threading
import time

import pytest
import torch
import uvicorn
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
from tokenizers.processors import TemplateProcessing
from transformers import BertConfig, BertForMaskedLM, PreTrainedTokenizerFast

from mlm_service.app import ServiceConfig, create_app

WORDS = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "paris", "london", "tokyo", "kauai", "acme", "globex", "reuters",
    "city", "island", "company", "person", "capital", "newspaper",
    "is", "a", "the", "nice", "big", "in", "and", "was", "mentioned",
    "both", "were", "as", "well", "visited", "last", "summer",
    "chan", "##el", "##s", ".", ",",
]


def build_tiny_model(target_dir: str) -> None:
    """A small random-weight masked LM with a WordPiece tokenizer."""
    vocab = {w: i for i, w in enumerate(WORDS)}
    wp = Tokenizer(models.WordPiece(vocab, unk_token="[UNK]"))
    wp.normalizer = normalizers.Lowercase()
    wp.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    wp.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=wp,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    tokenizer.save_pretrained(target_dir)

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(WORDS),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    BertForMaskedLM(config).save_pretrained(target_dir)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp("tiny-mlm")
    build_tiny_model(str(target))
    return str(target)


@pytest.fixture(scope="session")
def app(tiny_model_dir):
    return create_app(ServiceConfig(model=tiny_model_dir, max_length=64))


@pytest.fixture(scope="session")
def client(app):
    from fastapi.testclient import TestClient

    with TestClient(app) as tc:
        yield tc


@pytest.fixture(scope="session")
def live_server(app):
    """The service on a real local port, for wire-level tests."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start in time")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)
