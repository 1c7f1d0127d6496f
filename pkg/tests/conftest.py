"""Shared test fixtures and tiny fakes."""

from __future__ import annotations

import math

import pytest

from ragarena.corpus import Corpus, Passage, count_tokens
from ragarena.gateway import Gateway, MockChatProvider, MockScript


def make_passage(pid: str, text: str, embedding=None, doc_id: str = "doc") -> Passage:
    if embedding is not None:
        norm = math.sqrt(sum(x * x for x in embedding))
        embedding = tuple(x / norm for x in embedding)
    return Passage(
        pid=pid,
        doc_id=doc_id,
        text=text,
        page_span=(1, 1),
        token_count=count_tokens(text),
        embedding=embedding,
    )


def make_corpus(*passages: Passage) -> Corpus:
    return Corpus(passages=list(passages))


class FnChatProvider:
    """Chat provider backed by a plain function of the request."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self.stats = None

    def complete(self, request):
        self.calls += 1
        return self.fn(request)


class FnEmbeddingProvider:
    """Embedding provider backed by a function of (texts, keys)."""

    def __init__(self, fn):
        self.fn = fn
        self.stats = None

    def embed(self, texts, keys=None):
        return self.fn(texts, keys)


def fn_gateway(chat_fn=None, embed_fn=None, **kwargs) -> Gateway:
    return Gateway(
        chat_provider=FnChatProvider(chat_fn) if chat_fn else None,
        embedding_provider=FnEmbeddingProvider(embed_fn) if embed_fn else None,
        **kwargs,
    )


def mock_gateway(rules, default=None, **kwargs) -> Gateway:
    script = MockScript(rules=rules, default=default)
    return Gateway(chat_provider=MockChatProvider(script), **kwargs)


@pytest.fixture
def sensor_corpus() -> Corpus:
    return make_corpus(
        make_passage("D1", "sensor radar sensor"),
        make_passage("D2", "microphone"),
    )
