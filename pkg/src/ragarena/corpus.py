"""Corpus ingestion: page-packing chunker, passage store, embedding attachment.

Chunking rule: accumulate whole pages into a passage until adding the next
page would exceed either the page budget or the token budget; a single page
that is itself over the token budget is split at whitespace-token boundaries
and its sub-chunks all carry that page's span.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import InvalidDataError, InvalidInputError
from .io import read_jsonl, write_jsonl_atomic

_TOKEN_RE = re.compile(r"\S+")

NORM_TOLERANCE = 1e-6


def count_tokens(text: str) -> int:
    """Whitespace-token count; a deliberate provider-agnostic approximation."""
    return len(_TOKEN_RE.findall(text))


def normalize(vector: Sequence[float]) -> list[float]:
    """Scale a vector to unit Euclidean norm."""
    norm = math.sqrt(sum(x * x for x in vector))
    if norm == 0.0:
        raise InvalidDataError("cannot normalize a zero vector")
    return [x / norm for x in vector]


@dataclass(frozen=True)
class Passage:
    """One evaluation passage: a chunk of document text with a page span."""

    pid: str
    doc_id: str
    text: str
    page_span: tuple[int, int]
    token_count: int
    embedding: tuple[float, ...] | None = None

    def __post_init__(self):
        start, end = self.page_span
        if start > end or start < 1:
            raise InvalidDataError(f"passage {self.pid}: bad page span {self.page_span}")
        if self.token_count < 0:
            raise InvalidDataError(f"passage {self.pid}: negative token count")
        if self.embedding is not None:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise InvalidDataError(
                    f"passage {self.pid}: embedding norm {norm:.8f} not within "
                    f"{NORM_TOLERANCE} of 1.0"
                )


@dataclass
class Corpus:
    """An immutable-by-convention collection of passages."""

    passages: list[Passage]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        pids = [p.pid for p in self.passages]
        if len(set(pids)) != len(pids):
            seen, dupes = set(), []
            for pid in pids:
                if pid in seen:
                    dupes.append(pid)
                seen.add(pid)
            raise InvalidDataError(f"duplicate pids in corpus: {sorted(set(dupes))}")
        self._by_pid = {p.pid: p for p in self.passages}

    def __len__(self) -> int:
        return len(self.passages)

    def __getitem__(self, pid: str) -> Passage:
        return self._by_pid[pid]

    def __contains__(self, pid: str) -> bool:
        return pid in self._by_pid

    @property
    def embedding_dim(self) -> int | None:
        for p in self.passages:
            if p.embedding is not None:
                return len(p.embedding)
        return None


def _split_oversized_page(page: str, max_tokens: int) -> list[tuple[str, int]]:
    """Split a page at token boundaries into (text, token_count) chunks.

    Cut points sit at token start offsets, so concatenating the chunks
    reproduces the raw page byte-for-byte.
    """
    starts = [m.start() for m in _TOKEN_RE.finditer(page)]
    n = len(starts)
    chunks = []
    for i in range(0, n, max_tokens):
        begin = starts[i] if i > 0 else 0
        end = starts[i + max_tokens] if i + max_tokens < n else len(page)
        chunks.append((page[begin:end], min(max_tokens, n - i)))
    return chunks


def chunk_document(
    doc_id: str, pages: list[str], max_tokens: int, max_pages: int
) -> list[Passage]:
    """Chunk a document's pages into passages under page and token budgets."""
    if not pages:
        raise InvalidInputError(f"document {doc_id!r} has no pages")
    if max_tokens < 1 or max_pages < 1:
        raise InvalidInputError("max_tokens and max_pages must be >= 1")

    pieces: list[tuple[str, int, int, int]] = []  # (text, start_page, end_page, tokens)
    cur_pages: list[str] = []
    cur_tokens = 0
    cur_start = 1

    def flush(next_start: int):
        nonlocal cur_pages, cur_tokens, cur_start
        if cur_pages:
            pieces.append(
                ("\n".join(cur_pages), cur_start, cur_start + len(cur_pages) - 1, cur_tokens)
            )
        cur_pages, cur_tokens, cur_start = [], 0, next_start

    for page_no, page in enumerate(pages, start=1):
        page_tokens = count_tokens(page)
        if page_tokens > max_tokens:
            flush(page_no)
            for text, tokens in _split_oversized_page(page, max_tokens):
                pieces.append((text, page_no, page_no, tokens))
            cur_start = page_no + 1
            continue
        if cur_pages and (
            len(cur_pages) + 1 > max_pages or cur_tokens + page_tokens > max_tokens
        ):
            flush(page_no)
        cur_pages.append(page)
        cur_tokens += page_tokens
    flush(len(pages) + 1)

    return [
        Passage(
            pid=f"{doc_id}:{ordinal:04d}",
            doc_id=doc_id,
            text=text,
            page_span=(start, end),
            token_count=tokens,
        )
        for ordinal, (text, start, end, tokens) in enumerate(pieces)
    ]


def reconstruct_document(passages: Sequence[Passage]) -> str:
    """Inverse of chunk_document for one document's passages in pid order.

    Consecutive passages sharing a page span are sub-chunks of one oversized
    page and join with nothing; otherwise a page boundary joins with "\\n".
    """
    parts: list[str] = []
    for i, p in enumerate(passages):
        if i > 0:
            parts.append("" if passages[i - 1].page_span == p.page_span else "\n")
        parts.append(p.text)
    return "".join(parts)


def embed_corpus(corpus: Corpus, gateway) -> Corpus:
    """Return a corpus whose every passage carries a unit-norm embedding.

    Already-embedded passages are left untouched. Fails without partial
    writes: either all missing embeddings resolve or the error lists every
    passage that failed.
    """
    if not corpus.passages:
        raise InvalidInputError("cannot embed an empty corpus")

    pending = [p for p in corpus.passages if p.embedding is None]
    if not pending:
        return corpus

    vectors, failures = gateway.embed_or_errors(
        [p.text for p in pending], keys=[p.pid for p in pending]
    )
    if failures:
        summary = "; ".join(f"{pending[i].pid}: {err}" for i, err in failures[:5])
        raise InvalidDataError(
            f"embedding failed for {len(failures)} passage(s), no embeddings "
            f"written: {summary}"
        )

    dims = {len(v) for v in vectors}
    existing_dim = corpus.embedding_dim
    if existing_dim is not None:
        dims.add(existing_dim)
    if len(dims) > 1:
        raise InvalidDataError(f"embedding dimension mismatch across passages: {sorted(dims)}")

    by_pid = {p.pid: vec for p, vec in zip(pending, vectors)}
    new_passages = [
        p if p.embedding is not None
        else replace(p, embedding=tuple(normalize(by_pid[p.pid])))
        for p in corpus.passages
    ]
    return Corpus(passages=new_passages, metadata=dict(corpus.metadata))


def passage_to_record(p: Passage) -> dict:
    rec = {
        "pid": p.pid,
        "doc_id": p.doc_id,
        "text": p.text,
        "pages": [p.page_span[0], p.page_span[1]],
    }
    if p.embedding is not None:
        rec["embedding"] = list(p.embedding)
    return rec


def passage_from_record(rec: dict) -> Passage:
    embedding = rec.get("embedding")
    return Passage(
        pid=rec["pid"],
        doc_id=rec["doc_id"],
        text=rec["text"],
        page_span=(rec["pages"][0], rec["pages"][1]),
        token_count=count_tokens(rec["text"]),
        embedding=tuple(embedding) if embedding is not None else None,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> int:
    return write_jsonl_atomic(path, (passage_to_record(p) for p in corpus.passages))


def load_corpus(path: str | Path, metadata: dict[str, str] | None = None) -> Corpus:
    passages = [passage_from_record(rec) for rec in read_jsonl(path)]
    return Corpus(passages=passages, metadata=metadata or {})
