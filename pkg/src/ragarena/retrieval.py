"""Keyword (BM25), vector (cosine KNN), and hybrid retrieval with
reciprocal rank fusion.

BM25 scoring uses the Okapi form with a strictly positive IDF:

    score(q, d) = sum_t IDF(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl/avgdl))
    IDF(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

Fusion sums 1 / (rank + k) per document over the input rankings, with
1-based ranks. Every tie anywhere breaks by ascending pid so repeated runs
are byte-identical.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .errors import InvalidInputError, InvalidStateError

_WORD_RE = re.compile(r"[a-z0-9]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_RRF_K = 60


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; no stemming, no stopwords."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class RankEntry:
    pid: str
    rank: int
    score: float


@dataclass(frozen=True)
class Ranking:
    """An ordered retrieval result for one query and one strategy."""

    qid: str
    method: str  # bm25 | knn | hybrid | fused
    entries: tuple[RankEntry, ...]

    def __post_init__(self):
        pids = [e.pid for e in self.entries]
        if len(set(pids)) != len(pids):
            raise InvalidInputError(f"ranking {self.qid}: duplicate pids")
        for i, e in enumerate(self.entries):
            if e.rank != i + 1:
                raise InvalidInputError(f"ranking {self.qid}: rank gap at {e.pid}")
            if i > 0 and e.score > self.entries[i - 1].score:
                raise InvalidInputError(f"ranking {self.qid}: scores increase at {e.pid}")

    def pids(self) -> list[str]:
        return [e.pid for e in self.entries]


def rank_scored(qid: str, method: str, scored: Iterable[tuple[str, float]]) -> Ranking:
    """Build a Ranking from (pid, score) pairs: score desc, then pid asc."""
    ordered = sorted(scored, key=lambda t: (-t[1], t[0]))
    entries = tuple(
        RankEntry(pid=pid, rank=i + 1, score=score) for i, (pid, score) in enumerate(ordered)
    )
    return Ranking(qid=qid, method=method, entries=entries)


@dataclass(frozen=True)
class RrfConfig:
    """Fusion constant k and the per-ranking depth cut applied before fusing."""

    k_rrf: int = DEFAULT_RRF_K
    depth: int = 1000

    def __post_init__(self):
        if self.k_rrf < 1:
            raise InvalidInputError("k_rrf must be >= 1")
        if self.depth < 1:
            raise InvalidInputError("depth must be >= 1")


@dataclass
class Bm25Index:
    n_docs: int
    avg_doc_len: float
    doc_lens: dict[str, int]
    postings: dict[str, dict[str, int]]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def __post_init__(self):
        if self.n_docs < 1:
            raise InvalidInputError("index needs at least one document")
        if self.k1 <= 0 or not (0.0 <= self.b <= 1.0):
            raise InvalidInputError(f"bad BM25 params k1={self.k1}, b={self.b}")


def build_bm25_index(
    corpus: Corpus, k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> Bm25Index:
    """Build an exact in-memory inverted index over the corpus."""
    if not corpus.passages:
        raise InvalidInputError("cannot index an empty corpus")
    doc_lens: dict[str, int] = {}
    postings: dict[str, dict[str, int]] = {}
    for p in corpus.passages:
        terms = tokenize(p.text)
        doc_lens[p.pid] = len(terms)
        for term in terms:
            postings.setdefault(term, {})
            postings[term][p.pid] = postings[term].get(p.pid, 0) + 1
    n = len(doc_lens)
    return Bm25Index(
        n_docs=n,
        avg_doc_len=sum(doc_lens.values()) / n,
        doc_lens=doc_lens,
        postings=postings,
        k1=k1,
        b=b,
    )


def bm25_search(index: Bm25Index, query: str, k: int, qid: str = "") -> Ranking:
    """Top-k passages by BM25 score; zero-scoring passages are dropped."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    scores: dict[str, float] = {}
    for term in tokenize(query):
        posting = index.postings.get(term)
        if not posting:
            continue
        df = len(posting)
        idf = math.log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5))
        for pid, tf in posting.items():
            dl = index.doc_lens[pid]
            denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_len)
            scores[pid] = scores.get(pid, 0.0) + idf * tf * (index.k1 + 1.0) / denom
    positive = [(pid, s) for pid, s in scores.items() if s > 0.0]
    full = rank_scored(qid, "bm25", positive)
    return truncate(full, k)


def knn_search(corpus: Corpus, query_embedding: Sequence[float], k: int, qid: str = "") -> Ranking:
    """Exact brute-force top-k by cosine similarity a.b / (|a||b|)."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    missing = [p.pid for p in corpus.passages if p.embedding is None]
    if missing:
        raise InvalidStateError(f"passages without embeddings: {missing}")
    dim = corpus.embedding_dim
    if dim != len(query_embedding):
        raise InvalidInputError(
            f"query embedding dim {len(query_embedding)} != corpus dim {dim}"
        )
    matrix = np.array([p.embedding for p in corpus.passages], dtype=float)
    q = np.asarray(query_embedding, dtype=float)
    qnorm = np.linalg.norm(q)
    if qnorm == 0.0:
        raise InvalidInputError("query embedding is the zero vector")
    sims = matrix @ q / (np.linalg.norm(matrix, axis=1) * qnorm)
    scored = [(p.pid, float(s)) for p, s in zip(corpus.passages, sims)]
    return truncate(rank_scored(qid, "knn", scored), k)


def truncate(ranking: Ranking, depth: int) -> Ranking:
    if len(ranking.entries) <= depth:
        return ranking
    return Ranking(qid=ranking.qid, method=ranking.method, entries=ranking.entries[:depth])


def rrf_fuse(rankings: Sequence[Ranking], config: RrfConfig) -> Ranking:
    """Reciprocal rank fusion: score(d) = sum over rankings of 1/(rank(d) + k)."""
    if not rankings:
        raise InvalidInputError("need at least one ranking to fuse")
    qids = {r.qid for r in rankings}
    if len(qids) > 1:
        raise InvalidInputError(f"cannot fuse rankings for different qids: {sorted(qids)}")
    scores: dict[str, float] = {}
    for ranking in rankings:
        for entry in ranking.entries[: config.depth]:
            scores[entry.pid] = scores.get(entry.pid, 0.0) + 1.0 / (entry.rank + config.k_rrf)
    return rank_scored(rankings[0].qid, "fused", scores.items())


def hybrid_search(
    index: Bm25Index,
    corpus: Corpus,
    query: str,
    query_embedding: Sequence[float],
    k: int,
    config: RrfConfig,
    qid: str = "",
) -> Ranking:
    """Fuse BM25 and KNN rankings for one query, cut to the top k."""
    lexical = bm25_search(index, query, k, qid=qid)
    vector = knn_search(corpus, query_embedding, k, qid=qid)
    fused = rrf_fuse([lexical, vector], config)
    cut = truncate(fused, k)
    return Ranking(qid=cut.qid, method="hybrid", entries=cut.entries)


def ranking_to_records(ranking: Ranking, agent: str) -> list[dict]:
    """Rows for retrievals.jsonl: one per entry."""
    return [
        {
            "qid": ranking.qid,
            "agent": agent,
            "method": ranking.method,
            "pid": e.pid,
            "rank": e.rank,
            "score": e.score,
        }
        for e in ranking.entries
    ]
