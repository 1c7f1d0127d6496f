"""The two QA agents: naive retrieve-then-answer and query-fusion.

A naive agent retrieves once for the user's query and answers from the top
passages. A fusion agent first asks the model for query variations,
retrieves for the original plus every variation, fuses the rankings by
reciprocal rank, and answers from the fused top passages.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Corpus
from .errors import ConfigError, InvalidInputError, VariationParseError
from .gateway import Gateway, chat_request
from .io import read_jsonl, write_jsonl_atomic
from .prompts import load_template, render
from .retrieval import (
    Bm25Index,
    Ranking,
    RrfConfig,
    bm25_search,
    hybrid_search,
    knn_search,
    ranking_to_records,
    rrf_fuse,
    truncate,
)

logger = logging.getLogger(__name__)

RETRIEVAL_METHODS = ("bm25", "knn", "hybrid")

DEFAULT_TOP_K = 5
DEFAULT_N_VARIATIONS = 4

EMPTY_CONTEXT_NOTICE = "(no passages were retrieved for this question)"

_LIST_MARKER_RE = re.compile(r"^\s*(?:[-*•]+|\d+[.)])\s*")


@dataclass(frozen=True)
class AgentConfig:
    agent_id: str
    fusion: bool
    retrieval_method: str
    top_k: int = DEFAULT_TOP_K
    n_variations: int = DEFAULT_N_VARIATIONS
    rrf: RrfConfig = field(default_factory=RrfConfig)
    include_original: bool = True
    model: str = "answerer"
    answer_temperature: float = 1.0
    answer_prompt: str | None = None  # template text; None loads the bundled default
    variation_prompt: str | None = None

    def __post_init__(self):
        if self.retrieval_method not in RETRIEVAL_METHODS:
            raise ConfigError(f"unknown retrieval method {self.retrieval_method!r}")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.fusion and self.n_variations < 1:
            raise ConfigError("fusion agents need n_variations >= 1")


@dataclass(frozen=True)
class AgentAnswer:
    qid: str
    agent_id: str
    answer_text: str
    context_pids: tuple[str, ...]
    variation_queries: tuple[str, ...] = ()


def strip_list_marker(line: str) -> str:
    return _LIST_MARKER_RE.sub("", line).strip()


def parse_completion_lines(completion: str) -> list[str]:
    """Non-empty lines with enumeration markers stripped."""
    lines = [strip_list_marker(line) for line in completion.splitlines()]
    return [line for line in lines if line]


def generate_query_variations(
    query: str,
    n: int,
    gateway: Gateway,
    model: str = "answerer",
    template: str | None = None,
    temperature: float = 1.0,
) -> list[str]:
    """Ask the model for n standalone rephrasings of the query.

    The original query never appears in the output. If the completion holds
    fewer than n usable lines the call is retried once (bypassing the cache)
    before giving up.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    template = template if template is not None else load_template("variation")
    prompt = render(template, query=query, n=n)
    request = chat_request(model, prompt, temperature=temperature, tag="variation")

    def usable(completion: str) -> list[str]:
        return [
            line
            for line in parse_completion_lines(completion)
            if line.casefold() != query.strip().casefold()
        ]

    completion = gateway.complete(request)
    lines = usable(completion)
    if len(lines) < n:
        completion = gateway.complete(request, use_cache=False)
        lines = usable(completion)
    if len(lines) < n:
        raise VariationParseError(
            f"expected {n} query variations, parsed {len(lines)}", raw=completion
        )
    return lines[:n]


def _retrieve(
    query: str,
    qid: str,
    config: AgentConfig,
    index: Bm25Index,
    corpus: Corpus,
    gateway: Gateway,
) -> Ranking:
    if config.retrieval_method == "bm25":
        return bm25_search(index, query, config.top_k, qid=qid)
    query_embedding = gateway.embed([query])[0]
    if config.retrieval_method == "knn":
        return knn_search(corpus, query_embedding, config.top_k, qid=qid)
    return hybrid_search(
        index, corpus, query, query_embedding, config.top_k, config.rrf, qid=qid
    )


def _generate_answer(
    query: str, context: Ranking, corpus: Corpus, config: AgentConfig, gateway: Gateway
) -> str:
    if context.entries:
        documents = "\n\n".join(
            f"[{e.pid}] {corpus[e.pid].text}" for e in context.entries
        )
    else:
        documents = EMPTY_CONTEXT_NOTICE
    template = (
        config.answer_prompt if config.answer_prompt is not None
        else load_template("answer")
    )
    prompt = render(template, query=query, documents=documents)
    request = chat_request(
        config.model, prompt, temperature=config.answer_temperature,
        tag=f"answer:{config.agent_id}",
    )
    return gateway.complete(request)


def run_rag(
    qid: str,
    query: str,
    config: AgentConfig,
    index: Bm25Index,
    corpus: Corpus,
    gateway: Gateway,
) -> tuple[AgentAnswer, Ranking]:
    """Single-query retrieve-then-answer."""
    if config.fusion:
        raise InvalidInputError(f"agent {config.agent_id} is a fusion agent")
    ranking = _retrieve(query, qid, config, index, corpus, gateway)
    answer_text = _generate_answer(query, ranking, corpus, config, gateway)
    answer = AgentAnswer(
        qid=qid,
        agent_id=config.agent_id,
        answer_text=answer_text,
        context_pids=tuple(ranking.pids()),
    )
    return answer, ranking


def run_rag_fusion(
    qid: str,
    query: str,
    config: AgentConfig,
    index: Bm25Index,
    corpus: Corpus,
    gateway: Gateway,
) -> tuple[AgentAnswer, Ranking]:
    """Variation generation, per-query retrieval, rank fusion, answer."""
    if not config.fusion:
        raise InvalidInputError(f"agent {config.agent_id} is not a fusion agent")
    variations = generate_query_variations(
        query,
        config.n_variations,
        gateway,
        model=config.model,
        template=config.variation_prompt,
    )
    queries = ([query] if config.include_original else []) + variations
    rankings = [_retrieve(q, qid, config, index, corpus, gateway) for q in queries]
    fused = truncate(rrf_fuse(rankings, config.rrf), config.top_k)
    answer_text = _generate_answer(query, fused, corpus, config, gateway)
    answer = AgentAnswer(
        qid=qid,
        agent_id=config.agent_id,
        answer_text=answer_text,
        context_pids=tuple(fused.pids()),
        variation_queries=tuple(variations),
    )
    return answer, fused


def run_agent(
    qid: str,
    query: str,
    config: AgentConfig,
    index: Bm25Index,
    corpus: Corpus,
    gateway: Gateway,
) -> tuple[AgentAnswer, Ranking]:
    runner = run_rag_fusion if config.fusion else run_rag
    return runner(qid, query, config, index, corpus, gateway)


def answer_to_record(a: AgentAnswer) -> dict:
    return {
        "qid": a.qid,
        "agent": a.agent_id,
        "text": a.answer_text,
        "context_pids": list(a.context_pids),
        "variations": list(a.variation_queries),
    }


def answer_from_record(rec: dict) -> AgentAnswer:
    return AgentAnswer(
        qid=rec["qid"],
        agent_id=rec["agent"],
        answer_text=rec["text"],
        context_pids=tuple(rec["context_pids"]),
        variation_queries=tuple(rec.get("variations", ())),
    )


def run_agents_over_queries(
    agents: Sequence[AgentConfig],
    queries: Sequence[tuple[str, str]],  # (qid, query text)
    index: Bm25Index,
    corpus: Corpus,
    gateway: Gateway,
    answers_path: str | Path,
    retrievals_path: str | Path | None = None,
) -> tuple[int, list[str]]:
    """Answer every (agent, query) pair, resumably.

    Pairs already present in the answers file are kept as-is and skipped.
    Returns (records written, error strings); callers treat a non-empty
    error list as a failed stage.
    """
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate agent ids in roster: {ids}")

    answers_path = Path(answers_path)
    existing: dict[tuple[str, str], dict] = {}
    if answers_path.exists():
        for rec in read_jsonl(answers_path):
            existing[(rec["agent"], rec["qid"])] = rec

    retrieval_rows: list[dict] = []
    if retrievals_path is not None and Path(retrievals_path).exists():
        # keep rows only for pairs whose answers survive the resume
        retrieval_rows = [
            rec
            for rec in read_jsonl(retrievals_path)
            if (rec["agent"], rec["qid"]) in existing
        ]

    out_records: list[dict] = []
    errors: list[str] = []
    for agent in agents:
        for qid, query in queries:
            key = (agent.agent_id, qid)
            if key in existing:
                out_records.append(existing[key])
                continue
            try:
                answer, ranking = run_agent(qid, query, agent, index, corpus, gateway)
            except Exception as exc:  # noqa: BLE001 - per-pair error reporting
                logger.warning("agent %s failed on %s: %s", agent.agent_id, qid, exc)
                errors.append(f"{agent.agent_id}/{qid}: {exc}")
                continue
            out_records.append(answer_to_record(answer))
            retrieval_rows.extend(ranking_to_records(ranking, agent.agent_id))

    written = write_jsonl_atomic(answers_path, out_records)
    if retrievals_path is not None:
        write_jsonl_atomic(retrievals_path, retrieval_rows)
    return written, errors
