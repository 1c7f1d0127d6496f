"""Synthetic test-set construction: passage-grounded query generation with
few-shot seeding, then stratified sampling down to a per-model quota.

Generation is best-effort: a completion that yields no usable lines only
logs a warning, because other calls usually cover the quota. Sampling is a
pure function of (pool, quota) with its own seed.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .agents import parse_completion_lines
from .corpus import Corpus
from .errors import GenerationFailedError, InvalidInputError, QuotaInfeasibleError
from .gateway import Gateway, chat_request
from .io import read_jsonl, write_jsonl_atomic
from .prompts import load_template, render

logger = logging.getLogger(__name__)

MIN_QUERY_TOKENS = 3
MAX_QUERIES_PER_CALL = 10


@dataclass(frozen=True)
class SyntheticQuery:
    qid: str
    text: str
    generator_model: str
    source_pids: tuple[str, ...]

    def __post_init__(self):
        if not self.text:
            raise InvalidInputError("synthetic query text must be nonempty")


@dataclass(frozen=True)
class SamplingQuota:
    per_model: dict[str, int]
    seed: int = 0

    def __post_init__(self):
        if any(count < 0 for count in self.per_model.values()):
            raise InvalidInputError("quota counts must be >= 0")
        if sum(self.per_model.values()) <= 0:
            raise InvalidInputError("quota total must be > 0")


def generate_synthetic_queries(
    corpus: Corpus,
    fewshot: Sequence[str],
    models: Sequence[str],
    queries_per_call: int,
    n_calls: int,
    gateway: Gateway,
    seed: int,
    template: str | None = None,
    temperature: float = 1.0,
) -> list[SyntheticQuery]:
    """Prompt each model n_calls times over uniformly sampled passages.

    Each call contributes up to queries_per_call one-per-line questions;
    exact duplicates (case-folded) are dropped, keeping the first.
    """
    if not 1 <= queries_per_call <= MAX_QUERIES_PER_CALL:
        raise InvalidInputError(
            f"queries_per_call must be in 1..{MAX_QUERIES_PER_CALL}"
        )
    if n_calls < 1:
        raise InvalidInputError("n_calls must be >= 1")
    if not corpus.passages:
        raise InvalidInputError("cannot generate queries over an empty corpus")
    template = template if template is not None else load_template("query_generation")
    examples = "\n".join(fewshot) if fewshot else "(no examples available)"

    rng = random.Random(seed)
    pool: list[SyntheticQuery] = []
    seen: set[str] = set()
    for model in models:
        for call in range(n_calls):
            passage = corpus.passages[rng.randrange(len(corpus.passages))]
            prompt = render(
                template, examples=examples, passage=passage.text, n=queries_per_call
            )
            request = chat_request(
                model, prompt, temperature=temperature, tag=f"querygen:{model}:{call}"
            )
            try:
                completion = gateway.complete(request)
            except Exception as exc:  # noqa: BLE001 - generation is best-effort
                logger.warning("query generation call failed (%s, call %d): %s",
                               model, call, exc)
                continue
            lines = [
                line
                for line in parse_completion_lines(completion)
                if len(line.split()) >= MIN_QUERY_TOKENS
            ]
            if not lines:
                logger.warning(
                    "unparsable query-generation completion (%s, call %d) skipped",
                    model, call,
                )
                continue
            for idx, line in enumerate(lines[:queries_per_call]):
                folded = line.casefold()
                if folded in seen:
                    continue
                seen.add(folded)
                pool.append(
                    SyntheticQuery(
                        qid=f"q-{model}-{call:03d}-{idx:02d}",
                        text=line,
                        generator_model=model,
                        source_pids=(passage.pid,),
                    )
                )
    if not pool:
        raise GenerationFailedError("query generation produced zero usable queries")
    return pool


def stratified_sample(
    pool: Sequence[SyntheticQuery], quota: SamplingQuota
) -> list[SyntheticQuery]:
    """Draw exactly the per-model quota uniformly without replacement, then
    shuffle the combined sample deterministically."""
    by_model: dict[str, list[SyntheticQuery]] = {}
    for query in pool:
        by_model.setdefault(query.generator_model, []).append(query)

    rng = random.Random(quota.seed)
    sample: list[SyntheticQuery] = []
    for model in sorted(quota.per_model):
        requested = quota.per_model[model]
        available = by_model.get(model, [])
        if requested > len(available):
            raise QuotaInfeasibleError(model, requested, len(available))
        sample.extend(rng.sample(available, requested))
    rng.shuffle(sample)
    return sample


def query_to_record(q: SyntheticQuery) -> dict:
    return {
        "qid": q.qid,
        "query": q.text,
        "generator": q.generator_model,
        "source_pids": list(q.source_pids),
    }


def query_from_record(rec: dict) -> SyntheticQuery:
    return SyntheticQuery(
        qid=rec["qid"],
        text=rec["query"],
        generator_model=rec["generator"],
        source_pids=tuple(rec["source_pids"]),
    )


def save_queries(queries: Iterable[SyntheticQuery], path: str | Path) -> int:
    return write_jsonl_atomic(path, (query_to_record(q) for q in queries))


def load_queries(path: str | Path) -> list[SyntheticQuery]:
    return [query_from_record(rec) for rec in read_jsonl(path)]
