"""LLM-as-a-judge: pointwise document relevance, pointwise answer scoring
on four aspects, and pairwise answer games with seeded presentation-order
randomization.

Parsing follows a "last occurrence wins" rule throughout, because judges
tend to restate the options before concluding: the relevance label is the
last label phrase in the completion, the pointwise scores come from the
last line that is a JSON object with exactly the four aspect keys, and the
pairwise verdict is the last [[A]]/[[B]]/[[C]] token.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from dataclasses import dataclass
from typing import Sequence

from .agents import AgentAnswer
from .errors import (
    InfeasibleScheduleError,
    InvalidInputError,
    ParseError,
    ScoreRangeError,
)
from .gateway import Gateway, chat_request
from .prompts import load_template, render

ASPECT_KEYS = ("relevance", "accuracy", "completeness", "precision")

LABEL_NOT_RELEVANT = 0
LABEL_SOMEWHAT_RELEVANT = 1
LABEL_VERY_RELEVANT = 2

# Longer phrases first so "not relevant" is never shadowed by "relevant".
_LABEL_RE = re.compile(
    r"somewhat relevant|very relevant|not relevant", re.IGNORECASE
)
_LABEL_VALUES = {
    "very relevant": LABEL_VERY_RELEVANT,
    "somewhat relevant": LABEL_SOMEWHAT_RELEVANT,
    "not relevant": LABEL_NOT_RELEVANT,
}

_VERDICT_RE = re.compile(r"\[\[(A|B|C)\]\]")

DEFAULT_FACTORS = (
    "comprehensiveness, correctness, helpfulness, completeness, accuracy, "
    "depth, and level of detail of their responses. Answers are comprehensive "
    "if they show the user multiple perspectives in addition to but still "
    "relevant to the intent of the original question."
)


@dataclass(frozen=True)
class RelevanceJudgment:
    qid: str
    pid: str
    label: int  # 0 not relevant, 1 somewhat, 2 very
    rationale: str

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ScoreRangeError(f"label {self.label} outside 0..2")


@dataclass(frozen=True)
class PointwiseAnswerEval:
    qid: str
    agent_id: str
    relevance: int
    accuracy: int
    completeness: int
    precision: int
    raw: str

    def scores(self) -> dict[str, int]:
        return {
            "relevance": self.relevance,
            "accuracy": self.accuracy,
            "completeness": self.completeness,
            "precision": self.precision,
        }


@dataclass(frozen=True)
class PairwiseVerdict:
    qid: str
    agent_a: str
    agent_b: str
    winner: str  # A / B / TIE, referring to the logical agents
    reasoning: str
    presented_order: str  # ab | ba

    def __post_init__(self):
        if self.agent_a == self.agent_b:
            raise InvalidInputError("pairwise verdict needs two distinct agents")
        if self.winner not in ("A", "B", "TIE"):
            raise InvalidInputError(f"bad winner {self.winner!r}")
        if self.presented_order not in ("ab", "ba"):
            raise InvalidInputError(f"bad presented_order {self.presented_order!r}")


@dataclass(frozen=True)
class JudgeConfig:
    n_games_per_query: int = 1
    include_raw_documents: bool = True
    include_annotations: bool = True
    document_relevance_threshold: int = 2
    factors: str = DEFAULT_FACTORS
    randomize_order: bool = True
    model: str = "judge"
    temperature: float = 0.0

    def __post_init__(self):
        if self.n_games_per_query < 1:
            raise InvalidInputError("n_games_per_query must be >= 1")
        if self.document_relevance_threshold not in (0, 1, 2):
            raise InvalidInputError("document_relevance_threshold must be 0, 1 or 2")


# --- parsing ----------------------------------------------------------------


def parse_relevance_label(completion: str) -> int:
    """Last label phrase in the completion, case-insensitive."""
    matches = list(_LABEL_RE.finditer(completion))
    if not matches:
        raise ParseError("no relevance label phrase found", raw=completion)
    return _LABEL_VALUES[matches[-1].group(0).lower()]


def parse_pointwise_scores(completion: str) -> dict[str, int]:
    """Last line that is a JSON object with exactly the four aspect keys."""
    for line in reversed(completion.splitlines()):
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict) or set(obj) != set(ASPECT_KEYS):
            continue
        for key in ASPECT_KEYS:
            value = obj[key]
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 2:
                raise ScoreRangeError(
                    f"score {key}={value!r} outside 0..2", raw=completion
                )
        return {key: obj[key] for key in ASPECT_KEYS}
    raise ParseError("no aspect-score JSON line found", raw=completion)


def parse_pairwise_verdict(completion: str) -> str:
    """Last [[A]]/[[B]]/[[C]] token; returns 'A', 'B' or 'C'."""
    matches = _VERDICT_RE.findall(completion)
    if not matches:
        raise ParseError("no [[A]]/[[B]]/[[C]] verdict token found", raw=completion)
    return matches[-1]


# --- reference documents ----------------------------------------------------


@dataclass(frozen=True)
class ReferenceDoc:
    pid: str
    text: str
    rationale: str
    label: int


def select_reference_documents(
    judgments: Sequence[RelevanceJudgment], threshold: int
) -> list[str]:
    """Pids judged at or above the threshold, in the given (retrieval) order."""
    return [j.pid for j in judgments if j.label >= threshold]


def pool_context_pids(context_a: Sequence[str], context_b: Sequence[str]) -> list[str]:
    """Union of two context lists, ordered by best first-retrieval rank then pid."""
    best_rank: dict[str, int] = {}
    for context in (context_a, context_b):
        for rank, pid in enumerate(context, start=1):
            if pid not in best_rank or rank < best_rank[pid]:
                best_rank[pid] = rank
    return sorted(best_rank, key=lambda pid: (best_rank[pid], pid))


def render_reference_block(
    docs: Sequence[ReferenceDoc], include_raw: bool, include_annotations: bool
) -> str:
    if not docs:
        return "(no reference documents)"
    parts = []
    for doc in docs:
        lines = [f"[{doc.pid}]"]
        if include_raw:
            lines.append(f"Document: {doc.text}")
        if include_annotations:
            lines.append(f"Annotation: {doc.rationale}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def render_document_block(docs: Sequence[tuple[str, str]]) -> str:
    """Plain [pid] text blocks for the pointwise judge / answer prompts."""
    if not docs:
        return "(no reference documents)"
    return "\n\n".join(f"[{pid}] {text}" for pid, text in docs)


# --- judges ------------------------------------------------------------------


def judge_retrieval(
    qid: str,
    query: str,
    pid: str,
    document: str,
    gateway: Gateway,
    model: str = "judge",
    template: str | None = None,
    retry_on_parse_error: bool = True,
) -> RelevanceJudgment:
    """Grade one (query, passage) pair on the 0/1/2 relevance scale."""
    template = template if template is not None else load_template("retrieval_judge")
    prompt = render(template, query=query, document=document)
    request = chat_request(model, prompt, temperature=0.0, tag=f"relevance:{qid}:{pid}")
    completion = gateway.complete(request)
    try:
        label = parse_relevance_label(completion)
    except ParseError:
        if not retry_on_parse_error:
            raise
        completion = gateway.complete(request, use_cache=False)
        label = parse_relevance_label(completion)
    return RelevanceJudgment(qid=qid, pid=pid, label=label, rationale=completion)


def judge_answer_pointwise(
    query: str,
    answer: AgentAnswer,
    reference_docs: Sequence[tuple[str, str]],
    gateway: Gateway,
    model: str = "judge",
    template: str | None = None,
) -> PointwiseAnswerEval:
    """Score one answer on relevance/accuracy/completeness/precision."""
    template = template if template is not None else load_template("pointwise_judge")
    prompt = render(
        template,
        documents=render_document_block(reference_docs),
        query=query,
        answer=answer.answer_text,
    )
    request = chat_request(
        model, prompt, temperature=0.0, tag=f"pointwise:{answer.qid}:{answer.agent_id}"
    )
    completion = gateway.complete(request)
    scores = parse_pointwise_scores(completion)
    return PointwiseAnswerEval(
        qid=answer.qid, agent_id=answer.agent_id, raw=completion, **scores
    )


def _to_logical(token: str, presented_order: str) -> str:
    """Map a presented [[A]]/[[B]]/[[C]] token back to logical agents.

    The mapping is its own inverse: applying it twice restores the token.
    """
    if token == "C":
        return "TIE"
    if presented_order == "ab":
        return token
    return "B" if token == "A" else "A"


def judge_answers_pairwise(
    query: str,
    answer_a: AgentAnswer,
    answer_b: AgentAnswer,
    reference_docs: Sequence[ReferenceDoc],
    config: JudgeConfig,
    gateway: Gateway,
    rng: random.Random,
    template: str | None = None,
) -> PairwiseVerdict:
    """Run one pairwise game between two answers to the same question."""
    if answer_a.qid != answer_b.qid:
        raise InvalidInputError("pairwise answers must share a qid")
    if answer_a.agent_id == answer_b.agent_id:
        raise InvalidInputError("pairwise answers must come from distinct agents")
    presented_order = "ab"
    if config.randomize_order and rng.random() < 0.5:
        presented_order = "ba"
    first, second = (
        (answer_a, answer_b) if presented_order == "ab" else (answer_b, answer_a)
    )
    template = template if template is not None else load_template("pairwise_judge")
    prompt = render(
        template,
        factors=config.factors,
        query=query,
        documents=render_reference_block(
            reference_docs, config.include_raw_documents, config.include_annotations
        ),
        answer_a=first.answer_text,
        answer_b=second.answer_text,
    )
    request = chat_request(
        config.model,
        prompt,
        temperature=config.temperature,
        tag=f"pairwise:{answer_a.qid}:{answer_a.agent_id}:{answer_b.agent_id}",
    )
    completion = gateway.complete(request)
    token = parse_pairwise_verdict(completion)
    return PairwiseVerdict(
        qid=answer_a.qid,
        agent_a=answer_a.agent_id,
        agent_b=answer_b.agent_id,
        winner=_to_logical(token, presented_order),
        reasoning=completion,
        presented_order=presented_order,
    )


def schedule_games(
    agents: Sequence[str],
    qids: Sequence[str],
    config: JudgeConfig,
    rng: random.Random,
) -> list[tuple[str, str, str]]:
    """Sample n_games_per_query unordered agent pairs per query.

    When n_games_per_query equals C(n, 2), every pair plays exactly once
    per query (in a shuffled order).
    """
    if len(agents) < 2:
        raise InvalidInputError("need at least two agents to schedule games")
    pairs = list(itertools.combinations(sorted(agents), 2))
    if config.n_games_per_query > len(pairs):
        raise InfeasibleScheduleError(
            f"n_games_per_query={config.n_games_per_query} exceeds the "
            f"{len(pairs)} unique pairs of {len(agents)} agents"
        )
    schedule = []
    for qid in qids:
        for a, b in rng.sample(pairs, config.n_games_per_query):
            schedule.append((qid, a, b))
    return schedule


# --- jsonl records ------------------------------------------------------------


def relevance_to_record(j: RelevanceJudgment) -> dict:
    return {"qid": j.qid, "pid": j.pid, "label": j.label, "rationale": j.rationale}


def relevance_from_record(rec: dict) -> RelevanceJudgment:
    return RelevanceJudgment(
        qid=rec["qid"], pid=rec["pid"], label=rec["label"], rationale=rec["rationale"]
    )


def pointwise_to_record(e: PointwiseAnswerEval) -> dict:
    return {
        "qid": e.qid,
        "agent": e.agent_id,
        "relevance": e.relevance,
        "accuracy": e.accuracy,
        "completeness": e.completeness,
        "precision": e.precision,
        "raw": e.raw,
    }


def pointwise_from_record(rec: dict) -> PointwiseAnswerEval:
    return PointwiseAnswerEval(
        qid=rec["qid"],
        agent_id=rec["agent"],
        relevance=rec["relevance"],
        accuracy=rec["accuracy"],
        completeness=rec["completeness"],
        precision=rec["precision"],
        raw=rec.get("raw", ""),
    )


def verdict_to_record(v: PairwiseVerdict) -> dict:
    return {
        "qid": v.qid,
        "agent_a": v.agent_a,
        "agent_b": v.agent_b,
        "winner": v.winner,
        "reasoning": v.reasoning,
        "presented_order": v.presented_order,
    }
