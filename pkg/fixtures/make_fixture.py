"""Regenerate the bundled offline fixture.

Builds a 20-passage corpus (4 documents x 5 pages), a scripted mock chat
provider, a precomputed embedding file, a six-agent roster, a sampling
quota that yields 12 queries, and a small human-ratings file. The script
replays the real pipeline stages while emitting rules, then validates a
full end-to-end run in a scratch directory.

Run from the repository root:  python3 fixtures/make_fixture.py
"""

from __future__ import annotations

import json
import random
import re
import shutil
import sys
import tempfile
from pathlib import Path

from ragarena.cli import PipelineRunner
from ragarena.config import validate_config
from ragarena.io import read_jsonl, write_jsonl_atomic

FIXTURE_DIR = Path(__file__).resolve().parent
MASTER_SEED = 7
EMBED_DIM = 8

DOCS = {
    "mic-guide": ("microphone", "audio capture"),
    "radar-guide": ("radar", "motion detection"),
    "pressure-guide": ("pressure", "altitude tracking"),
    "air-guide": ("co2", "air quality"),
}

ASPECTS = [
    "power budget", "latency", "accuracy", "bandwidth", "packaging",
    "calibration", "interface options", "certification", "lifetime", "pricing",
]

MODELS = ["mock-gpt4", "mock-opus", "mock-sonnet", "mock-haiku"]
QUOTA = {"mock-gpt4": 6, "mock-opus": 3, "mock-sonnet": 2, "mock-haiku": 1}

FEWSHOT = [
    "What is the country of origin of IM72D128, and how does geopolitical exposure affect the market and my SAM for the microphone?",
    "What is the IP rating of mounted IM72D128?",
    "Tell me microphones that have been released since January 2023 based on the datasheet revision history.",
    "We need to confirm whether the IFX waterproof MIC has a sleeping mode and wake-up functions.",
]

AGENTS = [
    {"agent_id": "rag-bm25", "fusion": False, "retrieval_method": "bm25"},
    {"agent_id": "ragf-bm25", "fusion": True, "retrieval_method": "bm25"},
    {"agent_id": "rag-knn", "fusion": False, "retrieval_method": "knn"},
    {"agent_id": "ragf-knn", "fusion": True, "retrieval_method": "knn"},
    {"agent_id": "rag-hybrid", "fusion": False, "retrieval_method": "hybrid"},
    {"agent_id": "ragf-hybrid", "fusion": True, "retrieval_method": "hybrid"},
]


def page_text(code: str, topic: str, use_case: str, page_no: int) -> str:
    return (
        f"The {code} is a {topic} sensor built for {use_case} workloads. "
        f"Its datasheet lists the {code} supply range, the {topic} sensing element, "
        f"and the evaluation kit pinout. Revision {page_no} adds notes on mounting, "
        f"thermal limits, and long term drift of the {code} family."
    )


def build_documents() -> tuple[list[dict], dict[str, tuple[str, str]]]:
    """Returns raw document records and code -> (doc_id, topic)."""
    records = []
    code_info: dict[str, tuple[str, str]] = {}
    code_no = 0
    for doc_id, (topic, use_case) in DOCS.items():
        pages = []
        for page_no in range(1, 6):
            code = f"MX{code_no:02d}"
            code_no += 1
            pages.append(page_text(code, topic, use_case, page_no))
            code_info[code] = (doc_id, topic)
        records.append({"doc_id": doc_id, "pages": pages})
    return records, code_info


def passage_code(text: str) -> str:
    return re.search(r"MX\d\d", text).group(0)


def doc_base(doc_index: int) -> list[float]:
    vec = [0.0] * EMBED_DIM
    vec[doc_index] = 1.0
    return vec


def noisy(base: list[float], rng: random.Random, scale: float) -> list[float]:
    return [round(v + rng.uniform(-scale, scale), 6) for v in base]


def querygen_rules(passages: list[dict], code_info) -> list[dict]:
    rules = []
    for passage in passages:
        code = passage_code(passage["text"])
        _, topic = code_info[code]
        lines = [
            f"What {aspect} does the {code} offer for {topic} use cases?"
            for aspect in ASPECTS
        ]
        rules.append(
            {
                "matcher": rf"(?s)\[Passage\].*{code}",
                "regex": True,
                "response": "\n".join(lines),
            }
        )
    rules.append(
        {
            "matcher": "[Example questions]",
            "regex": False,
            "response": "What interface options does the MX00 offer for microphone use cases?",
        }
    )
    return rules


def variation_lines(query: str, code: str, topic: str) -> list[str]:
    return [
        f"How does the {code} handle {topic} deployments in the field?",
        f"Which {topic} capabilities make the {code} stand out?",
        f"Summarize the {code} datasheet notes relevant to {topic} performance. {query.split()[1]}",
        f"Is the {code} suitable for demanding {topic} installations?",
    ]


def main() -> int:
    raw_docs, code_info = build_documents()
    write_jsonl_atomic(FIXTURE_DIR / "documents_raw.jsonl", raw_docs)
    (FIXTURE_DIR / "fewshot.txt").write_text("\n".join(FEWSHOT) + "\n")
    (FIXTURE_DIR / "roster.json").write_text(json.dumps(AGENTS, indent=2) + "\n")

    config_payload = {
        "seed": MASTER_SEED,
        "out_dir": "out",
        "inputs": {
            "documents_raw": "documents_raw.jsonl",
            "fewshot": "fewshot.txt",
            "human_ratings": "human.jsonl",
            "agents_file": "roster.json",
        },
        "chat_provider": {"kind": "mock", "mock_script": "mock_script.jsonl",
                          "model": "mock-chat"},
        "embedding_provider": {"kind": "file", "path": "embeddings.jsonl"},
        "chunking": {"max_tokens": 2000, "max_pages": 1},
        "quota": {"per_model": QUOTA},
        "query_generation": {"models": MODELS, "queries_per_call": 10, "n_calls": 4},
    }
    (FIXTURE_DIR / "config.json").write_text(json.dumps(config_payload, indent=2) + "\n")

    # stage 1: discover chunked passages, then embeddings + query-gen rules
    scratch = Path(tempfile.mkdtemp(prefix="fixture-stage1-"))
    config = validate_config(FIXTURE_DIR / "config.json", out_override=str(scratch))
    runner = PipelineRunner(config)
    runner.execute("corpus-chunk")
    passages = list(read_jsonl(scratch / "documents.jsonl"))
    assert len(passages) == 20, f"expected 20 passages, got {len(passages)}"

    rng = random.Random(999)
    doc_order = list(DOCS)
    embeddings = []
    for passage in passages:
        code = passage_code(passage["text"])
        doc_id, _ = code_info[code]
        base = doc_base(doc_order.index(doc_id))
        embeddings.append({"pid": passage["pid"], "embedding": noisy(base, rng, 0.2)})
    write_jsonl_atomic(FIXTURE_DIR / "embeddings.jsonl", embeddings)

    rules = querygen_rules(passages, code_info)
    write_jsonl_atomic(FIXTURE_DIR / "mock_script.jsonl", rules)

    # stage 2: replay generation + sampling to learn the final 12 queries
    runner = PipelineRunner(validate_config(FIXTURE_DIR / "config.json",
                                            out_override=str(scratch)))
    runner.execute("corpus-embed")
    runner.execute("queries-generate")
    pool = list(read_jsonl(scratch / "query_pool.jsonl"))
    per_model = {}
    for rec in pool:
        per_model[rec["generator"]] = per_model.get(rec["generator"], 0) + 1
    for model, want in QUOTA.items():
        have = per_model.get(model, 0)
        assert have >= want, f"pool too small for {model}: {have} < {want}"
    runner.execute("queries-sample")
    queries = list(read_jsonl(scratch / "queries.jsonl"))
    assert len(queries) == sum(QUOTA.values())

    # per-query rules: variations, answers, pointwise scores, pairwise verdicts
    for i, rec in enumerate(queries):
        query = rec["query"]
        code = passage_code(query)
        doc_id, topic = code_info[code]
        variants = variation_lines(query, code, topic)
        rules.append(
            {
                "matcher": rf"(?s)alternative phrasings.*\[Question\]\n{re.escape(query)}",
                "regex": True,
                "response": "\n".join(variants),
            }
        )
        base = doc_base(doc_order.index(doc_id))
        embeddings.append({"pid": query, "embedding": noisy(base, rng, 0.1)})
        for variant in variants:
            embeddings.append({"pid": variant, "embedding": noisy(base, rng, 0.1)})

        rules.append(
            {
                "matcher": rf"(?s)\[Passages\].*\[Question\]\n{re.escape(query)}",
                "regex": True,
                "response": (
                    f"The passages show the {code} fits {topic} workloads: supply range, "
                    f"element design, and drift notes all match the question's intent."
                ),
            }
        )
        scores = {
            "relevance": 2 - (i % 2),
            "accuracy": (2, 1, 0)[i % 3],
            "completeness": (1, 2)[i % 2],
            "precision": (2, 2, 1, 0)[i % 4],
        }
        rules.append(
            {
                "matcher": rf"(?s)\[User Query\]\n{re.escape(query)}\n\[Agent answer\]",
                "regex": True,
                "response": (
                    "The intent is a product capability check. The answer tracks the "
                    "documents and names the right family.\n" + json.dumps(scores)
                ),
            }
        )
        verdict = ("A", "B", "C")[i % 3]
        rules.append(
            {
                "matcher": rf"(?s)\[User Question\]\n{re.escape(query)}",
                "regex": True,
                "response": (
                    "Assistant A covers the core spec; assistant B adds context. "
                    f"Weighing depth against precision, the verdict is [[{verdict}]]"
                ),
            }
        )

    # relevance rules: exact code match -> very; same topic -> somewhat; else not
    for code, (doc_id, topic) in code_info.items():
        rules.append(
            {
                "matcher": rf"(?s){code}.*\[document content\].*{code}",
                "regex": True,
                "response": (
                    f"The document covers the {code} directly and answers the "
                    "question, so it is very relevant."
                ),
            }
        )
    for topic in {topic for _, (_, topic) in code_info.items()}:
        rules.append(
            {
                "matcher": rf"(?s){topic}.*\[document content\].*{topic}",
                "regex": True,
                "response": (
                    f"The document discusses {topic} hardware and is on topic but "
                    "does not fully answer the question, so it is somewhat relevant."
                ),
            }
        )
    rules.append(
        {
            "matcher": "[document content]",
            "regex": False,
            "response": "The document does not address the question topic; it is not relevant.",
        }
    )
    # fallbacks for the remaining judge prompt types
    rules.append(
        {
            "matcher": "[Agent answer]",
            "regex": False,
            "response": 'Generic check.\n{"relevance":1,"accuracy":1,"completeness":1,"precision":1}',
        }
    )
    rules.append(
        {
            "matcher": "[The Start of Assistant A's Answer]",
            "regex": False,
            "response": "Both answers are adequate. [[C]]",
        }
    )

    write_jsonl_atomic(FIXTURE_DIR / "mock_script.jsonl", rules)
    write_jsonl_atomic(FIXTURE_DIR / "embeddings.jsonl", embeddings)

    # human ratings for the first four sampled queries, all six agents
    human = []
    for qi, rec in enumerate(queries[:4]):
        for ai, agent in enumerate(AGENTS):
            human.append(
                {
                    "qid": rec["qid"],
                    "agent": agent["agent_id"],
                    "relevance": max(0, min(2, 2 - (qi % 2) - (ai % 2))),
                    "accuracy": (2, 1, 0)[(qi + ai) % 3],
                    "completeness": (1, 2)[(qi + ai) % 2],
                    "precision": (2, 1)[(qi + ai) % 2],
                }
            )
    write_jsonl_atomic(FIXTURE_DIR / "human.jsonl", human)

    shutil.rmtree(scratch)

    # full validation run against the finished fixture
    scratch = Path(tempfile.mkdtemp(prefix="fixture-validate-"))
    runner = PipelineRunner(validate_config(FIXTURE_DIR / "config.json",
                                            out_override=str(scratch)))
    result = runner.execute("pipeline")
    assert not result.errors, result.errors
    assert runner.gateway.stats.network_calls == 0
    games = list(read_jsonl(scratch / "games.jsonl"))
    assert len(games) == 12 * 15, len(games)
    print(f"fixture ok: 20 passages, {len(queries)} queries, {len(games)} games, "
          f"{result.records_written} records, wall {result.wall_time_s:.1f}s")
    shutil.rmtree(scratch)
    return 0


if __name__ == "__main__":
    sys.exit(main())
