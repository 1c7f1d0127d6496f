"""Pipeline orchestrator and command-line entry point.

Stages form a DAG over files under the configured output directory; no
stage mutates an upstream artifact, every output is written atomically,
and reruns resume from existing records. Exit codes: 0 success, 1 runtime
failure (machine-readable summary on stderr), 2 usage or missing input.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import agents as agents_mod
from . import plots, reports
from .config import RunConfig, derive_seed, validate_config
from .corpus import Corpus, chunk_document, embed_corpus, load_corpus, save_corpus
from .errors import ConfigError, RagArenaError
from .gateway import Gateway
from .io import read_jsonl, write_json_atomic, write_jsonl_atomic, write_text_atomic
from .judge import (
    ReferenceDoc,
    judge_answer_pointwise,
    judge_answers_pairwise,
    judge_retrieval,
    pointwise_to_record,
    pool_context_pids,
    relevance_from_record,
    relevance_to_record,
    schedule_games,
    select_reference_documents,
    verdict_to_record,
)
from .queryset import generate_synthetic_queries, load_queries, save_queries, stratified_sample
from .retrieval import Bm25Index, RankEntry, Ranking, build_bm25_index
from .stats import agreement_report
from .tournament import load_games, run_tournaments, win_rate_matrix

logger = logging.getLogger(__name__)

COMMANDS = (
    "corpus-chunk",
    "corpus-embed",
    "queries-generate",
    "queries-sample",
    "index-build",
    "agents-run",
    "judge-retrieval",
    "judge-pointwise",
    "judge-pairwise",
    "tournament",
    "report-winrates",
    "report-elo",
    "report-mrr",
    "report-agreement",
    "pipeline",
)

PIPELINE_ORDER = (
    "corpus-chunk",
    "corpus-embed",
    "index-build",
    "queries-generate",
    "queries-sample",
    "agents-run",
    "judge-retrieval",
    "judge-pointwise",
    "judge-pairwise",
    "tournament",
    "report-winrates",
    "report-elo",
    "report-mrr",
    "report-agreement",
)


@dataclass
class StageResult:
    stage: str
    records_written: int = 0
    errors: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0


class MissingInputError(RagArenaError):
    def __init__(self, path: Path):
        super().__init__(f"missing upstream file: {path}")
        self.path = path


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"config does not name a {what}")
    if not path.exists():
        raise MissingInputError(path)
    return path


def index_to_dict(index: Bm25Index) -> dict:
    return {
        "n_docs": index.n_docs,
        "avg_doc_len": index.avg_doc_len,
        "doc_lens": index.doc_lens,
        "postings": index.postings,
        "k1": index.k1,
        "b": index.b,
    }


def index_from_dict(data: dict) -> Bm25Index:
    return Bm25Index(
        n_docs=data["n_docs"],
        avg_doc_len=data["avg_doc_len"],
        doc_lens=data["doc_lens"],
        postings=data["postings"],
        k1=data["k1"],
        b=data["b"],
    )


class PipelineRunner:
    """Executes stages against one RunConfig with one shared gateway."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._gateway: Gateway | None = None

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            self._gateway = self.config.build_gateway()
        return self._gateway

    # -- shared loads -------------------------------------------------------

    def _read_corpus(self) -> Corpus:
        embedded = self.config.out_dir / "documents_embedded.jsonl"
        if embedded.exists():
            return load_corpus(embedded)
        return load_corpus(_require(self.config.out_path("corpus"), "corpus"))

    def _read_queries(self) -> list:
        return load_queries(_require(self.config.out_path("queries"), "query set"))

    def _read_answers(self) -> list[dict]:
        return list(read_jsonl(_require(self.config.out_path("answers"), "answers file")))

    def _read_relevance(self) -> list:
        path = _require(self.config.out_path("relevance"), "relevance judgments")
        return [relevance_from_record(rec) for rec in read_jsonl(path)]

    # -- stages ---------------------------------------------------------------

    def corpus_chunk(self) -> int:
        raw_path = _require(self.config.documents_raw, "documents_raw input")
        passages = []
        for rec in read_jsonl(raw_path):
            passages.extend(
                chunk_document(
                    rec["doc_id"],
                    rec["pages"],
                    self.config.chunk_max_tokens,
                    self.config.chunk_max_pages,
                )
            )
        return save_corpus(Corpus(passages=passages), self.config.out_path("corpus"))

    def corpus_embed(self) -> int:
        corpus = load_corpus(_require(self.config.out_path("corpus"), "corpus"))
        embedded = embed_corpus(corpus, self.gateway)
        return save_corpus(embedded, self.config.out_dir / "documents_embedded.jsonl")

    def index_build(self) -> int:
        corpus = self._read_corpus()
        index = build_bm25_index(corpus, k1=self.config.bm25_k1, b=self.config.bm25_b)
        write_json_atomic(self.config.out_path("index"), index_to_dict(index))
        return index.n_docs

    def queries_generate(self) -> int:
        corpus = self._read_corpus()
        fewshot: list[str] = []
        if self.config.fewshot is not None:
            fewshot = [
                line.strip()
                for line in _require(self.config.fewshot, "fewshot file")
                .read_text(encoding="utf-8")
                .splitlines()
                if line.strip()
            ]
        pool = generate_synthetic_queries(
            corpus,
            fewshot,
            self.config.qgen_models,
            self.config.qgen_queries_per_call,
            self.config.qgen_n_calls,
            self.gateway,
            seed=derive_seed(self.config.seed, "querygen"),
            template=self.config.template_text("query_generation"),
        )
        return save_queries(pool, self.config.out_path("query_pool"))

    def queries_sample(self) -> int:
        if self.config.quota is None:
            raise ConfigError("queries-sample needs a quota section in the config")
        pool = load_queries(_require(self.config.out_path("query_pool"), "query pool"))
        sample = stratified_sample(pool, self.config.quota)
        return save_queries(sample, self.config.out_path("queries"))

    def agents_run(self) -> tuple[int, list[str]]:
        queries = self._read_queries()
        corpus = self._read_corpus()
        index = index_from_dict(
            json.loads(_require(self.config.out_path("index"), "index").read_text())
        )
        return agents_mod.run_agents_over_queries(
            self.config.agents,
            [(q.qid, q.text) for q in queries],
            index,
            corpus,
            self.gateway,
            self.config.out_path("answers"),
            self.config.out_path("retrievals"),
        )

    def judge_retrieval_stage(self) -> tuple[int, list[str]]:
        queries = {q.qid: q.text for q in self._read_queries()}
        corpus = self._read_corpus()
        answers = self._read_answers()

        worklist: list[tuple[str, str]] = []
        seen = set()
        for qid in queries:
            for rec in answers:
                if rec["qid"] != qid:
                    continue
                for pid in rec["context_pids"]:
                    if (qid, pid) not in seen:
                        seen.add((qid, pid))
                        worklist.append((qid, pid))

        rel_path = self.config.out_path("relevance")
        existing = {}
        if rel_path.exists():
            for rec in read_jsonl(rel_path):
                existing[(rec["qid"], rec["pid"])] = rec

        records, errors = [], []
        judge_model = self.config.judge.model
        for qid, pid in worklist:
            if (qid, pid) in existing:
                records.append(existing[(qid, pid)])
                continue
            try:
                judgment = judge_retrieval(
                    qid, queries[qid], pid, corpus[pid].text, self.gateway,
                    model=judge_model,
                    template=self.config.template_text("retrieval_judge"),
                )
            except RagArenaError as exc:
                errors.append(f"relevance {qid}/{pid}: {exc}")
                continue
            records.append(relevance_to_record(judgment))
        written = write_jsonl_atomic(rel_path, records)
        return written, errors

    def judge_pointwise_stage(self) -> tuple[int, list[str]]:
        queries = {q.qid: q.text for q in self._read_queries()}
        corpus = self._read_corpus()
        answers = self._read_answers()
        relevance = {(j.qid, j.pid): j for j in self._read_relevance()}
        threshold = self.config.judge.document_relevance_threshold

        point_path = self.config.out_path("pointwise")
        existing = {}
        if point_path.exists():
            for rec in read_jsonl(point_path):
                existing[(rec["qid"], rec["agent"])] = rec

        records, errors = [], []
        for rec in answers:
            key = (rec["qid"], rec["agent"])
            if key in existing:
                records.append(existing[key])
                continue
            answer = agents_mod.answer_from_record(rec)
            judgments = [
                relevance[(answer.qid, pid)]
                for pid in answer.context_pids
                if (answer.qid, pid) in relevance
            ]
            kept = select_reference_documents(judgments, threshold)
            reference = [(pid, corpus[pid].text) for pid in kept]
            try:
                evaluation = judge_answer_pointwise(
                    queries[answer.qid], answer, reference, self.gateway,
                    model=self.config.judge.model,
                    template=self.config.template_text("pointwise_judge"),
                )
            except RagArenaError as exc:
                errors.append(f"pointwise {answer.qid}/{answer.agent_id}: {exc}")
                continue
            records.append(pointwise_to_record(evaluation))
        written = write_jsonl_atomic(point_path, records)
        return written, errors

    def judge_pairwise_stage(self) -> tuple[int, list[str]]:
        queries = {q.qid: q.text for q in self._read_queries()}
        corpus = self._read_corpus()
        answers = {
            (rec["qid"], rec["agent"]): agents_mod.answer_from_record(rec)
            for rec in self._read_answers()
        }
        relevance = {(j.qid, j.pid): j for j in self._read_relevance()}
        config = self.config.judge

        agent_ids = sorted({agent for _, agent in answers})
        qids = [qid for qid in queries if any(k[0] == qid for k in answers)]
        schedule_rng = random.Random(derive_seed(self.config.seed, "scheduling"))
        schedule = schedule_games(agent_ids, qids, config, schedule_rng)
        presentation_rng = random.Random(derive_seed(self.config.seed, "presentation"))

        games_path = self.config.out_path("games")
        existing = {}
        if games_path.exists():
            for rec in read_jsonl(games_path):
                existing[(rec["qid"], rec["agent_a"], rec["agent_b"])] = rec

        records, errors = [], []
        for qid, agent_a, agent_b in schedule:
            # Draw the presentation coin for every scheduled game, including
            # resumed ones, so the stream stays aligned across reruns.
            flip = presentation_rng.random() < 0.5 if config.randomize_order else False
            key = (qid, agent_a, agent_b)
            if key in existing:
                records.append(existing[key])
                continue
            answer_a = answers.get((qid, agent_a))
            answer_b = answers.get((qid, agent_b))
            if answer_a is None or answer_b is None:
                errors.append(f"pairwise {qid}: missing answer for {agent_a} or {agent_b}")
                continue
            pooled = pool_context_pids(answer_a.context_pids, answer_b.context_pids)
            reference = []
            for pid in pooled:
                judgment = relevance.get((qid, pid))
                label = judgment.label if judgment else 0
                if label < config.document_relevance_threshold:
                    continue
                reference.append(
                    ReferenceDoc(
                        pid=pid,
                        text=corpus[pid].text,
                        rationale=judgment.rationale if judgment else "",
                        label=label,
                    )
                )
            order_rng = _FixedCoin(flip)
            try:
                verdict = judge_answers_pairwise(
                    queries[qid], answer_a, answer_b, reference, config,
                    self.gateway, order_rng,
                    template=self.config.template_text("pairwise_judge"),
                )
            except RagArenaError as exc:
                errors.append(f"pairwise {qid}/{agent_a}/{agent_b}: {exc}")
                continue
            records.append(verdict_to_record(verdict))
        written = write_jsonl_atomic(games_path, records)
        return written, errors

    def tournament_stage(self) -> int:
        games = load_games(_require(self.config.out_path("games"), "games log"))
        report = run_tournaments(games, self.config.elo)
        write_json_atomic(self.config.report_path("elo_json"), report.to_dict())
        return len(report.ratings)

    def report_winrates(self) -> int:
        games = load_games(_require(self.config.out_path("games"), "games log"))
        matrix = win_rate_matrix(games)
        write_text_atomic(self.config.report_path("winrates_csv"), reports.winrates_csv(matrix))
        write_text_atomic(self.config.report_path("winrates_text"), reports.winrates_table(matrix))
        plots.save_winrate_heatmap(matrix, self.config.report_path("winrates_figure"))
        return len(matrix.agents)

    def report_elo(self) -> int:
        games = load_games(_require(self.config.out_path("games"), "games log"))
        report = run_tournaments(games, self.config.elo)
        write_json_atomic(self.config.report_path("elo_json"), report.to_dict())
        write_text_atomic(self.config.report_path("elo_text"), reports.elo_table(report))
        plots.save_elo_figure(report, self.config.report_path("elo_figure"))
        return len(report.ratings)

    def report_mrr(self) -> int:
        retrieval_path = _require(self.config.out_path("retrievals"), "retrievals file")
        relevance = self._read_relevance()

        # group rows per (agent, qid); a repeated rank-1 row marks a rewritten
        # block from a resumed run, in which case the later block wins
        rows_by_pair: dict[tuple[str, str], list[dict]] = {}
        methods: dict[str, str] = {a.agent_id: a.retrieval_method for a in self.config.agents}
        for rec in read_jsonl(retrieval_path):
            pair = (rec["agent"], rec["qid"])
            methods.setdefault(rec["agent"], rec["method"])
            if rec["rank"] == 1:
                rows_by_pair[pair] = []
            rows_by_pair.setdefault(pair, []).append(rec)

        rankings_by_agent: dict[str, list[Ranking]] = {}
        for (agent, qid), rows in rows_by_pair.items():
            entries = tuple(
                RankEntry(pid=row["pid"], rank=row["rank"], score=row["score"])
                for row in sorted(rows, key=lambda r: r["rank"])
            )
            ranking = Ranking(qid=qid, method=rows[-1]["method"], entries=entries)
            rankings_by_agent.setdefault(agent, []).append(ranking)

        rows = reports.mrr_rows(rankings_by_agent, methods, relevance, self.config.mrr_k)
        write_text_atomic(self.config.report_path("mrr_csv"), reports.mrr_csv(rows))
        write_text_atomic(self.config.report_path("mrr_text"), reports.mrr_table(rows))
        plots.save_mrr_figure(rows, self.config.report_path("mrr_figure"))
        return len(rows)

    def report_agreement(self) -> int:
        human_path = _require(self.config.human_ratings, "human ratings file")
        point_path = _require(self.config.out_path("pointwise"), "pointwise evaluations")

        def table_from(records) -> dict:
            table = {}
            for rec in records:
                table[(rec["qid"], rec["agent"])] = {
                    aspect: rec[aspect]
                    for aspect in ("relevance", "accuracy", "completeness", "precision")
                }
            return table

        llm_table = table_from(read_jsonl(point_path))
        human_table = table_from(read_jsonl(human_path))
        missing = sorted(set(human_table) - set(llm_table))
        if missing:
            raise ConfigError(
                f"human ratings reference unavailable (qid, agent) pairs: {missing[:10]}"
            )
        llm_subset = {key: llm_table[key] for key in human_table}
        report, ba = agreement_report(
            llm_subset, human_table, seed=derive_seed(self.config.seed, "agreement")
        )
        write_json_atomic(self.config.report_path("agreement_json"), report.to_dict())
        write_text_atomic(self.config.report_path("agreement_text"), reports.agreement_table(report))
        write_text_atomic(self.config.report_path("bland_altman_csv"), reports.bland_altman_csv(ba))
        plots.save_bland_altman_figure(ba, self.config.report_path("bland_altman_figure"))
        return report.n

    # -- dispatch ---------------------------------------------------------------

    def execute(self, command: str) -> StageResult:
        if command == "pipeline":
            return self._run_pipeline()
        started = time.perf_counter()
        errors: list[str] = []
        written = 0
        handlers = {
            "corpus-chunk": self.corpus_chunk,
            "corpus-embed": self.corpus_embed,
            "index-build": self.index_build,
            "queries-generate": self.queries_generate,
            "queries-sample": self.queries_sample,
            "tournament": self.tournament_stage,
            "report-winrates": self.report_winrates,
            "report-elo": self.report_elo,
            "report-mrr": self.report_mrr,
            "report-agreement": self.report_agreement,
        }
        paired = {
            "agents-run": self.agents_run,
            "judge-retrieval": self.judge_retrieval_stage,
            "judge-pointwise": self.judge_pointwise_stage,
            "judge-pairwise": self.judge_pairwise_stage,
        }
        if command in handlers:
            written = handlers[command]()
        elif command in paired:
            written, errors = paired[command]()
        else:
            raise ConfigError(f"unknown command {command!r}")
        return StageResult(
            stage=command,
            records_written=written,
            errors=errors,
            wall_time_s=time.perf_counter() - started,
        )

    def _run_pipeline(self) -> StageResult:
        started = time.perf_counter()
        total = 0
        for stage in PIPELINE_ORDER:
            if stage == "corpus-embed" and not self.config.embedding_provider:
                logger.info("pipeline: skipping corpus-embed (no embedding provider)")
                continue
            if stage in ("queries-generate", "queries-sample") and not self.config.qgen_models:
                logger.info("pipeline: skipping %s (no generator models)", stage)
                continue
            if stage == "queries-sample" and self.config.quota is None:
                logger.info("pipeline: skipping queries-sample (no quota)")
                continue
            if stage == "report-agreement" and self.config.human_ratings is None:
                logger.info("pipeline: skipping report-agreement (no human ratings)")
                continue
            result = self.execute(stage)
            print(f"[{result.stage}] {result.records_written} records "
                  f"in {result.wall_time_s:.2f}s")
            if result.errors:
                return StageResult(
                    stage="pipeline",
                    records_written=total,
                    errors=[f"{result.stage}: {e}" for e in result.errors],
                    wall_time_s=time.perf_counter() - started,
                )
            total += result.records_written
        return StageResult(
            stage="pipeline",
            records_written=total,
            errors=[],
            wall_time_s=time.perf_counter() - started,
        )


class _FixedCoin:
    """Stands in for an RNG when the coin was drawn ahead of time."""

    def __init__(self, flip: bool):
        self._flip = flip

    def random(self) -> float:
        return 0.0 if self._flip else 1.0


def execute(command: str, config: RunConfig) -> StageResult:
    return PipelineRunner(config).execute(command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragarena",
        description="Build, judge, and rank retrieval-augmented QA agents.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument(
        "--explain", action="store_true",
        help="print every defaulted setting and its origin, then exit",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = validate_config(args.config, seed_override=args.seed, out_override=args.out)
    except FileNotFoundError as exc:
        print(f"error: missing config file: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.explain:
        print(f"seed = {config.seed}")
        for line in config.explain:
            print(line)
        return 0

    try:
        result = execute(args.command, config)
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RagArenaError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1

    print(f"[{result.stage}] {result.records_written} records in "
          f"{result.wall_time_s:.2f}s")
    if result.errors:
        print(json.dumps({"error": "StageErrors", "messages": result.errors}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
