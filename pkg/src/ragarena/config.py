"""Run configuration: one strict JSON file capturing every knob, plus the
master seed that every stochastic step derives its own stream from.

Unknown keys are rejected and all invariant violations are reported at
once. Defaults are filled here so that a written-back config is complete;
`explain_config` names where each default comes from.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .agents import AgentConfig, DEFAULT_N_VARIATIONS, DEFAULT_TOP_K
from .errors import ConfigError
from .gateway import (
    FileEmbeddingProvider,
    Gateway,
    HttpChatProvider,
    HttpEmbeddingProvider,
    MockChatProvider,
    MockScript,
    ProviderConfig,
)
from .judge import DEFAULT_FACTORS, JudgeConfig
from .prompts import TEMPLATE_NAMES, load_template
from .queryset import SamplingQuota
from .retrieval import DEFAULT_B, DEFAULT_K1, DEFAULT_RRF_K, RrfConfig
from .tournament import (
    DEFAULT_INITIAL_RATING,
    DEFAULT_K_FACTOR,
    DEFAULT_N_TOURNAMENTS,
    EloConfig,
)

JUDGE_TEMPERATURE = 0.0
GENERATION_TEMPERATURE = 1.0

OUTPUT_FILES = {
    "corpus": "documents.jsonl",
    "query_pool": "query_pool.jsonl",
    "queries": "queries.jsonl",
    "index": "bm25_index.json",
    "retrievals": "retrievals.jsonl",
    "answers": "answers.jsonl",
    "relevance": "relevance.jsonl",
    "pointwise": "pointwise.jsonl",
    "games": "games.jsonl",
}

REPORT_FILES = {
    "elo_json": "elo_report.json",
    "elo_text": "elo_report.txt",
    "elo_figure": "elo_report.png",
    "winrates_csv": "winrates.csv",
    "winrates_text": "winrates.txt",
    "winrates_figure": "winrates.png",
    "mrr_csv": "mrr_report.csv",
    "mrr_text": "mrr_report.txt",
    "mrr_figure": "mrr_report.png",
    "agreement_json": "agreement_report.json",
    "agreement_text": "agreement_report.txt",
    "bland_altman_csv": "bland_altman.csv",
    "bland_altman_figure": "bland_altman.png",
}

_TOP_KEYS = {
    "seed", "out_dir", "inputs", "chat_provider", "embedding_provider",
    "chunking", "bm25", "rrf", "agents", "judge", "elo", "quota",
    "query_generation", "mrr", "prompts",
}
_INPUT_KEYS = {"documents_raw", "fewshot", "human_ratings", "agents_file"}
_CHAT_KEYS = {
    "kind", "mock_script", "model", "base_url", "api_key_env", "timeout_ms",
    "max_retries", "max_in_flight", "cache_dir",
}
_EMBED_KEYS = {"kind", "path", "model", "base_url", "api_key_env", "timeout_ms",
               "max_retries", "max_in_flight"}
_CHUNK_KEYS = {"max_tokens", "max_pages"}
_BM25_KEYS = {"k1", "b"}
_RRF_KEYS = {"k_rrf", "depth"}
_AGENT_KEYS = {"agent_id", "fusion", "retrieval_method", "top_k", "n_variations",
               "include_original", "model"}
_JUDGE_KEYS = {"n_games_per_query", "include_raw_documents", "include_annotations",
               "document_relevance_threshold", "factors", "randomize_order", "model"}
_ELO_KEYS = {"initial_rating", "k_factor", "n_tournaments", "bootstrap"}
_QUOTA_KEYS = {"per_model"}
_QGEN_KEYS = {"models", "queries_per_call", "n_calls"}
_MRR_KEYS = {"k"}


def derive_seed(master: int, name: str) -> int:
    """Named, platform-stable sub-seed of the master seed."""
    digest = hashlib.sha256(f"{master}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    documents_raw: Path | None
    fewshot: Path | None
    human_ratings: Path | None
    chat_provider: dict
    embedding_provider: dict
    chunk_max_tokens: int
    chunk_max_pages: int
    bm25_k1: float
    bm25_b: float
    rrf: RrfConfig
    agents: list[AgentConfig]
    judge: JudgeConfig
    elo: EloConfig
    quota: SamplingQuota | None
    qgen_models: list[str]
    qgen_queries_per_call: int
    qgen_n_calls: int
    mrr_k: int
    prompt_overrides: dict[str, Path] = field(default_factory=dict)
    explain: list[str] = field(default_factory=list)

    def out_path(self, name: str) -> Path:
        return self.out_dir / OUTPUT_FILES[name]

    def template_text(self, name: str) -> str:
        """Template body for a prompt, honoring any configured override file."""
        return load_template(name, path=self.prompt_overrides.get(name))

    def report_path(self, name: str) -> Path:
        return self.out_dir / "reports" / REPORT_FILES[name]

    def build_gateway(self) -> Gateway:
        """Construct the configured gateway (providers, cache, concurrency)."""
        chat_cfg = self.chat_provider
        provider_cfg = ProviderConfig(
            base_url=chat_cfg.get("base_url", ""),
            api_key_env=chat_cfg.get("api_key_env", ""),
            timeout_ms=chat_cfg.get("timeout_ms", 60_000),
            max_retries=chat_cfg.get("max_retries", 3),
            max_in_flight=chat_cfg.get("max_in_flight", 4),
            cache_dir=chat_cfg.get("cache_dir"),
        )
        if chat_cfg["kind"] == "mock":
            chat = MockChatProvider(MockScript.from_jsonl(chat_cfg["mock_script"]))
        else:
            chat = HttpChatProvider(provider_cfg)

        embed_cfg = self.embedding_provider
        embedder = None
        if embed_cfg:
            if embed_cfg["kind"] == "file":
                embedder = FileEmbeddingProvider(embed_cfg["path"])
            else:
                embedder = HttpEmbeddingProvider(
                    ProviderConfig(
                        base_url=embed_cfg.get("base_url", ""),
                        api_key_env=embed_cfg.get("api_key_env", ""),
                        timeout_ms=embed_cfg.get("timeout_ms", 60_000),
                        max_retries=embed_cfg.get("max_retries", 3),
                        max_in_flight=embed_cfg.get("max_in_flight", 4),
                    ),
                    model=embed_cfg.get("model", "embedding"),
                )
        return Gateway(
            chat_provider=chat,
            embedding_provider=embedder,
            cache_dir=provider_cfg.cache_dir,
            max_in_flight=provider_cfg.max_in_flight,
        )


def _check_keys(section: str, data: dict, allowed: set[str], problems: list[str]):
    unknown = sorted(set(data) - allowed)
    if unknown:
        problems.append(f"{section}: unknown keys {unknown}")


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def validate_config(
    path: str | Path,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Load, validate, and normalize a run config file.

    Relative paths resolve against the config file's directory; flag
    overrides win over file values.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    base = path.parent
    problems: list[str] = []
    explain: list[str] = []

    _check_keys("config", raw, _TOP_KEYS, problems)

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        problems.append("seed: required; runs must be explicitly seeded")
        seed = 0
    out_dir = Path(out_override) if out_override else _resolve(base, raw.get("out_dir", "out"))

    inputs = raw.get("inputs", {})
    _check_keys("inputs", inputs, _INPUT_KEYS, problems)

    chat = dict(raw.get("chat_provider", {}))
    _check_keys("chat_provider", chat, _CHAT_KEYS, problems)
    chat.setdefault("kind", "mock")
    if chat["kind"] not in ("mock", "http"):
        problems.append(f"chat_provider.kind: unknown kind {chat['kind']!r}")
    if chat["kind"] == "mock":
        if "mock_script" not in chat:
            problems.append("chat_provider: mock provider needs mock_script")
        else:
            chat["mock_script"] = str(_resolve(base, chat["mock_script"]))
    elif not chat.get("base_url"):
        problems.append("chat_provider: http provider needs base_url")
    if chat.get("cache_dir"):
        chat["cache_dir"] = str(_resolve(base, chat["cache_dir"]))

    embed = dict(raw.get("embedding_provider", {}))
    _check_keys("embedding_provider", embed, _EMBED_KEYS, problems)
    if embed:
        embed.setdefault("kind", "file")
        if embed["kind"] not in ("file", "http"):
            problems.append(f"embedding_provider.kind: unknown kind {embed['kind']!r}")
        if embed["kind"] == "file":
            if "path" not in embed:
                problems.append("embedding_provider: file provider needs path")
            else:
                embed["path"] = str(_resolve(base, embed["path"]))
        elif not embed.get("base_url"):
            problems.append("embedding_provider: http provider needs base_url")

    chunking = raw.get("chunking", {})
    _check_keys("chunking", chunking, _CHUNK_KEYS, problems)
    max_tokens = chunking.get("max_tokens", 2000)
    max_pages = chunking.get("max_pages", 10)
    if "max_tokens" not in chunking:
        explain.append("chunking.max_tokens = 2000 (default: published passage budget)")
    if "max_pages" not in chunking:
        explain.append("chunking.max_pages = 10 (default: published passage budget)")

    bm25 = raw.get("bm25", {})
    _check_keys("bm25", bm25, _BM25_KEYS, problems)
    k1 = bm25.get("k1", DEFAULT_K1)
    b = bm25.get("b", DEFAULT_B)
    if "k1" not in bm25:
        explain.append(f"bm25.k1 = {DEFAULT_K1} (default: toolkit convention, standard Okapi)")
    if "b" not in bm25:
        explain.append(f"bm25.b = {DEFAULT_B} (default: toolkit convention, standard Okapi)")

    prompts_raw = raw.get("prompts", {})
    _check_keys("prompts", prompts_raw, set(TEMPLATE_NAMES), problems)
    prompt_overrides: dict[str, Path] = {}
    for name, value in prompts_raw.items():
        if name not in TEMPLATE_NAMES:
            continue
        override = _resolve(base, value)
        if not override.exists():
            problems.append(f"prompts.{name}: missing template file {override}")
        else:
            prompt_overrides[name] = override

    def override_text(name: str) -> str | None:
        path = prompt_overrides.get(name)
        return path.read_text(encoding="utf-8") if path else None

    agents_raw = raw.get("agents")
    if agents_raw is None and inputs.get("agents_file"):
        agents_file = _resolve(base, inputs["agents_file"])
        if agents_file.exists():
            with open(agents_file, encoding="utf-8") as fh:
                agents_raw = json.load(fh)
        else:
            problems.append(f"inputs.agents_file: missing file {agents_file}")
    if not agents_raw:
        problems.append("agents: an agent roster is required (inline or agents_file)")
        agents_raw = []

    rrf_raw = raw.get("rrf", {})
    _check_keys("rrf", rrf_raw, _RRF_KEYS, problems)
    top_k_default = DEFAULT_TOP_K
    k_rrf = rrf_raw.get("k_rrf", DEFAULT_RRF_K)
    depth = rrf_raw.get("depth")
    if "k_rrf" not in rrf_raw:
        explain.append(
            f"rrf.k_rrf = {DEFAULT_RRF_K} (default: standard constant from the "
            "rank-fusion literature)"
        )
    if depth is None:
        depth = max(
            (a.get("top_k", top_k_default) for a in agents_raw), default=top_k_default
        )
        explain.append(f"rrf.depth = {depth} (default: matches the deepest agent top_k)")
    rrf_config = RrfConfig(k_rrf=k_rrf, depth=depth)

    agent_configs: list[AgentConfig] = []
    for idx, spec in enumerate(agents_raw):
        _check_keys(f"agents[{idx}]", spec, _AGENT_KEYS, problems)
        try:
            if "top_k" not in spec:
                explain.append(
                    f"agents[{spec.get('agent_id', idx)}].top_k = {DEFAULT_TOP_K} "
                    "(default: five-passage answer context)"
                )
            if spec.get("fusion") and "n_variations" not in spec:
                explain.append(
                    f"agents[{spec.get('agent_id', idx)}].n_variations = "
                    f"{DEFAULT_N_VARIATIONS} (default: four generated query variations)"
                )
            agent_configs.append(
                AgentConfig(
                    agent_id=spec["agent_id"],
                    fusion=bool(spec.get("fusion", False)),
                    retrieval_method=spec["retrieval_method"],
                    top_k=spec.get("top_k", DEFAULT_TOP_K),
                    n_variations=spec.get("n_variations", DEFAULT_N_VARIATIONS),
                    rrf=rrf_config,
                    include_original=bool(spec.get("include_original", True)),
                    model=spec.get("model", chat.get("model", "answerer")),
                    answer_temperature=GENERATION_TEMPERATURE,
                    answer_prompt=override_text("answer"),
                    variation_prompt=override_text("variation"),
                )
            )
        except (KeyError, ConfigError) as exc:
            problems.append(f"agents[{idx}]: {exc}")
    ids = [a.agent_id for a in agent_configs]
    if len(set(ids)) != len(ids):
        problems.append(f"agents: duplicate agent ids {sorted(ids)}")

    judge_raw = raw.get("judge", {})
    _check_keys("judge", judge_raw, _JUDGE_KEYS, problems)
    n_pairs = len(list(itertools.combinations(range(max(len(ids), 2)), 2)))
    n_games = judge_raw.get("n_games_per_query")
    if n_games is None:
        n_games = n_pairs
        explain.append(
            f"judge.n_games_per_query = {n_pairs} (computed: all unique pairs of "
            f"{len(ids)} agents)"
        )
    elif n_games > n_pairs:
        problems.append(
            f"judge.n_games_per_query = {n_games} infeasible: only {n_pairs} "
            f"unique pairs of {len(ids)} agents"
        )
    threshold = judge_raw.get("document_relevance_threshold", 2)
    if "document_relevance_threshold" not in judge_raw:
        explain.append(
            "judge.document_relevance_threshold = 2 (default: published evaluator "
            "configuration)"
        )
    factors = judge_raw.get("factors") or DEFAULT_FACTORS
    if not judge_raw.get("factors"):
        explain.append("judge.factors = (default: published evaluator configuration)")
    judge_config = None
    try:
        judge_config = JudgeConfig(
            n_games_per_query=max(n_games, 1),
            include_raw_documents=bool(judge_raw.get("include_raw_documents", True)),
            include_annotations=bool(judge_raw.get("include_annotations", True)),
            document_relevance_threshold=threshold,
            factors=factors,
            randomize_order=bool(judge_raw.get("randomize_order", True)),
            model=judge_raw.get("model", chat.get("model", "judge")),
            temperature=JUDGE_TEMPERATURE,
        )
    except ConfigError as exc:
        problems.append(f"judge: {exc}")

    elo_raw = raw.get("elo", {})
    _check_keys("elo", elo_raw, _ELO_KEYS, problems)
    for key, default, note in (
        ("initial_rating", DEFAULT_INITIAL_RATING, "toolkit convention"),
        ("k_factor", DEFAULT_K_FACTOR, "conventional Elo K"),
        ("n_tournaments", DEFAULT_N_TOURNAMENTS, "published tournament count"),
    ):
        if key not in elo_raw:
            explain.append(f"elo.{key} = {default} (default: {note})")
    elo_config = EloConfig(
        initial_rating=elo_raw.get("initial_rating", DEFAULT_INITIAL_RATING),
        k_factor=elo_raw.get("k_factor", DEFAULT_K_FACTOR),
        n_tournaments=elo_raw.get("n_tournaments", DEFAULT_N_TOURNAMENTS),
        seed=derive_seed(seed, "tournaments"),
        bootstrap=bool(elo_raw.get("bootstrap", False)),
    )

    quota_raw = raw.get("quota")
    quota = None
    if quota_raw is not None:
        _check_keys("quota", quota_raw, _QUOTA_KEYS, problems)
        try:
            quota = SamplingQuota(
                per_model=dict(quota_raw.get("per_model", {})),
                seed=derive_seed(seed, "sampling"),
            )
        except Exception as exc:  # noqa: BLE001 - collect, don't abort
            problems.append(f"quota: {exc}")

    qgen = raw.get("query_generation", {})
    _check_keys("query_generation", qgen, _QGEN_KEYS, problems)
    qgen_models = list(qgen.get("models", []))
    queries_per_call = qgen.get("queries_per_call", 10)
    if "queries_per_call" not in qgen:
        explain.append("query_generation.queries_per_call = 10 (default: published cap)")
    n_calls = qgen.get("n_calls", 1)

    mrr_raw = raw.get("mrr", {})
    _check_keys("mrr", mrr_raw, _MRR_KEYS, problems)
    mrr_k = mrr_raw.get("k", 5)
    if "k" not in mrr_raw:
        explain.append("mrr.k = 5 (default: published cutoff)")

    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))

    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        documents_raw=_resolve(base, inputs.get("documents_raw")),
        fewshot=_resolve(base, inputs.get("fewshot")),
        human_ratings=_resolve(base, inputs.get("human_ratings")),
        chat_provider=chat,
        embedding_provider=embed,
        chunk_max_tokens=max_tokens,
        chunk_max_pages=max_pages,
        bm25_k1=k1,
        bm25_b=b,
        rrf=rrf_config,
        agents=agent_configs,
        judge=judge_config,
        elo=elo_config,
        quota=quota,
        qgen_models=qgen_models,
        qgen_queries_per_call=queries_per_call,
        qgen_n_calls=n_calls,
        mrr_k=mrr_k,
        prompt_overrides=prompt_overrides,
        explain=explain,
    )
