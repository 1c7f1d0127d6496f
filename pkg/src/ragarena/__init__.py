"""ragarena: build, judge, and rank retrieval-augmented QA agents.

The toolkit chunks a document corpus into passages, generates a synthetic
query set grounded in those passages, answers the queries with configurable
retrieve-then-answer agents (single-query or query-fusion), grades
retrievals and answers with an LLM judge, and ranks the agents with a
shuffled-replay Elo tournament plus rank-agreement statistics. A scripted
mock provider makes every step runnable offline and byte-reproducible.
"""

from .agents import AgentAnswer, AgentConfig, generate_query_variations, run_rag, run_rag_fusion
from .corpus import Corpus, Passage, chunk_document, embed_corpus
from .errors import RagArenaError
from .gateway import ChatMessage, ChatRequest, Gateway, MockScript, ProviderConfig
from .judge import (
    JudgeConfig,
    PairwiseVerdict,
    PointwiseAnswerEval,
    RelevanceJudgment,
    judge_answer_pointwise,
    judge_answers_pairwise,
    judge_retrieval,
    schedule_games,
    select_reference_documents,
)
from .queryset import SamplingQuota, SyntheticQuery, generate_synthetic_queries, stratified_sample
from .retrieval import (
    Bm25Index,
    Ranking,
    RrfConfig,
    bm25_search,
    build_bm25_index,
    hybrid_search,
    knn_search,
    rrf_fuse,
)
from .stats import (
    bland_altman,
    flatten_ratings,
    kendall_tau_b,
    mrr_at_k,
    paired_t_test,
    spearman_rho,
)
from .tournament import (
    EloConfig,
    EloReport,
    GameRecord,
    WinRateMatrix,
    elo_expected,
    elo_update,
    run_tournament,
    run_tournaments,
    win_rate_matrix,
)

__version__ = "0.1.0"
