"""Elo engine over pairwise game logs.

One tournament replays every judged game once in a shuffled order with
sequential rating updates; rankings are reported as the mean and spread of
final ratings over many independently shuffled replays, which removes the
order dependence of a single pass. Updates are standard Elo:

    E_a = 1 / (1 + 10 ** ((r_b - r_a) / 400))
    r_a' = r_a + K * (S_a - E_a),   S in {1, 0.5, 0}

and each game moves both players by the same delta with opposite signs, so
the rating pool is conserved.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError
from .io import read_jsonl

A_WINS = "A_WINS"
B_WINS = "B_WINS"
TIE = "TIE"
OUTCOMES = (A_WINS, B_WINS, TIE)

DEFAULT_INITIAL_RATING = 500.0
DEFAULT_K_FACTOR = 32.0
DEFAULT_N_TOURNAMENTS = 500

_SCORE_A = {A_WINS: 1.0, B_WINS: 0.0, TIE: 0.5}


@dataclass(frozen=True)
class GameRecord:
    qid: str
    agent_a: str
    agent_b: str
    outcome: str

    def __post_init__(self):
        if self.agent_a == self.agent_b:
            raise InvalidInputError(f"game {self.qid}: agent plays itself ({self.agent_a})")
        if self.outcome not in OUTCOMES:
            raise InvalidInputError(f"game {self.qid}: bad outcome {self.outcome!r}")


@dataclass(frozen=True)
class EloConfig:
    initial_rating: float = DEFAULT_INITIAL_RATING
    k_factor: float = DEFAULT_K_FACTOR
    n_tournaments: int = DEFAULT_N_TOURNAMENTS
    seed: int = 0
    bootstrap: bool = False  # resample games per replay instead of only reshuffling

    def __post_init__(self):
        if self.k_factor <= 0:
            raise InvalidInputError("k_factor must be > 0")
        if self.n_tournaments < 1:
            raise InvalidInputError("n_tournaments must be >= 1")


def elo_expected(rating_a: float, rating_b: float) -> float:
    """Expected score of a against b; complements of a pair sum to 1."""
    return 1.0 / (1.0 + 10.0 ** ((rating_b - rating_a) / 400.0))


def elo_update(
    rating_a: float, rating_b: float, outcome: str, k_factor: float
) -> tuple[float, float]:
    """Apply one game; the two ratings move by one shared delta."""
    if outcome not in OUTCOMES:
        raise InvalidInputError(f"bad outcome {outcome!r}")
    delta = k_factor * (_SCORE_A[outcome] - elo_expected(rating_a, rating_b))
    return rating_a + delta, rating_b - delta


def run_tournament(
    games: Sequence[GameRecord], config: EloConfig, rng: random.Random
) -> dict[str, float]:
    """One shuffled replay of all games with sequential updates."""
    if not games:
        raise InvalidInputError("cannot run a tournament over zero games")
    ratings: dict[str, float] = {}
    for g in games:
        ratings.setdefault(g.agent_a, config.initial_rating)
        ratings.setdefault(g.agent_b, config.initial_rating)
    if config.bootstrap:
        order = [games[rng.randrange(len(games))] for _ in range(len(games))]
    else:
        order = list(games)
        rng.shuffle(order)
    k = config.k_factor
    for g in order:
        ra, rb = ratings[g.agent_a], ratings[g.agent_b]
        delta = k * (_SCORE_A[g.outcome] - elo_expected(ra, rb))
        ratings[g.agent_a] = ra + delta
        ratings[g.agent_b] = rb - delta
    return ratings


@dataclass(frozen=True)
class EloReport:
    """Per-agent mean/std of final ratings over repeated shuffled replays."""

    ratings: dict[str, tuple[float, float]]  # agent -> (mean, std)
    config: EloConfig

    def order(self) -> list[str]:
        """Agents best-first; rating ties break by agent id."""
        return sorted(self.ratings, key=lambda a: (-self.ratings[a][0], a))

    def to_dict(self) -> dict:
        return {
            agent: {"mean": round(mean, 6), "std": round(std, 6)}
            for agent, (mean, std) in sorted(self.ratings.items())
        }


def run_tournaments(games: Sequence[GameRecord], config: EloConfig) -> EloReport:
    """Average final ratings over n_tournaments independently seeded replays."""
    if not games:
        raise InvalidInputError("cannot run tournaments over zero games")
    samples: dict[str, list[float]] = {}
    for i in range(config.n_tournaments):
        rng = random.Random(config.seed + i)
        final = run_tournament(games, config, rng)
        for agent, rating in final.items():
            samples.setdefault(agent, []).append(rating)
    ratings = {}
    for agent, values in samples.items():
        mean = sum(values) / len(values)
        if len(values) > 1:
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        ratings[agent] = (mean, std)
    return EloReport(ratings=ratings, config=config)


@dataclass(frozen=True)
class WinRateMatrix:
    """Directed win percentages; cells with zero games are absent (None)."""

    agents: tuple[str, ...]
    win_pct: dict[tuple[str, str], float | None]
    tie_pct: dict[tuple[str, str], float | None]  # symmetric per ordered pair
    games_between: dict[tuple[str, str], int]

    def avg_win_pct(self, agent: str) -> float | None:
        cells = [
            self.win_pct[(agent, other)]
            for other in self.agents
            if other != agent and self.win_pct[(agent, other)] is not None
        ]
        if not cells:
            return None
        return sum(cells) / len(cells)


def win_rate_matrix(games: Sequence[GameRecord]) -> WinRateMatrix:
    """Directed win% and tie% per agent pair, plus per-pair game counts."""
    agents = sorted({g.agent_a for g in games} | {g.agent_b for g in games})
    wins: dict[tuple[str, str], int] = {}
    ties: dict[tuple[str, str], int] = {}
    totals: dict[tuple[str, str], int] = {}
    for g in games:
        for pair in ((g.agent_a, g.agent_b), (g.agent_b, g.agent_a)):
            totals[pair] = totals.get(pair, 0) + 1
        if g.outcome == A_WINS:
            wins[(g.agent_a, g.agent_b)] = wins.get((g.agent_a, g.agent_b), 0) + 1
        elif g.outcome == B_WINS:
            wins[(g.agent_b, g.agent_a)] = wins.get((g.agent_b, g.agent_a), 0) + 1
        else:
            for pair in ((g.agent_a, g.agent_b), (g.agent_b, g.agent_a)):
                ties[pair] = ties.get(pair, 0) + 1

    win_pct: dict[tuple[str, str], float | None] = {}
    tie_pct: dict[tuple[str, str], float | None] = {}
    games_between: dict[tuple[str, str], int] = {}
    for r in agents:
        for c in agents:
            if r == c:
                continue
            n = totals.get((r, c), 0)
            games_between[(r, c)] = n
            if n == 0:
                win_pct[(r, c)] = None
                tie_pct[(r, c)] = None
            else:
                win_pct[(r, c)] = 100.0 * wins.get((r, c), 0) / n
                tie_pct[(r, c)] = 100.0 * ties.get((r, c), 0) / n
    return WinRateMatrix(
        agents=tuple(agents), win_pct=win_pct, tie_pct=tie_pct, games_between=games_between
    )


# --- games.jsonl ------------------------------------------------------------

_WINNER_TO_OUTCOME = {"A": A_WINS, "B": B_WINS, "TIE": TIE}


def games_from_records(records: Iterable[dict]) -> list[GameRecord]:
    """Read judge-module games.jsonl rows; presentation order is ignored."""
    games = []
    for rec in records:
        games.append(
            GameRecord(
                qid=rec["qid"],
                agent_a=rec["agent_a"],
                agent_b=rec["agent_b"],
                outcome=_WINNER_TO_OUTCOME[rec["winner"]],
            )
        )
    return games


def load_games(path: str | Path) -> list[GameRecord]:
    return games_from_records(read_jsonl(path))
