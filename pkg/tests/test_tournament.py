"""Elo updates, shuffled-replay tournaments, and win-rate matrices."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragarena.errors import InvalidInputError
from ragarena.tournament import (
    A_WINS,
    B_WINS,
    TIE,
    EloConfig,
    GameRecord,
    elo_expected,
    elo_update,
    games_from_records,
    run_tournament,
    run_tournaments,
    win_rate_matrix,
)


class TestExpectedScore:
    def test_parity(self):
        assert elo_expected(500, 500) == 0.5

    def test_closed_form_at_rating_gap(self):
        assert elo_expected(571, 436) == pytest.approx(0.68507, abs=1e-4)

    def test_complementarity(self):
        rng = random.Random(1)
        for _ in range(50):
            a = rng.uniform(100, 900)
            b = rng.uniform(100, 900)
            assert elo_expected(a, b) + elo_expected(b, a) == pytest.approx(1.0, abs=1e-12)


class TestUpdate:
    def test_win_at_parity(self):
        assert elo_update(500, 500, A_WINS, 32) == (516.0, 484.0)

    def test_tie_at_parity(self):
        assert elo_update(500, 500, TIE, 32) == (500.0, 500.0)

    def test_favourite_gains_little(self):
        ra, rb = elo_update(600, 400, A_WINS, 32)
        assert ra - 600 == pytest.approx(32 * (1 - elo_expected(600, 400)), abs=1e-12)
        assert ra - 600 == pytest.approx(7.69, abs=1e-2)

    def test_zero_sum_per_update(self):
        rng = random.Random(2)
        for _ in range(100):
            ra0, rb0 = rng.uniform(300, 700), rng.uniform(300, 700)
            outcome = rng.choice([A_WINS, B_WINS, TIE])
            ra1, rb1 = elo_update(ra0, rb0, outcome, 32)
            assert ra1 + rb1 == pytest.approx(ra0 + rb0, abs=1e-9)


def _game(a, b, outcome, qid="q"):
    return GameRecord(qid=qid, agent_a=a, agent_b=b, outcome=outcome)


class TestRunTournament:
    def test_single_game(self):
        ratings = run_tournament(
            [_game("A", "B", A_WINS)], EloConfig(seed=0), random.Random(0)
        )
        assert ratings == {"A": 516.0, "B": 484.0}

    def test_all_ties_stay_at_initial(self):
        games = [_game("A", "B", TIE) for _ in range(10)]
        ratings = run_tournament(games, EloConfig(), random.Random(1))
        assert ratings == {"A": 500.0, "B": 500.0}

    def test_total_rating_conserved_across_seeds(self):
        rng = random.Random(3)
        agents = ["a", "b", "c", "d"]
        games = []
        for i in range(200):
            x, y = rng.sample(agents, 2)
            games.append(_game(x, y, rng.choice([A_WINS, B_WINS, TIE]), qid=f"q{i}"))
        for seed in (0, 1, 2):
            ratings = run_tournament(games, EloConfig(), random.Random(seed))
            assert sum(ratings.values()) == pytest.approx(4 * 500.0, abs=1e-6)

    @given(
        outcomes=st.lists(
            st.tuples(st.integers(0, 3), st.integers(0, 3),
                      st.sampled_from([A_WINS, B_WINS, TIE])),
            min_size=1, max_size=120,
        ),
        seed=st.integers(0, 2**20),
    )
    @settings(max_examples=80, deadline=None)
    def test_rating_pool_conserved_on_arbitrary_logs(self, outcomes, seed):
        games = [
            _game(f"a{x}", f"a{y}", outcome, qid=f"q{i}")
            for i, (x, y, outcome) in enumerate(outcomes)
            if x != y
        ]
        if not games:
            return
        agents = {g.agent_a for g in games} | {g.agent_b for g in games}
        ratings = run_tournament(games, EloConfig(), random.Random(seed))
        assert sum(ratings.values()) == pytest.approx(len(agents) * 500.0, abs=1e-6)

    def test_self_play_rejected(self):
        with pytest.raises(InvalidInputError):
            _game("A", "A", A_WINS)

    def test_empty_log_rejected(self):
        with pytest.raises(InvalidInputError):
            run_tournament([], EloConfig(), random.Random(0))


class TestRunTournaments:
    def test_single_tournament_report(self):
        games = [_game("A", "B", A_WINS)]
        config = EloConfig(n_tournaments=1, seed=7)
        report = run_tournaments(games, config)
        single = run_tournament(games, config, random.Random(config.seed))
        for agent, (mean, std) in report.ratings.items():
            assert mean == single[agent]
            assert std == 0.0

    def test_symmetric_log_stays_near_initial(self):
        # every pair splits evenly with mirrored ties
        agents = ["a", "b", "c"]
        games = []
        for i, (x, y) in enumerate([("a", "b"), ("a", "c"), ("b", "c")]):
            for _ in range(10):
                games.append(_game(x, y, A_WINS, qid=f"q{i}"))
                games.append(_game(x, y, B_WINS, qid=f"q{i}"))
                games.append(_game(x, y, TIE, qid=f"q{i}"))
        report = run_tournaments(games, EloConfig(n_tournaments=500, seed=11))
        for agent in agents:
            mean, _ = report.ratings[agent]
            assert mean == pytest.approx(500.0, abs=2.0)

    def test_report_covers_exactly_log_agents(self):
        games = [_game("A", "B", A_WINS), _game("B", "C", TIE, qid="q2")]
        report = run_tournaments(games, EloConfig(n_tournaments=2, seed=1))
        assert sorted(report.ratings) == ["A", "B", "C"]

    def test_order_sorts_by_mean_then_id(self):
        games = [_game("A", "B", A_WINS) for _ in range(5)]
        report = run_tournaments(games, EloConfig(n_tournaments=50, seed=3))
        assert report.order() == ["A", "B"]

    def test_monotone_dominance_single_case(self):
        games = []
        qid = 0
        for opponent in ("o1", "o2"):
            for _ in range(20):
                games.append(_game("X", opponent, A_WINS, qid=f"q{qid}")); qid += 1
            for _ in range(5):
                games.append(_game("X", opponent, B_WINS, qid=f"q{qid}")); qid += 1
            for _ in range(12):
                games.append(_game("Y", opponent, A_WINS, qid=f"q{qid}")); qid += 1
            for _ in range(12):
                games.append(_game("Y", opponent, B_WINS, qid=f"q{qid}")); qid += 1
        for _ in range(15):
            games.append(_game("X", "Y", A_WINS, qid=f"q{qid}")); qid += 1
        for _ in range(5):
            games.append(_game("X", "Y", B_WINS, qid=f"q{qid}")); qid += 1
        report = run_tournaments(games, EloConfig(n_tournaments=200, seed=5))
        assert report.ratings["X"][0] > report.ratings["Y"][0]


class TestWinRateMatrix:
    def test_published_row_shape(self):
        games = (
            [_game("ragf", "rag", A_WINS, qid=f"q{i}") for i in range(98)]
            + [_game("ragf", "rag", B_WINS, qid=f"q{i}") for i in range(29)]
            + [_game("ragf", "rag", TIE, qid=f"q{i}") for i in range(73)]
        )
        matrix = win_rate_matrix(games)
        assert matrix.win_pct[("ragf", "rag")] == pytest.approx(49.0, abs=1e-9)
        assert matrix.win_pct[("rag", "ragf")] == pytest.approx(14.5, abs=1e-9)
        assert matrix.tie_pct[("ragf", "rag")] == pytest.approx(36.5, abs=1e-9)

    def test_single_game(self):
        matrix = win_rate_matrix([_game("A", "B", A_WINS)])
        assert matrix.win_pct[("A", "B")] == 100.0
        assert matrix.win_pct[("B", "A")] == 0.0

    def test_all_ties(self):
        matrix = win_rate_matrix([_game("A", "B", TIE)] * 3)
        assert matrix.win_pct[("A", "B")] == 0.0
        assert matrix.win_pct[("B", "A")] == 0.0
        assert matrix.tie_pct[("A", "B")] == 100.0

    def test_absent_pair_is_none_not_zero(self):
        games = [_game("A", "B", A_WINS), _game("B", "C", A_WINS, qid="q2")]
        matrix = win_rate_matrix(games)
        assert matrix.win_pct[("A", "C")] is None
        assert matrix.games_between[("A", "C")] == 0

    def test_pair_closure_sums_to_100(self):
        rng = random.Random(9)
        games = []
        agents = ["a", "b", "c"]
        for i in range(300):
            x, y = rng.sample(agents, 2)
            games.append(_game(x, y, rng.choice([A_WINS, B_WINS, TIE]), qid=f"q{i}"))
        matrix = win_rate_matrix(games)
        for r in agents:
            for c in agents:
                if r == c or matrix.win_pct[(r, c)] is None:
                    continue
                total = (
                    matrix.win_pct[(r, c)] + matrix.win_pct[(c, r)] + matrix.tie_pct[(r, c)]
                )
                assert total == pytest.approx(100.0, abs=1e-9)

    def test_avg_column_means_off_diagonal(self):
        games = [
            _game("A", "B", A_WINS),
            _game("A", "C", TIE, qid="q2"),
        ]
        matrix = win_rate_matrix(games)
        assert matrix.avg_win_pct("A") == pytest.approx((100.0 + 0.0) / 2)


class TestGameIo:
    def test_games_from_judge_records(self):
        records = [
            {"qid": "q", "agent_a": "x", "agent_b": "y", "winner": "A",
             "reasoning": "...", "presented_order": "ba"},
            {"qid": "q", "agent_a": "x", "agent_b": "y", "winner": "TIE",
             "reasoning": "...", "presented_order": "ab"},
        ]
        games = games_from_records(records)
        assert games[0].outcome == A_WINS
        assert games[1].outcome == TIE
