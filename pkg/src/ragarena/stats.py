"""Rank-agreement and significance statistics for judge/human comparisons.

Kendall's tau-b is computed from explicit pair counts:

    tau_b = (P - Q) / sqrt((P + Q + T) * (P + Q + U))

with P concordant, Q discordant, T tied only in x, U tied only in y; pairs
tied in both contribute to none of the four. Its p-value is a seeded
two-sided permutation estimate rather than a normal approximation, so it is
exactly reproducible. The paired t-test converts t to a two-tailed p through
the regularized incomplete beta function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .errors import DegenerateStatisticError, InvalidInputError

LOA_MULTIPLIER = 1.96


@dataclass(frozen=True)
class ConcordanceCounts:
    P: int  # concordant pairs
    Q: int  # discordant pairs
    T: int  # tied only in x
    U: int  # tied only in y
    both_tied: int


def count_concordance(x: Sequence[float], y: Sequence[float]) -> ConcordanceCounts:
    """Classify all C(n,2) index pairs of (x, y)."""
    if len(x) != len(y):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInputError("need at least two observations")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    i, j = np.triu_indices(len(xa), k=1)
    dx = np.sign(xa[i] - xa[j])
    dy = np.sign(ya[i] - ya[j])
    prod = dx * dy
    concordant = int(np.sum(prod > 0))
    discordant = int(np.sum(prod < 0))
    tied_x_only = int(np.sum((dx == 0) & (dy != 0)))
    tied_y_only = int(np.sum((dx != 0) & (dy == 0)))
    both = int(np.sum((dx == 0) & (dy == 0)))
    return ConcordanceCounts(concordant, discordant, tied_x_only, tied_y_only, both)


def tau_b_from_counts(counts: ConcordanceCounts) -> float:
    denom = math.sqrt(
        (counts.P + counts.Q + counts.T) * (counts.P + counts.Q + counts.U)
    )
    if denom == 0.0:
        raise DegenerateStatisticError("tau-b undefined: one side is all ties")
    return (counts.P - counts.Q) / denom


def kendall_tau_b(
    x: Sequence[float],
    y: Sequence[float],
    p_value_permutations: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Tau-b with a two-sided permutation p-value, deterministic under seed."""
    counts = count_concordance(x, y)
    tau = tau_b_from_counts(counts)
    if p_value_permutations < 1:
        return tau, float("nan")

    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    n = len(xa)
    i, j = np.triu_indices(n, k=1)
    dx = np.sign(xa[i] - xa[j])
    # The tie structure of each side is permutation-invariant, so the
    # denominator is a constant across shuffles.
    denom = math.sqrt(
        (counts.P + counts.Q + counts.T) * (counts.P + counts.Q + counts.U)
    )
    rng = np.random.default_rng(seed)
    hits = 0
    observed = abs(tau)
    for _ in range(p_value_permutations):
        yp = ya[rng.permutation(n)]
        numerator = float(np.sum(dx * np.sign(yp[i] - yp[j])))
        if abs(numerator / denom) >= observed:
            hits += 1
    return tau, hits / p_value_permutations


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda idx: values[idx])
    ranks = [0.0] * len(values)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and values[order[end + 1]] == values[order[pos]]:
            end += 1
        mean_rank = (pos + end) / 2.0 + 1.0
        for idx in order[pos : end + 1]:
            ranks[idx] = mean_rank
        pos = end + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-ranked values."""
    if len(x) != len(y):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInputError("need at least two observations")
    rx = np.asarray(average_ranks(x))
    ry = np.asarray(average_ranks(y))
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if denom == 0.0:
        raise DegenerateStatisticError("spearman undefined: constant input")
    return float(sx @ sy) / denom


@dataclass(frozen=True)
class BlandAltmanResult:
    bias: float
    loa_low: float
    loa_high: float
    points: tuple[tuple[float, float], ...]  # (mean of pair, difference x - y)


def bland_altman(x: Sequence[float], y: Sequence[float]) -> BlandAltmanResult:
    """Agreement between two raters: bias and 1.96-sigma limits of x - y."""
    if len(x) != len(y):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInputError("need at least two observations")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    diffs = xa - ya
    bias = float(diffs.mean())
    spread = LOA_MULTIPLIER * float(diffs.std(ddof=1))
    points = tuple(
        (float(m), float(d)) for m, d in zip((xa + ya) / 2.0, diffs)
    )
    return BlandAltmanResult(
        bias=bias, loa_low=bias - spread, loa_high=bias + spread, points=points
    )


def paired_t_test(x: Sequence[float], y: Sequence[float]) -> tuple[float, int, float]:
    """Two-tailed paired t-test; returns (t, df, p)."""
    if len(x) != len(y):
        raise InvalidInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InvalidInputError("need at least two observations")
    diffs = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        raise DegenerateStatisticError("paired t-test degenerate: zero-variance differences")
    n = len(diffs)
    t = float(diffs.mean()) / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, df, p


def mrr_at_k(rankings, judgments, k: int, min_label: int) -> float:
    """Mean reciprocal rank of the first passage labelled >= min_label in the
    top k; a query with no such passage contributes zero."""
    if not rankings:
        raise InvalidInputError("need at least one ranking")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    labels = {(j.qid, j.pid): j.label for j in judgments}
    total = 0.0
    for ranking in rankings:
        for entry in ranking.entries[:k]:
            if labels.get((ranking.qid, entry.pid), 0) >= min_label:
                total += 1.0 / entry.rank
                break
    return total / len(rankings)


ASPECTS = ("relevance", "accuracy", "completeness", "precision")

RatingTable = Mapping[tuple[str, str], Mapping[str, int]]  # (item, agent) -> aspect -> score


def flatten_ratings(llm: RatingTable, human: RatingTable) -> tuple[list[float], list[float]]:
    """Flatten two rating tables into aligned 1-D vectors.

    Ordering is (item id, aspect name, agent id), applied identically to
    both raters; the tables must cover the same (item, agent, aspect) keys.
    """

    def keyset(table: RatingTable) -> set[tuple[str, str, str]]:
        return {
            (item, aspect, agent)
            for (item, agent), scores in table.items()
            for aspect in scores
        }

    llm_keys = keyset(llm)
    human_keys = keyset(human)
    if llm_keys != human_keys:
        missing_in_llm = sorted(human_keys - llm_keys)
        missing_in_human = sorted(llm_keys - human_keys)
        raise InvalidInputError(
            "rating tables do not align; "
            f"missing in first: {missing_in_llm[:10]}; "
            f"missing in second: {missing_in_human[:10]}"
        )
    ordered = sorted(llm_keys, key=lambda key: (key[0], key[1], key[2]))
    xs = [float(llm[(item, agent)][aspect]) for item, aspect, agent in ordered]
    ys = [float(human[(item, agent)][aspect]) for item, aspect, agent in ordered]
    return xs, ys


@dataclass(frozen=True)
class AgreementReport:
    tau_b: float
    tau_p_value: float
    rho: float
    bias: float
    loa_low: float
    loa_high: float
    n: int

    def to_dict(self) -> dict:
        return {
            "tau_b": round(self.tau_b, 6),
            "tau_p_value": round(self.tau_p_value, 6),
            "rho": round(self.rho, 6),
            "bias": round(self.bias, 6),
            "loa_low": round(self.loa_low, 6),
            "loa_high": round(self.loa_high, 6),
            "n": self.n,
        }


def agreement_report(
    llm: RatingTable,
    human: RatingTable,
    p_value_permutations: int = 10_000,
    seed: int = 0,
) -> tuple[AgreementReport, BlandAltmanResult]:
    """Full rater-agreement analysis over aligned flattened ratings."""
    xs, ys = flatten_ratings(llm, human)
    tau, p = kendall_tau_b(xs, ys, p_value_permutations=p_value_permutations, seed=seed)
    rho = spearman_rho(xs, ys)
    ba = bland_altman(xs, ys)
    report = AgreementReport(
        tau_b=tau, tau_p_value=p, rho=rho,
        bias=ba.bias, loa_low=ba.loa_low, loa_high=ba.loa_high, n=len(xs),
    )
    return report, ba
