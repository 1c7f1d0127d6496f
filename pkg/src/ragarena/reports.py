"""Delimited and plain-text report rendering.

Every report is written in two delimited-friendly forms (CSV/JSON) plus a
fixed-width text table whose shape mirrors the win-rate matrix, the Elo
ranking list, and the per-agent MRR grid.
"""

from __future__ import annotations

import csv
import io as _io
from typing import Mapping, Sequence

from .stats import AgreementReport, BlandAltmanResult, mrr_at_k
from .tournament import EloReport, WinRateMatrix

MRR_CATEGORIES = (
    ("very_relevant", 2),
    ("somewhat_or_very_relevant", 1),
)


def _csv_text(rows: Sequence[Sequence]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


# --- win rates ---------------------------------------------------------------


def winrates_csv(matrix: WinRateMatrix) -> str:
    header = ["agent", *matrix.agents, "avg"]
    rows: list[list] = [header]
    for r in matrix.agents:
        row: list = [r]
        for c in matrix.agents:
            if r == c:
                row.append("")
            else:
                pct = matrix.win_pct[(r, c)]
                row.append("" if pct is None else f"{pct:.1f}")
        avg = matrix.avg_win_pct(r)
        row.append("" if avg is None else f"{avg:.1f}")
        rows.append(row)
    return _csv_text(rows)


def winrates_table(matrix: WinRateMatrix) -> str:
    width = max([len(a) for a in matrix.agents] + [7])
    header = ["agent".ljust(width)] + [a.ljust(width) for a in matrix.agents]
    header.append("AVG".ljust(width))
    lines = ["  ".join(header)]
    for r in matrix.agents:
        cells = [r.ljust(width)]
        for c in matrix.agents:
            if r == c:
                cells.append("---".ljust(width))
            else:
                pct = matrix.win_pct[(r, c)]
                cells.append(("n/a" if pct is None else f"{pct:.1f}%").ljust(width))
        avg = matrix.avg_win_pct(r)
        cells.append(("n/a" if avg is None else f"{avg:.1f}%").ljust(width))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


# --- elo ----------------------------------------------------------------------


def elo_table(report: EloReport) -> str:
    width = max([len(a) for a in report.ratings] + [5])
    lines = [f"{'agent'.ljust(width)}  {'elo':>7}  {'std':>7}"]
    for agent in report.order():
        mean, std = report.ratings[agent]
        lines.append(f"{agent.ljust(width)}  {mean:7.1f}  {std:7.1f}")
    return "\n".join(lines) + "\n"


# --- mrr -----------------------------------------------------------------------


def mrr_rows(
    rankings_by_agent: Mapping[str, Sequence],
    methods_by_agent: Mapping[str, str],
    judgments,
    k: int,
) -> list[dict]:
    """One row per (agent, relevance category)."""
    rows = []
    for agent in sorted(rankings_by_agent):
        rankings = rankings_by_agent[agent]
        for category, min_label in MRR_CATEGORIES:
            rows.append(
                {
                    "agent": agent,
                    "method": methods_by_agent.get(agent, ""),
                    "category": category,
                    "mrr": mrr_at_k(rankings, judgments, k, min_label),
                    "n_queries": len(rankings),
                }
            )
    return rows


def mrr_csv(rows: Sequence[dict]) -> str:
    table = [["agent", "method", "category", "mrr", "n_queries"]]
    for row in rows:
        table.append(
            [row["agent"], row["method"], row["category"], f"{row['mrr']:.4f}",
             row["n_queries"]]
        )
    return _csv_text(table)


def mrr_table(rows: Sequence[dict]) -> str:
    agents = sorted({row["agent"] for row in rows})
    by_key = {(row["agent"], row["category"]): row["mrr"] for row in rows}
    methods = {row["agent"]: row["method"] for row in rows}
    width = max([len(a) for a in agents] + [5])
    lines = [
        f"{'agent'.ljust(width)}  {'method'.ljust(6)}  "
        f"{'very':>7}  {'some+very':>10}"
    ]
    for agent in agents:
        very = by_key.get((agent, "very_relevant"), 0.0)
        some = by_key.get((agent, "somewhat_or_very_relevant"), 0.0)
        lines.append(
            f"{agent.ljust(width)}  {methods.get(agent, '').ljust(6)}  "
            f"{very:7.3f}  {some:10.3f}"
        )
    return "\n".join(lines) + "\n"


# --- agreement -------------------------------------------------------------------


def agreement_table(report: AgreementReport) -> str:
    return (
        f"n                {report.n}\n"
        f"kendall tau-b    {report.tau_b:.4f} (permutation p = {report.tau_p_value:.4f})\n"
        f"spearman rho     {report.rho:.4f}\n"
        f"bias (x - y)     {report.bias:.4f}\n"
        f"limits of agreement  [{report.loa_low:.4f}, {report.loa_high:.4f}]\n"
    )


def bland_altman_csv(result: BlandAltmanResult) -> str:
    rows: list[list] = [["mean", "diff"]]
    for mean, diff in result.points:
        rows.append([f"{mean:.6f}", f"{diff:.6f}"])
    return _csv_text(rows)
