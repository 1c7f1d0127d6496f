"""Prompt templates and slot rendering.

Templates use {slot} markers. Rendering replaces only the named slots, so
braces inside template prose or substituted values never break formatting.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_SLOT_RE = re.compile(
    r"\{(query|document|documents|answer|answer_a|answer_b|factors|examples|passage|n)\}"
)

TEMPLATE_NAMES = (
    "retrieval_judge",
    "pointwise_judge",
    "pairwise_judge",
    "answer",
    "variation",
    "query_generation",
)


def load_template(name: str, path: str | Path | None = None) -> str:
    """Load a bundled template by name, or an override file if path is set."""
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render(template: str, **slots) -> str:
    """Substitute named slots; unknown markers are left untouched."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key in slots:
            return str(slots[key])
        return match.group(0)

    return _SLOT_RE.sub(sub, template)
