"""Tokenizing and misspelling-tolerant keyword matching over free-text scene descriptions."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

NEGATION_TOKENS = frozenset({"no", "not", "without"})
NEGATION_WINDOW = 2
SHORT_KEYWORD = 4  # keywords shorter than this must match exactly

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list:
    """Lowercased maximal alphanumeric runs, in order."""
    return _TOKEN.findall(text.lower()) if text else []


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def is_negated(tokens: Sequence[str], index: int, window: int = NEGATION_WINDOW,
               negations: Iterable[str] = NEGATION_TOKENS) -> bool:
    negations = set(negations)
    return any(t in negations for t in tokens[max(0, index - window):index])


def keyword_match(tokens: Sequence[str], keyword: str, max_dist: int, *,
                  window: int = NEGATION_WINDOW, negations: Iterable[str] = NEGATION_TOKENS) -> bool:
    """True iff some non-negated token is within the allowed edit distance of ``keyword``.

    The first character must match exactly, and keywords shorter than four
    characters get no tolerance at all (``"no"`` must never fuzz into ``"to"``).
    """
    if not keyword:
        return False
    limit = 0 if len(keyword) < SHORT_KEYWORD else max_dist
    negations = set(negations)
    for i, tok in enumerate(tokens):
        if tok[0] != keyword[0]:
            continue
        if abs(len(tok) - len(keyword)) > limit:
            continue
        if edit_distance(tok, keyword) > limit:
            continue
        if is_negated(tokens, i, window, negations):
            continue
        return True
    return False
