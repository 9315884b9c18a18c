"""Small text helpers shared by the mock provider and suggestion labeling."""

from __future__ import annotations

import re
from collections import Counter
from collections.abc import Iterable

_TOKEN_RE = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset("""
a about after all an and any are as at be before between both but by can
could data dataset datasets did do does during each for from had has have
how i if in into is it its of on or over per set such than that the their
them then these they this to under up us use used using was we were what
when where which while will with you your
""".split())


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, stopwords removed."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in STOPWORDS]


def most_frequent_token(texts: Iterable[str]) -> str:
    """Most frequent keyword token across texts; ties by first appearance."""
    counts: Counter[str] = Counter()
    order: dict[str, int] = {}
    for text in texts:
        for tok in tokenize(text):
            counts[tok] += 1
            order.setdefault(tok, len(order))
    if not counts:
        return ""
    return min(counts, key=lambda t: (-counts[t], order[t]))
