"""Shared tokenizer.

Search terms and embedded tokens must agree, so the query module and the
embedding module both import this exact function: lowercase the text, then
split on any character outside [a-z0-9].
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and return its [a-z0-9]+ runs in order."""
    return _TOKEN_RE.findall(text.lower())
