"""Loading of the shipped text lexicons (or user replacements)."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path


def _read(path: str | Path | None, default: str) -> str:
    if path is None:
        return resources.files("har_guard").joinpath("data").joinpath(default).read_text(encoding="utf-8")
    return Path(path).read_text(encoding="utf-8")


def _lines(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


@lru_cache(maxsize=None)
def load_patterns(path: str | None = None, default: str = "blacklist.txt") -> tuple[str, ...]:
    """One pattern per line; ``#`` starts a comment line."""
    return tuple(_lines(_read(path, default)))


@lru_cache(maxsize=None)
def load_pairs(path: str | None = None, default: str = "synonyms.tsv") -> tuple[tuple[str, str], ...]:
    """``term<TAB>replacement`` per line."""
    pairs = []
    for line in _lines(_read(path, default)):
        term, _, repl = line.partition("\t")
        if not repl:
            raise ValueError(f"lexicon line without tab separator: {line!r}")
        pairs.append((term, repl))
    return tuple(pairs)


def default_blacklist() -> tuple[str, ...]:
    return load_patterns(None, "blacklist.txt")


def default_graylist() -> tuple[str, ...]:
    return load_patterns(None, "graylist.txt")


def keyword_table() -> dict[str, tuple[str, ...]]:
    return {label: tuple(k.strip() for k in kws.split(",")) for label, kws in load_pairs(None, "keywords.tsv")}


def filler_vocabulary() -> tuple[str, ...]:
    words = []
    for line in load_patterns(None, "unrelated_words.txt"):
        words.extend(line.split())
    return tuple(words)


def term_regex(term: str) -> re.Pattern:
    """Case-insensitive regex for ``term`` with word boundaries on the sides
    that start/end with a word character."""
    left = r"(?<!\w)" if re.match(r"\w", term) else ""
    right = r"(?!\w)" if re.search(r"\w$", term) else ""
    return re.compile(left + re.escape(term) + right, re.IGNORECASE)


def replace_terms(text: str, pairs, predicate=None) -> tuple[str, int]:
    """Single-pass replacement of lexicon terms, longest term first.

    ``predicate(match_index)`` decides per occurrence whether to replace.
    Returns the new text and the replacement count.
    """
    ordered = sorted(pairs, key=lambda p: (-len(p[0]), p[0]))
    alternation = "|".join(f"(?:{term_regex(t).pattern})" for t, _ in ordered)
    if not alternation:
        return text, 0
    lookup = {t.lower(): r for t, r in ordered}
    count = 0
    seen = 0

    def sub(m: re.Match) -> str:
        nonlocal count, seen
        idx = seen
        seen += 1
        if predicate is not None and not predicate(idx):
            return m.group(0)
        count += 1
        return lookup[m.group(0).lower()]

    out = re.compile(alternation, re.IGNORECASE).sub(sub, text)
    return out, count
