"""Aho-Corasick automaton over characters.

Build the goto trie, then failure links breadth-first; each node's output
list is its own pattern plus the outputs along its failure chain. A scan
reports every (possibly overlapping) occurrence of every pattern.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, NamedTuple


class Match(NamedTuple):
    start: int
    end: int  # exclusive
    pattern: str


class AhoCorasick:
    """Multi-pattern matcher.

    >>> ac = AhoCorasick(["he", "she", "hers"])
    >>> sorted(m.pattern for m in ac.finditer("ushers"))
    ['he', 'hers', 'she']
    """

    def __init__(self, patterns: Iterable[str] = ()):
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[tuple[str, ...]] = [()]
        self._own: list[str | None] = [None]
        self.patterns: list[str] = []
        for p in patterns:
            self._add(p)
        self._build()

    def _add(self, pattern: str) -> None:
        if not pattern or pattern in self.patterns:
            return
        self.patterns.append(pattern)
        node = 0
        for ch in pattern:
            nxt = self._goto[node].get(ch)
            if nxt is None:
                nxt = len(self._goto)
                self._goto[node][ch] = nxt
                self._goto.append({})
                self._fail.append(0)
                self._out.append(())
                self._own.append(None)
            node = nxt
        self._own[node] = pattern

    def _build(self) -> None:
        queue = deque()
        for nxt in self._goto[0].values():
            self._fail[nxt] = 0
            queue.append(nxt)
        self._out[0] = ()
        while queue:
            node = queue.popleft()
            own = self._own[node]
            self._out[node] = ((own,) if own else ()) + self._out[self._fail[node]]
            for ch, nxt in self._goto[node].items():
                f = self._fail[node]
                while f and ch not in self._goto[f]:
                    f = self._fail[f]
                cand = self._goto[f].get(ch, 0)
                self._fail[nxt] = cand if cand != nxt else 0
                queue.append(nxt)

    def finditer(self, text: str):
        goto, fail, out = self._goto, self._fail, self._out
        node = 0
        for i, ch in enumerate(text):
            while node and ch not in goto[node]:
                node = fail[node]
            node = goto[node].get(ch, 0)
            for pat in out[node]:
                yield Match(i + 1 - len(pat), i + 1, pat)

    def find_all(self, text: str) -> list[Match]:
        return list(self.finditer(text))


def naive_find_all(text: str, patterns: Iterable[str]) -> list[Match]:
    """Reference scanner: every occurrence of every pattern via ``str.find``."""
    found = []
    for p in dict.fromkeys(patterns):
        if not p:
            continue
        i = text.find(p)
        while i != -1:
            found.append(Match(i, i + len(p), p))
            i = text.find(p, i + 1)
    return found
