"""Input sanitization: interaction tuple, deviation check, MAD winsorizing
and median fusion of signal channels, and lexical filtering of prompts.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .automaton import AhoCorasick
from .embedding import Embedder, default_embedder, max_similarity
from .errors import ConfigurationError, ParameterError
from .imu import ImuWindow
from .lexicons import default_blacklist, default_graylist
from .prompts import Kind, Prompt, PromptSegment, render

TAU_SAN = 0.75
TAU_MAD = 2.5
GRAYLIST_TRUST = 0.4
MAD_FLOOR = 1e-9

_ZERO_WIDTH = dict.fromkeys(map(ord, "​‌‍⁠﻿­"))
_WS = re.compile(r"\s+")
_SPACE_BEFORE_PUNCT = re.compile(r"\s+([.,;:!?])")
_LEADING_PUNCT = re.compile(r"^[\s.,;:!?]+")


class Strictness(str, Enum):
    NORMAL = "normal"
    HIGH = "high"


class Action(str, Enum):
    REMOVED = "removed"
    DOWNWEIGHTED = "downweighted"
    KEPT = "kept"


@dataclass(frozen=True)
class LexicalVerdict:
    token: str
    trust: float
    action: Action

    def to_dict(self) -> dict:
        return {"token": self.token, "trust": self.trust, "action": self.action.value}


@dataclass
class GuardRequest:
    strictness: Strictness = Strictness.NORMAL
    prototype: Prompt | None = None


@dataclass
class InteractionTuple:
    goal: str
    state: dict
    request: GuardRequest
    observed: Prompt
    benign_output: str | None = None
    deviation_score: float | None = None

    def escalate(self) -> None:
        self.request.strictness = Strictness.HIGH


@dataclass
class SanitizeReport:
    deviation_score: float | None
    verdicts: list[LexicalVerdict] = field(default_factory=list)
    channel_weights: dict[str, list[float]] = field(default_factory=dict)
    clipped_sample_count: int = 0
    strictness: Strictness = Strictness.NORMAL

    @property
    def removed(self) -> list[LexicalVerdict]:
        return [v for v in self.verdicts if v.action is Action.REMOVED]

    @property
    def downweighted(self) -> list[LexicalVerdict]:
        return [v for v in self.verdicts if v.action is Action.DOWNWEIGHTED]

    def to_json(self) -> str:
        return json.dumps({
            "deviation_score": self.deviation_score,
            "strictness": self.strictness.value,
            "clipped_sample_count": self.clipped_sample_count,
            "channel_weights": self.channel_weights,
            "verdicts": [v.to_dict() for v in self.verdicts if v.action is not Action.KEPT],
        }, sort_keys=True)


# --- text -------------------------------------------------------------------

def canonicalize(text: str) -> str:
    """NFC, drop zero-width characters, collapse whitespace. Case is kept."""
    text = unicodedata.normalize("NFC", text).translate(_ZERO_WIDTH)
    return _WS.sub(" ", text).strip()


def canonicalize_prompt(p: Prompt) -> Prompt:
    segs = []
    for s in p.segments:
        t = canonicalize(s.text)
        if not t and s.kind is not Kind.SEPARATOR:
            continue
        segs.append(s if t == s.text else PromptSegment(s.kind, t, s.origin, s.trust))
    return p.with_segments(segs)


def _fold(text: str) -> str:
    # lower-case per character while keeping offsets aligned with the input
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in text)


def _is_word(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _tidy(text: str) -> str:
    text = _WS.sub(" ", text)
    text = _SPACE_BEFORE_PUNCT.sub(r"\1", text)
    return _LEADING_PUNCT.sub("", text).strip()


class LexicalFilter:
    """Blacklist/graylist filter backed by one Aho-Corasick automaton.

    Matching is case-insensitive on canonical text and respects word
    boundaries at pattern ends that are word characters.
    """

    def __init__(self, blacklist: Sequence[str] | None = None, graylist: Sequence[str] | None = None,
                 alpha: float = GRAYLIST_TRUST):
        if not 0 <= alpha < 1:
            raise ConfigurationError("graylist trust must satisfy 0 <= alpha < 1")
        black = [_fold(canonicalize(p)) for p in (default_blacklist() if blacklist is None else blacklist)]
        gray = [_fold(canonicalize(p)) for p in (default_graylist() if graylist is None else graylist)]
        black = list(dict.fromkeys(p for p in black if p))
        gray = list(dict.fromkeys(p for p in gray if p))
        for b in black:
            for g in gray:
                if b in g or g in b:
                    raise ConfigurationError(f"blacklist entry {b!r} overlaps graylist entry {g!r}")
        self.alpha = alpha
        self.blacklist = frozenset(black)
        self.graylist = frozenset(gray)
        self._ac = AhoCorasick(black + gray)

    def matches(self, text: str):
        """Word-bounded pattern hits in canonical ``text`` as (start, end, pattern)."""
        folded = _fold(text)
        out = []
        for m in self._ac.finditer(folded):
            if _is_word(m.pattern[0]) and m.start > 0 and _is_word(folded[m.start - 1]):
                continue
            if _is_word(m.pattern[-1]) and m.end < len(folded) and _is_word(folded[m.end]):
                continue
            out.append(m)
        return out

    def _filter_text(self, text: str, strict: bool):
        hits = self.matches(text)
        remove = []
        verdicts = []
        trust = 1.0
        for m in hits:
            token = text[m.start:m.end]
            if m.pattern in self.blacklist or strict:
                remove.append((m.start, m.end))
                verdicts.append(LexicalVerdict(token, 0.0, Action.REMOVED))
                trust = 0.0
            else:
                verdicts.append(LexicalVerdict(token, self.alpha, Action.DOWNWEIGHTED))
                trust = min(trust, self.alpha)
        if not remove:
            return text, verdicts, trust, hits
        keep = np.ones(len(text), dtype=bool)
        for a, b in remove:
            keep[a:b] = False
        new = "".join(ch for ch, k in zip(text, keep) if k)
        return _tidy(new), verdicts, trust, hits

    def __call__(self, p: Prompt, strict: bool = False) -> tuple[Prompt, list[LexicalVerdict]]:
        return self.filter(p, strict)

    def filter(self, p: Prompt, strict: bool = False) -> tuple[Prompt, list[LexicalVerdict]]:
        """Remove blacklisted (and, when ``strict``, graylisted) phrases.

        Graylist hits stay in place and cap the segment's trust at ``alpha``.
        A segment left without any alphanumeric character is dropped.
        Removal repeats until no removable pattern remains.
        """
        verdicts: list[LexicalVerdict] = []
        segs = []
        for s in p.segments:
            if s.kind is Kind.SEPARATOR:
                segs.append(s)
                continue
            text = canonicalize(s.text)
            seg_trust = s.trust
            seg_verdicts: list[LexicalVerdict] = []
            while True:
                new, vs, trust, hits = self._filter_text(text, strict)
                seg_verdicts.extend(v for v in vs if v.action is Action.REMOVED)
                seg_trust = min(seg_trust, trust)
                if new == text:
                    seg_verdicts.extend(v for v in vs if v.action is Action.DOWNWEIGHTED)
                    covered = np.zeros(len(text), dtype=bool)
                    for m in hits:
                        covered[m.start:m.end] = True
                    break
                text = new
            for tok in re.finditer(r"\S+", text):
                if not covered[tok.start():tok.end()].any():
                    seg_verdicts.append(LexicalVerdict(tok.group(0), 1.0, Action.KEPT))
            verdicts.extend(seg_verdicts)
            if not any(ch.isalnum() for ch in text):
                continue
            if text != s.text or seg_trust != s.trust:
                s = PromptSegment(s.kind, text, s.origin, seg_trust)
            segs.append(s)
        return p.with_segments(segs), verdicts


_DEFAULT_FILTER: LexicalFilter | None = None


def default_filter() -> LexicalFilter:
    global _DEFAULT_FILTER
    if _DEFAULT_FILTER is None:
        _DEFAULT_FILTER = LexicalFilter()
    return _DEFAULT_FILTER


def lexical_filter(p: Prompt, blacklist: Sequence[str] = (), graylist: Sequence[str] = (),
                   strict: bool = False, alpha: float = GRAYLIST_TRUST):
    """One-shot form of :class:`LexicalFilter` with explicit pattern sets."""
    return LexicalFilter(blacklist, graylist, alpha).filter(p, strict)


# --- signal -----------------------------------------------------------------

def mad(x: np.ndarray) -> float:
    """Median absolute deviation, unscaled."""
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))))


def winsorize(x: np.ndarray, tau: float = TAU_MAD) -> tuple[np.ndarray, int]:
    """Clip samples further than ``tau * MAD`` from the median to that
    boundary. Returns the clipped copy and the number of clipped samples."""
    x = np.asarray(x, dtype=float)
    med = np.median(x)
    m = max(mad(x), MAD_FLOOR)
    lo, hi = med - tau * m, med + tau * m
    n = int(np.count_nonzero((x < lo) | (x > hi)))
    return np.clip(x, lo, hi), n


def weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Column-wise lower weighted median of ``values`` (shape (J, n))."""
    order = np.argsort(values, axis=0, kind="stable")
    v = np.take_along_axis(values, order, axis=0)
    w = np.asarray(weights, dtype=float)[order]
    cum = np.cumsum(w, axis=0)
    half = 0.5 * cum[-1]
    idx = np.argmax(cum >= half - 1e-12, axis=0)
    return v[idx, np.arange(values.shape[1])]


@dataclass
class FusionResult:
    fused: np.ndarray
    weights: np.ndarray
    clipped: np.ndarray
    clipped_count: int


def mad_normalize(channels: Sequence[np.ndarray], tau: float = TAU_MAD) -> FusionResult:
    """Fuse J parallel copies of a signal position-wise.

    Each channel is winsorized at ``tau * MAD`` and its weight is
    ``(1/MAD_j) / sum_k (1/MAD_k)`` on the clipped copy (MAD floored at
    1e-9). With J >= 2 the fused value is the weighted median of the
    channel values, so fewer than half the weight can never pull it
    outside the range of the remaining channels. A single channel has
    nothing to vote against and comes back winsorized.
    """
    if len(channels) < 1:
        raise ParameterError("need at least one channel")
    arrs = [np.asarray(c, dtype=float) for c in channels]
    n = arrs[0].shape[0]
    if any(a.shape != (n,) for a in arrs):
        raise ParameterError("all channels must be 1-D and the same length")
    clipped, count = [], 0
    for a in arrs:
        c, k = winsorize(a, tau)
        clipped.append(c)
        count += k
    z = np.vstack(clipped)
    inv = np.array([1.0 / max(mad(c), MAD_FLOOR) for c in clipped])
    weights = inv / inv.sum()
    fused = z[0].copy() if len(arrs) == 1 else weighted_median(np.vstack(arrs), weights)
    return FusionResult(fused, weights, z, count)


def _normalized_copies(x: np.ndarray, tau: float = TAU_MAD) -> tuple[list[np.ndarray], int]:
    """Raw, z-score and robust-scale copies, each winsorized in its own
    scale and mapped back to signal units. Returns the copies and the
    number of clipped samples in the raw copy."""
    mu, sd = x.mean(), x.std()
    sd = sd if sd > MAD_FLOOR else 1.0
    med = np.median(x)
    m = max(mad(x), MAD_FLOOR)
    raw, n = winsorize(x, tau)
    zs = winsorize((x - mu) / sd, tau)[0] * sd + mu
    rs = winsorize((x - med) / m, tau)[0] * m + med
    return [raw, zs, rs], n


AXES = ("ax", "ay", "az", "gx", "gy", "gz")


def sanitize_signal(x: ImuWindow, tau: float = TAU_MAD):
    """Fuse the normalisation copies of every axis; returns (window, weights, clipped)."""
    accel = np.empty_like(x.accel)
    gyro = np.empty_like(x.gyro)
    weights: dict[str, list[float]] = {}
    total = 0
    for k, name in enumerate(AXES):
        src = x.accel[:, k] if k < 3 else x.gyro[:, k - 3]
        copies, n_clipped = _normalized_copies(src, tau)
        res = mad_normalize(copies, tau)
        (accel[:, k] if k < 3 else gyro[:, k - 3])[:] = res.fused
        weights[name] = [float(w) for w in res.weights]
        total += n_clipped
    return x.with_channels(accel=accel, gyro=gyro), weights, total


# --- workflow ---------------------------------------------------------------

def deviation_check(p: Prompt, prototypes: Sequence[np.ndarray], embedder: Embedder | None = None) -> float:
    """Best cosine similarity of the rendered prompt to any prototype."""
    if len(prototypes) == 0:
        raise ConfigurationError("deviation check needs at least one prototype embedding")
    e = (embedder or default_embedder()).embed(render(p))
    return max_similarity(e, prototypes)[0]


def build_interaction(x: ImuWindow, p: Prompt, goal: str, state: Mapping,
                      prototypes: Sequence[tuple[Prompt, np.ndarray]] = (),
                      benign_output: str | None = None, tau_san: float = TAU_SAN,
                      embedder: Embedder | None = None) -> InteractionTuple:
    """Assemble the interaction tuple and run the deviation check.

    Without a recorded benign output the guard request is seeded with the
    nearest benign prototype prompt.
    """
    request = GuardRequest()
    score = None
    if prototypes:
        embs = [e for _, e in prototypes]
        emb = (embedder or default_embedder()).embed(render(p))
        score, idx = max_similarity(emb, embs)
        if benign_output is None:
            request.prototype = prototypes[idx][0]
    it = InteractionTuple(goal, dict(state), request, p, benign_output, score)
    if score is not None and score < tau_san:
        it.escalate()
    return it


def hub_sanitize(x: ImuWindow, p: Prompt, interaction: InteractionTuple,
                 lex: LexicalFilter | None = None, tau_mad: float = TAU_MAD):
    """Canonicalize -> lexical filter -> MAD fusion. Returns (x_hat, p_hat, report).

    High strictness treats graylist hits as blacklist hits.
    """
    lex = lex or default_filter()
    strict = interaction.request.strictness is Strictness.HIGH
    p_hat, verdicts = lex.filter(canonicalize_prompt(p), strict=strict)
    x_hat, weights, clipped = sanitize_signal(x, tau_mad)
    report = SanitizeReport(interaction.deviation_score, verdicts, weights, clipped,
                            interaction.request.strictness)
    return x_hat, p_hat, report
