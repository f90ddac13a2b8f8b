"""Semantic and temporal consistency between a prompt and its signal.

gamma_sem compares what the description claims with what the (sanitized)
signal shows, plus a small rule table for hard contradictions. gamma_temp
is the best cross-modal DTW score of the accel magnitude against per-label
template trajectories.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cues import Claims, feature_claims, parse_line
from .dtw import fastdtw_distance
from .embedding import Embedder, cosine, default_embedder
from .errors import ConfigurationError, ParameterError
from .imu import (DEFAULT_LABELS, PROFILES, STATIC_LABELS, ImuWindow, SignalFeatures, detrend,
                  ingest_csv, synth_window)
from .lexicons import term_regex
from .prompts import Kind, Prompt, PromptSegment, Style, render

TAU_C = 0.35
TAU_SEM = 0.6
TAU_TEMP = 0.6
STATIC_STEP_FREQ = 0.5
TEMPLATE_SEED = 0x5EED_7E40
DTW_RADIUS = 1

_STATIC_STATES = ("sleeping", "asleep", "sitting", "seated", "lying", "resting", "standing still",
                  "sit", "stand", "motionless", "still")


@dataclass(frozen=True)
class ContextAttrs:
    environment: str = ""
    user_state: str = ""
    interaction_phase: str = ""
    expected_labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "expected_labels", tuple(self.expected_labels))

    def claims_static(self) -> bool:
        state = self.user_state.lower()
        if any(term_regex(s).search(state) for s in _STATIC_STATES):
            return True
        return bool(self.expected_labels) and set(self.expected_labels) <= STATIC_LABELS


_ENV = re.compile(r"currently in the ([\w ]+?)\.")


def context_attrs_from_prompt(p: Prompt) -> ContextAttrs:
    """Environment from benign context segments; other fields default."""
    env = ""
    for s in p.of_kind(Kind.CONTEXT):
        m = _ENV.search(s.text)
        if m and s.trust == 1.0:
            env = m.group(1)
            break
    return ContextAttrs(environment=env, expected_labels=p.labels)


@dataclass
class ConsistencyReport:
    gamma_sem: float
    gamma_temp: float
    warnings: list[str] = field(default_factory=list)
    trust_config: dict[int, float] = field(default_factory=dict)
    tau_c: float = TAU_C
    tau_temp: float = TAU_TEMP

    def __post_init__(self):
        if not 0.0 <= self.gamma_sem <= 1.0:
            raise ParameterError("gamma_sem must lie in [0, 1]")
        if not 0.0 < self.gamma_temp <= 1.0:
            raise ParameterError("gamma_temp must lie in (0, 1]")

    @property
    def semantic_conflict(self) -> bool:
        return self.gamma_sem > self.tau_c

    @property
    def temporal_conflict(self) -> bool:
        return self.gamma_temp < self.tau_temp

    @property
    def flagged(self) -> bool:
        return self.semantic_conflict or self.temporal_conflict

    def to_dict(self) -> dict:
        return {"gamma_sem": self.gamma_sem, "gamma_temp": self.gamma_temp,
                "semantic_conflict": self.semantic_conflict, "temporal_conflict": self.temporal_conflict,
                "warnings": list(self.warnings),
                "trust_config": {str(k): v for k, v in sorted(self.trust_config.items())}}


# --- semantic ---------------------------------------------------------------

def _claims_sentence(c: Claims) -> str:
    return f"Signal shows step frequency {c.step_freq_hz:.1f} Hz and {c.level or 'unknown'} vertical motion."


def feature_sentence(c: Claims) -> str:
    return _claims_sentence(c)


def context_sentence(ctx: ContextAttrs, d_text: str, labels: Sequence[str] = DEFAULT_LABELS) -> str:
    """Description claims in the feature-sentence template, falling back to
    the raw text when no cue parses, plus the stated user state."""
    c = parse_line(d_text, labels)
    s = _claims_sentence(c) if c is not None else d_text
    if ctx.user_state:
        s += f" The user is {ctx.user_state}."
    return s


def mentioned_labels(text: str, labels: Sequence[str]) -> list[str]:
    text = re.sub(r"\{[^{}]*\}", " ", text)
    return [l for l in labels if term_regex(l).search(text)]


def semantic_rules(f: SignalFeatures, ctx: ContextAttrs, d_text: str, signal: Claims,
                   others: Iterable[str] = (), labels: Sequence[str] = DEFAULT_LABELS) -> list[str]:
    """Names of the hard-contradiction rules that fire."""
    hits = []
    if f.step_freq_hz > STATIC_STEP_FREQ and ctx.claims_static():
        hits.append("moving signal under static context")
    c = parse_line(d_text, labels)
    if c is None:
        hits.append("description carries no readable cue")
    else:
        if c.label not in ctx.expected_labels:
            hits.append(f"description label {c.label} not expected")
        if c.label != signal.label:
            hits.append(f"description implies {c.label}, signal implies {signal.label}")
    for text in others:
        named = mentioned_labels(text, labels)
        if len(named) >= 2 or (named and named[0] != signal.label):
            hits.append("label claims outside the description: " + ", ".join(named))
            break
    return hits


def semantic_conflict(f: SignalFeatures, ctx: ContextAttrs, d_text: str, *, style: Style | str = Style.LLASA,
                      window: ImuWindow | None = None, others: Iterable[str] = (),
                      labels: Sequence[str] = DEFAULT_LABELS, embedder: Embedder | None = None,
                      rule_hits: list | None = None) -> float:
    """max(rule score, 1 - cos(feature sentence, context sentence)) in [0, 1]."""
    emb = embedder or default_embedder()
    signal = feature_claims(f, style, window, labels)
    hits = semantic_rules(f, ctx, d_text, signal, others, labels)
    if rule_hits is not None:
        rule_hits.extend(hits)
    sim = cosine(emb.embed(feature_sentence(signal)), emb.embed(context_sentence(ctx, d_text, labels)))
    return float(np.clip(max(1.0 if hits else 0.0, 1.0 - sim), 0.0, 1.0))


# --- temporal ---------------------------------------------------------------

def cross_modal_score(z: np.ndarray, s_aux: np.ndarray, T: int | None = None, radius: int = DTW_RADIUS) -> float:
    """S_cm = 1 / (1 + d / T) with d the (Fast)DTW distance."""
    T = len(z) if T is None else T
    if T < 1:
        raise ParameterError("T must be >= 1")
    d = fastdtw_distance(z, s_aux, radius)
    return 1.0 / (1.0 + d / T)


def _template_path(label: str):
    return resources.files("har_guard").joinpath("templates").joinpath("aux").joinpath(f"{label}.csv")


@lru_cache(maxsize=32)
def label_templates(rate_hz: float = 50.0, n_samples: int = 200,
                    labels: tuple[str, ...] = DEFAULT_LABELS) -> dict[str, np.ndarray]:
    """Accel-magnitude template per label.

    The shipped CSVs are used when they match the requested rate and
    length; otherwise templates are regenerated from the reserved seed.
    """
    out = {}
    for label in labels:
        if label not in PROFILES:
            continue
        w = None
        path = _template_path(label)
        if path.is_file():
            with resources.as_file(path) as p:
                ws = ingest_csv(p, window=n_samples)
            if ws and len(ws[0]) == n_samples and abs(ws[0].rate_hz - rate_hz) < 1e-9:
                w = ws[0]
        if w is None:
            w = synth_window(label, rate_hz, n_samples / rate_hz, TEMPLATE_SEED)
        out[label] = w.magnitude()
    if not out:
        raise ConfigurationError("no templates for the configured labels")
    return out


def temporal_score(x: ImuWindow, templates: Mapping[str, np.ndarray] | None = None,
                   radius: int = DTW_RADIUS) -> tuple[float, str]:
    """Best S_cm over label templates and the label it came from."""
    if templates is None:
        templates = label_templates(x.rate_hz, len(x))
    z = x.magnitude()
    best, best_label = -1.0, ""
    for label, s in templates.items():
        s_cm = cross_modal_score(z, s, len(z), radius)
        if s_cm > best:
            best, best_label = s_cm, label
    return best, best_label


# --- reconstruction and the combined check ------------------------------------

def reconstruct_benign(p: Prompt, prototypes: Sequence[tuple[int, Prompt, np.ndarray]],
                       embedder: Embedder | None = None) -> Prompt:
    """Nearest same-style prototype with its description replaced by the
    trusted description segments of ``p``.

    ``prototypes`` holds (id, prompt, embedding); similarity ties go to the
    lowest id.
    """
    pool = [t for t in prototypes if t[1].style is p.style]
    if not pool:
        raise ConfigurationError(f"no benign prototype for style {p.style.value}")
    emb = (embedder or default_embedder()).embed(render(p))
    best = max(pool, key=lambda t: (round(float(np.dot(t[2], emb)), 12), -t[0]))
    proto = best[1]
    if proto == p:
        return proto
    descs = [s for s in p.of_kind(Kind.DESCRIPTION) if s.trust == 1.0] or p.of_kind(Kind.DESCRIPTION)
    if not descs:
        return proto
    segs: list[PromptSegment] = []
    placed = False
    for s in proto.segments:
        if s.kind is Kind.DESCRIPTION:
            if not placed:
                segs.extend(descs)
                placed = True
            continue
        segs.append(s)
    if not placed:
        segs.extend(descs)
    return Prompt(tuple(segs), p.style, p.labels)


def description_text(p: Prompt) -> str:
    return " ".join(s.text for s in p.of_kind(Kind.DESCRIPTION))


def check_consistency(f: SignalFeatures, ctx: ContextAttrs, x_hat: ImuWindow, p_hat: Prompt,
                      templates: Mapping[str, np.ndarray] | None = None, graylist_hits: Iterable[str] = (),
                      embedder: Embedder | None = None) -> ConsistencyReport:
    """Both scores, warnings, and the trust map handed to the planner."""
    hits: list[str] = []
    others = [s.text for s in p_hat.segments if s.kind not in (Kind.DESCRIPTION, Kind.INSTRUCTION, Kind.SEPARATOR)]
    gamma_sem = semantic_conflict(f, ctx, description_text(p_hat), style=p_hat.style, window=detrend(x_hat),
                                  others=others, labels=p_hat.labels, embedder=embedder, rule_hits=hits)
    gamma_temp, _ = temporal_score(x_hat, templates)
    warnings = [f"rule: {h}" for h in hits] + [f"graylist: {t}" for t in graylist_hits]
    report = ConsistencyReport(gamma_sem, gamma_temp, warnings)
    if report.flagged:
        report.trust_config = {i: s.trust for i, s in enumerate(p_hat.segments) if s.trust < 1.0}
    return report
