"""Robust reasoning: several structured chains, median score, veto and
bounded backtracking."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .backends import ABSTAIN, CHAIN_MARKER, LlmBackend, parse_answer
from .cues import parse_line
from .errors import BackendError, ParameterError
from .imu import SignalFeatures, motion_level
from .prompts import Kind, Prompt, render

SECTIONS = ("Statistics", "Prior checks", "Evidence reasoning", "Conclusion")
DEFAULT_GOAL = "Recognize the user's current physical activity from the IMU evidence."
_CTX_LEVEL = {"high": "high", "low": "moderate", "none": "low"}


@dataclass
class ReasonerConfig:
    goal: str = DEFAULT_GOAL
    modality_weights: Mapping[str, float] = field(default_factory=lambda: {"signal": 0.5, "text": 0.5})
    gamma_sem: float = 0.0
    gamma_temp: float = 1.0
    n_chains: int = 5
    max_backtracks: int = 2

    def __post_init__(self):
        if self.n_chains < 1:
            raise ParameterError("n_chains must be >= 1")
        if self.max_backtracks < 0:
            raise ParameterError("max_backtracks must be >= 0")
        w = dict(self.modality_weights)
        if any(v < 0 for v in w.values()) or abs(sum(w.values()) - 1.0) > 1e-9:
            raise ParameterError("modality weights must be non-negative and sum to 1")
        self.modality_weights = w


@dataclass(frozen=True)
class ChainResult:
    index: int
    score: float
    veto: bool
    answer: str
    trace: tuple[str, str, str, str]

    def to_dict(self) -> dict:
        return {"index": self.index, "score": self.score, "veto": self.veto, "answer": self.answer,
                "trace": list(self.trace)}


@dataclass
class RobustTrace:
    """eta_rob: every round of chains plus the aggregate of the last one."""
    rounds: list[list[ChainResult]] = field(default_factory=list)
    s_final: float = 0.0
    veto: bool = False
    backtracks: int = 0
    answer: str = ABSTAIN

    def to_dict(self) -> dict:
        return {"answer": self.answer, "s_final": self.s_final, "veto": self.veto, "backtracks": self.backtracks,
                "rounds": [[c.to_dict() for c in r] for r in self.rounds]}


def statistics_line(f: SignalFeatures) -> str:
    return f"Statistics: step_freq = {f.step_freq_hz:.1f} Hz, Z-axis amplitude {_CTX_LEVEL[motion_level(f.az_var)]}"


def chain_prompt(p: Prompt, cfg: ReasonerConfig, index: int, features: SignalFeatures | None) -> str:
    """One chain's prompt. The heavier modality's evidence comes first."""
    w_sig = cfg.modality_weights.get("signal", 0.0)
    w_txt = cfg.modality_weights.get("text", 0.0)
    signal = [statistics_line(features)] if features is not None else []
    text = ["Prompt evidence:", render(p)]
    body = signal + text if w_sig >= w_txt else text + signal
    return "\n".join([
        f"{CHAIN_MARKER} (chain {index + 1} of {cfg.n_chains}): "
        "statistics, prior checks, evidence reasoning, conclusions.",
        f"Goal: {cfg.goal}",
        f"Evidence weights: signal={w_sig:.2f}, text={w_txt:.2f}",
        *body,
        "Answer with one label from {" + ", ".join(p.labels) + "}.",
    ])


def _sections(response: str) -> tuple[str, str, str, str]:
    out = []
    for name in SECTIONS:
        m = re.search(rf"^{name}:\s*(.*)$", response, re.M)
        out.append(m.group(1).strip() if m else "")
    return tuple(out)


def run_chain(p: Prompt, cfg: ReasonerConfig, index: int, backend: LlmBackend,
              features: SignalFeatures | None) -> ChainResult:
    """Query one chain. Score = agreement of the answer with the description
    cue (1, 0.5 when the description has no cue, 0 otherwise)."""
    try:
        response = backend.query(chain_prompt(p, cfg, index, features))
    except BackendError as exc:
        return ChainResult(index, 0.0, True, ABSTAIN, ("", f"backend failure: {exc}", "", ""))
    trace = _sections(response)
    answer = parse_answer(trace[3] or response, p.labels)
    claims = parse_line(" ".join(s.text for s in p.of_kind(Kind.DESCRIPTION)), p.labels)
    score = 0.5 if claims is None else float(claims.label == answer)
    veto = answer not in p.labels or "contradiction" in trace[1].lower()
    return ChainResult(index, score, veto, answer, trace)


def aggregate(chains: list[ChainResult], labels) -> tuple[float, bool, str]:
    """(S_final, V, answer): median score, OR of vetoes, modal answer of the
    non-vetoed chains (ties or no candidates give abstain)."""
    chains = sorted(chains, key=lambda c: c.index)
    s_final = float(np.median([c.score for c in chains]))
    veto = any(c.veto for c in chains)
    counts = Counter(c.answer for c in chains if not c.veto and c.answer in labels)
    if not counts:
        return s_final, veto, ABSTAIN
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return s_final, veto, ABSTAIN
    return s_final, veto, ranked[0][0]


def robust_infer(p: Prompt, cfg: ReasonerConfig, backend: LlmBackend, features: SignalFeatures | None = None,
                 reconstruct: Callable[[Prompt], Prompt] | None = None) -> tuple[str, RobustTrace]:
    """Run ``cfg.n_chains`` chains; on a veto or a tied vote rebuild the
    prompt with ``reconstruct`` and retry, at most ``cfg.max_backtracks``
    times. Exhaustion yields abstain."""
    eta = RobustTrace()
    current = p
    while True:
        chains = [run_chain(current, cfg, i, backend, features) for i in range(cfg.n_chains)]
        eta.rounds.append(chains)
        eta.s_final, eta.veto, answer = aggregate(chains, p.labels)
        if not eta.veto and answer != ABSTAIN:
            eta.answer = answer
            return answer, eta
        if eta.backtracks >= cfg.max_backtracks:
            eta.answer = ABSTAIN
            return ABSTAIN, eta
        eta.backtracks += 1
        if reconstruct is not None:
            current = reconstruct(current)
