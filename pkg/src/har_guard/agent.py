"""The defend loop: sanitize, check consistency, retrieve, plan, execute.

:class:`Defender` owns the thresholds and the hub; :meth:`Defender.defend`
returns the prediction, detection flag, every intermediate report and a
per-stage wall-clock breakdown.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .backends import ABSTAIN, LlmBackend, parse_answer
from .consistency import (TAU_SEM, TAU_TEMP, ConsistencyReport, check_consistency, context_attrs_from_prompt,
                          label_templates, reconstruct_benign)
from .embedding import Embedder, default_embedder, max_similarity
from .errors import BackendError, ConfigurationError, PlanError
from .imu import DEFAULT_LABELS, ImuWindow, detrend, robust_features, synth_window
from .memory import MemoryEntry, MemoryHub
from .planning import DefensePlan, DefenseStep, StepId, Threat, plan
from .prompts import Kind, Origin, Prompt, PromptSegment, Style, describe, prompt_for_window, render
from .reasoner import DEFAULT_GOAL, ReasonerConfig, RobustTrace, robust_infer
from .sanitizer import (TAU_MAD, TAU_SAN, LexicalFilter, SanitizeReport, build_interaction, canonicalize_prompt,
                        default_filter, hub_sanitize, sanitize_signal)
from .seeding import derive_seed

TAU_EXEC = 0.85
STAGES = ("Sanitizer", "Embedding+Consistency", "Hub retrieval", "Planning", "Executor", "Robust reasoner")
ERROR = "error"


@dataclass
class WorkingState:
    prompt: Prompt
    window: ImuWindow


@dataclass
class ExecutionResult:
    prompt: Prompt
    prediction: str
    trace: list[dict]
    escalations: int = 0
    robust: RobustTrace | None = None
    response: str = ""
    error: str | None = None
    robust_seconds: float = 0.0


@dataclass
class DefenseOutcome:
    prediction: str
    detected: bool
    plan: DefensePlan
    report: ConsistencyReport
    sanitize: SanitizeReport
    execution: ExecutionResult
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.execution.error is None and self.prediction not in (ABSTAIN, ERROR)

    def entry(self, observed: Prompt) -> MemoryEntry:
        """The trajectory to write back to the hub."""
        return MemoryEntry(observed, self.execution.response, self.plan,
                           tuple(v.token for v in self.sanitize.removed), self.prediction,
                           self.success and self.prediction in observed.labels)


class Defender:
    def __init__(self, hub: MemoryHub, backend: LlmBackend, lex: LexicalFilter | None = None,
                 embedder: Embedder | None = None, k: int = 5, tau_san: float = TAU_SAN,
                 tau_mad: float = TAU_MAD, tau_exec: float = TAU_EXEC, tau_sem: float = TAU_SEM,
                 tau_temp: float = TAU_TEMP, reasoner: ReasonerConfig | None = None,
                 goal: str = DEFAULT_GOAL):
        self.hub = hub
        self.backend = backend
        self.lex = lex or default_filter()
        self.embedder = embedder or default_embedder()
        self.k = k
        self.tau_san, self.tau_mad, self.tau_exec = tau_san, tau_mad, tau_exec
        self.tau_sem, self.tau_temp = tau_sem, tau_temp
        self.reasoner = reasoner or ReasonerConfig(goal=goal)
        self.goal = goal

    # -- step registry --------------------------------------------------------

    def _prototypes(self, style: Style):
        protos = self.hub.prototypes(style)
        if not protos:
            raise ConfigurationError(f"memory hub holds no benign prototype for {style.value}")
        return protos

    def _apply(self, step: DefenseStep, h: WorkingState, strict: bool) -> WorkingState:
        if step.id is StepId.CANONICALIZE:
            return WorkingState(canonicalize_prompt(h.prompt), h.window)
        if step.id is StepId.LEXICAL_FILTER:
            return WorkingState(self.lex.filter(h.prompt, strict)[0], h.window)
        if step.id is StepId.MAD_NORMALIZE:
            w, _, _ = sanitize_signal(h.window, self.tau_mad)
            return WorkingState(redescribe_robust(h.prompt, w), w)
        if step.id is StepId.RECONSTRUCT_BENIGN:
            return WorkingState(reconstruct_benign(h.prompt, self._prototypes(h.prompt.style), self.embedder),
                                h.window)
        if step.id is StepId.COT_ROBUST:
            return h
        raise PlanError(f"unregistered defense step {step.id!r}")

    def execute(self, dplan: DefensePlan, x_hat: ImuWindow, p_hat: Prompt, backend: LlmBackend | None = None,
                report: ConsistencyReport | None = None, strict: bool = False) -> ExecutionResult:
        """Apply the plan's steps to the working state, escalating to robust
        reasoning when the prompt drifts below ``tau_exec`` from the nearest
        benign prototype, then query the backend once (or run the chains)."""
        backend = backend or self.backend
        steps = list(dplan.steps)
        for s in steps:
            if not isinstance(s.id, StepId):
                raise PlanError(f"unregistered defense step {s.id!r}")
        base = [e for _, _, e in self.hub.prototypes(p_hat.style)]
        h = WorkingState(p_hat, x_hat)
        trace: list[dict] = []
        escalations = 0
        i = 0
        while i < len(steps):
            step = steps[i]
            h = self._apply(step, h, strict)
            entry = {"step": step.id.value, "escalated": i >= len(dplan.steps)}
            if base and step.id is not StepId.COT_ROBUST:
                sim = max_similarity(self.embedder.embed(render(h.prompt)), base)[0]
                entry["sim"] = sim
                if sim < self.tau_exec and not any(s.id is StepId.COT_ROBUST for s in steps):
                    steps.append(DefenseStep(StepId.COT_ROBUST, {"reason": "sim below tau_exec"}))
                    escalations += 1
            trace.append(entry)
            i += 1
        result = ExecutionResult(h.prompt, ERROR, trace, escalations)
        if any(s.id is StepId.COT_ROBUST for s in steps):
            cfg = ReasonerConfig(self.reasoner.goal, self.reasoner.modality_weights,
                                 report.gamma_sem if report else 0.0, report.gamma_temp if report else 1.0,
                                 self.reasoner.n_chains, self.reasoner.max_backtracks)
            t0 = time.perf_counter()
            protos = self.hub.prototypes(h.prompt.style)
            recon = (lambda p: reconstruct_benign(p, protos, self.embedder)) if protos else None
            answer, eta = robust_infer(h.prompt, cfg, backend, robust_features(h.window), recon)
            result.robust_seconds = time.perf_counter() - t0
            result.robust = eta
            result.prediction = answer
            result.response = answer
            trace.append({"backend": "robust", "answer": answer, "backtracks": eta.backtracks})
        else:
            try:
                result.response = backend.query(render(h.prompt))
                result.prediction = parse_answer(result.response, h.prompt.labels)
            except BackendError as exc:
                result.error = str(exc)
            trace.append({"backend": getattr(backend, "name", "backend"), "answer": result.prediction})
        return result

    # -- full loop ------------------------------------------------------------

    def defend(self, x: ImuWindow, p: Prompt, state: dict | None = None) -> DefenseOutcome:
        timings = dict.fromkeys(STAGES, 0.0)
        t0 = time.perf_counter()
        protos = self._prototypes(p.style)
        it = build_interaction(x, p, self.goal, state or {}, [(q, e) for _, q, e in protos],
                               tau_san=self.tau_san, embedder=self.embedder)
        x_hat, p_hat, san = hub_sanitize(x, p, it, self.lex, self.tau_mad)
        t1 = time.perf_counter()
        report = check_consistency(robust_features(x_hat), context_attrs_from_prompt(p_hat), x_hat, p_hat,
                                   label_templates(x_hat.rate_hz, len(x_hat)),
                                   [v.token for v in san.downweighted], self.embedder)
        e_u = self.embedder.embed(render(p_hat))
        t2 = time.perf_counter()
        retrieved = self.hub.retrieve(e_u, self.k)
        t3 = time.perf_counter()
        dplan = plan(report, retrieved, it.deviation_score, self.k, it.request.strictness.value,
                     self.tau_san, self.tau_sem, self.tau_temp, self.tau_exec)
        t4 = time.perf_counter()
        strict = it.request.strictness.value == "high"
        result = self.execute(dplan, x_hat, p_hat, report=report, strict=strict)
        t5 = time.perf_counter()
        timings["Sanitizer"] = t1 - t0
        timings["Embedding+Consistency"] = t2 - t1
        timings["Hub retrieval"] = t3 - t2
        timings["Planning"] = t4 - t3
        timings["Robust reasoner"] = result.robust_seconds
        timings["Executor"] = (t5 - t4) - result.robust_seconds
        detected = dplan.threat is not Threat.NONE or bool(san.removed)
        return DefenseOutcome(result.prediction, detected, dplan, report, san, result, timings)


def redescribe_robust(p: Prompt, w: ImuWindow) -> Prompt:
    """Swap description segments for a description of the detrended window."""
    wd = detrend(w)
    fresh = describe(robust_features(w), p.style, wd)
    segs = []
    for s in p.segments:
        if s.kind is Kind.DESCRIPTION:
            segs.append(s if s.text == fresh.text else PromptSegment(s.kind, fresh.text, Origin.DEFENSE))
        else:
            segs.append(s)
    return p.with_segments(segs)


def bootstrap_hub(hub: MemoryHub, style: Style | str, backend: LlmBackend, n: int = 20, seed: int = 0,
                  labels: Sequence[str] = DEFAULT_LABELS, rate_hz: float = 50.0, duration: float = 4.0) -> int:
    """Seed E_b with benign trajectories whose answer matched the label.

    Returns the number of prototypes stored.
    """
    style = Style(style)
    stored = 0
    base = DefensePlan(Threat.NONE, [DefenseStep(StepId.CANONICALIZE), DefenseStep(StepId.LEXICAL_FILTER)],
                       {"K": 5}, "benign label")
    i = 0
    while stored < n and i < 4 * n:
        label = labels[i % len(labels)]
        w = synth_window(label, rate_hz, duration, derive_seed(seed, "bootstrap", style.value, i))
        p = prompt_for_window(w, style, labels)
        resp = backend.query(render(p))
        y = parse_answer(resp, labels)
        i += 1
        if y != label:
            continue
        hub.store(MemoryEntry(p, resp, base, (), y, True))
        stored += 1
    return stored
