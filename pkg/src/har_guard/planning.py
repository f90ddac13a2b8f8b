"""Defense plans: threat classification and step synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .consistency import TAU_SEM, TAU_TEMP, ConsistencyReport
from .errors import PlanError
from .sanitizer import TAU_SAN

K_DEFAULT = 5


class Threat(str, Enum):
    SIGNAL = "signal"
    TEXT = "text"
    PROMPT = "prompt"
    HYBRID = "hybrid"
    NONE = "none"


class StepId(str, Enum):
    CANONICALIZE = "Canonicalize"
    LEXICAL_FILTER = "LexicalFilter"
    MAD_NORMALIZE = "MADNormalize"
    RECONSTRUCT_BENIGN = "ReconstructBenign"
    COT_ROBUST = "CoTRobust"


STEP_ORDER = tuple(StepId)
BASE_STEPS = (StepId.CANONICALIZE, StepId.LEXICAL_FILTER)


@dataclass(frozen=True)
class DefenseStep:
    id: StepId
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, "id", StepId(self.id))
        except ValueError:
            raise PlanError(f"unregistered defense step {self.id!r}") from None

    def to_dict(self) -> dict:
        return {"id": self.id.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DefenseStep":
        return cls(d["id"], dict(d.get("params") or {}))


@dataclass
class DefensePlan:
    threat: Threat
    steps: list[DefenseStep]
    memory_cfg: dict = field(default_factory=dict)
    expected: str = ""

    def __post_init__(self):
        self.threat = Threat(self.threat)
        if self.threat is not Threat.NONE and not self.steps:
            raise PlanError("a plan for a detected threat needs at least one step")

    @property
    def step_ids(self) -> list[StepId]:
        return [s.id for s in self.steps]

    def has(self, step: StepId) -> bool:
        return step in self.step_ids

    def to_dict(self) -> dict:
        return {"threat": self.threat.value, "steps": [s.to_dict() for s in self.steps],
                "memory_cfg": dict(self.memory_cfg), "expected": self.expected}

    @classmethod
    def from_dict(cls, d: dict) -> "DefensePlan":
        return cls(Threat(d["threat"]), [DefenseStep.from_dict(s) for s in d["steps"]],
                   dict(d.get("memory_cfg") or {}), d.get("expected", ""))


def classify_threat(report: ConsistencyReport, prototype_sim: float | None, tau_san: float = TAU_SAN) -> Threat:
    sem, temp = report.semantic_conflict, report.temporal_conflict
    if sem and temp:
        return Threat.HYBRID
    if sem:
        return Threat.PROMPT
    if temp:
        return Threat.SIGNAL
    if prototype_sim is not None and prototype_sim < tau_san:
        return Threat.TEXT
    return Threat.NONE


def plan(report: ConsistencyReport, retrieved: Sequence = (), prototype_sim: float | None = None,
         k: int = K_DEFAULT, strictness: str = "normal", tau_san: float = TAU_SAN,
         tau_sem: float = TAU_SEM, tau_temp: float = TAU_TEMP, min_retrieval_sim: float = 0.85) -> DefensePlan:
    """Threat table plus step synthesis.

    ``retrieved`` holds (MemoryEntry, similarity) pairs; successful entries at
    or above ``min_retrieval_sim`` contribute their steps when a threat was
    found. Steps are deduplicated and kept in registry order, so adding
    CoTRobust never drops anything.
    """
    threat = classify_threat(report, prototype_sim, tau_san)
    wanted = set(BASE_STEPS)
    if threat in (Threat.SIGNAL, Threat.HYBRID):
        wanted.add(StepId.MAD_NORMALIZE)
    if threat in (Threat.PROMPT, Threat.HYBRID):
        wanted.add(StepId.RECONSTRUCT_BENIGN)
    if report.gamma_sem > tau_sem or report.gamma_temp < tau_temp:
        wanted.add(StepId.COT_ROBUST)
    if threat is not Threat.NONE:
        for entry, sim in retrieved:
            if entry.success and entry.plan is not None and sim >= min_retrieval_sim:
                wanted.update(entry.plan.step_ids)
    steps = [DefenseStep(s) for s in STEP_ORDER if s in wanted]
    expected = "benign label" if threat is Threat.NONE else f"benign label recovered from {threat.value} threat"
    return DefensePlan(threat, steps, {"K": k, "strictness": strictness}, expected)
