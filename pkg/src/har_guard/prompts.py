"""Signal-to-text translation and prompt assembly for five pipeline styles.

A :class:`Prompt` is an ordered list of provenance-tagged segments. The
instruction segment renders as the style header at its position and the
style footer (label set, closing question) after the last segment, so
appended attack content lands between the description and the footer.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .imu import DEFAULT_LABELS, ImuWindow, SignalFeatures, extract_features, motion_level


class Style(str, Enum):
    LLASA = "LLaSA"
    IMUGPT2 = "IMUGPT2"
    HARGPT = "HARGPT"
    CONTEXTGPT = "ContextGPT"
    MOTIONGPT = "MotionGPT"


class Kind(str, Enum):
    INSTRUCTION = "instruction"
    DESCRIPTION = "description"
    CONTEXT = "context"
    FEW_SHOT = "few_shot"
    INJECTED = "injected"
    SEPARATOR = "separator"
    FAKE_RESPONSE = "fake_response"


class Origin(str, Enum):
    BENIGN = "benign"
    ATTACK = "attack"
    DEFENSE = "defense"


@dataclass(frozen=True)
class PromptSegment:
    kind: Kind
    text: str
    origin: Origin = Origin.BENIGN
    trust: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "origin", Origin(self.origin))
        if not self.text and self.kind is not Kind.SEPARATOR:
            raise ParameterError(f"{self.kind.value} segment text must be non-empty")

    def with_text(self, text: str, origin: Origin | None = None) -> "PromptSegment":
        return replace(self, text=text, origin=self.origin if origin is None else origin)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "text": self.text, "origin": self.origin.value}
        if self.trust != 1.0:
            d["trust"] = self.trust
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PromptSegment":
        return cls(Kind(d["kind"]), d["text"], Origin(d["origin"]), float(d.get("trust", 1.0)))


@dataclass(frozen=True)
class Prompt:
    segments: tuple[PromptSegment, ...]
    style: Style
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "style", Style(self.style))
        object.__setattr__(self, "labels", tuple(self.labels))
        benign_instr = sum(
            1 for s in self.segments if s.kind is Kind.INSTRUCTION and s.origin is Origin.BENIGN
        )
        if benign_instr > 1:
            raise ParameterError("at most one benign instruction segment is allowed")

    def of_kind(self, *kinds: Kind) -> list[PromptSegment]:
        return [s for s in self.segments if s.kind in kinds]

    def with_segments(self, segments: Iterable[PromptSegment]) -> "Prompt":
        return replace(self, segments=tuple(segments))

    def render(self) -> str:
        return render(self)

    def to_json(self) -> str:
        return json.dumps(
            {"style": self.style.value, "labels": list(self.labels),
             "segments": [s.to_dict() for s in self.segments]},
            ensure_ascii=False, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "Prompt":
        d = json.loads(text) if isinstance(text, str) else text
        return cls(
            tuple(PromptSegment.from_dict(s) for s in d["segments"]),
            Style(d["style"]),
            tuple(d.get("labels", DEFAULT_LABELS)),
        )


@dataclass(frozen=True)
class MotionTokens:
    ids: tuple[int, ...]
    codebook_size: int = 512
    tokens_per_second: float = 10.0

    def __post_init__(self):
        if not self.ids:
            raise ParameterError("motion token sequence must be non-empty")
        if any(i < 0 or i >= self.codebook_size for i in self.ids):
            raise ParameterError("motion token id out of codebook range")

    def text(self) -> str:
        return " ".join(f"<motion_id_{i}>" for i in self.ids)


# --- signal -> text ----------------------------------------------------------

HARGPT_ARRAY_CAP = 200
MOTION_CODEBOOK = 512
MOTION_STRIDE = 5
MOTION_MAX_MAGNITUDE = 40.0

_LLASA_LEVEL = {"high": "large", "low": "small", "none": "almost no"}
_CTX_LEVEL = {"high": "high", "low": "moderate", "none": "low"}


def _fmt_array(values: np.ndarray) -> str:
    return "[" + ", ".join(f"{v:.2f}" for v in values[:HARGPT_ARRAY_CAP]) + "]"


def tokenize_motion(w: ImuWindow, stride: int = MOTION_STRIDE,
                    codebook_size: int = MOTION_CODEBOOK,
                    max_magnitude: float = MOTION_MAX_MAGNITUDE) -> MotionTokens:
    """Uniform scalar quantisation of accel magnitude, one token per stride.

    Bin i covers [i, i+1) * max_magnitude / codebook_size; values past the
    range land in the last bin.
    """
    mag = w.magnitude()[::stride]
    ids = np.clip(np.floor(mag / max_magnitude * codebook_size), 0, codebook_size - 1)
    return MotionTokens(tuple(int(i) for i in ids), codebook_size, w.rate_hz / stride)


def describe(f: SignalFeatures, style: Style | str, window: ImuWindow | None = None) -> PromptSegment:
    """Render features as the style's description text.

    HARGPT and MotionGPT describe the raw window, so ``window`` is required for
    them. Variances use 2 decimals, frequencies 1 decimal.
    """
    style = Style(style)
    level = motion_level(f.az_var)
    if style is Style.LLASA:
        text = (f"The Z-axis acceleration shows {_LLASA_LEVEL[level]} fluctuations, "
                f"and the step frequency is about {f.step_freq_hz:.1f} Hz.")
    elif style is Style.IMUGPT2:
        text = f"ax_var = {f.ax_var:.2f}, ay_var = {f.ay_var:.2f}, step_freq = {f.step_freq_hz:.1f} Hz"
    elif style is Style.CONTEXTGPT:
        text = f"step_freq = {f.step_freq_hz:.1f} Hz, Z-axis amplitude {_CTX_LEVEL[level]}"
    elif style is Style.HARGPT:
        if window is None:
            raise ParameterError("HARGPT descriptions need the raw window")
        a, g = window.accel, window.gyro
        text = (f"Accelerations ({window.rate_hz:g} Hz): x={_fmt_array(a[:, 0])}, "
                f"y={_fmt_array(a[:, 1])}, z={_fmt_array(a[:, 2])}; "
                f"Gyroscopes: x={_fmt_array(g[:, 0])}, y={_fmt_array(g[:, 1])}, "
                f"z={_fmt_array(g[:, 2])}")
    else:
        if window is None:
            raise ParameterError("MotionGPT descriptions need the raw window")
        tokens = tokenize_motion(window)
        text = f"{tokens.text()} ({tokens.tokens_per_second:g} tokens/s)"
    return PromptSegment(Kind.DESCRIPTION, text, Origin.BENIGN)


# --- assembly and rendering ---------------------------------------------------

DEFAULT_INSTRUCTIONS: dict[Style, str] = {
    Style.LLASA: "You are a human activity recognition expert.",
    Style.IMUGPT2: "Determine the user's activity.",
    Style.HARGPT: "You are an expert of IMU-based human activity analysis.",
    Style.CONTEXTGPT: "You are an expert in human activity recognition.",
    Style.MOTIONGPT: "Provide an accurate caption describing <motion_tokens>.",
}

# Only motion-to-text is routed through the recognition flow.
MOTIONGPT_TEMPLATES = {
    "text_to_motion": "Generate a motion sequence depicting a person emulating {caption}.",
    "motion_to_text": "Provide an accurate caption describing {motion_tokens}.",
    "motion_qa": ("Randomly describe the motion.", "Generate more from this motion."),
}

HARGPT_DEVICE = "a smartphone"
HARGPT_LOCATION = "the waist"


def context_sentence_for(location: str) -> str:
    """``"bedroom"`` -> ``"The user is currently in the bedroom."``; full
    sentences pass through unchanged."""
    location = location.strip()
    if location.endswith("."):
        return location
    return f"The user is currently in the {location}."


def assemble_prompt(s_t: str | None, d: PromptSegment | str, c_t: str | None = None,
                    style: Style | str = Style.LLASA,
                    labels: Sequence[str] = DEFAULT_LABELS) -> Prompt:
    """Concatenate instruction, description and optional context.

    ``s_t=None`` uses the style's default instruction.
    """
    style = Style(style)
    if s_t is None:
        s_t = DEFAULT_INSTRUCTIONS[style]
    if not s_t or not s_t.strip():
        raise ParameterError("instruction must be non-empty")
    if isinstance(d, str):
        if not d:
            raise ParameterError("description must be non-empty")
        d = PromptSegment(Kind.DESCRIPTION, d, Origin.BENIGN)
    segs = [PromptSegment(Kind.INSTRUCTION, s_t, Origin.BENIGN), d]
    if c_t:
        segs.append(PromptSegment(Kind.CONTEXT, context_sentence_for(c_t), Origin.BENIGN))
    return Prompt(tuple(segs), style, tuple(labels))


def _label_set(labels: Sequence[str]) -> str:
    return "{" + ", ".join(labels) + "}"


def _head(style: Style, text: str) -> str:
    if style is Style.LLASA:
        return f'{text} Output only a JSON object:\n{{"label": "..."}}'
    if style is Style.IMUGPT2:
        return f"Task: {text}"
    if style is Style.HARGPT:
        return f"Instruction: {text}\nQuestion: IMU collected from {HARGPT_DEVICE} at {HARGPT_LOCATION}."
    return text


def _tail(style: Style, labels: Sequence[str]) -> str:
    if style is Style.LLASA:
        return f"Task: Determine the user's activity from the set {_label_set(labels)}."
    if style is Style.IMUGPT2:
        return f"Output one of: {_label_set(labels)}."
    if style is Style.HARGPT:
        return f"Activity classes: {_label_set(labels)}.\nPlease analyze step by step."
    if style is Style.CONTEXTGPT:
        return "Question: What is the user most likely doing now?"
    return f"Activity classes: {_label_set(labels)}."


def _description_line(style: Style, text: str) -> str:
    if style is Style.LLASA:
        return f"IMU description: {text}"
    if style is Style.IMUGPT2:
        return f"Input: {text}."
    if style is Style.HARGPT:
        return f"{text}."
    if style is Style.CONTEXTGPT:
        return f"IMU summary: {text}."
    return f"Motion tokens: {text}"


def render_segment(style: Style, seg: PromptSegment) -> str:
    if seg.kind is Kind.INSTRUCTION:
        return _head(style, seg.text)
    if seg.kind is Kind.DESCRIPTION:
        return _description_line(style, seg.text)
    if seg.kind is Kind.CONTEXT:
        return f"Context: {seg.text}"
    if seg.kind is Kind.FEW_SHOT:
        return f"Example: {seg.text}"
    return seg.text


def render(p: Prompt) -> str:
    lines = [render_segment(p.style, s) for s in p.segments]
    if any(s.kind is Kind.INSTRUCTION for s in p.segments):
        lines.append(_tail(p.style, p.labels))
    return "\n".join(lines)


_ROLE_RE = re.compile(r"^\s*You are (?:an? )?[^.]*\.\s*")


def replace_role(instruction: str, role: str) -> str:
    """Swap a leading "You are ..." clause for ``You are a <role>.``; prepend
    the clause when the instruction carries none."""
    article = "an" if role[:1].lower() in "aeiou" else "a"
    clause = f"You are {article} {role}."
    rest = _ROLE_RE.sub("", instruction, count=1)
    if rest == instruction:
        return f"{clause} {instruction}"
    return f"{clause} {rest}".rstrip()


def prompt_for_window(w: ImuWindow, style: Style | str, labels: Sequence[str] = DEFAULT_LABELS,
                      context: str | None = None, instruction: str | None = None) -> Prompt:
    """Benign prompt for ``w``: default instruction plus its description."""
    d = describe(extract_features(w), style, w)
    return assemble_prompt(instruction, d, context, style, labels)
