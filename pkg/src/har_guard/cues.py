"""Read activity cues back out of rendered descriptions.

Every style's description carries enough to recover a step frequency and a
vertical motion level; :func:`parse_line` finds them in free text so both the
mock backend and the consistency checks can compare a description with the
signal it claims to describe.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imu import DEFAULT_LABELS, classify_cues, dominant_frequency, motion_level
from .prompts import MOTION_CODEBOOK, MOTION_MAX_MAGNITUDE, Style, describe

_NUM = r"(\d+(?:\.\d+)?)"
_FREQ = [re.compile(r"step frequency is about " + _NUM + r" Hz"), re.compile(r"step_freq = " + _NUM + r" Hz")]
_LLASA_LEVEL = re.compile(r"shows (large|small|almost no) fluctuations")
_CTX_LEVEL = re.compile(r"Z-axis amplitude (high|moderate|low)\b")
_HVAR = re.compile(r"ax_var = " + _NUM + r", ay_var = " + _NUM)
_ARRAYS = re.compile(r"Accelerations \(" + _NUM + r" Hz\): x=\[([^\]]*)\], y=\[([^\]]*)\], z=\[([^\]]*)\]")
_TOKENS = re.compile(r"((?:<motion_id_\d+>\s*)+)\(" + _NUM + r" tokens/s\)")
_TOKEN_ID = re.compile(r"<motion_id_(\d+)>")

_LEVEL_WORDS = {"large": "high", "small": "low", "almost no": "none",
                "high": "high", "moderate": "low", "low": "none"}


@dataclass(frozen=True)
class Claims:
    """What a description asserts: step frequency, vertical level, implied label."""
    step_freq_hz: float
    level: str | None
    label: str


def _floats(s: str) -> np.ndarray:
    return np.array([float(v) for v in s.split(",") if v.strip()])


def _from_arrays(m: re.Match) -> tuple[float, str] | None:
    rate = float(m.group(1))
    try:
        x, y, z = (_floats(m.group(k)) for k in (2, 3, 4))
    except ValueError:
        return None
    n = min(len(x), len(y), len(z))
    if n < 2 or rate <= 0:
        return None
    mag = np.sqrt(x[:n] ** 2 + y[:n] ** 2 + z[:n] ** 2)
    return dominant_frequency(mag, rate), motion_level(float(z[:n].var()))


def _from_tokens(m: re.Match) -> tuple[float, str] | None:
    ids = np.array([int(i) for i in _TOKEN_ID.findall(m.group(1))], dtype=float)
    rate = float(m.group(2))
    if len(ids) < 2 or rate <= 0:
        return None
    mag = (ids + 0.5) * MOTION_MAX_MAGNITUDE / MOTION_CODEBOOK
    return dominant_frequency(mag, rate), motion_level(float(mag.var()))


def parse_line(text: str, labels: Sequence[str] = DEFAULT_LABELS) -> Claims | None:
    """Claims carried by one line of text, or None when it has no cue."""
    freq = level = None
    m = _ARRAYS.search(text)
    if m:
        got = _from_arrays(m)
        if got:
            freq, level = got
    if freq is None:
        m = _TOKENS.search(text)
        if m:
            got = _from_tokens(m)
            if got:
                freq, level = got
    if freq is None:
        for rx in _FREQ:
            m = rx.search(text)
            if m:
                freq = float(m.group(1))
                break
        if freq is None:
            return None
        lm = _LLASA_LEVEL.search(text) or _CTX_LEVEL.search(text)
        if lm:
            level = _LEVEL_WORDS[lm.group(1)]
        else:
            hv = _HVAR.search(text)
            if hv:
                level = motion_level(max(float(hv.group(1)), float(hv.group(2))))
    return Claims(freq, level, classify_cues(freq, level, labels))


def first_claims(text: str, labels: Sequence[str] = DEFAULT_LABELS) -> Claims | None:
    """Claims of the first line that carries a cue."""
    for line in text.splitlines():
        c = parse_line(line, labels)
        if c is not None:
            return c
    return None


def feature_claims(f, style: Style | str, window=None, labels: Sequence[str] = DEFAULT_LABELS) -> Claims:
    """Claims a faithful description of ``f`` would make in ``style``."""
    c = parse_line(describe(f, style, window).text, labels)
    assert c is not None, "every style description must round-trip through parse_line"
    return c
