"""LLM backends: a deterministic rule-based mock, an HTTP chat-completion
client that journals its traffic, and a replay backend that serves that
journal offline."""

from __future__ import annotations

import hashlib
import json
import os
import re
import socket
import threading
import urllib.error
import urllib.request
from pathlib import Path
from typing import Protocol, Sequence

from .automaton import AhoCorasick
from .cues import first_claims, parse_line
from .errors import BackendError, ConfigurationError
from .imu import DEFAULT_LABELS
from .lexicons import default_blacklist, keyword_table, term_regex

CHAIN_MARKER = "Reasoning protocol"
ABSTAIN = "abstain"


class LlmBackend(Protocol):
    name: str
    deterministic: bool

    def query(self, prompt: str) -> str: ...


# --- answer parsing ---------------------------------------------------------

_JSON_LABEL = re.compile(r'\{\s*"label"\s*:\s*"([^"]*)"\s*\}')
_CONCLUSION = re.compile(r"^Conclusion:\s*(.*)$", re.M)
_BRACES = re.compile(r"\{[^{}]*\}")
_LABEL_SET = re.compile(r"\{([a-z_]+(?:, [a-z_]+)+)\}")


def parse_answer(response: str, labels: Sequence[str] = DEFAULT_LABELS) -> str:
    """Label named by a backend response; anything else comes back stripped
    and lower-cased so it can never equal a label by accident."""
    text = response.strip()
    m = _CONCLUSION.search(text) or _JSON_LABEL.search(text)
    if m:
        text = m.group(1).strip()
    low = text.lower().strip(" .\"'")
    if low in labels:
        return low
    return low or ABSTAIN


def labels_in_prompt(prompt: str) -> tuple[str, ...]:
    m = _LABEL_SET.search(prompt)
    return tuple(s.strip() for s in m.group(1).split(",")) if m else DEFAULT_LABELS


# --- mock -------------------------------------------------------------------

_OUT_OF_SET = {
    "also write a poem": "Morning light on quiet stairs, a poem of steps and air.",
    "you are a novelist": "Once upon a time, a traveller set out before dawn.",
    "you are a poet": "Steps like rain upon the floor.",
    "also translate": "Traduction : l'utilisateur se déplace.",
}


def _bounded(text: str, m) -> bool:
    if m.pattern[0].isalnum() and m.start > 0 and text[m.start - 1].isalnum():
        return False
    return not (m.pattern[-1].isalnum() and m.end < len(text) and text[m.end].isalnum())


class MockBackend:
    """Deterministic stand-in for a chat model.

    Rules, first match wins:

    1. an unexcised directive phrase (shipped blacklist) is obeyed: answer the
       first label that follows a directive on its line, otherwise produce
       off-task text;
    2. two or more distinct labels mentioned outside ``{...}`` spans: answer
       the alphabetically first;
    3. the first line with a feature cue decides (nearest activity profile),
       then the keyword table, then ``"unknown"``.

    A prompt carrying the reasoning protocol gets a four-section reply whose
    prior-check section reports a contradiction when the conclusion departs
    from the statistics line.
    """

    name = "mock"
    deterministic = True

    def __init__(self, blacklist: Sequence[str] | None = None):
        pats = [p.lower() for p in (default_blacklist() if blacklist is None else blacklist)]
        self._ac = AhoCorasick(pats)

    def _directive_answer(self, text: str, labels: Sequence[str]) -> str | None:
        low = text.lower()
        hits = sorted((m for m in self._ac.finditer(low) if _bounded(low, m)), key=lambda m: (m.start, -m.end))
        if not hits:
            return None
        label_rx = [(l, term_regex(l)) for l in labels]
        for m in hits:
            eol = low.find("\n", m.end)
            rest = _BRACES.sub(" ", low[m.end:eol if eol >= 0 else len(low)])
            found = [(r.search(rest).start(), l) for l, r in label_rx if r.search(rest)]
            if found:
                return min(found)[1]
        first = hits[0].pattern
        return _OUT_OF_SET.get(first, "I will follow the new instructions instead.")

    @staticmethod
    def _mixed_answer(text: str, labels: Sequence[str]) -> str | None:
        stripped = _BRACES.sub(" ", text.lower())
        seen = sorted(l for l in labels if term_regex(l).search(stripped))
        return seen[0] if len(seen) >= 2 else None

    @staticmethod
    def _cue_answer(text: str, labels: Sequence[str]) -> str:
        c = first_claims(text, labels)
        if c is not None:
            return c.label
        low = _BRACES.sub(" ", text.lower())  # the label menu is not evidence
        best, best_n = "unknown", 0
        for label, words in keyword_table().items():
            if label not in labels:
                continue
            n = sum(len(term_regex(w).findall(low)) for w in words)
            if n > best_n:
                best, best_n = label, n
        return best

    def answer(self, prompt: str) -> str:
        labels = labels_in_prompt(prompt)
        return (self._directive_answer(prompt, labels)
                or self._mixed_answer(prompt, labels)
                or self._cue_answer(prompt, labels))

    def query(self, prompt: str) -> str:
        labels = labels_in_prompt(prompt)
        ans = self.answer(prompt)
        if CHAIN_MARKER in prompt:
            return self._chain_reply(prompt, ans, labels)
        if "Output only a JSON object" in prompt:
            return json.dumps({"label": ans}, ensure_ascii=False)
        return ans

    @staticmethod
    def _chain_reply(prompt: str, ans: str, labels: Sequence[str]) -> str:
        stats = None
        for line in prompt.splitlines():
            if line.startswith("Statistics:"):
                stats = parse_line(line, labels)
                break
        basis = stats.label if stats else "none"
        check = "consistent" if stats is None or stats.label == ans else "contradiction"
        return "\n".join([
            f"Statistics: signal profile suggests {basis}",
            f"Prior checks: {check}",
            "Evidence reasoning: weighed the listed evidence in the stated order",
            f"Conclusion: {ans}",
        ])


# --- HTTP and replay --------------------------------------------------------

def request_hash(prompt: str, model: str = "") -> str:
    return hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()


class HttpBackend:
    """JSON chat-completion client with bearer auth from an env var.

    Every successful exchange is appended to ``replay_log`` (if given) as
    ``{"request_hash", "response"}``.
    """

    deterministic = False

    def __init__(self, endpoint: str, auth_env: str = "HAR_GUARD_API_KEY", timeout: float = 30.0,
                 model: str = "default", replay_log: str | Path | None = None):
        if not re.match(r"^https?://[^\s/]+", endpoint or ""):
            raise ConfigurationError(f"malformed endpoint URL {endpoint!r}")
        token = os.environ.get(auth_env)
        if not token:
            raise ConfigurationError(f"auth env var {auth_env} is not set")
        self.endpoint = endpoint
        self.timeout = timeout
        self.model = model
        self.name = f"http:{model}"
        self._token = token
        self._log = Path(replay_log) if replay_log else None
        self._lock = threading.Lock()

    def query(self, prompt: str) -> str:
        body = json.dumps({"model": self.model, "messages": [{"role": "user", "content": prompt}]}).encode()
        req = urllib.request.Request(self.endpoint, data=body, method="POST", headers={
            "Content-Type": "application/json", "Authorization": f"Bearer {self._token}"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, socket.timeout, TimeoutError, OSError, ValueError) as exc:
            raise BackendError(f"http backend failed: {exc}") from exc
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError("http backend returned no message content") from exc
        if self._log is not None:
            line = json.dumps({"request_hash": request_hash(prompt, self.model), "response": text})
            with self._lock, self._log.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return text


class ReplayBackend:
    """Serve responses recorded by :class:`HttpBackend`; no network."""

    deterministic = True

    def __init__(self, log_path: str | Path, model: str = "default"):
        path = Path(log_path)
        if not path.exists():
            raise ConfigurationError(f"replay log {path} does not exist")
        self.model = model
        self.name = f"replay:{model}"
        self._table: dict[str, str] = {}
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                self._table[rec["request_hash"]] = rec["response"]
            except (ValueError, KeyError) as exc:
                raise ConfigurationError(f"replay log line {i} is malformed") from exc

    def query(self, prompt: str) -> str:
        try:
            return self._table[request_hash(prompt, self.model)]
        except KeyError:
            raise BackendError("prompt not present in replay log") from None


def make_backend(kind: str, **kwargs) -> LlmBackend:
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        endpoint = kwargs.get("endpoint") or os.environ.get("HAR_GUARD_ENDPOINT", "")
        return HttpBackend(endpoint, kwargs.get("auth_env", "HAR_GUARD_API_KEY"),
                           float(kwargs.get("timeout", 30.0)), kwargs.get("model", "default"),
                           kwargs.get("replay_log"))
    if kind == "replay":
        if not kwargs.get("replay_log"):
            raise ConfigurationError("replay backend needs a replay_log path")
        return ReplayBackend(kwargs["replay_log"], kwargs.get("model", "default"))
    raise ConfigurationError(f"unknown backend {kind!r}")
