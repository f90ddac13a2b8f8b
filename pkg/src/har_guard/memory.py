"""Memory hub: append-only trajectory journal with a protected, embedded
index for TopK retrieval and benign prototypes."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .embedding import Embedder, default_embedder
from .errors import HarGuardError, SchemaError
from .planning import DefensePlan, Threat
from .prompts import Prompt, Style, render
from .sanitizer import LexicalFilter, canonicalize_prompt, default_filter

SCHEMA = "har_guard.memory"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MemoryEntry:
    """One trajectory: observed prompt, response, plan, corrective content,
    repaired output. ``seq`` is assigned by the hub."""
    prompt: Prompt
    response: str
    plan: DefensePlan | None = None
    corrections: tuple[str, ...] = ()
    output: str = ""
    success: bool = False
    seq: int = -1
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def threat(self) -> Threat:
        return self.plan.threat if self.plan is not None else Threat.NONE

    @property
    def is_prototype(self) -> bool:
        return self.success and self.threat is Threat.NONE and not self.corrections

    def to_dict(self) -> dict:
        return {"seq": self.seq, "prompt": json.loads(self.prompt.to_json()), "response": self.response,
                "plan": None if self.plan is None else self.plan.to_dict(),
                "corrections": list(self.corrections), "output": self.output, "success": self.success}

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryEntry":
        return cls(Prompt.from_json(d["prompt"]), d["response"],
                   None if d.get("plan") is None else DefensePlan.from_dict(d["plan"]),
                   tuple(d.get("corrections", ())), d.get("output", ""), bool(d["success"]), int(d["seq"]))


class MemoryHub:
    """Single-writer store; readers work on immutable snapshots.

    ``store`` protects the prompt (canonicalize + lexical filter), embeds it
    and appends one JSON line to the journal before indexing, so a failed
    write leaves the index untouched.
    """

    def __init__(self, path: str | Path | None = None, lex: LexicalFilter | None = None,
                 embedder: Embedder | None = None):
        self.path = Path(path) if path else None
        self.lex = lex or default_filter()
        self.embedder = embedder or default_embedder()
        self._entries: list[MemoryEntry] = []
        self._matrix: np.ndarray | None = None
        self._lock = threading.Lock()
        if self.path is not None:
            if self.path.exists() and self.path.stat().st_size:
                self._load()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(json.dumps({"schema": SCHEMA, "version": SCHEMA_VERSION}) + "\n",
                                     encoding="utf-8")

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        try:
            header = json.loads(lines[0])
        except (ValueError, IndexError):
            raise SchemaError(f"{self.path}: missing journal header") from None
        if header.get("schema") != SCHEMA or header.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"{self.path}: unsupported journal header {header}")
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                e = MemoryEntry.from_dict(json.loads(line))
            except (ValueError, KeyError) as exc:
                raise SchemaError(f"{self.path}:{i}: malformed entry") from exc
            self._entries.append(replace(e, embedding=self.embedder.embed(render(e.prompt))))

    def protect(self, p: Prompt) -> Prompt:
        return self.lex.filter(canonicalize_prompt(p))[0]

    def store(self, entry: MemoryEntry) -> int:
        """Protect, embed, journal, index. Returns the sequence number."""
        with self._lock:
            seq = self._entries[-1].seq + 1 if self._entries else 0
            u = self.protect(entry.prompt)
            e = replace(entry, prompt=u, seq=seq, embedding=self.embedder.embed(render(u)))
            if self.path is not None:
                line = json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True) + "\n"
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(line)
                except OSError as exc:
                    raise HarGuardError(f"memory journal write failed: {exc}") from exc
            self._entries.append(e)
            self._matrix = None
            return seq

    def store_all(self, entries: Iterable[MemoryEntry]) -> list[int]:
        return [self.store(e) for e in entries]

    def _embeddings(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (np.vstack([e.embedding for e in self._entries]) if self._entries
                            else np.zeros((0, self.embedder.dim)))
        return self._matrix

    def retrieve(self, query: np.ndarray, k: int = 5) -> list[tuple[MemoryEntry, float]]:
        """TopK by cosine; ties by success first, then lower sequence number."""
        if k < 1:
            raise ValueError("K must be >= 1")
        if not self._entries:
            return []
        sims = self._embeddings() @ np.asarray(query, dtype=float)
        sims = np.round(sims, 12)  # BLAS rows can differ in the last ulp; keep the tie rule exact
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], not self._entries[i].success, self._entries[i].seq))
        return [(self._entries[i], float(sims[i])) for i in order[:k]]

    def prototypes(self, style: Style | str | None = None) -> list[tuple[int, Prompt, np.ndarray]]:
        """Benign prototypes E_b: successful trajectories with no threat."""
        style = None if style is None else Style(style)
        return [(e.seq, e.prompt, e.embedding) for e in self._entries
                if e.is_prototype and (style is None or e.prompt.style is style)]

    def snapshot(self) -> "MemoryHub":
        """In-memory copy sharing no mutable state with this hub."""
        hub = MemoryHub(None, self.lex, self.embedder)
        hub._entries = list(self._entries)
        return hub
