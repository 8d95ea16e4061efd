"""Append-only JSONL record of every LLM round trip."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

OUTCOMES = ("parsed", "repaired", "parse_failed", "transport_failed", "fallback_used")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass
class Exchange:
    prompt_hash: str
    prompt: str
    response: str | None
    outcome: str
    generation: int | None = None
    population: str | None = None
    retry: int = 0
    error: str | None = None
    latency: float = 0.0
    model: str | None = None
    temperature: float | None = None
    max_tokens: int | None = None
    tokens: dict[str, int] | None = None
    timestamps: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")

    @property
    def messages(self) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.prompt}]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Exchange:
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


class Ledger:
    """In-memory list of exchanges, mirrored line by line to ``path`` if given."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[Exchange] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, exchange: Exchange) -> None:
        with self._lock:
            self.records.append(exchange)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(exchange.to_json() + "\n")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def read_ledger(path: str | Path) -> tuple[list[Exchange], int]:
    """Exchanges stored at ``path`` and the number of corrupt lines skipped."""
    exchanges = []
    corrupt = 0
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                exchanges.append(Exchange.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                corrupt += 1
                logger.warning("%s:%d: skipping corrupt ledger record (%s)", path, lineno, exc)
    return exchanges, corrupt


def load_ledger(path: str | Path) -> list[Exchange]:
    return read_ledger(path)[0]
