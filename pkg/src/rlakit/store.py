"""Audit-session persistence.

A session lives in one directory:

    <store>/<session_id>/session.json       state snapshot + version
    <store>/<session_id>/transcript.jsonl   append-only iteration log
    <store>/<session_id>/cvrs/<batch>.csv   submitted CVR files, verbatim

Each transcript line carries a rolling content digest chained from the
previous line, so any after-the-fact edit is detectable; audits have to be
externally verifiable.  Writers are serialized by an optimistic version
check on session.json; readers need no locks.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from .auditor import IterationRecord, record_to_json

__all__ = [
    "ConflictError",
    "IntegrityError",
    "SessionRecord",
    "SessionStore",
    "StoreError",
]


class StoreError(RuntimeError):
    pass


class IntegrityError(StoreError):
    """Persisted content does not match its digest chain."""


class ConflictError(StoreError):
    """Concurrent writer detected by the version check."""


_GENESIS = "0" * 64


def _chain(previous: str, payload: str) -> str:
    return hashlib.sha256((previous + payload).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SessionRecord:
    """Everything needed to resume or verify a live audit session.

    status follows the audit loop: AwaitingBatch -> AwaitingCvr ->
    AwaitingBallot -> (AwaitingBatch | Stopped).  rng_draws counts the
    uniforms consumed so far so the counter-mode stream can be restored.
    """

    session_id: str
    config: dict[str, Any]
    manifest: tuple[int, ...]
    normalized_tabulation: tuple[tuple[int, int, int], ...]
    mu: tuple[int, int]
    seed: int
    status: str
    records: tuple[IterationRecord, ...] = ()
    rng_draws: int = 0
    current_batch: int | None = None
    current_row: int | None = None
    current_identifier: str | None = None
    current_cvr_digest: str | None = None
    verdict: str | None = None
    log_risk: float = 0.0
    pending: dict | None = None  # round-mode slot queue, when rounds are on
    version: int = 0

    def snapshot(self) -> dict[str, Any]:
        payload = {k: v for k, v in self.__dict__.items() if k != "records"}
        payload["manifest"] = list(self.manifest)
        payload["normalized_tabulation"] = [list(r) for r in self.normalized_tabulation]
        payload["mu"] = list(self.mu)
        return payload


class SessionStore:
    """Directory-backed session storage with tamper-evident transcripts."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, session_id: str) -> Path:
        if not session_id or any(c in session_id for c in "/\\."):
            raise StoreError(f"bad session id {session_id!r}")
        return self.root / session_id

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def save_session(self, record: SessionRecord) -> SessionRecord:
        """Persist `record`, bumping its version.

        The on-disk version must equal the record's version (the value read
        at load time); otherwise another writer has intervened.  Transcript
        lines are append-only: shrinking or rewriting history is refused.
        """
        directory = self._dir(record.session_id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "cvrs").mkdir(exist_ok=True)
        session_path = directory / "session.json"
        if session_path.exists():
            on_disk = json.loads(session_path.read_text())
            if on_disk["version"] != record.version:
                raise ConflictError(
                    f"session {record.session_id}: version {record.version} stale "
                    f"(on disk: {on_disk['version']})"
                )
        elif record.version != 0:
            raise ConflictError(f"session {record.session_id} does not exist yet")

        existing, tail_digest = self._read_transcript(directory)
        if len(record.records) < len(existing):
            raise StoreError("transcript is append-only")
        for old, new in zip(existing, record.records):
            if old != new:
                raise StoreError("transcript is append-only; history rewrite refused")

        transcript_path = directory / "transcript.jsonl"
        with open(transcript_path, "a", encoding="utf-8") as handle:
            digest = tail_digest
            for fresh in record.records[len(existing):]:
                payload = record_to_json(fresh)
                digest = _chain(digest, payload)
                line = json.loads(payload)
                line["_digest"] = digest
                handle.write(json.dumps(line, separators=(",", ":"), ensure_ascii=False) + "\n")

        saved = replace(record, version=record.version + 1)
        tmp = session_path.with_suffix(".json.tmp")
        body = saved.snapshot()
        body_text = json.dumps(body, separators=(",", ":"), sort_keys=True)
        body["content_digest"] = hashlib.sha256(body_text.encode()).hexdigest()
        tmp.write_text(json.dumps(body, indent=1))
        os.replace(tmp, session_path)
        return saved

    def save_cvr_file(self, session_id: str, batch_index: int, text: str) -> None:
        directory = self._dir(session_id) / "cvrs"
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{batch_index}.csv").write_text(text, encoding="utf-8")

    def load_cvr_file(self, session_id: str, batch_index: int) -> str | None:
        path = self._dir(session_id) / "cvrs" / f"{batch_index}.csv"
        return path.read_text(encoding="utf-8") if path.exists() else None

    def _read_transcript(self, directory: Path) -> tuple[list[IterationRecord], str]:
        path = directory / "transcript.jsonl"
        if not path.exists():
            return [], _GENESIS
        records = []
        digest = _GENESIS
        for number, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            data = json.loads(line)
            claimed = data.pop("_digest", None)
            payload = json.dumps(data, separators=(",", ":"), ensure_ascii=False)
            digest = _chain(digest, payload)
            if claimed != digest:
                raise IntegrityError(
                    f"{path.name}: digest mismatch at line {number}; "
                    "transcript has been altered"
                )
            records.append(IterationRecord(**data))
        return records, digest

    def load_session(self, session_id: str) -> SessionRecord:
        directory = self._dir(session_id)
        session_path = directory / "session.json"
        if not session_path.exists():
            raise StoreError(f"no such session {session_id!r}")
        body = json.loads(session_path.read_text())
        claimed = body.pop("content_digest", None)
        body_text = json.dumps(body, separators=(",", ":"), sort_keys=True)
        if claimed != hashlib.sha256(body_text.encode()).hexdigest():
            raise IntegrityError(f"session.json digest mismatch for {session_id!r}")
        records, _ = self._read_transcript(directory)
        return SessionRecord(
            session_id=body["session_id"],
            config=body["config"],
            manifest=tuple(body["manifest"]),
            normalized_tabulation=tuple(tuple(r) for r in body["normalized_tabulation"]),
            mu=(body["mu"][0], body["mu"][1]),
            seed=body["seed"],
            status=body["status"],
            records=tuple(records),
            rng_draws=body["rng_draws"],
            current_batch=body["current_batch"],
            current_row=body["current_row"],
            current_identifier=body["current_identifier"],
            current_cvr_digest=body["current_cvr_digest"],
            verdict=body["verdict"],
            log_risk=body["log_risk"],
            pending=body.get("pending"),
            version=body["version"],
        )
