"""Session persistence: round-trips, tamper evidence, write serialization."""

import json
import math

import pytest

from rlakit.auditor import IterationRecord
from rlakit.store import (
    ConflictError,
    IntegrityError,
    SessionRecord,
    SessionStore,
    StoreError,
)


def record(session_id="s1", **kw):
    defaults = dict(
        session_id=session_id,
        config={"alpha": 0.05, "gamma": 1.1, "ell_min": 1, "ell_max": 100,
                "transform": "force", "mode": "ballot", "rounds": None},
        manifest=(5, 5),
        normalized_tabulation=((5, 3, 1), (5, 2, 2)),
        mu=(1, 5),
        seed=42,
        status="AwaitingBatch",
    )
    defaults.update(kw)
    return SessionRecord(**defaults)


def iteration(n, d=0.0):
    return IterationRecord(
        iter=n, batch=1, cvr_digest="x" * 64, row=1, identifier="a",
        ballot_w=1, ballot_l=0, missing=False, discrepancy=d, log_risk=-0.1 * n,
    )


class TestRoundTrip:
    def test_save_then_load_identity(self, tmp_path):
        store = SessionStore(tmp_path)
        saved = store.save_session(record())
        loaded = store.load_session("s1")
        assert loaded == saved

    def test_transcript_appends(self, tmp_path):
        store = SessionStore(tmp_path)
        saved = store.save_session(record())
        saved = store.save_session(
            type(saved)(**{**saved.__dict__, "records": (iteration(1),)})
        )
        saved = store.save_session(
            type(saved)(**{**saved.__dict__, "records": (iteration(1), iteration(2, 1.0))})
        )
        loaded = store.load_session("s1")
        assert loaded.records == (iteration(1), iteration(2, 1.0))

    def test_cvr_files(self, tmp_path):
        store = SessionStore(tmp_path)
        store.save_session(record())
        store.save_cvr_file("s1", 3, "row,identifier,w,l\n1,a,1,0\n")
        assert (tmp_path / "s1" / "cvrs" / "3.csv").exists()
        assert store.load_cvr_file("s1", 3).startswith("row,")


class TestIntegrity:
    def test_tampered_transcript_detected(self, tmp_path):
        store = SessionStore(tmp_path)
        saved = store.save_session(record(records=(iteration(1),)))
        path = tmp_path / "s1" / "transcript.jsonl"
        line = json.loads(path.read_text())
        line["discrepancy"] = 2  # quietly rewrite history
        path.write_text(json.dumps(line) + "\n")
        with pytest.raises(IntegrityError, match="altered"):
            store.load_session("s1")

    def test_tampered_snapshot_detected(self, tmp_path):
        store = SessionStore(tmp_path)
        store.save_session(record())
        path = tmp_path / "s1" / "session.json"
        body = json.loads(path.read_text())
        body["seed"] = 7
        path.write_text(json.dumps(body))
        with pytest.raises(IntegrityError, match="digest"):
            store.load_session("s1")

    def test_history_rewrite_refused(self, tmp_path):
        store = SessionStore(tmp_path)
        saved = store.save_session(record(records=(iteration(1),)))
        mutated = type(saved)(**{**saved.__dict__, "records": (iteration(1, 2.0),)})
        with pytest.raises(StoreError, match="append-only"):
            store.save_session(mutated)


class TestConcurrency:
    def test_second_writer_rejected(self, tmp_path):
        store = SessionStore(tmp_path)
        first = store.save_session(record())
        # two writers both loaded version 1; the slower one must lose
        a = type(first)(**{**first.__dict__, "status": "AwaitingCvr"})
        b = type(first)(**{**first.__dict__, "status": "Stopped"})
        store.save_session(a)
        with pytest.raises(ConflictError, match="stale"):
            store.save_session(b)

    def test_create_requires_version_zero(self, tmp_path):
        store = SessionStore(tmp_path)
        with pytest.raises(ConflictError, match="does not exist"):
            store.save_session(record(version=3))


def test_session_id_validation(tmp_path):
    store = SessionStore(tmp_path)
    with pytest.raises(StoreError):
        store.load_session("../escape")
