"""Live audit sessions over HTTP/JSON.

The service plays the auditor; the humans on the other side of the API
play the adversary's role in the flesh: they fetch batches, generate CVR
files, retrieve named ballots, and type in interpretations.  All sampling
and all statistics happen server-side.  The sampling seed is committed at
session creation and disclosed in every view, so an observer can re-derive
every draw.

Endpoints (exact JSON field names are frozen in docs/api-schema.md):

    POST /sessions                        create from manifest/tabulation CSV
    GET  /sessions                        list session ids
    GET  /sessions/{id}                   current view
    POST /sessions/{id}/draw              sample the next batch
    POST /sessions/{id}/cvr               upload the drawn batch's CVR (CSV body)
    POST /sessions/{id}/interpretation    report the retrieved ballot

Mutating requests may carry an X-Request-Id header; repeating a request id
replays the stored response instead of re-executing, so clients can retry
safely.
"""

from __future__ import annotations

import json
import math
import threading
import uuid
from dataclasses import replace
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .auditor import (
    AuditConfig,
    AuditMode,
    IterationRecord,
    Verdict,
    check_consistent,
    cvr_digest,
    normalize_tabulation,
)
from .formats import FormatError, parse_cvr, parse_manifest, parse_tabulation
from .kaplan_markov import KmConfig, new_test_state, test_step
from .model import Tabulation
from .rng import AuditRng
from .store import SessionRecord, SessionStore
from .transforms import TransformKind, apply_transform

__all__ = ["ApiError", "LiveSession", "create_app", "serve"]

AWAITING_BATCH = "AwaitingBatch"
AWAITING_CVR = "AwaitingCvr"
AWAITING_BALLOT = "AwaitingBallot"
STOPPED = "Stopped"


class ApiError(Exception):
    def __init__(self, status: int, message: str, where: str | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.where = where


def _config_from_dict(data: dict[str, Any]) -> AuditConfig:
    try:
        return AuditConfig(
            alpha=float(data["alpha"]),
            gamma=float(data.get("gamma", 1.1)),
            ell_min=int(data.get("ell_min", 1)),
            ell_max=int(data.get("ell_max", 10_000)),
            transform=TransformKind(data.get("transform", "force")),
            mode=AuditMode(data.get("mode", "ballot")),
            rounds=int(data["rounds"]) if data.get("rounds") else None,
            rng_seed=int(data.get("seed", 0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ApiError(422, f"bad config: {exc}", where="config") from None


class LiveSession:
    """One audit session, stepped by operator calls.

    Draw discipline matches the library auditor exactly (one uniform for
    the batch at draw time, one for the row at CVR time), so a scripted
    operator relaying an honest adversary's data reproduces run_audit's
    transcript byte for byte.
    """

    def __init__(self, store: SessionStore, record: SessionRecord, config: AuditConfig):
        self.store = store
        self.record = record
        self.config = config
        self.lock = threading.RLock()
        self.replies: dict[str, dict] = {}
        self._rng = AuditRng(record.seed)
        self._rng.skip(record.rng_draws)
        self._state = new_test_state()
        if Fraction(*record.mu) > 0:
            km = self._km()
            for rec in record.records:
                self._state = test_step(self._state, rec.discrepancy, km)
        self._cvr = None  # transformed CVR awaiting its ballot
        self._round_cvrs: dict[int, tuple] = {}  # batch -> (cvr, digest, ok), this round
        self._restore_round_cache()

    # -- construction --------------------------------------------------------

    @classmethod
    def create(
        cls,
        store: SessionStore,
        manifest_text: str,
        tabulation_text: str,
        config: AuditConfig,
        session_id: str | None = None,
    ) -> "LiveSession":
        try:
            manifest = parse_manifest(manifest_text)
        except FormatError as exc:
            raise ApiError(422, str(exc), where="manifest") from None
        try:
            tabulation = parse_tabulation(tabulation_text)
        except FormatError as exc:
            raise ApiError(422, str(exc), where="tabulation") from None
        if config.mode is AuditMode.GROUP:
            raise ApiError(422, "group sessions are not served over this API", "config")
        if len(manifest) != tabulation.batch_count:
            raise ApiError(
                422,
                f"manifest has {len(manifest)} batches, tabulation {tabulation.batch_count}",
                where="tabulation",
            )
        norm, mu = normalize_tabulation(manifest, tabulation, config.mode)
        stopped = mu <= 0
        # The trusted manifest silently overrides tabulated batch sizes;
        # surface where that happened so operators can chase the mismatch.
        warnings = [
            f"batch {index}: tabulated size {s_tab} replaced by manifest size {s_act}"
            for index, (s_act, (s_tab, _, _)) in enumerate(
                zip(manifest, tabulation.rows), start=1
            )
            if s_tab != s_act
        ]
        record = SessionRecord(
            session_id=session_id or uuid.uuid4().hex[:12],
            config={
                "alpha": config.alpha,
                "gamma": config.gamma,
                "ell_min": config.ell_min,
                "ell_max": config.ell_max,
                "transform": config.transform.value,
                "mode": config.mode.value,
                "rounds": config.rounds,
                "warnings": warnings,
            },
            manifest=tuple(manifest),
            normalized_tabulation=norm.rows,
            mu=(mu.numerator, mu.denominator),
            seed=config.rng_seed,
            status=STOPPED if stopped else AWAITING_BATCH,
            verdict=Verdict.INCONCLUSIVE.value if stopped else None,
        )
        session = cls(store, record, config)
        session._save()
        return session

    @classmethod
    def load(cls, store: SessionStore, session_id: str) -> "LiveSession":
        record = store.load_session(session_id)
        config = AuditConfig(
            alpha=record.config["alpha"],
            gamma=record.config["gamma"],
            ell_min=record.config["ell_min"],
            ell_max=record.config["ell_max"],
            transform=TransformKind(record.config["transform"]),
            mode=AuditMode(record.config["mode"]),
            rounds=record.config.get("rounds"),
            rng_seed=record.seed,
        )
        return cls(store, record, config)

    # -- internals ------------------------------------------------------------

    def _km(self) -> KmConfig:
        return self.config.km_config(Fraction(*self.record.mu))

    def _norm(self) -> Tabulation:
        return Tabulation(rows=self.record.normalized_tabulation)

    def _save(self) -> None:
        self.record = self.store.save_session(self.record)

    def _require(self, status: str) -> None:
        if self.record.status != status:
            raise ApiError(
                409,
                f"out of order: session is {self.record.status}, this call needs {status}",
            )

    def _finish_iteration(self, record: IterationRecord) -> None:
        km = self._km()
        self._state = test_step(self._state, record.discrepancy, km)
        done = replace(record, log_risk=self._state.log_risk)
        if self._state.stopped:
            verdict = (
                Verdict.CONSISTENT if self._state.rejected else Verdict.INCONCLUSIVE
            )
            status, verdict_value = STOPPED, verdict.value
        else:
            status, verdict_value = AWAITING_BATCH, None
        self.record = replace(
            self.record,
            records=self.record.records + (done,),
            status=status,
            verdict=verdict_value,
            current_batch=None,
            current_row=None,
            current_identifier=None,
            current_cvr_digest=None,
            rng_draws=self._rng.draws,
            log_risk=self._state.log_risk,
        )
        self._cvr = None
        self._save()

    def _restore_round_cache(self) -> None:
        pending = self.record.pending
        if not pending:
            return
        for batch in pending.get("cached", []):
            text = self.store.load_cvr_file(self.record.session_id, int(batch))
            if text is not None:
                self._prepare_cvr(text, int(batch))

    def _prepare_cvr(self, text: str, batch: int) -> tuple:
        """Parse, transform, and check one CVR upload; cached per round."""
        raw = parse_cvr(text, batch_index=batch)
        manifest = list(self.record.manifest)
        norm = self._norm()
        cvr = apply_transform(self.config.transform, manifest, norm, raw)
        ok = check_consistent(
            manifest,
            norm,
            cvr,
            no_overvote=self.config.mode is AuditMode.BALLOT_NO_OVERVOTE,
        )
        prepared = (cvr, cvr_digest(cvr), ok)
        if self.config.rounds:
            self._round_cvrs[batch] = prepared
        return prepared

    def _row_from_uniform(self, u: float, batch: int) -> int:
        s_tab = self.record.normalized_tabulation[batch - 1][0]
        return min(int(u * s_tab), s_tab - 1) + 1 if s_tab > 0 else 1

    def _begin_slot(self, batch: int, row_u: float, pending: dict | None) -> None:
        """Enter the slot for `batch`; reuse this round's CVR if present."""
        prepared = self._round_cvrs.get(batch) if self.config.rounds else None
        if prepared is None:
            self.record = replace(
                self.record,
                status=AWAITING_CVR,
                current_batch=batch,
                pending=pending,
                rng_draws=self._rng.draws,
            )
            self._save()
            return
        cvr, digest, ok = prepared
        row = self._row_from_uniform(row_u, batch)
        if not ok:
            self.record = replace(
                self.record, current_batch=batch, pending=pending,
                rng_draws=self._rng.draws,
            )
            self._finish_iteration(
                IterationRecord(
                    iter=len(self.record.records) + 1,
                    batch=batch, cvr_digest=digest, row=row,
                    identifier=None, ballot_w=None, ballot_l=None,
                    missing=False, discrepancy=2, log_risk=math.nan,
                )
            )
            return
        self._cvr = cvr
        self.record = replace(
            self.record,
            status=AWAITING_BALLOT,
            current_batch=batch,
            current_row=row,
            current_identifier=cvr.rows[row - 1].identifier,
            current_cvr_digest=digest,
            pending=pending,
            rng_draws=self._rng.draws,
        )
        self._save()

    # -- operator steps --------------------------------------------------------

    def draw_next(self) -> dict:
        with self.lock:
            self._require(AWAITING_BATCH)
            from .rng import pick_weighted

            sizes = [s for s, _, _ in self.record.normalized_tabulation]
            rounds = self.config.rounds
            if not rounds:
                batch = pick_weighted(self._rng.next_uniform(), sizes)
                self.record = replace(
                    self.record,
                    status=AWAITING_CVR,
                    current_batch=batch,
                    rng_draws=self._rng.draws,
                )
                self._save()
                return self.view()
            pending = dict(self.record.pending or {})
            slots = [tuple(s) for s in pending.get("slots", [])]
            if not slots:
                # Round start: all of the round's draws are consumed now, in
                # a fixed order, so slot outcomes cannot shift later draws.
                batches = [
                    pick_weighted(self._rng.next_uniform(), sizes) for _ in range(rounds)
                ]
                row_us = [self._rng.next_uniform() for _ in range(rounds)]
                slots = list(zip(batches, row_us))
                self._round_cvrs.clear()
                pending["cached"] = []
            batch, row_u = slots[0]
            pending["slots"] = [list(s) for s in slots[1:]]
            pending["current"] = [batch, row_u]
            self._begin_slot(int(batch), float(row_u), pending)
            return self.view()

    def submit_cvr(self, text: str, batch: int | None = None) -> dict:
        with self.lock:
            self._require(AWAITING_CVR)
            current = self.record.current_batch
            if batch is not None and batch != current:
                raise ApiError(409, f"CVR is for batch {batch}, session awaits {current}")
            try:
                cvr, digest, ok = self._prepare_cvr(text, current)
            except FormatError as exc:
                raise ApiError(422, str(exc), where="cvr") from None
            self.store.save_cvr_file(self.record.session_id, current, text)
            pending = self.record.pending
            if self.config.rounds:
                pending = dict(pending or {})
                pending["cached"] = sorted(set(pending.get("cached", [])) | {current})
                row_u = pending["current"][1]
                self.record = replace(self.record, pending=pending)
            else:
                row_u = self._rng.next_uniform()
            row = self._row_from_uniform(row_u, current)
            if not ok:
                record = IterationRecord(
                    iter=len(self.record.records) + 1,
                    batch=current, cvr_digest=digest, row=row,
                    identifier=None, ballot_w=None, ballot_l=None,
                    missing=False, discrepancy=2, log_risk=math.nan,
                )
                self._finish_iteration(record)
                return self.view()
            self._cvr = cvr
            self.record = replace(
                self.record,
                status=AWAITING_BALLOT,
                current_row=row,
                current_identifier=cvr.rows[row - 1].identifier,
                current_cvr_digest=digest,
                rng_draws=self._rng.draws,
            )
            self._save()
            return self.view()

    def submit_interpretation(self, body: dict) -> dict:
        with self.lock:
            self._require(AWAITING_BALLOT)
            missing = bool(body.get("missing", False))
            named = body.get("interpretation")
            if named is not None:
                mapping = {
                    "winner": (1, 0),
                    "loser": (0, 1),
                    "blank": (0, 0),
                    "missing": None,
                }
                if named not in mapping:
                    raise ApiError(422, f"unknown interpretation {named!r}", "interpretation")
                pair = mapping[named]
                missing = pair is None
                w, l = pair if pair else (0, 0)
            elif not missing:
                try:
                    w, l = int(body["w"]), int(body["l"])
                except (KeyError, ValueError, TypeError):
                    raise ApiError(422, "need w and l (0/1) or missing", "interpretation") from None
                if w not in (0, 1) or l not in (0, 1):
                    raise ApiError(422, "w and l must be 0 or 1", "interpretation")
            row = self._cvr.rows[self.record.current_row - 1]
            if missing:
                w_act, l_act = 0, 1  # scored as a vote for the loser
                ballot_w = ballot_l = None
            else:
                w_act, l_act = w, l
                ballot_w, ballot_l = w, l
            record = IterationRecord(
                iter=len(self.record.records) + 1,
                batch=self.record.current_batch,
                cvr_digest=self.record.current_cvr_digest,
                row=self.record.current_row,
                identifier=row.identifier,
                ballot_w=ballot_w, ballot_l=ballot_l, missing=missing,
                discrepancy=(row.votes_w - row.votes_l) - (w_act - l_act),
                log_risk=math.nan,
            )
            self._finish_iteration(record)
            return self.view()

    # -- views -----------------------------------------------------------------

    def view(self) -> dict:
        rec = self.record
        return {
            "session_id": rec.session_id,
            "status": rec.status,
            "mode": rec.config["mode"],
            "transform": rec.config["transform"],
            "alpha": rec.config["alpha"],
            "gamma": rec.config["gamma"],
            "ell_min": rec.config["ell_min"],
            "ell_max": rec.config["ell_max"],
            "seed": rec.seed,
            "mu": rec.mu[0] / rec.mu[1],
            "mu_exact": list(rec.mu),
            "iterations": len(rec.records),
            "log_risk": rec.log_risk,
            "risk": math.exp(rec.log_risk),
            "current_batch": rec.current_batch,
            "current_row": rec.current_row,
            "current_identifier": rec.current_identifier,
            "verdict": rec.verdict,
            "warnings": rec.config.get("warnings", []),
            "records": [
                {
                    "iter": r.iter, "batch": r.batch, "cvr_digest": r.cvr_digest,
                    "row": r.row, "identifier": r.identifier,
                    "ballot_w": r.ballot_w, "ballot_l": r.ballot_l,
                    "missing": r.missing, "discrepancy": r.discrepancy,
                    "log_risk": r.log_risk,
                }
                for r in rec.records
            ],
        }


class AuditApp:
    """Routing and session registry; transport-agnostic."""

    def __init__(self, store: SessionStore, static_dir: str | Path | None = None):
        self.store = store
        self.static_dir = Path(static_dir) if static_dir else None
        self.sessions: dict[str, LiveSession] = {}
        self.lock = threading.Lock()

    def _session(self, session_id: str) -> LiveSession:
        with self.lock:
            if session_id not in self.sessions:
                try:
                    self.sessions[session_id] = LiveSession.load(self.store, session_id)
                except Exception:
                    raise ApiError(404, f"no such session {session_id!r}") from None
            return self.sessions[session_id]

    def handle(
        self, method: str, path: str, body: bytes, headers: dict[str, str]
    ) -> tuple[int, dict]:
        parts = [p for p in path.split("?")[0].split("/") if p]
        request_id = headers.get("x-request-id")
        if method == "POST" and parts == ["sessions"]:
            data = _json_body(body)
            config = _config_from_dict(data.get("config", {}))
            session = LiveSession.create(
                self.store,
                data.get("manifest", ""),
                data.get("tabulation", ""),
                config,
            )
            with self.lock:
                self.sessions[session.record.session_id] = session
            return 201, session.view()
        if method == "GET" and parts == ["sessions"]:
            return 200, {"sessions": self.store.list_sessions()}
        if len(parts) >= 2 and parts[0] == "sessions":
            session = self._session(parts[1])
            action = parts[2] if len(parts) > 2 else None
            if method == "GET" and action is None:
                return 200, session.view()
            if method != "POST" or action is None:
                raise ApiError(404, f"unknown route {method} {path}")
            with session.lock:
                if request_id and request_id in session.replies:
                    return 200, session.replies[request_id]
                if action == "draw":
                    result = session.draw_next()
                elif action == "cvr":
                    batch = _query_int(path, "batch")
                    result = session.submit_cvr(body.decode("utf-8"), batch=batch)
                elif action == "interpretation":
                    result = session.submit_interpretation(_json_body(body))
                else:
                    raise ApiError(404, f"unknown action {action!r}")
                if request_id:
                    session.replies[request_id] = result
                return 200, result
        raise ApiError(404, f"unknown route {method} {path}")


def _json_body(body: bytes) -> dict:
    if not body:
        return {}
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ApiError(400, f"bad JSON body: {exc}") from None


def _query_int(path: str, name: str) -> int | None:
    if "?" not in path:
        return None
    from urllib.parse import parse_qs, urlparse

    values = parse_qs(urlparse(path).query).get(name)
    return int(values[0]) if values else None


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


def create_app(store_dir: str | Path, static_dir: str | Path | None = None) -> AuditApp:
    return AuditApp(SessionStore(store_dir), static_dir=static_dir)


def make_server(app: AuditApp, host: str = "127.0.0.1", port: int = 8642) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # quiet by default
            pass

        def _respond(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _static(self, path: str) -> bool:
            if app.static_dir is None:
                return False
            name = path.lstrip("/") or "index.html"
            target = (app.static_dir / name).resolve()
            if not str(target).startswith(str(app.static_dir.resolve())) or not target.is_file():
                return False
            data = target.read_bytes()
            self.send_response(200)
            self.send_header(
                "Content-Type", _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            )
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return True

        def _handle(self, method: str) -> None:
            try:
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                if method == "GET" and not self.path.startswith("/sessions"):
                    if self._static(self.path):
                        return
                status, payload = app.handle(
                    method, self.path, body, {k.lower(): v for k, v in self.headers.items()}
                )
                self._respond(status, payload)
            except ApiError as exc:
                self._respond(exc.status, {"error": exc.message, "where": exc.where})
            except Exception as exc:  # pragma: no cover - last resort
                self._respond(500, {"error": f"internal error: {exc}", "where": None})

        def do_GET(self):
            self._handle("GET")

        def do_POST(self):
            self._handle("POST")

    return ThreadingHTTPServer((host, port), Handler)


def serve(
    store_dir: str | Path,
    host: str = "127.0.0.1",
    port: int = 8642,
    static_dir: str | Path | None = None,
) -> None:
    app = create_app(store_dir, static_dir=static_dir)
    server = make_server(app, host, port)
    print(f"audit service on http://{host}:{port} (store: {store_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
