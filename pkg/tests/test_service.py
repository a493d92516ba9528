"""Live audit service: session flow, state machine, library equivalence."""

import json
import math

import numpy as np
import pytest

from rlakit.adversaries import HonestAdversary
from rlakit.auditor import AuditConfig, record_to_json, run_audit
from rlakit.formats import serialize_cvr, serialize_manifest, serialize_tabulation
from rlakit.kaplan_markov import km_log_risk
from rlakit.model import canonical_cvr
from rlakit.service import ApiError, create_app
from rlakit.simulate import zero_error_election


def post(app, path, payload=b"", headers=None):
    body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
    return app.handle("POST", path, body, headers or {})


def get(app, path):
    return app.handle("GET", path, b"", {})


@pytest.fixture()
def election():
    return zero_error_election([10, 10], 11, 9, seed=1)


@pytest.fixture()
def app(tmp_path):
    return create_app(tmp_path)


def create_session(app, election, config=None):
    status, view = post(app, "/sessions", {
        "manifest": serialize_manifest(election.family.manifest()),
        "tabulation": serialize_tabulation(election.tabulation),
        "config": config or {"alpha": 0.05, "seed": 42},
    })
    assert status == 201
    return view


def drive_to_verdict(app, election, view):
    """Scripted operator relaying honest data."""
    cvrs = canonical_cvr(election.family)
    sid = view["session_id"]
    while view["status"] != "Stopped":
        _, view = post(app, f"/sessions/{sid}/draw")
        if view["status"] == "AwaitingCvr":
            batch = view["current_batch"]
            _, view = post(app, f"/sessions/{sid}/cvr", serialize_cvr(cvrs[batch - 1]).encode())
        if view["status"] == "AwaitingBallot":
            batch, ident = view["current_batch"], view["current_identifier"]
            ballot = next(b for b in election.family.batches[batch - 1] if b.identifier == ident)
            _, view = post(app, f"/sessions/{sid}/interpretation",
                           {"w": ballot.votes_w, "l": ballot.votes_l})
    return view


class TestCreateSession:
    def test_valid_inputs_echo_margin(self, app, election):
        view = create_session(app, election)
        assert view["status"] == "AwaitingBatch"
        assert view["mu"] == pytest.approx(0.1)
        assert view["seed"] == 42
        assert view["mu_exact"] == [1, 10]

    def test_nonpositive_margin_stops_immediately(self, app):
        election = zero_error_election([10], 4, 6)
        status, view = post(app, "/sessions", {
            "manifest": serialize_manifest([10]),
            "tabulation": serialize_tabulation(election.tabulation),
            "config": {"alpha": 0.05},
        })
        assert status == 201
        assert view["status"] == "Stopped"
        assert view["verdict"] == "Inconclusive"
        assert view["iterations"] == 0

    def test_parse_errors_surface_with_location(self, app):
        with pytest.raises(ApiError) as info:
            post(app, "/sessions", {
                "manifest": "batch_id,size\n1,x\n",
                "tabulation": "batch_id,s_tab,w_tab,l_tab\n1,3,2,1\n",
                "config": {"alpha": 0.05},
            })
        assert info.value.status == 422
        assert "line 2" in info.value.message

    def test_length_mismatch_422(self, app):
        with pytest.raises(ApiError) as info:
            post(app, "/sessions", {
                "manifest": "batch_id,size\n1,3\n2,3\n",
                "tabulation": "batch_id,s_tab,w_tab,l_tab\n1,3,2,1\n",
                "config": {"alpha": 0.05},
            })
        assert info.value.status == 422

    def test_size_mismatch_surfaces_a_warning(self, app):
        status, view = post(app, "/sessions", {
            "manifest": "batch_id,size\n1,5\n",
            "tabulation": "batch_id,s_tab,w_tab,l_tab\n1,9,3,1\n",
            "config": {"alpha": 0.05},
        })
        assert status == 201
        assert view["warnings"] == [
            "batch 1: tabulated size 9 replaced by manifest size 5"
        ]

    def test_tie_rejected(self, app):
        with pytest.raises(ApiError) as info:
            post(app, "/sessions", {
                "manifest": "batch_id,size\n1,4\n",
                "tabulation": "batch_id,s_tab,w_tab,l_tab\n1,4,2,2\n",
                "config": {"alpha": 0.05},
            })
        assert "tie" in info.value.message


class TestSessionFlow:
    def test_zero_error_run_to_consistent(self, app, election):
        view = create_session(app, election)
        final = drive_to_verdict(app, election, view)
        assert final["verdict"] == "Consistent"
        assert all(r["discrepancy"] == 0 for r in final["records"])
        # displayed risk equals the statistic recomputed from the log
        recomputed = km_log_risk(
            [r["discrepancy"] for r in final["records"]], final["mu"], final["gamma"]
        )
        assert math.isclose(final["log_risk"], recomputed, rel_tol=1e-12)
        assert math.isclose(final["risk"], math.exp(recomputed), rel_tol=1e-12)

    def test_missing_interpretation_scores_loser(self, app, election):
        view = create_session(app, election)
        sid = view["session_id"]
        cvrs = canonical_cvr(election.family)
        _, view = post(app, f"/sessions/{sid}/draw")
        batch = view["current_batch"]
        _, view = post(app, f"/sessions/{sid}/cvr", serialize_cvr(cvrs[batch - 1]).encode())
        row = view["current_row"]
        row_votes = cvrs[batch - 1].rows[row - 1]
        _, view = post(app, f"/sessions/{sid}/interpretation", {"interpretation": "missing"})
        assert view["records"][-1]["discrepancy"] == (
            row_votes.votes_w - row_votes.votes_l
        ) + 1

    def test_inconsistent_cvr_records_two_and_returns_to_batch(self, app, election):
        view = create_session(
            app, election, {"alpha": 0.05, "seed": 42, "transform": "identity"}
        )
        sid = view["session_id"]
        _, view = post(app, f"/sessions/{sid}/draw")
        bad = "row,identifier,w,l\n1,a,1,0\n"  # wrong size for a 10-ballot batch
        _, view = post(app, f"/sessions/{sid}/cvr", bad.encode())
        assert view["status"] == "AwaitingBatch"
        assert view["records"][-1]["discrepancy"] == 2

    def test_wrong_batch_upload_rejected(self, app, election):
        view = create_session(app, election)
        sid = view["session_id"]
        _, view = post(app, f"/sessions/{sid}/draw")
        wrong = view["current_batch"] % 2 + 1
        with pytest.raises(ApiError) as info:
            post(app, f"/sessions/{sid}/cvr?batch={wrong}", b"row,identifier,w,l\n")
        assert info.value.status == 409

    def test_out_of_order_calls_rejected(self, app, election):
        view = create_session(app, election)
        sid = view["session_id"]
        with pytest.raises(ApiError) as info:
            post(app, f"/sessions/{sid}/interpretation", {"w": 1, "l": 0})
        assert info.value.status == 409
        with pytest.raises(ApiError):
            post(app, f"/sessions/{sid}/cvr", b"row,identifier,w,l\n")
        post(app, f"/sessions/{sid}/draw")
        with pytest.raises(ApiError):
            post(app, f"/sessions/{sid}/draw")

    def test_request_id_replays_response(self, app, election):
        view = create_session(app, election)
        sid = view["session_id"]
        headers = {"x-request-id": "req-1"}
        _, first = post(app, f"/sessions/{sid}/draw", b"", headers)
        _, second = post(app, f"/sessions/{sid}/draw", b"", headers)  # retry
        assert first == second

    def test_unknown_session_404(self, app):
        with pytest.raises(ApiError) as info:
            get(app, "/sessions/nope")
        assert info.value.status == 404


class TestServiceLibraryEquivalence:
    def test_transcripts_byte_identical(self, app, election):
        config = AuditConfig(alpha=0.05, rng_seed=42)
        outcome = run_audit(
            HonestAdversary(election.family, canonical_cvr(election.family)),
            election.family.manifest(), election.tabulation, config,
        )
        view = create_session(app, election)
        final = drive_to_verdict(app, election, view)
        fields = ("iter", "batch", "cvr_digest", "row", "identifier",
                  "ballot_w", "ballot_l", "missing", "discrepancy", "log_risk")
        service_lines = [
            json.dumps({k: r[k] for k in fields}, separators=(",", ":"), ensure_ascii=False)
            for r in final["records"]
        ]
        library_lines = [record_to_json(r) for r in outcome.transcript.records]
        assert service_lines == library_lines
        assert final["verdict"] == outcome.verdict.value

    def test_round_mode_session_runs_to_verdict(self, app, election):
        view = create_session(app, election, {"alpha": 0.05, "seed": 9, "rounds": 5})
        final = drive_to_verdict(app, election, view)
        assert final["verdict"] == "Consistent"

    def test_reload_preserves_state_machine(self, app, election, tmp_path):
        view = create_session(app, election)
        sid = view["session_id"]
        _, view = post(app, f"/sessions/{sid}/draw")
        # new app instance over the same store: mid-iteration state survives
        fresh = create_app(tmp_path)
        _, reloaded = get(fresh, f"/sessions/{sid}")
        assert reloaded["status"] == "AwaitingCvr"
        assert reloaded["current_batch"] == view["current_batch"]
        cvrs = canonical_cvr(election.family)
        batch = reloaded["current_batch"]
        _, after = post(fresh, f"/sessions/{sid}/cvr", serialize_cvr(cvrs[batch - 1]).encode())
        assert after["status"] == "AwaitingBallot"


class TestStateMachineModel:
    """Random call sequences never drive a session into an illegal state."""

    def test_random_walk(self, app, election):
        rng = np.random.default_rng(13)
        cvrs = canonical_cvr(election.family)
        view = create_session(app, election)
        sid = view["session_id"]
        legal = {"AwaitingBatch", "AwaitingCvr", "AwaitingBallot", "Stopped"}
        for _ in range(300):
            action = rng.choice(["draw", "cvr", "interpretation", "view"])
            try:
                if action == "draw":
                    _, view = post(app, f"/sessions/{sid}/draw")
                elif action == "cvr":
                    batch = view.get("current_batch") or 1
                    _, view = post(
                        app, f"/sessions/{sid}/cvr", serialize_cvr(cvrs[batch - 1]).encode()
                    )
                elif action == "interpretation":
                    _, view = post(app, f"/sessions/{sid}/interpretation", {"w": 1, "l": 0})
                else:
                    _, view = get(app, f"/sessions/{sid}")
            except ApiError as exc:
                assert exc.status in (409, 422)
                _, view = get(app, f"/sessions/{sid}")
            assert view["status"] in legal
            if view["status"] == "Stopped":
                break
