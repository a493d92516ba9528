"""Command-line surface: flags, exit codes, reproducibility."""

import json
from pathlib import Path

import pytest

from rlakit.auditor import AuditConfig
from rlakit.adversaries import HonestAdversary
from rlakit.cli import main
from rlakit.model import canonical_cvr
from rlakit.auditor import run_audit, transcript_to_jsonl
from rlakit.simulate import zero_error_election


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSampleSize:
    def test_prints_989(self, capsys):
        code, out, _ = run_cli(
            capsys, "sample-size", "--alpha", "0.05", "--margin", "0.02",
            "--gamma", "1.1", "--lambda", "0.5",
        )
        assert code == 0
        assert out.strip() == "989"

    def test_json_output(self, capsys):
        code, out, _ = run_cli(
            capsys, "sample-size", "--alpha", "0.05", "--margin", "0.05", "--json"
        )
        assert code == 0
        assert json.loads(out)["sample_size"] == 132

    def test_lambda_too_large_usage_error(self, capsys):
        code, _, err = run_cli(
            capsys, "sample-size", "--alpha", "0.05", "--margin", "0.05",
            "--lambda", "5",
        )
        assert code == 2
        assert "lambda too large" in err

    def test_missing_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["sample-size", "--alpha", "0.05"])
        assert info.value.code == 2


class TestSimulate:
    def test_cvr_fraction_single_batch(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps(
            {"manifest": {"kind": "equal", "k": 1, "size": 100}, "sample_size": 50}
        ))
        code, out, _ = run_cli(
            capsys, "simulate", "cvr-fraction", "--config", str(config),
            "--trials", "20", "--seed", "1",
        )
        assert code == 0
        assert "ballot fraction     1.0000" in out

    def test_risk_seed_reproducible_bytes(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({
            "election": {"sizes": [20, 20], "margin": 0.2, "seed": 1},
            "adversary": "honest",
            "audit": {"alpha": 0.05, "ell_max": 60},
        }))
        args = ("simulate", "risk", "--config", str(config),
                "--trials", "30", "--seed", "5", "--json")
        first = run_cli(capsys, *args)
        second = run_cli(capsys, *args)
        assert first == second
        assert first[0] == 0

    def test_completeness_runs(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({
            "family": {"sizes": [40] * 5, "w_act": 110, "l_act": 80},
            "stage1": {"o1": 2},
            "stage2": {},
        }))
        code, out, _ = run_cli(
            capsys, "simulate", "completeness", "--config", str(config),
            "--trials", "5000", "--seed", "2",
        )
        assert code == 0
        assert "within bounds: True" in out

    def test_every_simulate_subcommand_reproducible(self, capsys, tmp_path):
        risk = tmp_path / "risk.json"
        risk.write_text(json.dumps({
            "election": {"sizes": [20, 20], "margin": 0.2, "seed": 1},
            "adversary": "distortion", "distortion": {"o1": 2},
            "audit": {"alpha": 0.05, "ell_max": 60},
        }))
        completeness = tmp_path / "comp.json"
        completeness.write_text(json.dumps({
            "family": {"sizes": [30] * 4, "w_act": 66, "l_act": 50},
            "stage1": {"u1": 1}, "stage2": {"o1": 1},
        }))
        fraction = tmp_path / "frac.json"
        fraction.write_text(json.dumps({
            "manifest": {"kind": "lognormal", "k": 40, "mu": 3.0, "sigma": 0.7},
            "sample_size": 50,
        }))
        for args in (
            ("simulate", "risk", "--config", str(risk), "--trials", "20", "--seed", "3"),
            ("simulate", "completeness", "--config", str(completeness),
             "--trials", "2000", "--seed", "3"),
            ("simulate", "cvr-fraction", "--config", str(fraction),
             "--trials", "50", "--seed", "3"),
        ):
            assert run_cli(capsys, *args) == run_cli(capsys, *args)

    def test_csv_and_transcript_outputs(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({
            "election": {"sizes": [20, 20], "margin": 0.2, "seed": 1},
            "adversary": "honest",
            "audit": {"alpha": 0.05, "ell_max": 60},
        }))
        csv_path = tmp_path / "report.csv"
        transcripts = tmp_path / "transcripts"
        code, _, _ = run_cli(
            capsys, "simulate", "risk", "--config", str(config),
            "--trials", "8", "--seed", "3",
            "--csv", str(csv_path), "--transcripts", str(transcripts),
        )
        assert code == 0
        header, row = csv_path.read_text().splitlines()
        assert header.startswith("trials,successes,estimate")
        assert row.startswith("8,")
        files = sorted(transcripts.iterdir())
        assert len(files) == 8
        # each per-trial transcript replays cleanly
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(files[0]))
        assert code == 0 and "replay OK" in out

    def test_threads_do_not_change_results(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({
            "election": {"sizes": [20, 20], "margin": 0.2, "seed": 1},
            "adversary": "honest",
            "audit": {"alpha": 0.05, "ell_max": 60},
        }))
        serial = run_cli(capsys, "simulate", "risk", "--config", str(config),
                         "--trials", "24", "--seed", "5", "--json")
        fanned = run_cli(capsys, "simulate", "risk", "--config", str(config),
                         "--trials", "24", "--seed", "5", "--threads", "3", "--json")
        assert serial == fanned


class TestReplay:
    @pytest.fixture()
    def transcript_file(self, tmp_path):
        election = zero_error_election([10, 10], 11, 9, seed=1)
        outcome = run_audit(
            HonestAdversary(election.family, canonical_cvr(election.family)),
            election.family.manifest(), election.tabulation,
            AuditConfig(alpha=0.05, rng_seed=4),
        )
        path = tmp_path / "audit.jsonl"
        path.write_text(transcript_to_jsonl(outcome.transcript))
        return path

    def test_intact_transcript_passes(self, capsys, transcript_file):
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(transcript_file))
        assert code == 0
        assert "replay OK" in out

    def test_tampered_transcript_fails_with_line(self, capsys, transcript_file):
        lines = transcript_file.read_text().splitlines()
        bad = json.loads(lines[3])
        bad["discrepancy"] = 1  # pretend an overstatement never happened
        lines[3] = json.dumps(bad)
        transcript_file.write_text("\n".join(lines) + "\n")
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(transcript_file))
        assert code == 1
        assert "line 4" in out

    def test_store_transcript_with_session_json(self, capsys, tmp_path):
        from rlakit.formats import serialize_manifest, serialize_tabulation
        from rlakit.service import LiveSession, create_app
        from rlakit.formats import serialize_cvr

        election = zero_error_election([8, 8], 9, 7, seed=2)
        app = create_app(tmp_path)
        cvrs = canonical_cvr(election.family)
        body = json.dumps({
            "manifest": serialize_manifest(election.family.manifest()),
            "tabulation": serialize_tabulation(election.tabulation),
            "config": {"alpha": 0.05, "seed": 1},
        }).encode()
        _, view = app.handle("POST", "/sessions", body, {})
        sid = view["session_id"]
        for _ in range(3):
            _, view = app.handle("POST", f"/sessions/{sid}/draw", b"", {})
            batch = view["current_batch"]
            _, view = app.handle(
                "POST", f"/sessions/{sid}/cvr", serialize_cvr(cvrs[batch - 1]).encode(), {}
            )
            ident = view["current_identifier"]
            ballot = next(b for b in election.family.batches[batch - 1] if b.identifier == ident)
            _, view = app.handle(
                "POST", f"/sessions/{sid}/interpretation",
                json.dumps({"w": ballot.votes_w, "l": ballot.votes_l}).encode(), {},
            )
        transcript = tmp_path / sid / "transcript.jsonl"
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(transcript))
        assert code == 0


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
