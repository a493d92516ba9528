"""Command-line surface: sizing, simulation, offline audits, replay, serve.

Exit codes: 0 success, 1 assertion/violation (failed replay, risk-limit
violation flags), 2 usage errors.  Simulation subcommands are
seed-reproducible byte for byte; pass --json for machine output.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .adversaries import (
    DistortionSpec,
    HonestAdversary,
    WhitewashAdversary,
    WithholdAdversary,
    apply_distortion,
    duplicate_label_attack,
    tab_consistent_cvr,
)
from .auditor import AuditConfig, AuditMode, normalize_tabulation
from .formats import FormatError
from .kaplan_markov import KmError, km_factor_log, sample_size
from .model import Election
from .service import ApiError, LiveSession, create_app, make_server
from .simulate import (
    SimulationError,
    SyntheticManifestSpec,
    discrepancy_distribution,
    estimate_risk,
    simulate_cvr_fraction,
    synthetic_election,
    flipped_election,
)
from .store import SessionStore
from .transforms import TransformKind

__all__ = ["main"]


def _manifest_spec(data: dict) -> SyntheticManifestSpec:
    return SyntheticManifestSpec(
        kind=data["kind"],
        k=int(data.get("k", 0)),
        size=int(data.get("size", 0)),
        mu=float(data.get("mu", 0.0)),
        sigma=float(data.get("sigma", 1.0)),
        sizes=tuple(data.get("sizes", ())),
    )


def _election_from_config(data: dict) -> Election:
    if "sizes" in data:
        sizes = list(data["sizes"])
    else:
        sizes = _manifest_spec(data["manifest"]).build(int(data.get("seed", 0)))
    if "margin" in data:
        return flipped_election(sizes, float(data["margin"]), seed=int(data.get("seed", 0)))
    return synthetic_election(
        sizes,
        w_act=int(data["w_act"]),
        l_act=int(data["l_act"]),
        w_tab=int(data["w_tab"]),
        l_tab=int(data["l_tab"]),
        seed=int(data.get("seed", 0)),
    )


def _audit_config(data: dict) -> AuditConfig:
    return AuditConfig(
        alpha=float(data.get("alpha", 0.05)),
        gamma=float(data.get("gamma", 1.1)),
        ell_min=int(data.get("ell_min", 1)),
        ell_max=int(data.get("ell_max", 2000)),
        transform=TransformKind(data.get("transform", "force")),
        mode=AuditMode(data.get("mode", "ballot")),
        unsafe_skip_unique_check=bool(data.get("unsafe_skip_unique_check", False)),
    )


def _adversary_factory(config: dict):
    """Build the per-trial adversary constructor named by the config."""
    name = config.get("adversary", "honest")
    spec = DistortionSpec(**config.get("distortion", {})) if config.get("distortion") else DistortionSpec()
    placement = config.get("placement", "uniform")
    withhold_policy = config.get("withhold_policy", "loser_votes")

    def build(election: Election, trial: int):
        family = election.family
        manifest = family.manifest()
        norm, _ = normalize_tabulation(manifest, election.tabulation, AuditMode.BALLOT)
        if name == "duplicate_label":
            return duplicate_label_attack(family, election.tabulation)
        if name == "whitewash":
            return WhitewashAdversary(family, election.tabulation)
        base_cvr = tab_consistent_cvr(family, manifest, norm)
        if name == "distortion":
            rng = np.random.Generator(
                np.random.Philox(
                    key=np.random.SeedSequence((trial, 0xD15)).generate_state(2, np.uint64)
                )
            )
            base_cvr, _ = apply_distortion(base_cvr, spec, rng, placement)
        adversary = HonestAdversary(family, base_cvr)
        if name == "withhold":
            return WithholdAdversary(adversary, withhold_policy)
        if name in ("honest", "distortion"):
            return adversary
        raise SimulationError(f"unknown adversary {name!r}")

    return build


def _print(payload: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print("\n".join(lines))


def _cmd_sample_size(args) -> int:
    try:
        draws = sample_size(args.alpha, args.margin, args.gamma, args.lam)
    except KmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print(
        {
            "alpha": args.alpha, "margin": args.margin, "gamma": args.gamma,
            "lambda": args.lam, "sample_size": draws,
        },
        args.json,
        [str(draws)],
    )
    return 0


def _write_csv(path: str, header: list, rows: list) -> None:
    import csv as _csv

    with open(path, "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _risk_cell(config_path: str, trials: int, seed: int, threads: int, transcripts=None):
    config = json.loads(Path(config_path).read_text())
    election = _election_from_config(config["election"])
    factory = _adversary_factory(config)
    audit = _audit_config(config.get("audit", {}))
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunk = (trials + threads - 1) // threads
        jobs = [
            (config_path, start, min(chunk, trials - start), seed)
            for start in range(0, trials, chunk)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_risk_chunk, jobs))
        successes = sum(p[0] for p in parts)
        digests = [d for p in parts for d in p[1]]
        from .simulate import wilson_interval

        low, high = wilson_interval(successes, trials)
        report_dict = {
            "trials": trials, "successes": successes,
            "estimate": successes / trials,
            "wilson_low": low, "wilson_high": high,
            "violates_alpha": low > audit.alpha,
            "transcript_digests": digests,
        }
        return report_dict, audit
    report = estimate_risk(
        election, factory, audit, trials, seed, transcripts_dir=transcripts
    )
    payload = {
        "trials": report.trials, "successes": report.successes,
        "estimate": report.estimate,
        "wilson_low": report.wilson_low, "wilson_high": report.wilson_high,
        "violates_alpha": report.violates_alpha,
        "transcript_digests": list(report.transcript_digests),
    }
    return payload, audit


def _risk_chunk(job):
    config_path, offset, count, seed = job
    config = json.loads(Path(config_path).read_text())
    election = _election_from_config(config["election"])
    factory = _adversary_factory(config)
    audit = _audit_config(config.get("audit", {}))
    report = estimate_risk(
        election, factory, audit, count, seed, trial_offset=offset
    )
    return report.successes, list(report.transcript_digests)


def _cmd_simulate(args) -> int:
    if args.experiment == "risk":
        payload, audit = _risk_cell(
            args.config, args.trials, args.seed, args.threads,
            transcripts=args.transcripts,
        )
        if args.csv:
            _write_csv(
                args.csv,
                ["trials", "successes", "estimate", "wilson_low", "wilson_high",
                 "alpha", "violates_alpha"],
                [[payload["trials"], payload["successes"], payload["estimate"],
                  payload["wilson_low"], payload["wilson_high"], audit.alpha,
                  payload["violates_alpha"]]],
            )
        _print(
            payload,
            args.json,
            [
                f"trials        {payload['trials']}",
                f"consistent    {payload['successes']}",
                f"estimate      {payload['estimate']:.6f}",
                f"wilson 95%    [{payload['wilson_low']:.6f}, {payload['wilson_high']:.6f}]",
                f"alpha         {audit.alpha}",
                f"violation     {payload['violates_alpha']}",
            ],
        )
        return 1 if payload["violates_alpha"] else 0

    if args.experiment == "completeness":
        config = json.loads(Path(args.config).read_text())
        fam_cfg = config["family"]
        election = synthetic_election(
            list(fam_cfg["sizes"]),
            w_act=int(fam_cfg["w_act"]), l_act=int(fam_cfg["l_act"]),
            w_tab=int(fam_cfg.get("w_tab", fam_cfg["w_act"])),
            l_tab=int(fam_cfg.get("l_tab", fam_cfg["l_act"])),
            seed=int(fam_cfg.get("seed", 0)),
        )
        report = discrepancy_distribution(
            election.family,
            DistortionSpec(**config.get("stage1", {})),
            DistortionSpec(**config.get("stage2", {})),
            args.trials,
            args.seed,
            placement=config.get("placement", "uniform"),
        )
        payload = {
            "bounds_kind": report.bounds_kind,
            "trials": report.trials,
            "empirical_pmf": {str(k): v for k, v in report.empirical_pmf.items()},
            "exact_pmf": {str(k): v for k, v in report.exact_pmf.items()},
            "intervals": {str(k): list(v) for k, v in report.intervals.items()},
            "within_bounds": report.within_bounds,
            "violations": list(report.violations),
        }
        lines = [f"bounds: {report.bounds_kind}   trials: {report.trials}"]
        for v in (-2, -1, 0, 1, 2):
            lo, hi = report.intervals[v]
            lines.append(
                f"D={v:+d}  empirical {report.empirical_pmf[v]:.6f}  "
                f"bounds [{lo:.6f}, {hi:.6f}]"
            )
        lines.append(f"within bounds: {report.within_bounds}")
        if args.csv:
            _write_csv(
                args.csv,
                ["discrepancy", "empirical", "exact", "bound_low", "bound_high"],
                [[v, report.empirical_pmf[v], report.exact_pmf[v],
                  report.intervals[v][0], report.intervals[v][1]]
                 for v in (-2, -1, 0, 1, 2)],
            )
        _print(payload, args.json, lines)
        return 0 if report.within_bounds else 1

    if args.experiment == "cvr-fraction":
        config = json.loads(Path(args.config).read_text())
        report = simulate_cvr_fraction(
            _manifest_spec(config["manifest"]),
            int(config["sample_size"]),
            args.trials,
            args.seed,
        )
        payload = {
            "batches": len(report.sizes),
            "sample_size": report.sample_size,
            "trials": report.trials,
            "mean_distinct_batches": report.mean_distinct_batches,
            "analytic_distinct_batches": report.analytic_distinct_batches,
            "mean_ballot_fraction": report.mean_ballot_fraction,
            "mean_batch_fraction": report.mean_batch_fraction,
        }
        if args.csv:
            _write_csv(
                args.csv,
                ["batches", "sample_size", "trials", "mean_distinct",
                 "analytic_distinct", "ballot_fraction", "batch_fraction"],
                [[len(report.sizes), report.sample_size, report.trials,
                  report.mean_distinct_batches, report.analytic_distinct_batches,
                  report.mean_ballot_fraction, report.mean_batch_fraction]],
            )
        _print(
            payload,
            args.json,
            [
                f"batches             {len(report.sizes)}",
                f"sample size         {report.sample_size}",
                f"mean distinct       {report.mean_distinct_batches:.3f}",
                f"analytic distinct   {report.analytic_distinct_batches:.3f}",
                f"ballot fraction     {report.mean_ballot_fraction:.4f}",
                f"batch fraction      {report.mean_batch_fraction:.4f}",
            ],
        )
        return 0
    raise AssertionError(f"unreachable experiment {args.experiment}")


def _cmd_audit(args) -> int:
    try:
        manifest_text = Path(args.manifest).read_text()
        tabulation_text = Path(args.tabulation).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    store = SessionStore(args.store)
    config = AuditConfig(
        alpha=args.alpha, gamma=args.gamma, ell_min=args.ell_min,
        ell_max=args.ell_max, transform=TransformKind(args.transform),
        mode=AuditMode(args.mode), rng_seed=args.seed,
    )
    if config.mode is AuditMode.GROUP:
        print("group mode over the CLI is not implemented; use the library API",
              file=sys.stderr)
        return 2
    try:
        session = LiveSession.create(store, manifest_text, tabulation_text, config)
    except ApiError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2
    view = session.view()
    print(f"session {view['session_id']}  seed {view['seed']}  mu {view['mu']:.6f}")
    while view["status"] != "Stopped":
        view = session.draw_next()
        if view["status"] == "AwaitingCvr":
            print(f"[iter {view['iterations'] + 1}] retrieve batch {view['current_batch']}"
                  f" and produce its CVR")
            while True:
                path = input("CVR file path: ").strip()
                try:
                    view = session.submit_cvr(Path(path).read_text())
                    break
                except (OSError, ApiError) as exc:
                    print(f"  rejected: {exc}")
        if view["status"] == "AwaitingBallot":
            print(f"  retrieve ballot {view['current_identifier']!r} "
                  f"from batch {view['current_batch']} (row {view['current_row']})")
            while True:
                answer = input("interpretation [winner/loser/blank/missing]: ").strip().lower()
                if answer in ("winner", "loser", "blank", "missing"):
                    break
                print("  answer one of winner, loser, blank, missing")
            view = session.submit_interpretation({"interpretation": answer})
        print(f"  risk {view['risk']:.6g} after {view['iterations']} draws")
    print(f"verdict: {view['verdict']}")
    return 0


def _cmd_replay(args) -> int:
    path = Path(args.transcript)
    try:
        lines = [l for l in path.read_text().splitlines() if l.strip()]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not lines:
        print("error: empty transcript", file=sys.stderr)
        return 2
    first = json.loads(lines[0])
    if first.get("kind") == "rlakit-transcript":
        header, records = first, [json.loads(l) for l in lines[1:]]
        offset = 2
    else:
        session_file = path.parent / "session.json"
        if not session_file.exists():
            print("error: no header line and no adjacent session.json", file=sys.stderr)
            return 2
        body = json.loads(session_file.read_text())
        header = {
            "mu": body["mu"],
            "gamma": body["config"]["gamma"],
        }
        records = [json.loads(l) for l in lines]
        offset = 1
    delta = float(Fraction(header["mu"][0], header["mu"][1]))
    gamma = header["gamma"]
    log_risk = 0.0
    for index, record in enumerate(records):
        line_no = index + offset
        log_risk += km_factor_log(record["discrepancy"], delta, gamma)
        if record["log_risk"] != log_risk:
            print(
                f"replay FAILED at line {line_no}: log_risk {record['log_risk']!r} "
                f"!= recomputed {log_risk!r}"
            )
            return 1
        if record["iter"] != index + 1:
            print(f"replay FAILED at line {line_no}: iter {record['iter']} != {index + 1}")
            return 1
    print(f"replay OK: {len(records)} iterations, final log_risk {log_risk!r}")
    return 0


def _cmd_serve(args) -> int:
    app = create_app(args.store, static_dir=args.static)
    server = make_server(app, args.host, args.port)
    print(f"audit service on http://{args.host}:{args.port} (store: {args.store})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlakit",
        description="Adaptive risk-limiting ballot-comparison audits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-size", help="draws needed for a margin and risk limit")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--gamma", type=float, default=1.1)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_sample_size)

    p = sub.add_parser("simulate", help="seeded Monte Carlo experiments")
    p.add_argument("experiment", choices=["risk", "completeness", "cvr-fraction"])
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.add_argument("--transcripts", default=None,
                   help="risk only: directory for per-trial transcripts")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("audit", help="interactive offline audit")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tabulation", required=True)
    p.add_argument("--mode", choices=[m.value for m in AuditMode], default="ballot")
    p.add_argument("--transform", choices=[t.value for t in TransformKind], default="force")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=1.1)
    p.add_argument("--ell-min", type=int, default=1)
    p.add_argument("--ell-max", type=int, default=10_000)
    p.add_argument("--store", default=".rlakit-sessions")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("replay", help="verify a transcript's risk column")
    p.add_argument("--transcript", required=True)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="run the live audit service")
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default=".rlakit-sessions")
    p.add_argument("--static", default=None, help="console bundle directory")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SimulationError, FormatError, KmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
