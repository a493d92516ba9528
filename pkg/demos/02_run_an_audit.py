"""A complete adaptive audit, end to end, against an honest participant.

The auditor holds only the trusted manifest and the claimed tabulation.
Batch CVRs are generated on demand for sampled batches only -- that is the
whole point: most batches never need a CVR at all.
"""

from collections import Counter

from rlakit import AuditConfig, HonestAdversary, canonical_cvr, run_audit
from rlakit.simulate import zero_error_election

# A 10,000-ballot election in 50 batches of 200; winner by 5%.
election = zero_error_election([200] * 50, 5250, 4750, seed=1)
manifest = election.family.manifest()

adversary = HonestAdversary(election.family, canonical_cvr(election.family))
config = AuditConfig(alpha=0.05, gamma=1.1, rng_seed=2024)

outcome = run_audit(adversary, manifest, election.tabulation, config)
records = outcome.transcript.records

print(f"verdict: {outcome.verdict.value} after {len(records)} ballot inspections")
print(f"margin mu = {outcome.transcript.mu} (committed seed {outcome.transcript.seed})")

touched = sorted({r.batch for r in records})
print(f"batches sampled: {len(touched)} of {len(manifest)} "
      f"-> only {len(touched) / len(manifest):.0%} of the CVR was ever generated")

print()
print("discrepancy stream:", dict(Counter(r.discrepancy for r in records)))
print("final risk:", f"{2.718281828 ** records[-1].log_risk:.5f}")

print()
print("same seed, same transcript (replayable audits):")
again = run_audit(adversary, manifest, election.tabulation, config)
print("  identical:", again.transcript.records == records)

print()
print("round mode: 20 batches drawn per round, CVRs generated in parallel")
round_outcome = run_audit(
    adversary, manifest, election.tabulation,
    AuditConfig(alpha=0.05, rng_seed=7, rounds=20),
)
round_batches = sorted({r.batch for r in round_outcome.transcript.records})
print(f"  verdict {round_outcome.verdict.value} after "
      f"{len(round_outcome.transcript.records)} draws across {len(round_batches)} batches")
