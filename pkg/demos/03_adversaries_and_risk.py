"""Stress the risk limit: attackers versus the auditor.

The auditor's guarantee is adversarial: for ANY strategy of the party
producing CVRs and fetching ballots, an election whose tabulated winner is
wrong survives with probability at most alpha.  This script throws the
shipped attackers at a flipped election and watches them fail -- then
switches one safety check off to show why it exists.
"""

from rlakit import (
    AuditConfig,
    Election,
    TransformKind,
    WhitewashAdversary,
    WithholdAdversary,
    HonestAdversary,
    tab_consistent_cvr,
    duplicate_label_attack,
    crafted_duplicate_label_election,
)
from rlakit.auditor import normalize_tabulation
from rlakit.simulate import estimate_risk, flipped_election

TRIALS = 1_000
ALPHA = 0.05

election = flipped_election([50] * 20, 0.1, seed=3)  # loser actually won by 10%
config = AuditConfig(alpha=ALPHA, ell_max=800)


def withholding(e, trial):
    norm, _ = normalize_tabulation(e.family.manifest(), e.tabulation)
    honest = HonestAdversary(e.family, tab_consistent_cvr(e.family, e.family.manifest(), norm))
    return WithholdAdversary(honest, "loser_votes")


print(f"flipped election, {TRIALS} audits per attacker, alpha = {ALPHA}")
for name, factory in [
    ("duplicate-label", lambda e, t: duplicate_label_attack(e.family, e.tabulation)),
    ("ballot withholding", withholding),
    ("adaptive whitewash", lambda e, t: WhitewashAdversary(e.family, e.tabulation)),
]:
    report = estimate_risk(election, factory, config, TRIALS, seed=9, keep_digests=False)
    print(f"  {name:20s} accepted {report.successes:4d}/{TRIALS}"
          f"   Wilson 95% upper {report.wilson_high:.4f}")

print()
print("now remove the duplicate-identifier check (test-only switch):")
family, tabulation = crafted_duplicate_label_election(200, 20)
unsafe = AuditConfig(
    alpha=ALPHA, ell_max=400, transform=TransformKind.IDENTITY,
    unsafe_skip_unique_check=True,
)
report = estimate_risk(
    Election(family=family, tabulation=tabulation),
    lambda e, t: duplicate_label_attack(e.family, e.tabulation),
    unsafe, 500, seed=11, keep_digests=False,
)
print(f"  duplicate-label vs check-free auditor: accepted {report.successes}/500 "
      f"({report.estimate:.0%}) -- the check is load-bearing")
