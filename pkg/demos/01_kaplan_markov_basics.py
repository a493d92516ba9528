"""The Kaplan-Markov statistic, draw by draw.

The audit's only statistic is a running product: each compared ballot
multiplies in (1 - margin/(2*gamma)) / (1 - D/(2*gamma)), where D is the
draw's discrepancy.  Clean draws (D = 0) shrink the product geometrically;
overstatements blow it back up.  The audit may declare the tabulation
consistent once the product reaches the risk limit alpha.
"""

import math

from rlakit import KmConfig, km_risk, new_test_state, sample_size, test_step

ALPHA, GAMMA, MARGIN = 0.05, 1.1, 0.05

print("== how many clean draws does a 5% margin need? ==")
for draws in (100, 120, 130, 131, 140):
    risk = km_risk([0] * draws, MARGIN, GAMMA)
    marker = "  <-- crosses alpha" if risk <= ALPHA else ""
    print(f"  {draws:4d} zero draws -> risk {risk:.5f}{marker}")

print()
print("== the price of errors ==")
for d in (-2, -1, 0, 1, 2):
    factor = km_risk([d], MARGIN, GAMMA)
    print(f"  one draw with D={d:+d} multiplies risk by {factor:.4f}")
print("  (a single 2-vote overstatement costs about 100 clean draws)")

print()
print("== stepping the sequential test ==")
config = KmConfig(alpha=ALPHA, gamma=GAMMA, ell_min=1, ell_max=10_000, delta=MARGIN)
state = new_test_state()
stream = [0] * 60 + [1] + [0] * 100  # one 1-vote overstatement at draw 61
while not state.stopped:
    state = test_step(state, stream[state.draws], config)
print(f"  with one overstatement the audit stops after {state.draws} draws "
      f"(risk {state.risk_value:.5f}, rejected={state.rejected})")

print()
print("== sizing a sample up front ==")
for margin in (0.01, 0.02, 0.05, 0.1, 0.2):
    n = sample_size(ALPHA, margin, GAMMA, lam=0.0)
    n_tolerant = sample_size(ALPHA, margin, GAMMA, lam=0.5)
    print(f"  margin {margin:5.2f}: {n:5d} draws clean, "
          f"{n_tolerant:5d} tolerating 1-vote overstatements at half rate")
