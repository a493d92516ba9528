"""Monte Carlo experiments: risk estimation, completeness distributions,
and the generated-CVR-fraction simulation.

Everything here is seed-reproducible: trial t of an experiment with seed s
draws from an independent Philox stream keyed by (s, t), so reports are
bit-identical across runs and trial parallelism cannot change results.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .adversaries import DistortionSpec, apply_distortion
from .auditor import (
    Adversary,
    AuditConfig,
    AuditMode,
    Verdict,
    normalize_tabulation,
    run_audit,
    transcript_to_jsonl,
)
from .model import (
    actual_totals,
    Ballot,
    BallotFamily,
    Election,
    ModelError,
    Tabulation,
    canonical_cvr,
    margins,
    row_discrepancy,
    tab_of_cvr,
)
from .transforms import transform_force

__all__ = [
    "CompletenessReport",
    "CvrFractionReport",
    "ExperimentReport",
    "SimulationError",
    "SyntheticManifestSpec",
    "claim_one_stage_intervals",
    "claim_two_stage_intervals",
    "composed_intervals",
    "discrepancy_distribution",
    "estimate_risk",
    "exact_discrepancy_pmf",
    "simulate_cvr_fraction",
    "synthetic_election",
    "zero_error_election",
    "flipped_election",
    "wilson_interval",
]

DISCREPANCY_SUPPORT = (-2, -1, 0, 1, 2)


class SimulationError(ValueError):
    """Bad experiment configuration."""


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval; valid near 0 and 1, unlike the normal interval."""
    if trials <= 0:
        raise SimulationError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _trial_seed(seed: int, trial: int) -> int:
    digest = hashlib.sha256(f"rlakit-trial:{seed}:{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _np_rng(seed: int, label: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.random.SeedSequence((seed, label)).generate_state(2, np.uint64))
    )


# --- Synthetic elections ---------------------------------------------------


@dataclass(frozen=True)
class SyntheticManifestSpec:
    """Batch-size model for synthetic manifests.

    kind "equal" uses k batches of `size` ballots; "lognormal" draws k
    sizes from exp(N(mu, sigma)) rounded up to at least one ballot;
    "explicit" takes the sizes verbatim.
    """

    kind: str
    k: int = 0
    size: int = 0
    mu: float = 0.0
    sigma: float = 1.0
    sizes: tuple[int, ...] = ()

    def build(self, seed: int = 0) -> list[int]:
        if self.kind == "equal":
            if self.k < 1 or self.size < 1:
                raise SimulationError("equal manifests need k >= 1 and size >= 1")
            return [self.size] * self.k
        if self.kind == "lognormal":
            if self.k < 1:
                raise SimulationError("lognormal manifests need k >= 1")
            draws = _np_rng(seed, 0xA11CE).lognormal(self.mu, self.sigma, self.k)
            return [max(1, int(round(x))) for x in draws]
        if self.kind == "explicit":
            if not self.sizes or min(self.sizes) < 1:
                raise SimulationError("explicit manifests need sizes >= 1")
            return list(self.sizes)
        raise SimulationError(f"unknown manifest kind {self.kind!r}")


def _deal(total: int, sizes: Sequence[int]) -> list[int]:
    """Split `total` across batches proportionally to size (largest
    remainder), never exceeding a batch's size."""
    grand = sum(sizes)
    shares = [total * s / grand for s in sizes]
    out = [min(int(x), sizes[i]) for i, x in enumerate(shares)]
    leftovers = sorted(
        range(len(sizes)), key=lambda i: (out[i] - shares[i], i)
    )
    j = 0
    while sum(out) < total:
        i = leftovers[j % len(sizes)]
        if out[i] < sizes[i]:
            out[i] += 1
        j += 1
    return out


def synthetic_election(
    sizes: Sequence[int],
    w_act: int,
    l_act: int,
    w_tab: int,
    l_tab: int,
    seed: int = 0,
) -> Election:
    """Election with the given actual and tabulated totals.

    Ballots are labeled b0, b1, ... (uniquely) and vote patterns are
    spread across batches by a seeded shuffle; tabulated totals are dealt
    proportionally to batch size.
    """
    total = sum(sizes)
    if w_act + l_act > total:
        raise SimulationError("more votes than ballots")
    patterns = [(1, 0)] * w_act + [(0, 1)] * l_act + [(0, 0)] * (total - w_act - l_act)
    order = _np_rng(seed, 0xBA110).permutation(total)
    shuffled = [patterns[i] for i in order]
    batches = []
    cursor = 0
    for index, size in enumerate(sizes, start=1):
        chunk = shuffled[cursor : cursor + size]
        cursor += size
        batches.append(
            tuple(
                Ballot(f"b{cursor - size + offset}", w, l, index)
                for offset, (w, l) in enumerate(chunk)
            )
        )
    family = BallotFamily(batches=tuple(batches))
    w_deal = _deal(w_tab, sizes)
    l_deal = _deal(l_tab, sizes)
    tabulation = Tabulation(
        rows=tuple((sizes[i], w_deal[i], l_deal[i]) for i in range(len(sizes)))
    )
    return Election(family=family, tabulation=tabulation)


def zero_error_election(
    sizes: Sequence[int], w_act: int, l_act: int, seed: int = 0
) -> Election:
    """Valid election whose tabulation equals the actual per-batch totals."""
    base = synthetic_election(sizes, w_act, l_act, w_act, l_act, seed=seed)
    totals = actual_totals(base.family)
    return Election(
        family=base.family, tabulation=Tabulation(rows=totals.per_batch)
    )


def flipped_election(sizes: Sequence[int], margin: float, seed: int = 0) -> Election:
    """Invalid election: the loser leads the ballots by about `margin`,
    while the tabulation claims the mirror image for the winner."""
    total = sum(sizes)
    lead = max(1, round(margin * total))
    if (total - lead) % 2:
        lead += 1
    if lead > total:
        raise SimulationError("margin too large for this manifest")
    low, high = (total - lead) // 2, (total + lead) // 2
    return synthetic_election(sizes, w_act=low, l_act=high, w_tab=high, l_tab=low, seed=seed)


# --- Risk estimation -------------------------------------------------------


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    trials: int
    successes: int
    estimate: float
    wilson_low: float
    wilson_high: float
    violates_alpha: bool
    transcript_digests: tuple[str, ...]
    wall_time: float

    def to_json(self) -> str:
        payload = dict(self.__dict__)
        payload["transcript_digests"] = list(self.transcript_digests)
        return json.dumps(payload, indent=2)


def estimate_risk(
    election_source: Election | Callable[[int], Election],
    adversary_factory: Callable[[Election, int], Adversary],
    config: AuditConfig,
    trials: int,
    seed: int,
    *,
    keep_digests: bool = True,
    trial_offset: int = 0,
    transcripts_dir: str | None = None,
) -> ExperimentReport:
    """Estimate Pr[Consistent] for an auditor against invalid elections.

    Risk is only defined over invalid elections, so a source that produces
    a valid one is a configuration error.  The report's Wilson interval is
    at 95%; the violation flag trips when even the interval's lower bound
    exceeds the configured risk limit.  trial_offset shifts the trial
    indices (and hence their derived streams) so work can be split across
    processes without changing any trial's outcome.
    """
    if trials <= 0:
        raise SimulationError("trials must be positive")
    started = time.perf_counter()
    successes = 0
    digests = []
    if transcripts_dir is not None:
        import os

        os.makedirs(transcripts_dir, exist_ok=True)
    for trial in range(trial_offset, trial_offset + trials):
        election = election_source(trial) if callable(election_source) else election_source
        report = margins(election)
        if report.valid:
            raise SimulationError("risk is defined over invalid elections only")
        adversary = adversary_factory(election, trial)
        trial_config = replace(config, rng_seed=_trial_seed(seed, trial))
        outcome = run_audit(
            adversary, election.family.manifest(), election.tabulation, trial_config
        )
        if outcome.verdict is Verdict.CONSISTENT:
            successes += 1
        if keep_digests or transcripts_dir is not None:
            text = transcript_to_jsonl(outcome.transcript)
            if keep_digests:
                digests.append(hashlib.sha256(text.encode()).hexdigest()[:16])
            if transcripts_dir is not None:
                with open(f"{transcripts_dir}/trial-{trial}.jsonl", "w") as handle:
                    handle.write(text)
    low, high = wilson_interval(successes, trials)
    return ExperimentReport(
        config={
            "alpha": config.alpha,
            "gamma": config.gamma,
            "ell_min": config.ell_min,
            "ell_max": config.ell_max,
            "mode": config.mode.value,
            "transform": config.transform.value,
            "trials": trials,
            "seed": seed,
        },
        trials=trials,
        successes=successes,
        estimate=successes / trials,
        wilson_low=low,
        wilson_high=high,
        violates_alpha=low > config.alpha,
        transcript_digests=tuple(digests),
        wall_time=time.perf_counter() - started,
    )


# --- Completeness: discrepancy distributions under distortion ---------------


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def claim_one_stage_intervals(spec: DistortionSpec, total: int) -> dict[int, tuple[float, float]]:
    """Closed-form bounds on Pr[D = v] when the tabulation agrees with the
    served CVR but both were distorted away from the ballots."""
    o1, o2, u1, u2, a, d = spec.o1, spec.o2, spec.u1, spec.u2, spec.a, spec.d
    e = o1 + o2 + u1 + u2
    raw = {
        2: (o2 - 2 * a - d, o2 + a + 2 * d),
        1: (o1 - 3 * a - 2 * d, o1 + 2 * a + 3 * d),
        -1: (u1 - 3 * a - 2 * d, u1 + 2 * a + 2 * d),
        -2: (u2 - 2 * a - d, u2 + a + d),
    }
    out = {v: (_clamp01(lo / total), _clamp01(hi / total)) for v, (lo, hi) in raw.items()}
    out[0] = (
        _clamp01(1.0 - (e + 3 * a + 3 * d) / total),
        _clamp01(1.0 - (e - 3 * a - 3 * d) / total),
    )
    return out


def claim_two_stage_intervals(
    baseline_pmf: Mapping[int, float], spec: DistortionSpec, total: int
) -> dict[int, tuple[float, float]]:
    """Bounds on Pr[D = v] when further errors separate the served CVR from
    a tabulation-consistent one whose exact distribution is `baseline_pmf`.

    The D=0 deficit charges each two-vote error 3 rows: the error row
    itself plus one repair per column when the forcing rewrite's winner
    and loser corrections land on two separate rows (they only coincide
    when the winner repair happens to hit a loser-voting row).  One-vote
    errors perturb a single column and cost at most 2 rows.
    """
    o1, o2, u1, u2, a, d = spec.o1, spec.o2, spec.u1, spec.u2, spec.a, spec.d
    slack = {
        2: o2 + o1 + 2 * u2 + u1 + 2 * a + 3 * d,
        1: 2 * o2 + 2 * o1 + 2 * u2 + 2 * u1 + 2 * a + 3 * d,
        0: 3 * o2 + 2 * o1 + 3 * u2 + 2 * u1 + 3 * a + 3 * d,
        -1: 2 * o2 + 2 * o1 + 2 * u2 + 2 * u1 + 2 * a + 3 * d,
        -2: 2 * o2 + o1 + u2 + u1 + 2 * a + 3 * d,
    }
    return {
        v: (
            _clamp01(baseline_pmf.get(v, 0.0) - slack[v] / total),
            _clamp01(baseline_pmf.get(v, 0.0) + slack[v] / total),
        )
        for v in DISCREPANCY_SUPPORT
    }


def composed_intervals(
    spec1: DistortionSpec, spec2: DistortionSpec, total: int
) -> dict[int, tuple[float, float]]:
    """Two-stage composition of the one- and two-stage bounds."""
    o1, o2, u1, u2, a, d = spec1.o1, spec1.o2, spec1.u1, spec1.u2, spec1.a, spec1.d
    p1, p2, q1, q2, ap, dp = spec2.o1, spec2.o2, spec2.u1, spec2.u2, spec2.a, spec2.d
    e = o1 + o2 + u1 + u2
    _ = p1 + p2 + q1 + q2  # stage-2 error count, rolled into stage2_zero_cost
    centers_slacks = {
        2: (o2, 2 * a + 2 * d + p2 + p1 + 2 * q2 + q1 + 2 * ap + 3 * dp),
        1: (o1, 3 * a + 3 * d + 2 * p2 + 2 * p1 + 2 * q2 + 2 * q1 + 2 * ap + 3 * dp),
        -1: (u1, 3 * a + 2 * d + 2 * p2 + 2 * p1 + 2 * q2 + 2 * q1 + 2 * ap + 3 * dp),
        -2: (u2, 2 * a + d + 2 * p2 + p1 + q2 + q1 + 2 * ap + 3 * dp),
    }
    out = {
        v: (_clamp01((c - s) / total), _clamp01((c + s) / total))
        for v, (c, s) in centers_slacks.items()
    }
    stage2_zero_cost = 3 * (p2 + q2) + 2 * (p1 + q1)
    out[0] = (
        _clamp01(1.0 - (e + stage2_zero_cost) / total - 3.0 * (a + d + ap + dp) / total),
        1.0,
    )
    return out


def _slot_discrepancies(
    family: BallotFamily,
    manifest: Sequence[int],
    norm_tab: Tabulation,
    served: Sequence,
) -> np.ndarray:
    """Per-slot discrepancy of the honest-adversary experiment, one entry
    per (batch, row) pair.  Batches are drawn proportionally to size and
    rows uniformly, so slots are equiprobable."""
    values = []
    for cvr in served:
        fixed = transform_force(manifest, norm_tab, cvr)
        batch = family.batches[cvr.batch_index - 1]
        values.extend(row_discrepancy(row, batch) for row in fixed.rows)
    return np.array(values, dtype=np.int64)


def exact_discrepancy_pmf(slots: np.ndarray) -> dict[int, float]:
    total = len(slots)
    return {v: float(np.count_nonzero(slots == v)) / total for v in DISCREPANCY_SUPPORT}


@dataclass(frozen=True)
class CompletenessReport:
    spec_stage1: DistortionSpec
    spec_stage2: DistortionSpec
    bounds_kind: str
    trials: int
    exact_pmf: dict[int, float]
    empirical_pmf: dict[int, float]
    intervals: dict[int, tuple[float, float]]
    within_bounds: bool
    violations: tuple[str, ...]
    # empirical values that missed the 3-sigma fence but sit within 4.5
    # sigma of the (in-bounds) exact value: sampling noise, not violations
    boundary_misses: tuple[str, ...] = ()


def discrepancy_distribution(
    family: BallotFamily,
    spec_stage1: DistortionSpec,
    spec_stage2: DistortionSpec,
    trials: int,
    seed: int,
    placement: str = "uniform",
) -> CompletenessReport:
    """Empirical pmf of the iteration discrepancy under a two-stage error
    model, checked against the matching closed-form bounds.

    Stage 1 distorts the canonical CVR and the tabulation is read off the
    distorted copy; stage 2 further distorts the CVRs served during the
    audit.  The honest adversary serves the stage-2 CVRs and the auditor
    applies the forcing transform.

    Bound checking is two-layered.  The exact per-draw distribution (a
    slot count, free of sampling noise) must sit inside the closed-form
    interval outright.  The empirical pmf is then checked against the
    interval with a 3-sigma binomial allowance per endpoint; a value that
    misses the fence but lies within 4.5 sigma of the in-bounds exact
    value is reported as a boundary miss, not a violation -- with point
    intervals (all slack terms zero) an occasional 3-sigma excursion of
    the sampler is expected once enough cells are checked.
    """
    if trials <= 0:
        raise SimulationError("trials must be positive")
    if not family.uniquely_labeled():
        raise ModelError("completeness experiments need a uniquely labeled family")
    manifest = family.manifest()
    base = canonical_cvr(family)
    cvr_t, _ = apply_distortion(base, spec_stage1, _np_rng(seed, 1), placement)
    tabulation = tab_of_cvr(cvr_t)
    served, _ = apply_distortion(cvr_t, spec_stage2, _np_rng(seed, 2), placement)
    norm, _mu = normalize_tabulation(manifest, tabulation, AuditMode.BALLOT)

    slots = _slot_discrepancies(family, manifest, norm, served)
    exact = exact_discrepancy_pmf(slots)
    total = family.size

    draw = _np_rng(seed, 3).integers(0, len(slots), size=trials)
    sampled = slots[draw]
    empirical = {
        v: float(np.count_nonzero(sampled == v)) / trials for v in DISCREPANCY_SUPPORT
    }

    if spec_stage2.is_zero:
        kind = "one-stage"
        intervals = claim_one_stage_intervals(spec_stage1, total)
    elif spec_stage1.is_zero:
        kind = "two-stage"
        baseline = exact_discrepancy_pmf(_slot_discrepancies(family, manifest, norm, cvr_t))
        intervals = claim_two_stage_intervals(baseline, spec_stage2, total)
    else:
        kind = "composed"
        intervals = composed_intervals(spec_stage1, spec_stage2, total)

    violations = []
    misses = []
    for v in DISCREPANCY_SUPPORT:
        lo, hi = intervals[v]
        if not (lo - 1e-12 <= exact[v] <= hi + 1e-12):
            violations.append(
                f"D={v}: exact {exact[v]:.6f} outside [{lo:.6f}, {hi:.6f}]"
            )
            continue
        slack_lo = 3.0 * math.sqrt(max(lo * (1 - lo), 1e-12) / trials)
        slack_hi = 3.0 * math.sqrt(max(hi * (1 - hi), 1e-12) / trials)
        if lo - slack_lo <= empirical[v] <= hi + slack_hi:
            continue
        noise = 4.5 * math.sqrt(max(exact[v] * (1 - exact[v]), 1e-12) / trials)
        if abs(empirical[v] - exact[v]) <= noise:
            misses.append(
                f"D={v}: empirical {empirical[v]:.6f} missed the fence "
                f"[{lo:.6f}, {hi:.6f}] +- 3 sigma but matches the exact "
                f"value {exact[v]:.6f} within 4.5 sigma"
            )
        else:
            violations.append(
                f"D={v}: empirical {empirical[v]:.6f} outside [{lo:.6f}, {hi:.6f}] "
                f"(slack {slack_lo:.6f}/{slack_hi:.6f}) and not explained by "
                f"sampling noise around exact {exact[v]:.6f}"
            )
    return CompletenessReport(
        spec_stage1=spec_stage1,
        spec_stage2=spec_stage2,
        bounds_kind=kind,
        trials=trials,
        exact_pmf=exact,
        empirical_pmf=empirical,
        intervals=intervals,
        within_bounds=not violations,
        violations=tuple(violations),
        boundary_misses=tuple(misses),
    )


# --- Generated-CVR fraction -------------------------------------------------


@dataclass(frozen=True)
class CvrFractionReport:
    sizes: tuple[int, ...]
    sample_size: int
    trials: int
    mean_distinct_batches: float
    mean_ballot_fraction: float
    mean_batch_fraction: float
    analytic_distinct_batches: float


def simulate_cvr_fraction(
    manifest_spec: SyntheticManifestSpec,
    sample_size: int,
    trials: int,
    seed: int,
) -> CvrFractionReport:
    """Draw `sample_size` ballots uniformly with replacement, mark the
    batches containing them, and report how much of the election's CVR an
    adaptive audit would generate.

    The ballot-weighted fraction (ballots in marked batches over all
    ballots) is the headline number; the batch-weighted fraction and the
    inclusion-exclusion expectation sum(1 - (1 - s_i/S)^n) are reported
    alongside.
    """
    if sample_size < 1:
        raise SimulationError("sample_size must be >= 1")
    if trials < 1:
        raise SimulationError("trials must be >= 1")
    sizes = np.array(manifest_spec.build(seed), dtype=np.int64)
    if len(sizes) == 0:
        raise SimulationError("empty manifest")
    total = float(sizes.sum())
    p = sizes / total
    rng = _np_rng(seed, 4)
    distinct = np.empty(trials)
    ballot_frac = np.empty(trials)
    for t in range(trials):
        picked = np.unique(rng.choice(len(sizes), size=sample_size, p=p))
        distinct[t] = len(picked)
        ballot_frac[t] = sizes[picked].sum() / total
    analytic = float(np.sum(1.0 - np.power(1.0 - p, sample_size)))
    return CvrFractionReport(
        sizes=tuple(int(s) for s in sizes),
        sample_size=sample_size,
        trials=trials,
        mean_distinct_batches=float(distinct.mean()),
        mean_ballot_fraction=float(ballot_frac.mean()),
        mean_batch_fraction=float(distinct.mean() / len(sizes)),
        analytic_distinct_batches=analytic,
    )
