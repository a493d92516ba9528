"""Exact audit-game values on tiny elections.

For elections small enough to enumerate, the supremum of Pr[Consistent]
over all adversary strategies is computable by backward recursion over the
audit tree.  The per-iteration adversary choice is reduced to a finite
menu: a submitted CVR only matters through the multiset of per-row option
sets (the discrepancy values reachable by answering the row's ballot
request with each matching ballot or with "no ballot"), so CVRs are
enumerated as such signatures rather than as raw tables.  The signature
space is a superset of what a bounded identifier alphabet can realize,
which can only raise the computed supremum; the risk-limit assertion
checked against it is therefore conservative.

Test decisions are exact: the running Kaplan-Markov statistic is kept as a
Fraction, and gamma/alpha floats are interpreted by their decimal literals
(1.1 means 11/10).  Probability aggregation runs in float or Fraction
arithmetic per the `arithmetic` argument; float mode's accumulated error
over a depth-8 tree is around 1e-13, so callers re-run near-threshold
values in exact mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .auditor import AuditConfig, AuditMode, normalize_tabulation
from .model import Ballot, BallotFamily, Election, Tabulation
from .transforms import TransformKind

__all__ = [
    "ExactLimits",
    "ExactTooLarge",
    "ballot_batch_descriptor",
    "enumerate_ballot_signatures",
    "enumerate_tiny_batch_forms",
    "enumerate_tiny_elections",
    "exact_risk_small",
    "exact_group_risk_small",
    "family_from_form",
    "signature_min_expectation",
]

SIGMA = (-2, -1, 0, 1, 2)
ALPHABET = ("a", "b", "c")


class ExactTooLarge(ValueError):
    """Instance exceeds the exact oracle's enumeration limits."""


@dataclass(frozen=True)
class ExactLimits:
    max_ballots: int = 6
    max_batches: int = 2
    max_ell: int = 8
    max_groups: int = 3
    alphabet_size: int = 3

    def check(self, election: Election, config: AuditConfig) -> None:
        if election.family.size > self.max_ballots:
            raise ExactTooLarge(f"more than {self.max_ballots} ballots")
        if election.family.batch_count > self.max_batches:
            raise ExactTooLarge(f"more than {self.max_batches} batches")
        if config.ell_max > self.max_ell:
            raise ExactTooLarge(f"ell_max above {self.max_ell}")


def _decimal_fraction(x: float) -> Fraction:
    return Fraction(repr(x))


# --- Ballot-mode signature enumeration --------------------------------------


def ballot_batch_descriptor(batch: Sequence[Ballot]) -> tuple[tuple[frozenset[int], ...], int]:
    """Match-set of each identifier group plus the batch size.

    A CVR row carrying identifier iota can be answered with any ballot
    whose identifier equals iota; only the set of those ballots' vote
    values matters for the row's reachable discrepancies.
    """
    groups: dict[str, set[int]] = {}
    for ballot in batch:
        groups.setdefault(ballot.identifier, set()).add(ballot.vote_value)
    return tuple(frozenset(v) for v in groups.values()), len(batch)


def _row_options(v: int, match: frozenset[int] | None) -> tuple[int, ...]:
    opts = {v + 1}
    if match:
        opts.update(v - m for m in match)
    return tuple(sorted(opts))


def enumerate_ballot_signatures(
    match_sets: Sequence[frozenset[int]],
    s_tab: int,
    w_tab: int,
    l_tab: int,
    *,
    allow_overvotes: bool,
    max_unmatched: int | None,
) -> list[tuple[tuple[tuple[int, ...], int], ...]]:
    """All reachable post-transform CVR shapes, as multisets of
    (row option set, count).

    A consistent table has s_tab rows whose winner/loser columns sum to
    (w_tab, l_tab); every row is either tied to one identifier group (at
    most once per group) or matches nothing.  max_unmatched caps the
    matchless rows (identity transform: leftover alphabet symbols; forcing
    transforms: unlimited, None).
    """
    signatures: set[tuple[tuple[tuple[int, ...], int], ...]] = set()
    n_groups = len(match_sets)
    lo11 = max(0, w_tab + l_tab - s_tab)
    hi11 = min(w_tab, l_tab) if allow_overvotes else 0
    if not allow_overvotes and w_tab + l_tab > s_tab:
        return []
    for n11 in range(lo11, hi11 + 1):
        # Overvote rows and blank rows both carry vote value 0; only the
        # three net-value counts matter for row options.
        counts = {1: w_tab - n11, -1: l_tab - n11}
        counts[0] = s_tab - counts[1] - counts[-1]
        if min(counts.values()) < 0:
            continue
        # Each identifier group lands on one vote value or goes unused.
        for assignment in itertools.product((None, 1, 0, -1), repeat=n_groups):
            used = {1: 0, 0: 0, -1: 0}
            ok = True
            for slot in assignment:
                if slot is not None:
                    used[slot] += 1
                    if used[slot] > counts[slot]:
                        ok = False
                        break
            if not ok:
                continue
            unmatched = sum(counts[v] - used[v] for v in (1, 0, -1))
            if max_unmatched is not None and unmatched > max_unmatched:
                continue
            rows: dict[tuple[int, ...], int] = {}
            for group, slot in zip(match_sets, assignment):
                if slot is not None:
                    key = _row_options(slot, group)
                    rows[key] = rows.get(key, 0) + 1
            for v in (1, 0, -1):
                extra = counts[v] - used[v]
                if extra:
                    key = _row_options(v, None)
                    rows[key] = rows.get(key, 0) + extra
            signatures.add(tuple(sorted(rows.items())))
    return sorted(signatures)


def signature_min_expectation(
    signature: Sequence[tuple[tuple[int, ...], int]]
) -> Fraction:
    """Sum over rows of the adversary's lowest reachable discrepancy."""
    return Fraction(sum(count * min(opts) for opts, count in signature))


# --- Ballot-mode exact value -------------------------------------------------


def _mode_pairing(config: AuditConfig) -> tuple[bool, bool]:
    """(allow_overvotes, include_error_choice) for the supported
    transform/mode pairings."""
    t, m = config.transform, config.mode
    if t is TransformKind.IDENTITY and m is AuditMode.BALLOT:
        return True, True
    if t is TransformKind.FORCE and m is AuditMode.BALLOT:
        return True, False
    if t is TransformKind.FORCE_NO_OVERVOTE and m is AuditMode.BALLOT_NO_OVERVOTE:
        return False, False
    if t is TransformKind.IDENTITY and m is AuditMode.BALLOT_NO_OVERVOTE:
        return False, True
    raise ExactTooLarge(f"unsupported transform/mode pairing {t}/{m}")


def exact_risk_small(
    election: Election,
    config: AuditConfig,
    limits: ExactLimits = ExactLimits(),
    arithmetic: str = "exact",
) -> Fraction | float:
    """sup over adversary strategies of Pr[audit returns Consistent].

    Maximization over pure per-state choices equals the supremum over all
    (possibly randomized, history-dependent) strategies: the test state is
    Markov and the value of a mixture never exceeds the best pure choice.
    """
    limits.check(election, config)
    allow_over, include_error = _mode_pairing(config)
    manifest = election.family.manifest()
    norm, mu = normalize_tabulation(manifest, election.tabulation, config.mode)
    if mu <= 0:
        return Fraction(0) if arithmetic == "exact" else 0.0

    alpha = _decimal_fraction(config.alpha)
    two_gamma = 2 * _decimal_fraction(config.gamma)
    factor = {d: (1 - mu / two_gamma) / (1 - Fraction(d) / two_gamma) for d in SIGMA}

    total = sum(manifest)
    exact = arithmetic == "exact"
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0

    batches = []
    for beta, batch in enumerate(election.family.batches, start=1):
        match_sets, size = ballot_batch_descriptor(batch)
        s_tab, w_tab, l_tab = norm.rows[beta - 1]
        if size == 0:
            continue  # unreachable: zero sampling weight
        max_unmatched = (
            max(0, limits.alphabet_size - len(match_sets)) if include_error else None
        )
        sigs = enumerate_ballot_signatures(
            match_sets, s_tab, w_tab, l_tab,
            allow_overvotes=allow_over, max_unmatched=max_unmatched,
        )
        weight = Fraction(size, total) if exact else size / total
        inv = Fraction(1, size) if exact else 1.0 / size
        batches.append((weight, inv, sigs))

    ell_min, ell_max = config.ell_min, config.ell_max
    memo: dict[tuple[int, Fraction], object] = {}
    # Exact hopelessness prune: every per-draw factor is at least
    # factor[-2], so a state whose risk cannot reach alpha even on an
    # all-minimum-discrepancy path has value exactly zero.
    best_factor = factor[-2]
    floors = [alpha / best_factor ** n for n in range(ell_max + 1)]

    def value(ell: int, risk: Fraction):
        if risk > floors[ell_max - ell]:
            return zero
        key = (ell, risk)
        cached = memo.get(key)
        if cached is not None:
            return cached
        child = {}
        for d in SIGMA:
            risk2 = risk * factor[d]
            ell2 = ell + 1
            if ell2 >= ell_max or (risk2 <= alpha and ell2 >= ell_min):
                child[d] = one if risk2 <= alpha else zero
            else:
                child[d] = value(ell2, risk2)
        result = zero
        for weight, inv, sigs in batches:
            best = child[2] if include_error else None
            for sig in sigs:
                val = sum(count * max(child[d] for d in opts) for opts, count in sig) * inv
                if best is None or val > best:
                    best = val
            if best is None:  # no consistent CVR exists and no error choice
                best = child[2]
            result += weight * best
        memo[key] = result
        return result

    return value(0, Fraction(1))


# --- Group-mode exact value ---------------------------------------------------


def _vote_counts(batch: Sequence[Ballot]) -> tuple[int, int, int]:
    plus = sum(1 for b in batch if b.vote_value == 1)
    minus = sum(1 for b in batch if b.vote_value == -1)
    return plus, len(batch) - plus - minus, minus


def _count_partitions(counts: tuple[int, int, int], max_groups: int):
    """Unordered partitions of a (plus, zero, minus) ballot multiset into
    at most max_groups nonempty groups."""
    p, z, m = counts

    def splits(total_counts, groups_left):
        p0, z0, m0 = total_counts
        if p0 == z0 == m0 == 0:
            yield ()
            return
        if groups_left == 0:
            return
        for gp in range(p0 + 1):
            for gz in range(z0 + 1):
                for gm in range(m0 + 1):
                    if gp + gz + gm == 0:
                        continue
                    head = (gp, gz, gm)
                    for rest in splits((p0 - gp, z0 - gz, m0 - gm), groups_left - 1):
                        if rest and rest[0] < head:
                            continue  # enforce sorted order to dedupe
                        yield (head,) + rest

    return sorted(set(splits((p, z, m), max_groups)))


def _group_response_options(
    committed: tuple[int, int, int], s_g: int, y_g: int
) -> tuple[Fraction, ...]:
    """Reachable discrepancies for one declared group: the adversary hands
    back any size-s_g sub-multiset of the committed group, or fails the
    size check for a flat 2."""
    p, z, m = committed
    opts = {Fraction(2)}
    if s_g <= p + z + m and s_g > 0:
        for i in range(max(0, s_g - z - m), min(p, s_g) + 1):
            for k in range(max(0, s_g - i - z), min(m, s_g - i) + 1):
                opts.add(Fraction(y_g - (i - k), s_g))
    return tuple(sorted(opts))


def _group_cvr_descriptors(
    partition: tuple[tuple[int, int, int], ...],
    s_tab: int,
    w_tab: int,
    l_tab: int,
) -> list[tuple[tuple[int, tuple[Fraction, ...]], ...]]:
    """All consistent declared group CVRs against a committed partition,
    reduced to ((declared size, response option set), ...) per group."""
    nu = len(partition)
    target_y = w_tab - l_tab
    descriptors = set()
    for sizes in itertools.product(range(s_tab + 1), repeat=nu):
        if sum(sizes) != s_tab:
            continue
        ranges = [range(-s, s + 1) for s in sizes]
        for ys in itertools.product(*ranges):
            if sum(ys) != target_y:
                continue
            lo = sum(max(0, -y) for y in ys)
            hi = sum(min(s - y, s) for s, y in zip(sizes, ys))
            if not lo <= l_tab <= hi:
                continue
            desc = tuple(
                (s, _group_response_options(committed, s, y))
                for committed, s, y in zip(partition, sizes, ys)
            )
            descriptors.add(desc)
    return sorted(descriptors)


def exact_group_risk_small(
    election: Election,
    config: AuditConfig,
    limits: ExactLimits = ExactLimits(max_ell=5),
    arithmetic: str = "exact",
    collapse_responses: bool = True,
) -> Fraction | float:
    """Group-comparison counterpart of exact_risk_small.

    The adversary picks each batch's partition (at most max_groups groups)
    at its first CVR request; partitions are part of the recursion state
    from then on.  Group CVRs range over every consistent declaration and
    responses over every committed sub-multiset of the requested group,
    plus the deliberate size mismatch.

    collapse_responses evaluates only each response menu's minimum
    discrepancy.  That is exact: the continuation value is non-increasing
    in the running statistic (induction over remaining draws; the per-draw
    menus never depend on it), so the lowest reachable discrepancy is
    always an optimal response.  Pass False to brute-force every option
    (slow; the equivalence is covered by tests).
    """
    limits.check(election, config)
    manifest = election.family.manifest()
    norm, mu = normalize_tabulation(manifest, election.tabulation, AuditMode.GROUP)
    if mu <= 0:
        return Fraction(0) if arithmetic == "exact" else 0.0

    alpha = _decimal_fraction(config.alpha)
    two_gamma = 2 * _decimal_fraction(config.gamma)
    total = sum(manifest)
    exact = arithmetic == "exact"
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0

    factor_cache: dict[Fraction, Fraction] = {}

    def factor(d: Fraction) -> Fraction:
        f = factor_cache.get(d)
        if f is None:
            f = (1 - mu / two_gamma) / (1 - d / two_gamma)
            factor_cache[d] = f
        return f

    batches = []
    for beta, batch in enumerate(election.family.batches, start=1):
        counts = _vote_counts(batch)
        s_tab, w_tab, l_tab = norm.rows[beta - 1]
        if s_tab == 0:
            continue
        partitions = _count_partitions(counts, limits.max_groups)
        per_partition = []
        for partition in partitions:
            descriptors = _group_cvr_descriptors(partition, s_tab, w_tab, l_tab)
            if collapse_responses:
                descriptors = sorted(
                    {
                        tuple((s_g, (min(opts),)) for s_g, opts in desc)
                        for desc in descriptors
                    }
                )
            per_partition.append(descriptors)
        weight = Fraction(len(batch), total) if exact else len(batch) / total
        inv_s = Fraction(1, s_tab) if exact else 1.0 / s_tab
        batches.append((weight, inv_s, partitions, per_partition))

    ell_min, ell_max = config.ell_min, config.ell_max
    memo: dict[tuple, object] = {}
    # Exact hopelessness prune, as in the ballot oracle: factors are
    # bounded below by the factor of discrepancy -2.
    best_factor = factor(Fraction(-2))
    floors = [alpha / best_factor ** n for n in range(ell_max + 1)]

    def child_value(d: Fraction, ell: int, risk: Fraction, commits: tuple):
        risk2 = risk * factor(d)
        ell2 = ell + 1
        if ell2 >= ell_max or (risk2 <= alpha and ell2 >= ell_min):
            return one if risk2 <= alpha else zero
        return value(ell2, risk2, commits)

    def descriptor_value(desc, children, inv_s):
        acc = zero
        for s_g, opts in desc:
            if s_g == 0:
                continue
            acc += s_g * max(children[d] for d in opts)
        return acc * inv_s

    def value(ell: int, risk: Fraction, commits: tuple):
        if risk > floors[ell_max - ell]:
            return zero
        key = (ell, risk, commits)
        cached = memo.get(key)
        if cached is not None:
            return cached
        result = zero
        for index, (weight, inv_s, partitions, per_partition) in enumerate(batches):
            if commits[index] is not None:
                options = [commits[index]]
            else:
                options = range(len(partitions))
            best = None
            for p_idx in options:
                commits2 = commits[:index] + (p_idx,) + commits[index + 1 :]
                needed = {Fraction(2)}
                for desc in per_partition[p_idx]:
                    for _, opts in desc:
                        needed.update(opts)
                children = {
                    d: child_value(d, ell, risk, commits2) for d in needed
                }
                candidate = children[Fraction(2)]  # deliberately failing CVR
                for desc in per_partition[p_idx]:
                    val = descriptor_value(desc, children, inv_s)
                    if val > candidate:
                        candidate = val
                if best is None or candidate > best:
                    best = candidate
            result += weight * best
        memo[key] = result
        return result

    return value(0, Fraction(1), tuple(None for _ in batches))


# --- Tiny-election enumeration -----------------------------------------------


def enumerate_tiny_batch_forms(size: int, max_id_groups: int = 3):
    """Canonical batch shapes: multisets of identifier groups, each group a
    (plus, zero, minus) vote-count triple.  Identifier names are irrelevant
    up to relabeling, so each shape is emitted once."""
    def parts(total, largest, groups_left):
        if total == 0:
            yield ()
            return
        if groups_left == 0:
            return
        for head in range(min(total, largest), 0, -1):
            for rest in parts(total - head, head, groups_left - 1):
                yield (head,) + rest

    def triples(count):
        for p in range(count + 1):
            for z in range(count - p + 1):
                yield (p, z, count - p - z)

    forms = set()
    for sizes in parts(size, size, max_id_groups):
        pools = [sorted(triples(c)) for c in sizes]
        for combo in itertools.product(*pools):
            forms.add(tuple(sorted(combo)))
    return sorted(forms)


def family_from_form(
    forms: Sequence[Sequence[tuple[int, int, int]]]
) -> BallotFamily:
    """Materialize canonical batch shapes with alphabet identifiers."""
    batches = []
    for index, form in enumerate(forms, start=1):
        ballots = []
        for letter, (p, z, m) in zip(ALPHABET, form):
            # Batch-suffixed labels keep the within-batch match structure
            # while letting all-singleton families be globally unique.
            ident = f"{letter}{index}"
            votes = [(1, 0)] * p + [(0, 0)] * z + [(0, 1)] * m
            ballots.extend(Ballot(ident, w, l, index) for w, l in votes)
        batches.append(tuple(ballots))
    return BallotFamily(batches=tuple(batches))


def enumerate_tiny_elections(
    batch_sizes: Sequence[Sequence[int]],
    *,
    invalid_only: bool = True,
    require_positive_margin: bool = True,
    max_forms_per_shape: int | None = None,
):
    """Yield (election, label) pairs over canonical families and normalized
    tabulations for the given batch-size layouts.

    max_forms_per_shape caps the family shapes per size layout
    (deterministically, evenly spaced) to keep acceptance runtimes in
    budget while still covering every layout.
    """
    for layout in batch_sizes:
        per_batch_forms = [enumerate_tiny_batch_forms(s) for s in layout]
        combos = list(itertools.product(*per_batch_forms))
        if max_forms_per_shape is not None and len(combos) > max_forms_per_shape:
            step = len(combos) / max_forms_per_shape
            combos = [combos[int(i * step)] for i in range(max_forms_per_shape)]
        for combo in combos:
            family = family_from_form(combo)
            act = [
                sum(b.vote_value for b in batch) for batch in family.batches
            ]
            total_act = sum(act)
            if invalid_only and total_act > 0:
                continue
            tab_ranges = [
                [(s, w, l) for w in range(s + 1) for l in range(s + 1)]
                for s in layout
            ]
            for rows in itertools.product(*tab_ranges):
                w_total = sum(w for _, w, _ in rows)
                l_total = sum(l for _, _, l in rows)
                if require_positive_margin and w_total <= l_total:
                    continue
                election = Election(
                    family=family, tabulation=Tabulation(rows=tuple(rows))
                )
                yield election, f"layout={layout} form={combo} tab={rows}"
