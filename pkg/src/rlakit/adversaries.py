"""Adversary-side players for the auditing game.

The honest adversary answers every request truthfully from a fixed global
CVR; it is the completeness baseline.  Distortions inject controlled
counts of over/understatements, row additions, and row deletions into a
CVR, modeling the incidental errors of real audits.  The remaining
adversaries are attackers used to stress the risk limit: a duplicate-label
attacker, a ballot-withholding wrapper, and an adaptive whitewasher that
serves maximally flattering CVRs once the audit has seen a discrepancy.

Adversaries are stateful and serialized: one instance serves exactly one
audit run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .auditor import AuditMode, GroupCvrTable, normalize_tabulation
from .model import (
    Ballot,
    BallotFamily,
    CvrRow,
    CvrTable,
    GlobalCvr,
    ModelError,
    Tabulation,
    canonical_cvr,
)
from .transforms import transform_force

__all__ = [
    "DistortionError",
    "DistortionReport",
    "DistortionSpec",
    "HonestAdversary",
    "HonestGroupAdversary",
    "WithholdAdversary",
    "WhitewashAdversary",
    "apply_distortion",
    "duplicate_label_attack",
    "crafted_duplicate_label_election",
    "tab_consistent_cvr",
]


class DistortionError(ValueError):
    """Infeasible distortion for the given CVR."""


def tab_consistent_cvr(
    family: BallotFamily, manifest: Sequence[int], normalized_tab: Tabulation
) -> GlobalCvr:
    """The minimal-edit global CVR that matches a (normalized) tabulation:
    the canonical CVR pushed through the forcing transform.  For a
    zero-error election this is exactly the canonical CVR."""
    base = canonical_cvr(family)
    return tuple(
        transform_force(manifest, normalized_tab, cvr) for cvr in base
    )


# --- Honest adversaries ----------------------------------------------------


class HonestAdversary:
    """Answers CVR requests verbatim from `global_cvr` and ballot requests
    with the matching ballot (both the family and the CVR must be uniquely
    labeled for "the matching ballot" to be well defined)."""

    def __init__(self, family: BallotFamily, global_cvr: GlobalCvr):
        if not family.uniquely_labeled():
            raise ModelError("honest adversary requires a uniquely labeled family")
        for cvr in global_cvr:
            if not cvr.uniquely_labeled():
                raise ModelError("honest adversary requires a uniquely labeled CVR")
        if len(global_cvr) != family.batch_count:
            raise ModelError("global CVR and family batch counts differ")
        self.family = family
        self.global_cvr = tuple(global_cvr)
        self._by_batch: list[dict[str, Ballot]] = [
            {b.identifier: b for b in batch} for batch in family.batches
        ]

    def cvr_request(self, batch_index: int) -> CvrTable:
        return self.global_cvr[batch_index - 1]

    def ballot_request(self, identifier: str, batch_index: int) -> Ballot | None:
        return self._by_batch[batch_index - 1].get(identifier)


class HonestGroupAdversary:
    """Truthful group-comparison player.

    Splits each batch into contiguous groups of at most `group_size`
    ballots at the first partition request and reports true subtotals.
    """

    def __init__(self, family: BallotFamily, group_size: int = 50):
        if group_size < 1:
            raise ModelError(f"group_size must be >= 1, got {group_size}")
        self.family = family
        self.group_size = group_size
        self._partitions: dict[int, tuple[tuple[Ballot, ...], ...]] = {}

    def committed_partition(self, batch_index: int) -> tuple[tuple[Ballot, ...], ...]:
        if batch_index not in self._partitions:
            batch = self.family.batches[batch_index - 1]
            groups = [
                tuple(batch[i : i + self.group_size])
                for i in range(0, len(batch), self.group_size)
            ] or [()]
            self._partitions[batch_index] = tuple(groups)
        return self._partitions[batch_index]

    def group_cvr_request(self, batch_index: int) -> GroupCvrTable:
        partition = self.committed_partition(batch_index)
        return GroupCvrTable(
            batch_index=batch_index,
            groups=tuple(
                (
                    len(group),
                    sum(b.votes_w for b in group),
                    sum(b.votes_l for b in group),
                )
                for group in partition
            ),
        )

    def group_request(self, batch_index: int, group_index: int) -> Sequence[Ballot]:
        return self.committed_partition(batch_index)[group_index - 1]


# --- CVR distortion --------------------------------------------------------


@dataclass(frozen=True)
class DistortionSpec:
    """Error-model six-tuple: counts of 1/2-vote overstatements (o1, o2),
    1/2-vote understatements (u1, u2), row additions (a), and row
    deletions (d)."""

    o1: int = 0
    o2: int = 0
    u1: int = 0
    u2: int = 0
    a: int = 0
    d: int = 0

    def __post_init__(self) -> None:
        if min(self.o1, self.o2, self.u1, self.u2, self.a, self.d) < 0:
            raise DistortionError("distortion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.o1 + self.o2 + self.u1 + self.u2 + self.a + self.d

    @property
    def is_zero(self) -> bool:
        return self.total == 0

    def feasible_for(self, global_cvr: Sequence[CvrTable]) -> bool:
        w = sum(c.winner_total for c in global_cvr)
        l = sum(c.loser_total for c in global_cvr)
        s = sum(c.size for c in global_cvr)
        return min(w, l, s - w, s - l) >= self.total


@dataclass(frozen=True)
class DistortionReport:
    """Where each error landed: row positions are (batch_index, row_number)
    against the input CVR, 1-based."""

    positions: dict[str, tuple[tuple[int, int], ...]]
    deleted_rows: tuple[tuple[int, CvrRow], ...]
    added_positions: tuple[int, ...]  # batch index per phantom row


def _distortion_order(
    global_cvr: Sequence[CvrTable], rng: np.random.Generator, placement: str
) -> list[tuple[int, int]]:
    positions = [
        (cvr.batch_index, row_number)
        for cvr in global_cvr
        for row_number in range(1, cvr.size + 1)
    ]
    if placement == "uniform":
        order = list(rng.permutation(len(positions)))
        return [positions[i] for i in order]
    if placement == "concentrated":
        # Concentrate errors in the largest batch, spilling into the rest.
        target = max(global_cvr, key=lambda c: c.size).batch_index
        inside = [p for p in positions if p[0] == target]
        outside = [p for p in positions if p[0] != target]
        return (
            [inside[i] for i in rng.permutation(len(inside))]
            + [outside[i] for i in rng.permutation(len(outside))]
        )
    raise DistortionError(f"unknown placement policy {placement!r}")


def apply_distortion(
    global_cvr: Sequence[CvrTable],
    spec: DistortionSpec,
    rng: np.random.Generator,
    placement: str = "uniform",
) -> tuple[GlobalCvr, DistortionReport]:
    """Distort a uniquely labeled global CVR by exactly `spec`.

    Rows are claimed without replacement along a single placement order, one
    error class at a time (o2, u2, o1, u1, d), so growing one count extends
    the claims without reshuffling earlier classes.  Added rows carry fresh
    identifiers matching no ballot and are appended to size-weighted random
    batches.
    """
    if not spec.feasible_for(global_cvr):
        raise DistortionError(f"{spec} infeasible for this CVR")
    order = _distortion_order(global_cvr, rng, placement)
    rows: dict[int, list[CvrRow | None]] = {
        cvr.batch_index: list(cvr.rows) for cvr in global_cvr
    }
    claimed: set[tuple[int, int]] = set()
    positions: dict[str, list[tuple[int, int]]] = {}

    def claim(kind: str, count: int, eligible: Callable[[CvrRow], bool]) -> list[tuple[int, int]]:
        taken = []
        for pos in order:
            if len(taken) == count:
                break
            if pos in claimed:
                continue
            row = rows[pos[0]][pos[1] - 1]
            if eligible(row):
                claimed.add(pos)
                taken.append(pos)
        if len(taken) < count:
            raise DistortionError(f"not enough rows eligible for {kind}")
        positions[kind] = taken
        return taken

    def edit(pos: tuple[int, int], new_w: int, new_l: int) -> None:
        beta, number = pos
        row = rows[beta][number - 1]
        rows[beta][number - 1] = CvrRow(row.identifier, new_w, new_l)

    for pos in claim("o2", spec.o2, lambda r: (r.votes_w, r.votes_l) == (0, 1)):
        edit(pos, 1, 0)
    for pos in claim("u2", spec.u2, lambda r: (r.votes_w, r.votes_l) == (1, 0)):
        edit(pos, 0, 1)
    for pos in claim("o1", spec.o1, lambda r: r.vote_value <= 0):
        row = rows[pos[0]][pos[1] - 1]
        if row.votes_l == 1:
            edit(pos, row.votes_w, 0)
        else:
            edit(pos, 1, row.votes_l)
    for pos in claim("u1", spec.u1, lambda r: r.vote_value >= 0):
        row = rows[pos[0]][pos[1] - 1]
        if row.votes_w == 1:
            edit(pos, 0, row.votes_l)
        else:
            edit(pos, row.votes_w, 1)

    deleted = []
    for pos in claim("d", spec.d, lambda r: True):
        beta, number = pos
        deleted.append((beta, rows[beta][number - 1]))
        rows[beta][number - 1] = None

    sizes = np.array([cvr.size for cvr in global_cvr], dtype=float)
    batch_ids = [cvr.batch_index for cvr in global_cvr]
    taken_ids = {row.identifier for cvr in global_cvr for row in cvr.rows}
    added = []
    counter = 0
    for _ in range(spec.a):
        beta = batch_ids[int(rng.choice(len(batch_ids), p=sizes / sizes.sum()))]
        votes = [(0, 0), (1, 0), (0, 1)][int(rng.integers(3))]
        while True:
            counter += 1
            ident = f"phantom-{counter}"
            if ident not in taken_ids:
                taken_ids.add(ident)
                break
        rows[beta].append(CvrRow(ident, votes[0], votes[1]))
        added.append(beta)

    distorted = tuple(
        CvrTable(
            batch_index=cvr.batch_index,
            rows=tuple(r for r in rows[cvr.batch_index] if r is not None),
        )
        for cvr in global_cvr
    )
    report = DistortionReport(
        positions={k: tuple(v) for k, v in positions.items()},
        deleted_rows=tuple(deleted),
        added_positions=tuple(added),
    )
    return distorted, report


# --- Attackers -------------------------------------------------------------


class DuplicateLabelAdversary:
    """Labels every ballot with one identifier and serves tabulation-
    consistent CVRs whose rows all carry that identifier.

    Against the production auditor the duplicate identifiers fail the
    uniqueness check, costing a discrepancy of 2 per draw.  Against an
    auditor with that check disabled, every ballot request is answered with
    the strongest held ballot, so no comparison ever scores above zero and
    a flipped election sails through.
    """

    LABEL = "dup"

    def __init__(self, family: BallotFamily, tabulation: Tabulation):
        self.family = family
        manifest = family.manifest()
        self.norm, _ = normalize_tabulation(manifest, tabulation, AuditMode.BALLOT)
        self._relabeled: list[list[Ballot]] = [
            [Ballot(self.LABEL, b.votes_w, b.votes_l, b.batch_index) for b in batch]
            for batch in family.batches
        ]
        self._best: list[Ballot | None] = [
            max(batch, key=lambda b: b.vote_value, default=None)
            for batch in self._relabeled
        ]
        self._crafted: dict[int, CvrTable] = {}

    def cvr_request(self, batch_index: int) -> CvrTable:
        cached = self._crafted.get(batch_index)
        if cached is not None:
            return cached
        s, w, l = self.norm.rows[batch_index - 1]
        overlap = max(0, w + l - s)
        patterns = (
            [(1, 1)] * overlap
            + [(1, 0)] * (w - overlap)
            + [(0, 1)] * (l - overlap)
            + [(0, 0)] * (s - w - l + overlap)
        )
        crafted = CvrTable(
            batch_index=batch_index,
            rows=tuple(CvrRow(self.LABEL, pw, pl) for pw, pl in patterns),
        )
        self._crafted[batch_index] = crafted
        return crafted

    def ballot_request(self, identifier: str, batch_index: int) -> Ballot | None:
        best = self._best[batch_index - 1]
        if best is None or best.identifier != identifier:
            return None
        return best


def duplicate_label_attack(
    family: BallotFamily, tabulation: Tabulation
) -> DuplicateLabelAdversary:
    return DuplicateLabelAdversary(family, tabulation)


def crafted_duplicate_label_election(
    size: int = 200, winner_ballots: int = 20
) -> tuple[BallotFamily, Tabulation]:
    """An invalid one-batch election on which the duplicate-label attack
    defeats a uniqueness-check-free auditor outright: the true loser holds
    all but `winner_ballots` votes while the tabulation claims the mirror
    image."""
    if not 0 < winner_ballots < size:
        raise ModelError("winner_ballots must be strictly between 0 and size")
    ballots = tuple(
        Ballot(f"b{i}", 1, 0, 1) if i < winner_ballots else Ballot(f"b{i}", 0, 1, 1)
        for i in range(size)
    )
    family = BallotFamily(batches=(ballots,))
    tabulation = Tabulation(rows=((size, size - winner_ballots, winner_ballots),))
    return family, tabulation


class WithholdAdversary:
    """Wraps another adversary and answers "no ballot" per policy.

    The default policy withholds every ballot showing a vote for the
    declared loser, the behavior neutralized by scoring missing ballots as
    loser votes.
    """

    POLICIES: dict[str, Callable[[Ballot], bool]] = {
        "loser_votes": lambda b: b.votes_l == 1,
        "never": lambda b: False,
        "always": lambda b: True,
    }

    def __init__(self, base, policy: str | Callable[[Ballot], bool] = "loser_votes"):
        self.base = base
        self.policy = self.POLICIES[policy] if isinstance(policy, str) else policy

    def cvr_request(self, batch_index: int) -> CvrTable:
        return self.base.cvr_request(batch_index)

    def ballot_request(self, identifier: str, batch_index: int) -> Ballot | None:
        ballot = self.base.ballot_request(identifier, batch_index)
        if ballot is not None and self.policy(ballot):
            return None
        return ballot


class WhitewashAdversary:
    """Adaptive attacker that changes its story once it has been caught.

    Serves tabulation-consistent CVRs built from the true ballots with the
    fewest edits (so a valid, error-free election sees exactly the honest
    CVR).  It infers each comparison's discrepancy from its own responses;
    after the first nonzero discrepancy it switches to "flattering" CVRs
    that concentrate the tabulation's lie on as few rows as possible,
    minimizing the chance that later draws hit a discrepant row.
    """

    def __init__(self, family: BallotFamily, tabulation: Tabulation):
        if not family.uniquely_labeled():
            raise ModelError("whitewash adversary requires a uniquely labeled family")
        self.family = family
        manifest = family.manifest()
        self.norm, _ = normalize_tabulation(manifest, tabulation, AuditMode.BALLOT)
        self.manifest = manifest
        self.caught = False
        self._canonical = canonical_cvr(family)
        self._by_batch: list[dict[str, Ballot]] = [
            {b.identifier: b for b in batch} for batch in family.batches
        ]
        self._served: dict[int, CvrTable] = {}
        self._spread: GlobalCvr | None = None
        self._flattering: dict[int, CvrTable] = {}

    # CVR construction styles ------------------------------------------------

    def _spread_cvr(self, batch_index: int) -> CvrTable:
        if self._spread is None:
            self._spread = tab_consistent_cvr(self.family, self.manifest, self.norm)
        return self._spread[batch_index - 1]

    def _flattering_cvr(self, batch_index: int) -> CvrTable:
        cached = self._flattering.get(batch_index)
        if cached is not None:
            return cached
        s, w_tab, l_tab = self.norm.rows[batch_index - 1]
        rows = list(self._canonical[batch_index - 1].rows)
        w_cur = sum(r.votes_w for r in rows)
        l_cur = sum(r.votes_l for r in rows)
        # Flip loser rows to winner rows while that moves both columns the
        # right way; each flip buries two votes of the lie in one row.
        for i, row in enumerate(rows):
            if w_cur >= w_tab or l_cur <= l_tab:
                break
            if (row.votes_w, row.votes_l) == (0, 1):
                rows[i] = CvrRow(row.identifier, 1, 0)
                w_cur += 1
                l_cur -= 1
        interim = CvrTable(batch_index=batch_index, rows=tuple(rows))
        built = transform_force(self.manifest, self.norm, interim)
        self._flattering[batch_index] = built
        return built

    def cvr_request(self, batch_index: int) -> CvrTable:
        cvr = (
            self._flattering_cvr(batch_index)
            if self.caught
            else self._spread_cvr(batch_index)
        )
        self._served[batch_index] = cvr
        return cvr

    def ballot_request(self, identifier: str, batch_index: int) -> Ballot | None:
        ballot = self._by_batch[batch_index - 1].get(identifier)
        served = self._served.get(batch_index)
        if served is not None:
            row = next((r for r in served.rows if r.identifier == identifier), None)
            if row is not None:
                actual = ballot.vote_value if ballot is not None else -1
                if row.vote_value - actual != 0:
                    self.caught = True
        return ballot
