"""Domain model for two-candidate ballot-comparison audits.

Elections are pairs of a physical ballot family (batches of labeled
ballots, the ground truth) and an untrusted tabulation (per-batch size and
vote-total claims).  Cast-vote record tables (CVRs) are untrusted per-batch
declarations of ballot identifiers and votes.  Everything here is an
immutable value; margins are kept as exact rationals so that ties and
boundary comparisons never hinge on floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

__all__ = [
    "RESERVED_ID_PREFIX",
    "ActualTotals",
    "Ballot",
    "BallotFamily",
    "CvrRow",
    "CvrTable",
    "DISCREPANCY_VALUES",
    "Election",
    "Margins",
    "ModelError",
    "Tabulation",
    "actual_totals",
    "batch_discrepancy",
    "bot_identifier",
    "canonical_cvr",
    "election_discrepancy",
    "is_reserved_identifier",
    "margins",
    "row_discrepancy",
    "tab_of_cvr",
]

# Identifier namespace reserved for auditor-internal row labels.  These are
# guaranteed never to match a physical ballot, so they must be rejected in
# any ingested file.
RESERVED_ID_PREFIX = "__bot:"

# Row-level discrepancies of a ballot audit always land in this set.
DISCREPANCY_VALUES = (-2, -1, 0, 1, 2)


class ModelError(ValueError):
    """Invalid election-model construction or query."""


def bot_identifier(counter: int) -> str:
    """Auditor-internal identifier (never matches a physical ballot)."""
    return f"{RESERVED_ID_PREFIX}{counter}"


def is_reserved_identifier(identifier: str) -> bool:
    return identifier.startswith(RESERVED_ID_PREFIX)


@dataclass(frozen=True)
class Ballot:
    """One physical ballot.

    The identifier is an opaque label compared by exact equality; it is NOT
    assumed to be unique.  The empty string encodes an unlabeled ballot.
    Votes are 0/1 flags for the declared winner and loser; (1, 1) is an
    overvote, representable but never produced by our election generators.
    """

    identifier: str
    votes_w: int
    votes_l: int
    batch_index: int  # 1-based

    def __post_init__(self) -> None:
        if self.votes_w not in (0, 1) or self.votes_l not in (0, 1):
            raise ModelError(f"ballot votes must be 0/1, got ({self.votes_w}, {self.votes_l})")
        if self.batch_index < 1:
            raise ModelError(f"batch_index must be >= 1, got {self.batch_index}")

    @property
    def vote_value(self) -> int:
        """votes_w - votes_l, the quantity all discrepancies are built from."""
        return self.votes_w - self.votes_l


@dataclass(frozen=True)
class BallotFamily:
    """Ordered batches of ballots (the trusted physical record)."""

    batches: tuple[tuple[Ballot, ...], ...]

    def __post_init__(self) -> None:
        if len(self.batches) < 1:
            raise ModelError("a ballot family needs at least one batch")
        for index, batch in enumerate(self.batches, start=1):
            for ballot in batch:
                if ballot.batch_index != index:
                    raise ModelError(
                        f"ballot labeled for batch {ballot.batch_index} stored in batch {index}"
                    )

    @property
    def batch_count(self) -> int:
        return len(self.batches)

    @property
    def size(self) -> int:
        return sum(len(batch) for batch in self.batches)

    def manifest(self) -> list[int]:
        """Trusted per-batch ballot counts."""
        return [len(batch) for batch in self.batches]

    def ballots(self) -> Iterator[Ballot]:
        for batch in self.batches:
            yield from batch

    def uniquely_labeled(self) -> bool:
        seen: set[str] = set()
        for ballot in self.ballots():
            if ballot.identifier in seen:
                return False
            seen.add(ballot.identifier)
        return True


def family_from_votes(batches: Sequence[Sequence[tuple[str, int, int]]]) -> BallotFamily:
    """Build a family from per-batch (identifier, votes_w, votes_l) triples."""
    built = tuple(
        tuple(Ballot(ident, w, l, index) for ident, w, l in batch)
        for index, batch in enumerate(batches, start=1)
    )
    return BallotFamily(built)


@dataclass(frozen=True)
class Tabulation:
    """Untrusted per-batch claims: (size, winner votes, loser votes)."""

    rows: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if len(self.rows) < 1:
            raise ModelError("a tabulation needs at least one batch row")
        for index, (s, w, l) in enumerate(self.rows, start=1):
            if s < 0 or w < 0 or l < 0:
                raise ModelError(f"tabulation row {index} has a negative entry: {(s, w, l)}")

    @property
    def batch_count(self) -> int:
        return len(self.rows)

    @property
    def size_total(self) -> int:
        return sum(s for s, _, _ in self.rows)

    @property
    def winner_total(self) -> int:
        return sum(w for _, w, _ in self.rows)

    @property
    def loser_total(self) -> int:
        return sum(l for _, _, l in self.rows)


@dataclass(frozen=True)
class Election:
    """A ballot family paired with a tabulation claiming to describe it."""

    family: BallotFamily
    tabulation: Tabulation

    def __post_init__(self) -> None:
        if self.family.batch_count != self.tabulation.batch_count:
            raise ModelError(
                f"family has {self.family.batch_count} batches, "
                f"tabulation has {self.tabulation.batch_count}"
            )


class CvrRow(NamedTuple):
    """One row of a cast-vote record table."""

    identifier: str
    votes_w: int
    votes_l: int

    @property
    def vote_value(self) -> int:
        return self.votes_w - self.votes_l


@dataclass(frozen=True)
class CvrTable:
    """Untrusted declaration of the ballots in one batch."""

    batch_index: int
    rows: tuple[CvrRow, ...]

    def __post_init__(self) -> None:
        for position, row in enumerate(self.rows, start=1):
            if row.votes_w not in (0, 1) or row.votes_l not in (0, 1):
                raise ModelError(
                    f"CVR row {position} has non-binary votes ({row.votes_w}, {row.votes_l})"
                )

    @property
    def size(self) -> int:
        return len(self.rows)

    @property
    def winner_total(self) -> int:
        return sum(row.votes_w for row in self.rows)

    @property
    def loser_total(self) -> int:
        return sum(row.votes_l for row in self.rows)

    def uniquely_labeled(self) -> bool:
        return len({row.identifier for row in self.rows}) == len(self.rows)


# A global CVR is one table per batch, in batch order.
GlobalCvr = tuple[CvrTable, ...]


@dataclass(frozen=True)
class ActualTotals:
    """Per-batch (size, winner, loser) counts read off the physical ballots."""

    per_batch: tuple[tuple[int, int, int], ...]
    winner_total: int
    loser_total: int

    @property
    def size_total(self) -> int:
        return sum(s for s, _, _ in self.per_batch)


@dataclass(frozen=True)
class Margins:
    """Diluted margins and overall discrepancy of an election.

    ``valid`` is True when the declared winner actually won on the ballots.
    ``tie`` marks tabulations whose totals are equal; such elections are not
    auditable and are rejected at ingestion.
    """

    mu_tab: Fraction
    mu_act: Fraction
    overall_discrepancy: int
    valid: bool
    tie: bool = field(default=False)


def actual_totals(family: BallotFamily) -> ActualTotals:
    """Count ballots and votes per batch; empty batches count as (0, 0, 0)."""
    per_batch = []
    for batch in family.batches:
        w = sum(b.votes_w for b in batch)
        l = sum(b.votes_l for b in batch)
        per_batch.append((len(batch), w, l))
    return ActualTotals(
        per_batch=tuple(per_batch),
        winner_total=sum(w for _, w, _ in per_batch),
        loser_total=sum(l for _, _, l in per_batch),
    )


def margins(election: Election) -> Margins:
    """Tabulated and actual diluted margins, plus the overall discrepancy.

    For invalid elections, overall_discrepancy / |B| == mu_tab + mu_act
    holds exactly (checked by the property tests).
    """
    total = election.family.size
    if total == 0:
        raise ModelError("empty election")
    tab = election.tabulation
    act = actual_totals(election.family)
    mu_tab = Fraction(tab.winner_total - tab.loser_total, total)
    mu_act = Fraction(abs(act.winner_total - act.loser_total), total)
    return Margins(
        mu_tab=mu_tab,
        mu_act=mu_act,
        overall_discrepancy=election_discrepancy(election),
        valid=act.winner_total > act.loser_total,
        tie=tab.winner_total == tab.loser_total,
    )


def row_discrepancy(row: CvrRow, batch: Sequence[Ballot]) -> int:
    """Discrepancy of one CVR row against the ballots of its batch.

    The row is scored against the best-matching ballot carrying its
    identifier; when no ballot matches, the default of +1 charges the row
    with a concealed vote for the loser.  The result is always in
    DISCREPANCY_VALUES.
    """
    candidates = [-(b.vote_value) for b in batch if b.identifier == row.identifier]
    return row.vote_value + min([1] + candidates)


def batch_discrepancy(election: Election, batch_index: int) -> int:
    """Tabulation-vs-ballots discrepancy of one batch (1-based index)."""
    if not 1 <= batch_index <= election.family.batch_count:
        raise ModelError(f"batch index {batch_index} out of range")
    _, w_tab, l_tab = election.tabulation.rows[batch_index - 1]
    ballots = election.family.batches[batch_index - 1]
    return (w_tab - l_tab) - sum(b.vote_value for b in ballots)


def election_discrepancy(election: Election) -> int:
    return sum(
        batch_discrepancy(election, beta)
        for beta in range(1, election.family.batch_count + 1)
    )


def canonical_cvr(family: BallotFamily) -> GlobalCvr:
    """The CVR that correctly reflects a uniquely labeled family."""
    if not family.uniquely_labeled():
        raise ModelError("not uniquely labeled")
    return tuple(
        CvrTable(
            batch_index=index,
            rows=tuple(CvrRow(b.identifier, b.votes_w, b.votes_l) for b in batch),
        )
        for index, batch in enumerate(family.batches, start=1)
    )


def tab_of_cvr(global_cvr: Sequence[CvrTable]) -> Tabulation:
    """Tabulation induced by a global CVR: per-batch size and column sums."""
    return Tabulation(
        rows=tuple((cvr.size, cvr.winner_total, cvr.loser_total) for cvr in global_cvr)
    )
