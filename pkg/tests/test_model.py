"""Domain model: totals, margins, discrepancies, canonical CVRs."""

import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from rlakit.model import (
    Ballot,
    BallotFamily,
    CvrRow,
    CvrTable,
    Election,
    ModelError,
    Tabulation,
    actual_totals,
    batch_discrepancy,
    canonical_cvr,
    election_discrepancy,
    is_reserved_identifier,
    margins,
    row_discrepancy,
    tab_of_cvr,
)


def fam(*batches):
    return BallotFamily(
        batches=tuple(
            tuple(Ballot(i, w, l, n) for i, w, l in batch)
            for n, batch in enumerate(batches, start=1)
        )
    )


FIVE = fam(
    [("a", 1, 0), ("b", 0, 1), ("c", 1, 0)],
    [("d", 0, 1), ("e", 1, 0)],
)


class TestActualTotals:
    def test_empty_batch(self):
        family = fam([("a", 1, 0)], [])
        assert actual_totals(family).per_batch[1] == (0, 0, 0)

    def test_five_ballot_family(self):
        totals = actual_totals(FIVE)
        assert totals.per_batch == ((3, 2, 1), (2, 1, 1))
        assert (totals.winner_total, totals.loser_total) == (3, 2)

    def test_homogeneous_batch(self):
        family = fam([(f"x{i}", 1, 0) for i in range(100)])
        assert actual_totals(family).per_batch == ((100, 100, 0),)

    def test_partition_invariance(self):
        # Same ballot multiset split differently: grand totals agree.
        ballots = [(f"x{i}", i % 2, (i + 1) % 2) for i in range(12)]
        one = actual_totals(fam(ballots))
        two = actual_totals(fam(ballots[:5], ballots[5:]))
        assert (one.winner_total, one.loser_total) == (two.winner_total, two.loser_total)
        assert one.size_total == two.size_total


class TestMargins:
    def test_zero_error_election(self):
        election = Election(FIVE, Tabulation(rows=((3, 2, 1), (2, 1, 1))))
        report = margins(election)
        assert report.mu_tab == Fraction(1, 5)
        assert report.mu_act == Fraction(1, 5)
        assert report.overall_discrepancy == 0
        assert report.valid and not report.tie

    def test_fully_flipped_election(self):
        family = fam([("a", 0, 1), ("b", 0, 1), ("c", 0, 1)])
        election = Election(family, Tabulation(rows=((3, 3, 0),)))
        report = margins(election)
        assert report.mu_tab == Fraction(1)
        assert report.mu_act == Fraction(1)
        assert report.overall_discrepancy == 6
        assert not report.valid
        # Eq-style identity: D / |B| = mu_tab + mu_act for invalid elections
        assert Fraction(report.overall_discrepancy, 3) == report.mu_tab + report.mu_act

    def test_tie_flagged(self):
        election = Election(FIVE, Tabulation(rows=((3, 1, 1), (2, 1, 1))))
        assert margins(election).tie

    def test_empty_family_rejected(self):
        with pytest.raises(ModelError, match="at least one batch"):
            BallotFamily(batches=())

    @given(
        votes=st.lists(st.sampled_from([(1, 0), (0, 1), (0, 0)]), min_size=1, max_size=30),
        w_tab=st.integers(0, 30),
        l_tab=st.integers(0, 30),
    )
    @settings(max_examples=200)
    def test_invalid_identity_holds_exactly(self, votes, w_tab, l_tab):
        family = fam([(f"x{i}", w, l) for i, (w, l) in enumerate(votes)])
        election = Election(family, Tabulation(rows=((len(votes), w_tab, l_tab),)))
        report = margins(election)
        if not report.valid:
            assert (
                Fraction(report.overall_discrepancy, family.size)
                == report.mu_tab + report.mu_act
            )


class TestRowDiscrepancy:
    def test_matching_ballot(self):
        batch = FIVE.batches[0]
        assert row_discrepancy(CvrRow("a", 1, 0), batch) == 0

    def test_unmatched_identifier_defaults_high(self):
        # No ballot "x": the row is charged a concealed loser vote.
        assert row_discrepancy(CvrRow("x", 1, 0), FIVE.batches[0]) == 2

    def test_duplicate_labels_take_minimum(self):
        batch = tuple(
            [Ballot("a", 1, 0, 1), Ballot("a", 0, 1, 1)]
        )
        assert row_discrepancy(CvrRow("a", 1, 0), batch) == 0

    def test_exhaustive_range(self):
        # Every row/ballot vote combination stays within [-2, 2].
        votes = [(0, 0), (1, 0), (0, 1), (1, 1)]
        for rv, bv in itertools.product(votes, votes):
            batch = (Ballot("a", bv[0], bv[1], 1),)
            for ident in ("a", "zz"):
                d = row_discrepancy(CvrRow(ident, rv[0], rv[1]), batch)
                assert -2 <= d <= 2


class TestBatchDiscrepancy:
    def test_zero_error(self):
        election = Election(FIVE, Tabulation(rows=((3, 2, 1), (2, 1, 1))))
        assert batch_discrepancy(election, 1) == 0
        assert batch_discrepancy(election, 2) == 0
        assert election_discrepancy(election) == 0

    def test_fully_flipped_batch(self):
        family = fam([("a", 0, 1), ("b", 0, 1), ("c", 0, 1)])
        election = Election(family, Tabulation(rows=((3, 3, 0),)))
        assert batch_discrepancy(election, 1) == 3 - (-3) == 6

    def test_understated_winner(self):
        family = fam([("a", 1, 0), ("b", 1, 0)])
        election = Election(family, Tabulation(rows=((2, 1, 0),)))
        assert batch_discrepancy(election, 1) == -1

    def test_out_of_range(self):
        election = Election(FIVE, Tabulation(rows=((3, 2, 1), (2, 1, 1))))
        with pytest.raises(ModelError, match="out of range"):
            batch_discrepancy(election, 3)


class TestCanonicalCvr:
    def test_reflects_ballots(self):
        tables = canonical_cvr(FIVE)
        assert [t.size for t in tables] == [3, 2]
        assert tables[0].rows[0] == CvrRow("a", 1, 0)
        assert all(t.uniquely_labeled() for t in tables)

    def test_single_ballot(self):
        family = fam([("only", 0, 1)])
        assert canonical_cvr(family)[0].rows == (CvrRow("only", 0, 1),)

    def test_duplicate_labels_rejected(self):
        family = fam([("a", 1, 0), ("a", 0, 1)])
        with pytest.raises(ModelError, match="uniquely labeled"):
            canonical_cvr(family)

    def test_canonical_tabulation_gives_zero_discrepancy(self):
        tables = canonical_cvr(FIVE)
        election = Election(FIVE, tab_of_cvr(tables))
        assert election_discrepancy(election) == 0

    @given(
        st.lists(
            st.lists(st.sampled_from([(1, 0), (0, 1), (0, 0)]), min_size=0, max_size=6),
            min_size=1,
            max_size=3,
        )
    )
    @settings(max_examples=100)
    def test_canonical_zero_discrepancy_property(self, shape):
        counter = itertools.count()
        family = BallotFamily(
            batches=tuple(
                tuple(Ballot(f"id{next(counter)}", w, l, n) for w, l in batch)
                for n, batch in enumerate(shape, start=1)
            )
        )
        election = Election(family, tab_of_cvr(canonical_cvr(family)))
        assert election_discrepancy(election) == 0


class TestTabOfCvr:
    def test_consistency_with_canonical(self):
        assert tab_of_cvr(canonical_cvr(FIVE)).rows == ((3, 2, 1), (2, 1, 1))

    def test_empty_table(self):
        assert tab_of_cvr([CvrTable(batch_index=1, rows=())]).rows == ((0, 0, 0),)

    def test_overvote_row_counts_in_both_columns(self):
        table = CvrTable(batch_index=1, rows=(CvrRow("a", 1, 0), CvrRow("b", 1, 1)))
        assert tab_of_cvr([table]).rows == ((2, 2, 1),)


def test_reserved_namespace():
    assert is_reserved_identifier("__bot:1")
    assert not is_reserved_identifier("bot:1")
    assert not is_reserved_identifier("")


def test_ballot_vote_validation():
    with pytest.raises(ModelError):
        Ballot("a", 2, 0, 1)
    with pytest.raises(ModelError):
        Ballot("a", 0, 0, 0)
