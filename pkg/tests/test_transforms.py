"""CVR transforms: identity, forcing rewrite, and overvote-free forcing."""

import numpy as np
import pytest

from rlakit.auditor import AuditMode, check_consistent, normalize_tabulation
from rlakit.model import CvrRow, CvrTable, Tabulation
from rlakit.transforms import (
    transform_force,
    transform_force_no_overvote,
    transform_identity,
)


def table(batch, *rows):
    return CvrTable(batch_index=batch, rows=tuple(CvrRow(*r) for r in rows))


class TestIdentity:
    def test_returns_input_unchanged(self):
        cvr = table(1, ("a", 1, 0), ("b", 0, 1))
        assert transform_identity([2], Tabulation(rows=((2, 1, 1),)), cvr) is cvr

    def test_empty_table(self):
        cvr = table(1)
        assert transform_identity([0], Tabulation(rows=((0, 0, 0),)), cvr) is cvr

    def test_keeps_malformed_duplicates(self):
        cvr = table(1, ("a", 1, 0), ("a", 0, 1))
        out = transform_identity([2], Tabulation(rows=((2, 1, 1),)), cvr)
        assert not out.uniquely_labeled()


class TestForce:
    def test_duplicate_identifier_relabeled(self):
        cvr = table(1, ("a", 1, 0), ("a", 0, 1))
        out = transform_force([2], Tabulation(rows=((2, 1, 1),)), cvr)
        assert out.rows == (CvrRow("a", 1, 0), CvrRow("__bot:1", 0, 1))

    def test_appended_row_gains_winner_vote(self):
        cvr = table(1, ("a", 1, 0), ("b", 0, 1))
        norm = Tabulation(rows=((3, 2, 1),))
        out = transform_force([3], norm, cvr)
        assert out.rows == (
            CvrRow("a", 1, 0),
            CvrRow("b", 0, 1),
            CvrRow("__bot:1", 1, 0),
        )
        assert check_consistent([3], norm, out)

    def test_oversized_table_trimmed_then_repaired(self):
        cvr = table(1, ("a", 1, 0), ("b", 0, 1), ("c", 0, 0), ("d", 1, 0))
        norm = Tabulation(rows=((3, 2, 1),))
        out = transform_force([3], norm, cvr)
        assert out.size == 3
        assert out.winner_total == 2 and out.loser_total == 1
        # the last row was removed; the survivors were repaired in place
        assert [r.identifier for r in out.rows] == ["a", "b", "c"]

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            s_act = int(rng.integers(1, 7))
            cvr = _random_cvr(rng, s_act + int(rng.integers(-2, 3)))
            norm, _ = normalize_tabulation(
                [s_act],
                Tabulation(rows=((s_act, int(rng.integers(0, 8)), int(rng.integers(0, 8))),)),
                AuditMode.BALLOT,
            )
            once = transform_force([s_act], norm, cvr)
            twice = transform_force([s_act], norm, once)
            assert once == twice

    def test_no_edits_when_consistent(self):
        cvr = table(1, ("a", 1, 0), ("b", 0, 1), ("c", 0, 0))
        norm = Tabulation(rows=((3, 1, 1),))
        assert transform_force([3], norm, cvr).rows == cvr.rows


class TestForceNoOvervote:
    def test_overvote_cleared_before_repairs(self):
        cvr = table(1, ("a", 1, 1), ("b", 0, 0))
        norm = Tabulation(rows=((2, 1, 1),))
        out = transform_force_no_overvote([2], norm, cvr)
        assert all(not (r.votes_w == 1 and r.votes_l == 1) for r in out.rows)
        assert out.winner_total == 1 and out.loser_total == 1

    def test_fixpoint_on_consistent_table(self):
        cvr = table(1, ("a", 1, 0), ("b", 0, 1), ("c", 0, 0))
        norm = Tabulation(rows=((3, 1, 1),))
        assert transform_force_no_overvote([3], norm, cvr).rows == cvr.rows

    def test_blank_rows_gain_votes(self):
        cvr = table(1, ("a", 0, 0), ("b", 0, 0), ("c", 0, 0))
        norm = Tabulation(rows=((3, 2, 1),))
        out = transform_force_no_overvote([3], norm, cvr)
        assert out.winner_total == 2 and out.loser_total == 1
        assert all(not (r.votes_w == 1 and r.votes_l == 1) for r in out.rows)

    def test_duplicate_ids_then_vote_fill(self):
        # Same-labeled blanks: dedupe, then two winner votes and one loser.
        cvr = table(1, ("a", 0, 0), ("a", 0, 0), ("a", 0, 0))
        norm = Tabulation(rows=((3, 2, 1),))
        out = transform_force_no_overvote([3], norm, cvr)
        assert out.uniquely_labeled()
        assert out.winner_total == 2 and out.loser_total == 1

    def test_internal_rows_moved_to_end(self):
        cvr = table(1, ("a", 1, 0), ("a", 0, 1), ("b", 0, 0))
        norm = Tabulation(rows=((3, 1, 1),))
        out = transform_force_no_overvote([3], norm, cvr)
        identifiers = [r.identifier for r in out.rows]
        assert identifiers[:2] == ["a", "b"]
        assert identifiers[2].startswith("__bot:")


def _random_cvr(rng, size, batch=1):
    size = max(0, size)
    rows = []
    for _ in range(size):
        ident = f"id{int(rng.integers(0, max(1, size)))}"  # collisions likely
        rows.append(CvrRow(ident, int(rng.integers(0, 2)), int(rng.integers(0, 2))))
    return CvrTable(batch_index=batch, rows=tuple(rows))


class TestFuzzTotalCorrectness:
    """Randomized total-correctness sweep (the acceptance suite runs the
    full 10^5-case version; this is the fast development slice)."""

    TRIALS = 3000

    def test_force_output_always_consistent(self):
        rng = np.random.default_rng(17)
        for _ in range(self.TRIALS):
            s_act = int(rng.integers(1, 9))
            raw_tab = Tabulation(
                rows=((int(rng.integers(0, 12)), int(rng.integers(0, 12)), int(rng.integers(0, 12))),)
            )
            norm, _ = normalize_tabulation([s_act], raw_tab, AuditMode.BALLOT)
            cvr = _random_cvr(rng, s_act + int(rng.integers(-3, 4)))
            out = transform_force([s_act], norm, cvr)
            assert check_consistent([s_act], norm, out)

    def test_force_no_overvote_output_passes_augmented_check(self):
        rng = np.random.default_rng(18)
        for _ in range(self.TRIALS):
            s_act = int(rng.integers(1, 9))
            raw_tab = Tabulation(
                rows=((int(rng.integers(0, 12)), int(rng.integers(0, 12)), int(rng.integers(0, 12))),)
            )
            norm, _ = normalize_tabulation([s_act], raw_tab, AuditMode.BALLOT_NO_OVERVOTE)
            cvr = _random_cvr(rng, s_act + int(rng.integers(-3, 4)))
            out = transform_force_no_overvote([s_act], norm, cvr)
            assert check_consistent([s_act], norm, out, no_overvote=True)
            assert all(not (r.votes_w == 1 and r.votes_l == 1) for r in out.rows)
