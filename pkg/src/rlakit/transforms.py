"""CVR transforms applied by the auditor before consistency checking.

Three transforms are shipped: the identity, a forcing rewrite that edits a
submitted CVR until its size and column totals agree with the (normalized)
tabulation, and an overvote-free variant of the forcing rewrite that never
leaves a row voting for both candidates.

The edit order matters: duplicate identifiers are relabeled first, then the
size is fixed, then the winner column is repaired scanning from the last
row backwards, then the loser column likewise.  Scanning from the end
concentrates edits on freshly appended internal rows, which keeps the
error-accounting of the completeness analysis tight.  Relabeled and
appended rows receive identifiers from the reserved "__bot:" namespace,
numbered from 1 per invocation so that replays are deterministic.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Sequence

from .model import CvrRow, CvrTable, ModelError, Tabulation, bot_identifier

__all__ = [
    "TransformKind",
    "apply_transform",
    "transform_force",
    "transform_force_no_overvote",
    "transform_identity",
]


class TransformKind(str, Enum):
    IDENTITY = "identity"
    FORCE = "force"
    FORCE_NO_OVERVOTE = "force_no_overvote"


def transform_identity(
    manifest: Sequence[int], tabulation: Tabulation, cvr: CvrTable
) -> CvrTable:
    return cvr


class _Rows:
    """Mutable [identifier, w, l] working copy with a fresh __bot counter."""

    def __init__(self, cvr: CvrTable):
        self.rows: list[list] = [[r.identifier, r.votes_w, r.votes_l] for r in cvr.rows]
        self._bot = 0
        existing = {r.identifier for r in cvr.rows}
        # Never collide with reserved identifiers already present in the
        # submitted table (they cannot appear in ingested files, but the
        # transform must stay total for any well-typed input).
        self._taken = existing

    def fresh_bot(self) -> str:
        while True:
            self._bot += 1
            ident = bot_identifier(self._bot)
            if ident not in self._taken:
                self._taken.add(ident)
                return ident

    def dedupe(self) -> None:
        seen: set[str] = set()
        for row in self.rows:
            if row[0] in seen:
                row[0] = self.fresh_bot()
            else:
                seen.add(row[0])

    def fix_size(self, target: int) -> None:
        while len(self.rows) < target:
            self.rows.append([self.fresh_bot(), 0, 0])
        while len(self.rows) > target:
            self.rows.pop()

    def w_total(self) -> int:
        return sum(r[1] for r in self.rows)

    def l_total(self) -> int:
        return sum(r[2] for r in self.rows)

    def to_table(self, batch_index: int) -> CvrTable:
        return CvrTable(
            batch_index=batch_index,
            rows=tuple(CvrRow(ident, w, l) for ident, w, l in self.rows),
        )


def _targets(manifest: Sequence[int], tabulation: Tabulation, cvr: CvrTable):
    beta = cvr.batch_index
    if not 1 <= beta <= len(manifest) or tabulation.batch_count != len(manifest):
        raise ModelError(f"CVR batch index {beta} outside manifest of {len(manifest)} batches")
    s_act = manifest[beta - 1]
    _, w_tab, l_tab = tabulation.rows[beta - 1]
    if w_tab > s_act or l_tab > s_act:
        raise ModelError("tabulation not normalized: vote totals exceed batch size")
    return s_act, w_tab, l_tab


def transform_force(
    manifest: Sequence[int], tabulation: Tabulation, cvr: CvrTable
) -> CvrTable:
    """Rewrite cvr so it passes the consistency check, with minimal edits.

    Requires the tabulation to be normalized (w_tab <= s_act, l_tab <= s_act).
    The winner/loser repairs may produce overvote rows; use
    transform_force_no_overvote when those are unacceptable.
    """
    s_act, w_tab, l_tab = _targets(manifest, tabulation, cvr)
    work = _Rows(cvr)
    work.dedupe()
    work.fix_size(s_act)

    current = work.w_total()
    i = len(work.rows) - 1
    while current < w_tab:
        if work.rows[i][1] == 0:
            work.rows[i][1] = 1
            current += 1
        i -= 1
    while current > w_tab:
        if work.rows[i][1] == 1:
            work.rows[i][1] = 0
            current -= 1
        i -= 1

    current = work.l_total()
    i = len(work.rows) - 1
    while current > l_tab:
        if work.rows[i][2] == 1:
            work.rows[i][2] = 0
            current -= 1
        i -= 1
    while current < l_tab:
        if work.rows[i][2] == 0:
            work.rows[i][2] = 1
            current += 1
        i -= 1

    return work.to_table(cvr.batch_index)


def transform_force_no_overvote(
    manifest: Sequence[int], tabulation: Tabulation, cvr: CvrTable
) -> CvrTable:
    """Forcing rewrite that neither tolerates nor creates overvote rows.

    Requires the overvote-free normalization, which guarantees
    w_tab + l_tab <= s_act; under that precondition every repair step below
    can find a row to edit, so the rewrite always completes in O(size)
    column edits.
    """
    if not isinstance(cvr, CvrTable):  # malformed tuple input
        raise ModelError("not a CVR table")
    s_act, w_tab, l_tab = _targets(manifest, tabulation, cvr)
    if w_tab + l_tab > s_act:
        raise ModelError("tabulation not normalized for overvote-free auditing")

    work = _Rows(cvr)
    work.dedupe()
    work.fix_size(s_act)

    # Stable partition: real-identifier rows keep their order, auditor-added
    # rows move to the end so the backward scans hit them first.
    bots = {id(row) for row in work.rows if row[0].startswith("__bot:")}
    work.rows = [r for r in work.rows if id(r) not in bots] + [
        r for r in work.rows if id(r) in bots
    ]

    for row in work.rows:
        if row[1] == 1 and row[2] == 1:
            row[1] = 0

    def last_index(predicate: Callable[[list], bool]) -> int:
        for i in range(len(work.rows) - 1, -1, -1):
            if predicate(work.rows[i]):
                return i
        raise ModelError("no editable row; tabulation precondition violated")

    w_cur, l_cur = work.w_total(), work.l_total()
    while w_cur != w_tab:
        if w_cur < w_tab:
            if l_cur > l_tab:
                i = last_index(lambda r: r[2] == 1)
                work.rows[i][1], work.rows[i][2] = 1, 0
                w_cur, l_cur = w_cur + 1, l_cur - 1
            else:
                i = last_index(lambda r: r[1] == 0 and r[2] == 0)
                work.rows[i][1] = 1
                w_cur += 1
        else:
            if l_cur < l_tab:
                i = last_index(lambda r: r[1] == 1)
                work.rows[i][1], work.rows[i][2] = 0, 1
                w_cur, l_cur = w_cur - 1, l_cur + 1
            else:
                i = last_index(lambda r: r[1] == 1)
                work.rows[i][1] = 0
                w_cur -= 1

    while l_cur < l_tab:
        i = last_index(lambda r: r[1] == 0 and r[2] == 0)
        work.rows[i][2] = 1
        l_cur += 1
    while l_cur > l_tab:
        i = last_index(lambda r: r[1] == 0 and r[2] == 1)
        work.rows[i][2] = 0
        l_cur -= 1

    return work.to_table(cvr.batch_index)


_TRANSFORMS = {
    TransformKind.IDENTITY: transform_identity,
    TransformKind.FORCE: transform_force,
    TransformKind.FORCE_NO_OVERVOTE: transform_force_no_overvote,
}


def apply_transform(
    kind: TransformKind, manifest: Sequence[int], tabulation: Tabulation, cvr: CvrTable
) -> CvrTable:
    return _TRANSFORMS[TransformKind(kind)](manifest, tabulation, cvr)
