"""The adaptive ballot-comparison auditor and its group-comparison variant.

The auditor plays one side of a two-party game.  It holds only trusted
data: the ballot manifest and the claimed tabulation.  Everything else --
batch CVRs, group CVRs, physical ballots -- is requested from an adversary
interface and treated as hostile.  One audit iteration is the basic
experiment: sample a batch proportionally to its size, request that batch's
CVR, transform it, sample a row uniformly, check the CVR against the
tabulation (a failed check scores the iteration as a discrepancy of 2),
then request the ballot named by the sampled row and score the row against
it.  A missing or wrong ballot is scored as a vote for the declared loser.

Iterations feed a Kaplan-Markov test; the audit ends Consistent only if
the test rejects at its stopping time.  Every draw, request, and response
is logged to a replayable transcript.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Protocol, Sequence, runtime_checkable

from .kaplan_markov import KmConfig, TestState, new_test_state, test_step
from .model import Ballot, CvrTable, Tabulation
from .rng import AuditRng, cumulative_weights, pick_weighted
from .transforms import TransformKind, apply_transform

__all__ = [
    "Adversary",
    "AuditConfig",
    "AuditError",
    "AuditMode",
    "AuditOutcome",
    "AuditTranscript",
    "GroupAdversary",
    "GroupCvrTable",
    "IterationRecord",
    "Verdict",
    "basic_experiment",
    "check_consistent",
    "check_consistent_group",
    "cvr_digest",
    "group_basic_experiment",
    "normalize_tabulation",
    "run_audit",
    "run_group_audit",
    "transcript_from_jsonl",
    "transcript_to_jsonl",
]


class AuditError(ValueError):
    """Invalid audit configuration or inputs."""


class AuditMode(str, Enum):
    BALLOT = "ballot"
    BALLOT_NO_OVERVOTE = "ballot_no_overvote"
    GROUP = "group"


class Verdict(str, Enum):
    CONSISTENT = "Consistent"
    INCONCLUSIVE = "Inconclusive"


@runtime_checkable
class Adversary(Protocol):
    """The untrusted side of a ballot-comparison audit."""

    def cvr_request(self, batch_index: int) -> CvrTable: ...

    def ballot_request(self, identifier: str, batch_index: int) -> Ballot | None: ...


@runtime_checkable
class GroupAdversary(Protocol):
    """The untrusted side of a group-comparison audit.

    The partition reported by committed_partition() is frozen by the
    auditor at the first CVR request for the batch; later responses are
    checked against that snapshot, so reneging on the commitment is
    impossible.
    """

    def group_cvr_request(self, batch_index: int) -> "GroupCvrTable": ...

    def committed_partition(self, batch_index: int) -> tuple[tuple[Ballot, ...], ...]: ...

    def group_request(self, batch_index: int, group_index: int) -> Sequence[Ballot]: ...


@dataclass(frozen=True)
class GroupCvrTable:
    """Untrusted per-batch declaration of group subtotals (s, w, l)."""

    batch_index: int
    groups: tuple[tuple[int, int, int], ...]

    def well_formed(self) -> bool:
        return all(
            s >= 0 and 0 <= w <= s and 0 <= l <= s for s, w, l in self.groups
        )

    @property
    def size_total(self) -> int:
        return sum(s for s, _, _ in self.groups)


@dataclass(frozen=True)
class AuditConfig:
    """Everything the auditor is parameterized by, except the margin.

    The Kaplan-Markov delta is not configured here: the auditor computes it
    from the normalized tabulation.  rng_seed is committed before the first
    draw and disclosed, so sampling is publicly verifiable.

    unsafe_skip_unique_check disables the duplicate-identifier CVR check.
    It exists only so the test suite can demonstrate the attack that the
    check prevents; never set it in a real audit.
    """

    alpha: float
    gamma: float = 1.1
    ell_min: int = 1
    ell_max: int = 10_000
    transform: TransformKind = TransformKind.FORCE
    mode: AuditMode = AuditMode.BALLOT
    rounds: int | None = None
    rng_seed: int = 0
    unsafe_skip_unique_check: bool = False

    def __post_init__(self) -> None:
        if self.rounds is not None and self.rounds < 1:
            raise AuditError(f"rounds must be >= 1 when set, got {self.rounds}")

    def km_config(self, mu: Fraction) -> KmConfig:
        return KmConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            ell_min=self.ell_min,
            ell_max=self.ell_max,
            delta=float(mu),
        )


@dataclass(frozen=True)
class IterationRecord:
    """One transcript line.  In group mode, row holds the group index."""

    iter: int
    batch: int
    cvr_digest: str
    row: int
    identifier: str | None
    ballot_w: int | None
    ballot_l: int | None
    missing: bool
    discrepancy: float
    log_risk: float


@dataclass(frozen=True)
class AuditTranscript:
    """Seed-committed, replayable log of an entire audit."""

    seed: int
    mode: AuditMode
    transform: TransformKind
    alpha: float
    gamma: float
    ell_min: int
    ell_max: int
    rounds: int | None
    manifest: tuple[int, ...]
    normalized_tabulation: Tabulation
    mu: Fraction
    records: tuple[IterationRecord, ...]
    verdict: Verdict


@dataclass(frozen=True)
class AuditOutcome:
    verdict: Verdict
    transcript: AuditTranscript


def cvr_digest(cvr: CvrTable) -> str:
    payload = json.dumps(
        [[r.identifier, r.votes_w, r.votes_l] for r in cvr.rows],
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def group_cvr_digest(gcvr: GroupCvrTable) -> str:
    payload = json.dumps([list(g) for g in gcvr.groups], separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def normalize_tabulation(
    manifest: Sequence[int], tabulation: Tabulation, mode: AuditMode = AuditMode.BALLOT
) -> tuple[Tabulation, Fraction]:
    """Clamp a tabulation to the trusted manifest and compute the margin.

    Ballot and group modes force each batch size to the manifest count and
    clamp both vote totals to it.  Overvote-free mode clamps the loser
    first and then caps the winner at (size - loser), guaranteeing
    w + l <= size per batch.  A nonpositive margin short-circuits the audit
    to Inconclusive before any sampling.
    """
    if len(manifest) != tabulation.batch_count:
        raise AuditError(
            f"manifest has {len(manifest)} batches, tabulation {tabulation.batch_count}"
        )
    rows = []
    for s_act, (_, w, l) in zip(manifest, tabulation.rows):
        if mode is AuditMode.BALLOT_NO_OVERVOTE:
            l2 = min(l, s_act)
            w2 = min(w, s_act - l2)
        else:
            w2 = min(w, s_act)
            l2 = min(l, s_act)
        rows.append((s_act, w2, l2))
    total = sum(manifest)
    if total <= 0:
        raise AuditError("empty election")
    mu = Fraction(sum(w - l for _, w, l in rows), total)
    return Tabulation(rows=tuple(rows)), mu


def check_consistent(
    manifest: Sequence[int],
    tabulation: Tabulation,
    cvr: CvrTable,
    *,
    no_overvote: bool = False,
    require_unique: bool = True,
) -> bool:
    """Fig-2-style consistency check; False is the Error signal."""
    beta = cvr.batch_index
    s_act = manifest[beta - 1]
    s_tab, w_tab, l_tab = tabulation.rows[beta - 1]
    if require_unique and not cvr.uniquely_labeled():
        return False
    if cvr.size != s_act or s_act != s_tab:
        return False
    if cvr.winner_total != w_tab or cvr.loser_total != l_tab:
        return False
    if no_overvote and any(r.votes_w == 1 and r.votes_l == 1 for r in cvr.rows):
        return False
    return True


def check_consistent_group(
    manifest: Sequence[int],
    tabulation: Tabulation,
    gcvr: GroupCvrTable,
    committed_group_count: int,
) -> bool:
    beta = gcvr.batch_index
    s_act = manifest[beta - 1]
    s_tab, w_tab, l_tab = tabulation.rows[beta - 1]
    if not gcvr.well_formed():
        return False
    if len(gcvr.groups) != committed_group_count:
        return False
    if not (gcvr.size_total == s_act == s_tab):
        return False
    if sum(w for _, w, _ in gcvr.groups) != w_tab:
        return False
    if sum(l for _, _, l in gcvr.groups) != l_tab:
        return False
    return True


def _pick_row(u: float, size: int) -> int:
    """Uniform 1-based row index from one uniform draw."""
    return min(int(u * size), size - 1) + 1


def _prepare_cvr(
    raw: CvrTable,
    batch: int,
    tabulation: Tabulation,
    manifest: Sequence[int],
    config: AuditConfig,
    cache: dict | None,
) -> tuple[CvrTable, str, bool]:
    """Transform, digest, and check one submitted CVR.

    The result is a pure function of its inputs, so repeated submissions
    of the same table (the common case against non-adaptive adversaries)
    can be served from `cache`.  Keys pin the submitted table, so the
    object-identity part of the key cannot be recycled while cached.
    """
    key = (batch, id(raw))
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit[1:]
    original = raw
    if raw.batch_index != batch:
        raw = CvrTable(batch_index=batch, rows=raw.rows)
    cvr = apply_transform(config.transform, manifest, tabulation, raw)
    ok = check_consistent(
        manifest,
        tabulation,
        cvr,
        no_overvote=config.mode is AuditMode.BALLOT_NO_OVERVOTE,
        require_unique=not config.unsafe_skip_unique_check,
    )
    prepared = (cvr, cvr_digest(cvr), ok)
    if cache is not None:
        cache[key] = (original,) + prepared
    return prepared


def basic_experiment(
    adversary: Adversary,
    tabulation: Tabulation,
    manifest: Sequence[int],
    config: AuditConfig,
    rng: AuditRng,
    *,
    iter_no: int = 1,
    _cache: dict | None = None,
) -> IterationRecord:
    """One ballot-comparison iteration against a normalized tabulation.

    The row is drawn before the consistency check, mirroring the game's
    step order: the draw must be independent of the CVR for the risk
    argument to go through, and consuming it unconditionally keeps the
    transcript's draw positions fixed.
    """
    sizes = [s for s, _, _ in tabulation.rows]
    if _cache is not None:
        cumulative = _cache.get("cumulative")
        if cumulative is None:
            cumulative = _cache["cumulative"] = cumulative_weights(sizes)
    else:
        cumulative = None
    batch = pick_weighted(rng.next_uniform(), sizes, cumulative)
    raw = adversary.cvr_request(batch)
    cvr, digest, ok = _prepare_cvr(raw, batch, tabulation, manifest, config, _cache)
    s_tab = sizes[batch - 1]
    row = _pick_row(rng.next_uniform(), s_tab) if s_tab > 0 else 1
    if not ok:
        return IterationRecord(
            iter=iter_no, batch=batch, cvr_digest=digest, row=row,
            identifier=None, ballot_w=None, ballot_l=None, missing=False,
            discrepancy=2, log_risk=math.nan,
        )
    return _score_row(adversary, cvr, batch, row, digest, iter_no)


def _score_row(
    adversary: Adversary,
    cvr: CvrTable,
    batch: int,
    row: int,
    digest: str,
    iter_no: int,
) -> IterationRecord:
    cvr_row = cvr.rows[row - 1]
    identifier = cvr_row.identifier
    ballot = adversary.ballot_request(identifier, batch)
    delivered = (
        ballot is not None
        and ballot.batch_index == batch
        and ballot.identifier == identifier
    )
    if delivered:
        w_act, l_act = ballot.votes_w, ballot.votes_l
        ballot_w, ballot_l, missing = ballot.votes_w, ballot.votes_l, False
    else:
        # Missing (or wrong) ballots are scored as a vote for the loser;
        # otherwise the adversary could quietly shred unfavorable ballots.
        w_act, l_act = 0, 1
        ballot_w, ballot_l, missing = None, None, True
    discrepancy = (cvr_row.votes_w - cvr_row.votes_l) - (w_act - l_act)
    return IterationRecord(
        iter=iter_no, batch=batch, cvr_digest=digest, row=row,
        identifier=identifier, ballot_w=ballot_w, ballot_l=ballot_l,
        missing=missing, discrepancy=discrepancy, log_risk=math.nan,
    )


def group_basic_experiment(
    adversary: GroupAdversary,
    tabulation: Tabulation,
    manifest: Sequence[int],
    config: AuditConfig,
    rng: AuditRng,
    committed: dict[int, tuple[tuple[Ballot, ...], ...]],
    *,
    iter_no: int = 1,
) -> IterationRecord:
    """One group-comparison iteration.  `committed` caches the partition
    snapshot taken at each batch's first CVR request."""
    sizes = [s for s, _, _ in tabulation.rows]
    batch = pick_weighted(rng.next_uniform(), sizes)
    gcvr = adversary.group_cvr_request(batch)
    if batch not in committed:
        committed[batch] = tuple(
            tuple(group) for group in adversary.committed_partition(batch)
        )
    partition = committed[batch]
    digest = group_cvr_digest(gcvr)

    # Group draw: scaled against the tabulated batch size, with overflow
    # clamped to the last group.  When the declared sizes disagree with the
    # tabulation the check below fails and the draw is unused.
    u = rng.next_uniform()
    s_tab = sizes[batch - 1]
    g = len(gcvr.groups)
    acc = 0
    for index, (s_g, _, _) in enumerate(gcvr.groups, start=1):
        acc += s_g
        if u * s_tab < acc:
            g = index
            break
    ok = check_consistent_group(manifest, tabulation, gcvr, len(partition))
    if not ok or g < 1:
        return IterationRecord(
            iter=iter_no, batch=batch, cvr_digest=digest, row=max(g, 1),
            identifier=None, ballot_w=None, ballot_l=None, missing=False,
            discrepancy=2, log_risk=math.nan,
        )
    s_g, w_g, l_g = gcvr.groups[g - 1]
    returned = adversary.group_request(batch, g)
    kept = _within_committed(returned, partition[g - 1])
    if len(kept) != s_g:
        return IterationRecord(
            iter=iter_no, batch=batch, cvr_digest=digest, row=g,
            identifier=None, ballot_w=None, ballot_l=None, missing=True,
            discrepancy=2, log_risk=math.nan,
        )
    w_act = sum(b.votes_w for b in kept)
    l_act = sum(b.votes_l for b in kept)
    discrepancy = ((w_g - l_g) - (w_act - l_act)) / s_g
    return IterationRecord(
        iter=iter_no, batch=batch, cvr_digest=digest, row=g,
        identifier=None, ballot_w=w_act, ballot_l=l_act, missing=False,
        discrepancy=discrepancy, log_risk=math.nan,
    )


def _within_committed(
    returned: Sequence[Ballot], committed_group: tuple[Ballot, ...]
) -> list[Ballot]:
    """Drop any returned ballots beyond the committed group's multiset."""
    from collections import Counter

    budget = Counter(committed_group)
    kept = []
    for ballot in returned:
        if budget[ballot] > 0:
            budget[ballot] -= 1
            kept.append(ballot)
    return kept


def _finish(
    records: list[IterationRecord],
    state: TestState,
    config: AuditConfig,
    manifest: Sequence[int],
    tabulation: Tabulation,
    mu: Fraction,
) -> AuditOutcome:
    verdict = Verdict.CONSISTENT if (state.stopped and state.rejected) else Verdict.INCONCLUSIVE
    transcript = AuditTranscript(
        seed=config.rng_seed,
        mode=config.mode,
        transform=config.transform,
        alpha=config.alpha,
        gamma=config.gamma,
        ell_min=config.ell_min,
        ell_max=config.ell_max,
        rounds=config.rounds,
        manifest=tuple(manifest),
        normalized_tabulation=tabulation,
        mu=mu,
        records=tuple(records),
        verdict=verdict,
    )
    return AuditOutcome(verdict=verdict, transcript=transcript)


def run_audit(
    adversary: Adversary,
    manifest: Sequence[int],
    tabulation: Tabulation,
    config: AuditConfig,
) -> AuditOutcome:
    """Play the full auditing game against `adversary`.

    Sequential mode runs one basic experiment per test step.  Round mode
    (config.rounds = R) draws R batches per round up front, requests each
    distinct batch's CVR once (ascending batch order), and scores one
    independently drawn row per sampled slot; the test may stop mid-round,
    discarding the round's remaining slots.
    """
    if config.mode is AuditMode.GROUP:
        raise AuditError("use run_group_audit for group mode")
    norm, mu = normalize_tabulation(manifest, tabulation, config.mode)
    if mu <= 0:
        return _finish([], new_test_state(), config, manifest, norm, mu)
    km = config.km_config(mu)
    rng = AuditRng(config.rng_seed)
    state = new_test_state()
    records: list[IterationRecord] = []
    sizes = [s for s, _, _ in norm.rows]

    cache: dict = {}
    if config.rounds is None:
        while not state.stopped:
            record = basic_experiment(
                adversary, norm, manifest, config, rng,
                iter_no=len(records) + 1, _cache=cache,
            )
            state = test_step(state, record.discrepancy, km)
            records.append(replace(record, log_risk=state.log_risk))
        return _finish(records, state, config, manifest, norm, mu)

    while not state.stopped:
        batch_draws = [
            pick_weighted(rng.next_uniform(), sizes) for _ in range(config.rounds)
        ]
        row_draws = [rng.next_uniform() for _ in range(config.rounds)]
        prepared: dict[int, tuple[CvrTable, str, bool]] = {}
        for batch in sorted(set(batch_draws)):
            raw = adversary.cvr_request(batch)
            prepared[batch] = _prepare_cvr(raw, batch, norm, manifest, config, cache)
        for batch, u in zip(batch_draws, row_draws):
            cvr, digest, ok = prepared[batch]
            iter_no = len(records) + 1
            row = _pick_row(u, sizes[batch - 1]) if sizes[batch - 1] > 0 else 1
            if not ok:
                record = IterationRecord(
                    iter=iter_no, batch=batch, cvr_digest=digest, row=row,
                    identifier=None, ballot_w=None, ballot_l=None,
                    missing=False, discrepancy=2, log_risk=math.nan,
                )
            else:
                record = _score_row(adversary, cvr, batch, row, digest, iter_no)
            state = test_step(state, record.discrepancy, km)
            records.append(replace(record, log_risk=state.log_risk))
            if state.stopped:
                break
    return _finish(records, state, config, manifest, norm, mu)


def run_group_audit(
    adversary: GroupAdversary,
    manifest: Sequence[int],
    tabulation: Tabulation,
    config: AuditConfig,
) -> AuditOutcome:
    """Group-comparison counterpart of run_audit (sequential only)."""
    norm, mu = normalize_tabulation(manifest, tabulation, AuditMode.GROUP)
    if mu <= 0:
        return _finish([], new_test_state(), config, manifest, norm, mu)
    km = config.km_config(mu)
    rng = AuditRng(config.rng_seed)
    state = new_test_state()
    records: list[IterationRecord] = []
    committed: dict[int, tuple[tuple[Ballot, ...], ...]] = {}
    while not state.stopped:
        record = group_basic_experiment(
            adversary, norm, manifest, config, rng, committed,
            iter_no=len(records) + 1,
        )
        state = test_step(state, record.discrepancy, km)
        records.append(replace(record, log_risk=state.log_risk))
    return _finish(records, state, config, manifest, norm, mu)


# --- Transcript serialization (JSON lines, one record per iteration) ------

_RECORD_FIELDS = (
    "iter", "batch", "cvr_digest", "row", "identifier",
    "ballot_w", "ballot_l", "missing", "discrepancy", "log_risk",
)


def record_to_json(record: IterationRecord) -> str:
    payload = {name: getattr(record, name) for name in _RECORD_FIELDS}
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def transcript_to_jsonl(transcript: AuditTranscript) -> str:
    """Header line (audit parameters) followed by one line per iteration."""
    header = {
        "kind": "rlakit-transcript",
        "seed": transcript.seed,
        "mode": transcript.mode.value,
        "transform": transcript.transform.value,
        "alpha": transcript.alpha,
        "gamma": transcript.gamma,
        "ell_min": transcript.ell_min,
        "ell_max": transcript.ell_max,
        "rounds": transcript.rounds,
        "manifest": list(transcript.manifest),
        "normalized_tabulation": [list(r) for r in transcript.normalized_tabulation.rows],
        "mu": [transcript.mu.numerator, transcript.mu.denominator],
        "verdict": transcript.verdict.value,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(record_to_json(r) for r in transcript.records)
    return "\n".join(lines) + "\n"


def transcript_from_jsonl(text: str) -> AuditTranscript:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise AuditError("empty transcript")
    header = json.loads(lines[0])
    if header.get("kind") != "rlakit-transcript":
        raise AuditError("missing transcript header line")
    records = []
    for line in lines[1:]:
        data = json.loads(line)
        records.append(IterationRecord(**{name: data[name] for name in _RECORD_FIELDS}))
    return AuditTranscript(
        seed=header["seed"],
        mode=AuditMode(header["mode"]),
        transform=TransformKind(header["transform"]),
        alpha=header["alpha"],
        gamma=header["gamma"],
        ell_min=header["ell_min"],
        ell_max=header["ell_max"],
        rounds=header["rounds"],
        manifest=tuple(header["manifest"]),
        normalized_tabulation=Tabulation(
            rows=tuple(tuple(r) for r in header["normalized_tabulation"])
        ),
        mu=Fraction(header["mu"][0], header["mu"][1]),
        records=tuple(records),
        verdict=Verdict(header["verdict"]),
    )
