"""Adaptive risk-limiting ballot-comparison audits.

A library for auditing two-candidate elections by on-demand batch CVR
comparison: domain model, Kaplan-Markov sequential test, CVR transforms,
the adaptive auditor (ballot and group variants), adversary simulations
with exact and Monte Carlo risk estimation, CSV ingestion, session
persistence, and a live audit HTTP service.
"""

from .adversaries import (
    DistortionError,
    DistortionSpec,
    HonestAdversary,
    HonestGroupAdversary,
    WhitewashAdversary,
    WithholdAdversary,
    apply_distortion,
    crafted_duplicate_label_election,
    duplicate_label_attack,
    tab_consistent_cvr,
)
from .auditor import (
    AuditConfig,
    AuditError,
    AuditMode,
    AuditOutcome,
    AuditTranscript,
    GroupCvrTable,
    IterationRecord,
    Verdict,
    basic_experiment,
    check_consistent,
    check_consistent_group,
    group_basic_experiment,
    normalize_tabulation,
    run_audit,
    run_group_audit,
    transcript_from_jsonl,
    transcript_to_jsonl,
)
from .exact import (
    ExactLimits,
    ExactTooLarge,
    enumerate_tiny_elections,
    exact_group_risk_small,
    exact_risk_small,
)
from .formats import (
    FormatError,
    parse_cvr,
    parse_manifest,
    parse_tabulation,
    serialize_cvr,
    serialize_manifest,
    serialize_tabulation,
)
from .kaplan_markov import (
    KmConfig,
    KmError,
    TestState,
    km_log_risk,
    km_risk,
    new_test_state,
    sample_size,
    test_step,
)
from .model import (
    Ballot,
    BallotFamily,
    CvrRow,
    CvrTable,
    Election,
    Margins,
    ModelError,
    Tabulation,
    actual_totals,
    batch_discrepancy,
    canonical_cvr,
    election_discrepancy,
    margins,
    row_discrepancy,
    tab_of_cvr,
)
from .simulate import (
    CompletenessReport,
    CvrFractionReport,
    ExperimentReport,
    SimulationError,
    SyntheticManifestSpec,
    discrepancy_distribution,
    estimate_risk,
    flipped_election,
    simulate_cvr_fraction,
    synthetic_election,
    wilson_interval,
)
from .store import SessionRecord, SessionStore
from .transforms import (
    TransformKind,
    transform_force,
    transform_force_no_overvote,
    transform_identity,
)

__version__ = "0.1.0"
