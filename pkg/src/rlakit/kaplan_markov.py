"""Kaplan-Markov sequential test and the matching sample-size calculator.

The running statistic is the product of per-draw factors
(1 - delta/(2*gamma)) / (1 - D_i/(2*gamma)) over the observed discrepancies
D_i.  The audit stops once the statistic drops to the risk limit alpha (but
never before ell_min draws) or once ell_max draws have been spent; it
rejects ("audit consistent") only if the statistic is at or below alpha at
the stop.

The statistic is accumulated in log space: a hundred-thousand-draw product
of factors near 0.98 underflows a double long before the audit would stop,
while the log sum stays comfortably in range.  The stop threshold is
compared in log space as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "KmConfig",
    "KmError",
    "TestState",
    "km_factor_log",
    "km_risk",
    "km_log_risk",
    "new_test_state",
    "sample_size",
    "test_step",
]


class KmError(ValueError):
    """Invalid Kaplan-Markov configuration or use."""


def _check_gamma(gamma: float) -> None:
    if not gamma > 1.0:
        raise KmError(f"gamma must exceed 1, got {gamma}")


def _check_delta(delta: float, gamma: float) -> None:
    if not 0.0 < delta <= 2.0:
        raise KmError(f"delta must be in (0, 2], got {delta}")
    if not delta < 2.0 * gamma:
        raise KmError(f"delta must be below 2*gamma, got delta={delta} gamma={gamma}")


@dataclass(frozen=True)
class KmConfig:
    """Parameters of one Kaplan-Markov audit test.

    delta is the (tabulated diluted) margin handed over by the auditor; it
    doubles as the null-hypothesis mean of the discrepancy stream.
    """

    alpha: float
    gamma: float
    ell_min: int
    ell_max: int
    delta: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise KmError(f"alpha must be in (0, 1), got {self.alpha}")
        _check_gamma(self.gamma)
        if self.ell_min < 1 or self.ell_max < 1:
            raise KmError("ell_min and ell_max must be positive")
        if self.ell_min > self.ell_max:
            raise KmError(f"ell_min={self.ell_min} exceeds ell_max={self.ell_max}")
        _check_delta(self.delta, self.gamma)

    @property
    def log_alpha(self) -> float:
        return math.log(self.alpha)


def km_factor_log(d: float, delta: float, gamma: float) -> float:
    """log of one Kaplan-Markov factor for discrepancy value d."""
    denom = 1.0 - d / (2.0 * gamma)
    if denom <= 0.0:
        raise KmError(f"discrepancy {d} is not below 2*gamma={2 * gamma}")
    return math.log1p(-delta / (2.0 * gamma)) - math.log(denom)


def km_log_risk(discrepancies: Iterable[float], delta: float, gamma: float) -> float:
    """log of the Kaplan-Markov statistic; empty input gives log(1) = 0."""
    _check_gamma(gamma)
    _check_delta(delta, gamma)
    total = 0.0
    for d in discrepancies:
        if d > 2.0:
            raise KmError(f"discrepancy {d} exceeds 2")
        total += km_factor_log(d, delta, gamma)
    return total


def km_risk(discrepancies: Iterable[float], delta: float, gamma: float) -> float:
    """The Kaplan-Markov statistic itself.  Empty input gives 1.0.

    Prefer km_log_risk when feeding thresholds or long streams; this
    exponentiation is for display and for short sequences.
    """
    return math.exp(km_log_risk(discrepancies, delta, gamma))


@dataclass(frozen=True)
class TestState:
    """Immutable running state of one Kaplan-Markov test.

    States share their history structurally (each step links one cell onto
    the previous state's chain), so stepping is O(1) no matter how long
    the audit runs; `observed` materializes the draw sequence on demand.
    """

    log_risk: float = 0.0
    draws: int = 0
    stopped: bool = False
    rejected: bool = False
    _chain: tuple = None  # (latest value, parent chain) or None

    @property
    def observed(self) -> tuple[float, ...]:
        values = []
        link = self._chain
        while link is not None:
            values.append(link[0])
            link = link[1]
        return tuple(reversed(values))

    @property
    def risk_value(self) -> float:
        # Saturating display value; thresholds always compare in log space.
        if self.log_risk > 709.0:
            return math.inf
        return max(math.exp(self.log_risk), 5e-324)


def new_test_state() -> TestState:
    return TestState()


def test_step(state: TestState, d: float, config: KmConfig) -> TestState:
    """Feed one discrepancy into the test, returning the successor state."""
    if state.stopped:
        raise KmError("cannot step a stopped test")
    if d > 2.0:
        raise KmError(f"discrepancy {d} exceeds 2")
    log_risk = state.log_risk + km_factor_log(d, config.delta, config.gamma)
    draws = state.draws + 1
    below = log_risk <= config.log_alpha
    stopped = draws >= config.ell_max or (below and draws >= config.ell_min)
    return TestState(
        log_risk=log_risk,
        draws=draws,
        stopped=stopped,
        rejected=stopped and below,
        _chain=(d, state._chain),
    )


def sample_size(alpha: float, delta: float, gamma: float, lam: float = 0.0) -> int:
    """Draws sufficient to reach risk alpha at margin delta, tolerating a
    lam*delta fraction of 1-vote overstatements.

    >>> sample_size(0.05, 0.02, 1.1, 0.5)
    989
    >>> sample_size(0.05, 0.05, 1.1, 0.0)
    132
    """
    if not 0.0 < alpha < 1.0:
        raise KmError(f"alpha must be in (0, 1), got {alpha}")
    _check_gamma(gamma)
    _check_delta(delta, gamma)
    if lam < 0.0:
        raise KmError(f"lambda must be nonnegative, got {lam}")
    denom = 1.0 / (2.0 * gamma) + lam * math.log(1.0 - 1.0 / (2.0 * gamma))
    if denom <= 0.0:
        raise KmError("lambda too large for gamma")
    return math.ceil(-math.log(alpha) / (delta * denom))
