"""Seeded, replayable randomness for audits and simulations.

Sampling is driven by a Philox counter-mode generator: the n-th uniform of
a stream is a pure function of (seed, n), so a transcript that records its
seed can be replayed bit-exactly, and trial streams derived from
(seed, trial) are independent without coordination.

Draw discipline: every audit iteration consumes exactly two uniforms, in
order -- one for the batch selection, one for the row (or group) selection.
Round mode consumes all of a round's batch uniforms first, then its row
uniforms, so the draw positions do not depend on intra-round outcomes.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Sequence

import numpy as np

__all__ = ["AuditRng", "derive_stream", "pick_weighted"]

_BLOCK = 1024


class AuditRng:
    """Sequential uniform stream over [0, 1) backed by Philox."""

    def __init__(self, seed: int, stream: int = 0):
        self._seed = int(seed)
        self._stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(key=np.random.SeedSequence((self._seed, self._stream)).generate_state(2, np.uint64))
        )
        self._buffer: np.ndarray = np.empty(0)
        self._pos = 0
        self.draws = 0  # uniforms handed out so far

    def next_uniform(self) -> float:
        if self._pos >= len(self._buffer):
            self._buffer = self._gen.random(_BLOCK)
            self._pos = 0
        value = float(self._buffer[self._pos])
        self._pos += 1
        self.draws += 1
        return value

    def skip(self, n: int) -> None:
        """Advance past n uniforms (used to restore a persisted session)."""
        for _ in range(n):
            self.next_uniform()


def derive_stream(seed: int, trial: int) -> AuditRng:
    """Independent stream for one simulation trial."""
    return AuditRng(seed, stream=trial + 1)


def cumulative_weights(weights: Sequence[int]) -> list[int]:
    out = []
    acc = 0
    for w in weights:
        acc += w
        out.append(acc)
    return out


def pick_weighted(
    u: float, weights: Sequence[int], cumulative: Sequence[int] | None = None
) -> int:
    """Map a uniform to a 1-based index drawn proportionally to weights.

    Zero-weight entries are never selected.  If the weights sum to zero the
    first index is returned (callers only hit this on inputs that fail the
    consistency check anyway).  Pass a precomputed cumulative sum to avoid
    rebuilding it in tight loops.
    """
    if cumulative is None:
        cumulative = cumulative_weights(weights)
    total = cumulative[-1] if cumulative else 0
    if total <= 0:
        return 1
    # u in [0, 1) scaled to [0, total); bisect finds the owning interval.
    return min(bisect_right(cumulative, u * total), len(weights) - 1) + 1
