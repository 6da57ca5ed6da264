"""Score aggregation and ranking.

Four aggregators live here: the per-checkpoint mean of pointwise scores,
Borda scores from listwise orderings, empirical win rates from pairwise or
listwise verdicts, and the percentile score

    S = p50 - beta * (p50 - p20) + gamma * (p80 - p50)

which trades a penalty on the weak tail against a smaller reward for the
strong tail. Ties contribute half a win to each side so that
rate(a, b) + rate(b, a) = 1 always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DataError
from .models import CheckpointId, ListwiseVerdict, PairwiseVerdict, ScoreMatrix


@dataclass(frozen=True)
class PercentileSummary:
    """Lower-tail, median, and upper-tail points of a score distribution."""

    p20: float
    p50: float
    p80: float

    def __post_init__(self) -> None:
        if not self.p20 <= self.p50 <= self.p80:
            raise DataError(f"percentiles out of order: {self.p20}, {self.p50}, {self.p80}")


@dataclass(frozen=True)
class ScoringWeights:
    """Tail weights for the percentile score. The weak-tail penalty defaults
    to twice the strong-tail reward."""

    beta: float = 0.5
    gamma: float = 0.25

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and math.isfinite(self.gamma)):
            raise DataError("weights must be finite")
        if self.beta < 0 or self.gamma < 0:
            raise DataError("weights must be non-negative")


@dataclass(frozen=True)
class WinRateEntry:
    wins: float
    ties: float
    total: int
    rate: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise DataError(f"rate {self.rate} outside [0, 1]")


@dataclass
class WinRateTable:
    """Win-rate entries keyed by ordered (a, b) checkpoint pairs."""

    entries: dict[tuple[CheckpointId, CheckpointId], WinRateEntry] = field(default_factory=dict)

    def add(self, a: CheckpointId, b: CheckpointId, entry: WinRateEntry) -> None:
        self.entries[(a, b)] = entry
        self.entries[(b, a)] = WinRateEntry(
            wins=entry.total - entry.wins - entry.ties,
            ties=entry.ties,
            total=entry.total,
            rate=1.0 - entry.rate,
        )

    def rate(self, a: CheckpointId, b: CheckpointId) -> float:
        return self.entries[(a, b)].rate


def pointwise_mean(matrix: ScoreMatrix, checkpoint: CheckpointId) -> float:
    """Arithmetic mean of the checkpoint's non-missing scores."""
    present = matrix.present_scores(checkpoint)
    if present.size == 0:
        raise DataError(f"checkpoint {checkpoint!r} has no scores")
    return float(present.sum() / present.size)


def borda_scores(verdicts: Sequence[ListwiseVerdict]) -> dict[CheckpointId, float]:
    """Per-checkpoint mean rank score over a list of listwise verdicts.

    All verdicts must rank the identical candidate set.
    """
    if not verdicts:
        raise DataError("no listwise verdicts")
    candidates = frozenset(verdicts[0].ordering)
    totals: dict[CheckpointId, float] = {c: 0.0 for c in verdicts[0].ordering}
    for v in verdicts:
        if frozenset(v.ordering) != candidates:
            raise DataError(
                f"verdict for sample {v.sample_id!r} covers a different candidate set"
            )
        for c, score in v.rank_scores.items():
            totals[c] += score
    n = len(verdicts)
    return {c: total / n for c, total in totals.items()}


def _orient(v: PairwiseVerdict, a: CheckpointId, b: CheckpointId) -> float | None:
    """Return 1.0 if the verdict is a win for ``a``, 0.0 for a loss, 0.5 tie.

    None when the verdict is for some other pair.
    """
    if {v.a, v.b} != {a, b}:
        return None
    winner = v.winner_id()
    if winner is None:
        return 0.5
    return 1.0 if winner == a else 0.0


def win_rate_from_pairwise(
    verdicts: Iterable[PairwiseVerdict], a: CheckpointId, b: CheckpointId
) -> WinRateEntry:
    """Empirical win rate of ``a`` over ``b``, orientation-normalized."""
    if a == b:
        raise DataError("win rate requires two distinct checkpoints")
    wins = ties = 0.0
    total = 0
    for v in verdicts:
        outcome = _orient(v, a, b)
        if outcome is None:
            continue
        total += 1
        if outcome == 0.5:
            ties += 1
        else:
            wins += outcome
    if total == 0:
        raise DataError(f"no pairwise verdicts for ({a!r}, {b!r})")
    return WinRateEntry(wins=wins, ties=ties, total=total, rate=(wins + 0.5 * ties) / total)


def win_rate_from_listwise(
    verdicts: Sequence[ListwiseVerdict], a: CheckpointId, b: CheckpointId
) -> WinRateEntry:
    """Win rate derived from listwise orderings: a wins iff it precedes b."""
    if a == b:
        raise DataError("win rate requires two distinct checkpoints")
    if not verdicts:
        raise DataError("no listwise verdicts")
    wins = 0.0
    for v in verdicts:
        if a not in v.ordering or b not in v.ordering:
            raise DataError(
                f"pair ({a!r}, {b!r}) absent from verdict for sample {v.sample_id!r}"
            )
        if v.ordering.index(a) < v.ordering.index(b):
            wins += 1.0
    total = len(verdicts)
    return WinRateEntry(wins=wins, ties=0.0, total=total, rate=wins / total)


def build_win_rate_table(
    verdicts: Sequence[PairwiseVerdict],
    pairs: Iterable[tuple[CheckpointId, CheckpointId]],
) -> WinRateTable:
    table = WinRateTable()
    for a, b in pairs:
        table.add(a, b, win_rate_from_pairwise(verdicts, a, b))
    return table


def percentile_summary(scores: Sequence[float]) -> PercentileSummary:
    """p20/p50/p80 via linear interpolation between order statistics."""
    if len(scores) == 0:
        raise DataError("cannot summarize an empty score list")
    ordered = sorted(scores)
    return PercentileSummary(
        p20=_interpolated_percentile(ordered, 0.20),
        p50=_interpolated_percentile(ordered, 0.50),
        p80=_interpolated_percentile(ordered, 0.80),
    )


def _interpolated_percentile(ordered: Sequence[float], q: float) -> float:
    # Zero-based rank r = q * (n - 1); fractional part interpolates linearly.
    n = len(ordered)
    if n == 1:
        return float(ordered[0])
    rank = q * (n - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, n - 1)
    frac = rank - lo
    return float(ordered[lo] + (ordered[hi] - ordered[lo]) * frac)


def percentile_score(summary: PercentileSummary, weights: ScoringWeights) -> float:
    return (
        summary.p50
        - weights.beta * (summary.p50 - summary.p20)
        + weights.gamma * (summary.p80 - summary.p50)
    )


def percentile_aggregate(scores: Sequence[float], weights: ScoringWeights | None = None) -> float:
    """Convenience: percentile score straight from a raw score list."""
    return percentile_score(percentile_summary(scores), weights or ScoringWeights())


Aggregator = Callable[[Sequence[float]], float]


def mean_aggregate(scores: Sequence[float]) -> float:
    if len(scores) == 0:
        raise DataError("cannot average an empty score list")
    return float(sum(scores) / len(scores))


def rank_from_scores(scores: Mapping[CheckpointId, float]) -> list[CheckpointId]:
    """Descending by score; exact ties broken by ascending checkpoint id."""
    if not scores:
        raise DataError("cannot rank an empty score map")
    for c, s in scores.items():
        if not math.isfinite(s):
            raise DataError(f"non-finite score for {c!r}: {s}")
    return sorted(scores, key=lambda c: (-scores[c], c))
