"""Preference confidence and ranking stability.

Two confidence estimators are provided: a Gaussian approximation on the
difference of mean scores, and a paired nonparametric bootstrap. Stability
comes from repeated subsampling trials over a fixed score matrix: flip
rate, inter-run agreement (mean Kendall tau), top-1 consistency, and the
across-trial standard deviation of each checkpoint's aggregate score.

All resampling is driven by numpy SeedSequence spawning, so every draw is
reproducible and independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .models import CheckpointId, ListwiseVerdict, ScoreMatrix
from .ranking import Aggregator, mean_aggregate, rank_from_scores

_NORMAL = NormalDist()


@dataclass(frozen=True)
class MomentSummary:
    """Mean, standard deviation, and count of one checkpoint's scores."""

    mean: float
    std_dev: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError("n must be at least 1")
        if not math.isfinite(self.std_dev) or self.std_dev < 0:
            raise DataError(f"invalid std_dev {self.std_dev}")

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> MomentSummary:
        n = len(scores)
        if n < 1:
            raise DataError("cannot summarize an empty score list")
        mean = sum(scores) / n
        if n == 1:
            return cls(mean=mean, std_dev=0.0, n=1)
        var = sum((s - mean) ** 2 for s in scores) / (n - 1)
        return cls(mean=mean, std_dev=math.sqrt(var), n=n)


@dataclass(frozen=True)
class ResampleConfig:
    """Knobs for both resampling flavors: bootstrap draws sample indices with
    replacement; subsampling trials draw subsets without replacement."""

    n_resamples: int = 2000
    subsample_size: int = 600
    seed: int = 0
    replacement: bool = True

    def __post_init__(self) -> None:
        if self.n_resamples < 1:
            raise DataError("n_resamples must be positive")
        if self.subsample_size < 1:
            raise DataError("subsample_size must be positive")


@dataclass(frozen=True)
class TrialRankings:
    """Rankings and aggregate scores from repeated evaluation runs."""

    runs: tuple[tuple[int, tuple[CheckpointId, ...], dict[CheckpointId, float]], ...]

    def __post_init__(self) -> None:
        if not self.runs:
            raise DataError("TrialRankings needs at least one run")
        reference = frozenset(self.runs[0][1])
        for _, ranking, _ in self.runs:
            if frozenset(ranking) != reference:
                raise DataError("all runs must rank the identical checkpoint set")

    @property
    def checkpoints(self) -> tuple[CheckpointId, ...]:
        return tuple(sorted(self.runs[0][1]))

    @property
    def n_runs(self) -> int:
        return len(self.runs)


def gaussian_preference(a: MomentSummary, b: MomentSummary) -> float:
    """P(A beats B on mean score) under a Gaussian model of the mean difference.

    The difference of means has standard error sqrt(sa^2/na + sb^2/nb); with
    single-observation summaries (n=1) this reduces to the plain pooled form
    Phi((mu_a - mu_b) / sqrt(sa^2 + sb^2)).
    """
    variance = a.std_dev**2 / a.n + b.std_dev**2 / b.n
    diff = a.mean - b.mean
    if variance == 0.0:
        if diff == 0.0:
            raise DataError("degenerate comparison: equal means and zero variance")
        return 1.0 if diff > 0 else 0.0
    return _NORMAL.cdf(diff / math.sqrt(variance))


def bootstrap_preference(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    config: ResampleConfig,
    aggregator: Aggregator | None = None,
) -> float:
    """Paired bootstrap estimate of P(aggregate(A) > aggregate(B)).

    Each draw resamples sample indices with replacement and applies the same
    indices to both score lists, preserving per-sample correlation. Draws
    with a zero difference count half.
    """
    p, _, _ = bootstrap_diagnostics(scores_a, scores_b, config, aggregator)
    return p


def bootstrap_diagnostics(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    config: ResampleConfig,
    aggregator: Aggregator | None = None,
) -> tuple[float, float, float]:
    """Bootstrap preference plus the mean and std of the resampled differences."""
    n = len(scores_a)
    if n != len(scores_b):
        raise DataError(f"paired score lists differ in length: {n} vs {len(scores_b)}")
    if n < 2:
        raise DataError("need at least 2 paired scores")
    if not config.replacement:
        raise DataError("bootstrap_preference requires replacement=True")
    arr_a = np.asarray(scores_a, dtype=np.float64)
    arr_b = np.asarray(scores_b, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    r = config.n_resamples
    indices = rng.integers(0, n, size=(r, n))
    if aggregator is None:
        diffs = (arr_a - arr_b)[indices].mean(axis=1)
    else:
        diffs = np.empty(r)
        for i in range(r):
            row = indices[i]
            diffs[i] = aggregator(arr_a[row]) - aggregator(arr_b[row])
    wins = float(np.count_nonzero(diffs > 0))
    zeros = float(np.count_nonzero(diffs == 0))
    p = (wins + 0.5 * zeros) / r
    return p, float(diffs.mean()), float(diffs.std())


def parametric_ci(summary: MomentSummary, level: float = 0.95) -> tuple[float, float]:
    """Two-sided normal confidence interval mu +/- z * sigma / sqrt(n)."""
    if summary.n < 2:
        raise DataError("parametric CI needs n >= 2")
    if not 0.0 < level < 1.0:
        raise DataError(f"level {level} outside (0, 1)")
    z = _NORMAL.inv_cdf(0.5 + level / 2.0)
    half_width = z * summary.std_dev / math.sqrt(summary.n)
    return summary.mean - half_width, summary.mean + half_width


def subsample_trials(
    matrix: ScoreMatrix,
    config: ResampleConfig,
    aggregator: Aggregator | None = None,
) -> TrialRankings:
    """Rank every checkpoint over repeated without-replacement sample subsets.

    Each trial draws its own rng from a spawned seed, so trials are
    independent and the whole object is reproducible from (matrix, config).
    """
    n_samples = len(matrix.sample_ids)
    if config.subsample_size > n_samples:
        raise DataError(
            f"subsample_size {config.subsample_size} exceeds {n_samples} available samples"
        )
    agg = aggregator or mean_aggregate
    children = np.random.SeedSequence(config.seed).spawn(config.n_resamples)
    runs = []
    for trial, child in enumerate(children):
        rng = np.random.default_rng(child)
        subset = rng.choice(n_samples, size=config.subsample_size, replace=False)
        scores: dict[CheckpointId, float] = {}
        for i, ckpt in enumerate(matrix.checkpoints):
            row = matrix.scores[i, subset]
            present = row[~matrix.missing[i, subset]]
            if present.size == 0:
                raise DataError(f"checkpoint {ckpt!r} has no scores in trial {trial}")
            scores[ckpt] = float(agg(present))
        ranking = tuple(rank_from_scores(scores))
        runs.append((trial, ranking, scores))
    return TrialRankings(runs=tuple(runs))


def rank_score_matrix(verdicts: Sequence[ListwiseVerdict]) -> ScoreMatrix:
    """Listwise verdicts as a checkpoints x samples matrix of normalized rank
    scores (divided by K-1 to fit the [0, 1] cell contract). Normalization is
    a positive scaling, so rankings derived from the matrix are unchanged."""
    if not verdicts:
        raise DataError("no listwise verdicts")
    checkpoints = tuple(sorted(verdicts[0].ordering))
    k = len(checkpoints)
    sample_ids = tuple(v.sample_id for v in verdicts)
    if len(set(sample_ids)) != len(sample_ids):
        raise DataError("duplicate sample ids across listwise verdicts")
    scores = np.zeros((k, len(verdicts)))
    for j, v in enumerate(verdicts):
        if frozenset(v.ordering) != frozenset(checkpoints):
            raise DataError("verdicts cover inconsistent candidate sets")
        for i, c in enumerate(checkpoints):
            scores[i, j] = v.rank_scores[c] / (k - 1)
    missing = np.zeros_like(scores, dtype=bool)
    return ScoreMatrix(checkpoints, sample_ids, scores, missing)


def _pair_majorities(
    trials: TrialRankings,
) -> dict[tuple[CheckpointId, CheckpointId], tuple[int, int]]:
    """For each unordered pair (a, b) with a < b, count runs with a ahead of b."""
    checkpoints = trials.checkpoints
    counts: dict[tuple[CheckpointId, CheckpointId], tuple[int, int]] = {}
    for i, a in enumerate(checkpoints):
        for b in checkpoints[i + 1 :]:
            a_first = 0
            for _, ranking, _ in trials.runs:
                if ranking.index(a) < ranking.index(b):
                    a_first += 1
            counts[(a, b)] = (a_first, trials.n_runs - a_first)
    return counts


def flip_rate(trials: TrialRankings) -> float:
    """Fraction of (pair, run) observations disagreeing with the pair's
    majority orientation across runs."""
    if trials.n_runs < 2:
        raise DataError("flip rate needs at least 2 runs")
    if len(trials.checkpoints) < 2:
        raise DataError("flip rate needs at least 2 checkpoints")
    majorities = _pair_majorities(trials)
    disagreements = sum(min(a_first, b_first) for a_first, b_first in majorities.values())
    return disagreements / (len(majorities) * trials.n_runs)


def kendall_tau(first: Sequence[CheckpointId], second: Sequence[CheckpointId]) -> float:
    """Kendall tau between two total orders over the same items."""
    items = list(first)
    pos = {c: i for i, c in enumerate(second)}
    n = len(items)
    if n < 2:
        raise DataError("tau needs at least 2 items")
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            if pos[items[i]] < pos[items[j]]:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


def inter_run_agreement(trials: TrialRankings) -> float:
    """Mean Kendall tau over all unordered pairs of runs."""
    if trials.n_runs < 2:
        raise DataError("inter-run agreement needs at least 2 runs")
    taus = []
    rankings = [ranking for _, ranking, _ in trials.runs]
    for i in range(len(rankings)):
        for j in range(i + 1, len(rankings)):
            taus.append(kendall_tau(rankings[i], rankings[j]))
    return sum(taus) / len(taus)


def top1_consistency(trials: TrialRankings) -> float:
    """Fraction of runs whose winner equals the modal winner."""
    tops = [ranking[0] for _, ranking, _ in trials.runs]
    counts: dict[CheckpointId, int] = {}
    for top in tops:
        counts[top] = counts.get(top, 0) + 1
    modal = min(c for c, n in counts.items() if n == max(counts.values()))
    return counts[modal] / len(tops)


def score_std_dev(trials: TrialRankings, checkpoint: CheckpointId) -> float:
    """Sample standard deviation of a checkpoint's aggregate across runs."""
    if trials.n_runs < 2:
        raise DataError("std dev needs at least 2 runs")
    values = []
    for _, _, scores in trials.runs:
        if checkpoint not in scores:
            raise DataError(f"checkpoint {checkpoint!r} absent from trial scores")
        values.append(scores[checkpoint])
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return math.sqrt(var)


def agreement_with_subsampling(
    predicted: Mapping[tuple[CheckpointId, CheckpointId], float],
    trials: TrialRankings,
) -> float:
    """Fraction of checkpoint pairs whose predicted preference direction
    matches the empirical majority orientation across trials.

    A prediction of exactly 0.5 only matches an exact 50/50 empirical split.
    """
    majorities = _pair_majorities(trials)
    if not majorities:
        raise DataError("no checkpoint pairs to compare")
    matches = 0
    for (a, b), (a_first, b_first) in majorities.items():
        if (a, b) in predicted:
            p_a = predicted[(a, b)]
        elif (b, a) in predicted:
            p_a = 1.0 - predicted[(b, a)]
        else:
            raise DataError(f"no prediction for pair ({a!r}, {b!r})")
        if p_a == 0.5:
            matches += a_first == b_first
        elif a_first == b_first:
            continue
        else:
            predicted_a = p_a > 0.5
            empirical_a = a_first > b_first
            matches += predicted_a == empirical_a
    return matches / len(majorities)
