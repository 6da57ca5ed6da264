from __future__ import annotations

import math

import numpy as np
import pytest

from ckpt_arbiter.confidence import (
    MomentSummary,
    ResampleConfig,
    TrialRankings,
    agreement_with_subsampling,
    bootstrap_preference,
    flip_rate,
    gaussian_preference,
    inter_run_agreement,
    kendall_tau,
    parametric_ci,
    rank_score_matrix,
    score_std_dev,
    subsample_trials,
    top1_consistency,
)
from ckpt_arbiter.errors import DataError
from ckpt_arbiter.models import ListwiseVerdict, ScoreMatrix


def trials_from_rankings(*rankings, scores=None):
    runs = []
    for t, ranking in enumerate(rankings):
        run_scores = scores[t] if scores else {c: 1.0 - i / 10 for i, c in enumerate(ranking)}
        runs.append((t, tuple(ranking), run_scores))
    return TrialRankings(runs=tuple(runs))


# --- gaussian preference ----------------------------------------------------


def test_gaussian_equal_means_is_half():
    a = MomentSummary(0.7, 0.1, 50)
    b = MomentSummary(0.7, 0.2, 50)
    assert gaussian_preference(a, b) == pytest.approx(0.5)


def test_gaussian_one_sigma_gap():
    # With single-observation summaries the pooled form applies directly:
    # a mean gap equal to the combined sigma lands at Phi(1).
    a = MomentSummary(0.8, 0.06, 1)
    b = MomentSummary(0.8 - math.sqrt(0.06**2 + 0.08**2), 0.08, 1)
    assert gaussian_preference(a, b) == pytest.approx(0.8413, abs=1e-4)


def test_gaussian_swap_symmetry():
    a = MomentSummary(0.81, 0.07, 120)
    b = MomentSummary(0.78, 0.12, 120)
    assert gaussian_preference(a, b) + gaussian_preference(b, a) == pytest.approx(
        1.0, abs=1e-12
    )


def test_gaussian_degenerate_error():
    a = MomentSummary(0.5, 0.0, 10)
    with pytest.raises(DataError):
        gaussian_preference(a, a)


def test_gaussian_zero_variance_dominance():
    a = MomentSummary(0.6, 0.0, 10)
    b = MomentSummary(0.5, 0.0, 10)
    assert gaussian_preference(a, b) == 1.0
    assert gaussian_preference(b, a) == 0.0


def test_gaussian_matches_normal_cdf_oracle():
    # Independent numeric integration of the standard normal density.
    a = MomentSummary(0.75, 0.1, 200)
    b = MomentSummary(0.72, 0.1, 200)
    z = (0.75 - 0.72) / math.sqrt(0.1**2 / 200 + 0.1**2 / 200)
    xs = np.linspace(-10, z, 200001)
    pdf = np.exp(-(xs**2) / 2) / math.sqrt(2 * math.pi)
    integral = np.trapezoid(pdf, xs)
    assert gaussian_preference(a, b) == pytest.approx(float(integral), abs=1e-7)


# --- bootstrap preference ---------------------------------------------------


def test_bootstrap_identical_lists():
    scores = [0.4, 0.6, 0.5, 0.7]
    config = ResampleConfig(n_resamples=500, seed=1)
    assert bootstrap_preference(scores, list(scores), config) == pytest.approx(0.5)


def test_bootstrap_dominance():
    rng = np.random.default_rng(2)
    base = list(rng.random(50) * 0.5)
    shifted = [s + 0.2 for s in base]
    config = ResampleConfig(n_resamples=500, seed=3)
    assert bootstrap_preference(shifted, base, config) == 1.0


def test_bootstrap_matches_gaussian_in_iid_regime():
    rng = np.random.default_rng(42)
    n = 200
    scores_a = rng.normal(0.75, 0.1, size=n)
    scores_b = rng.normal(0.74, 0.1, size=n)
    config = ResampleConfig(n_resamples=10000, seed=7)
    boot = bootstrap_preference(list(scores_a), list(scores_b), config)
    gauss = gaussian_preference(
        MomentSummary.from_scores(scores_a), MomentSummary.from_scores(scores_b)
    )
    assert boot == pytest.approx(gauss, abs=0.03)


def test_bootstrap_deterministic_under_seed():
    rng = np.random.default_rng(8)
    a = list(rng.random(30))
    b = list(rng.random(30))
    config = ResampleConfig(n_resamples=400, seed=99)
    assert bootstrap_preference(a, b, config) == bootstrap_preference(a, b, config)


def test_bootstrap_affine_invariance_with_mean():
    rng = np.random.default_rng(13)
    a = list(rng.random(40))
    b = list(rng.random(40))
    config = ResampleConfig(n_resamples=600, seed=5)
    raw = bootstrap_preference(a, b, config)
    transformed = bootstrap_preference(
        [2.5 * x + 0.3 for x in a], [2.5 * x + 0.3 for x in b], config
    )
    assert raw == pytest.approx(transformed)


def test_bootstrap_length_mismatch():
    config = ResampleConfig(n_resamples=10, seed=0)
    with pytest.raises(DataError):
        bootstrap_preference([0.1, 0.2], [0.1], config)


def test_bootstrap_requires_replacement():
    config = ResampleConfig(n_resamples=10, seed=0, replacement=False)
    with pytest.raises(DataError):
        bootstrap_preference([0.1, 0.2], [0.3, 0.4], config)


def test_bootstrap_custom_aggregator():
    # A median aggregator must be routed through unchanged.
    a = [0.2, 0.9, 0.25, 0.95, 0.3]
    b = [0.5, 0.5, 0.5, 0.5, 0.5]
    config = ResampleConfig(n_resamples=300, seed=4)
    p_median = bootstrap_preference(a, b, config, aggregator=lambda xs: float(np.median(xs)))
    p_mean = bootstrap_preference(a, b, config)
    assert p_median != p_mean


# --- parametric CI ----------------------------------------------------------


def test_parametric_ci_zero_variance():
    assert parametric_ci(MomentSummary(0.8, 0.0, 50), 0.95) == (0.8, 0.8)


def test_parametric_ci_reference_values():
    low, high = parametric_ci(MomentSummary(0.8, 0.1, 100), 0.95)
    assert low == pytest.approx(0.7804, abs=1e-4)
    assert high == pytest.approx(0.8196, abs=1e-4)


def test_parametric_ci_nesting():
    summary = MomentSummary(0.6, 0.15, 40)
    narrow = parametric_ci(summary, 0.5)
    wide = parametric_ci(summary, 0.95)
    assert wide[0] < narrow[0] <= narrow[1] < wide[1]


def test_parametric_ci_needs_two_samples():
    with pytest.raises(DataError):
        parametric_ci(MomentSummary(0.5, 0.1, 1), 0.95)


# --- subsampling trials -----------------------------------------------------


def full_matrix(rows: dict[str, list[float]]) -> ScoreMatrix:
    checkpoints = tuple(rows)
    n = len(next(iter(rows.values())))
    scores = np.array([rows[c] for c in checkpoints], dtype=float)
    return ScoreMatrix(
        checkpoints, tuple(f"s{i}" for i in range(n)), scores,
        np.zeros_like(scores, dtype=bool),
    )


def test_subsample_full_size_reproduces_full_ranking():
    matrix = full_matrix({"c1": [0.9, 0.8], "c2": [0.2, 0.3], "c3": [0.5, 0.6]})
    config = ResampleConfig(n_resamples=5, subsample_size=2, seed=0, replacement=False)
    trials = subsample_trials(matrix, config)
    for _, ranking, _ in trials.runs:
        assert ranking == ("c1", "c3", "c2")


def test_subsample_seed_determinism():
    rng = np.random.default_rng(31)
    matrix = full_matrix({f"c{i}": list(rng.random(20)) for i in range(4)})
    config = ResampleConfig(n_resamples=8, subsample_size=10, seed=5, replacement=False)
    assert subsample_trials(matrix, config) == subsample_trials(matrix, config)


def test_subsample_dominant_checkpoints_stable():
    matrix = full_matrix(
        {"c1": [0.9] * 10, "c2": [0.5] * 10, "c3": [0.1] * 10}
    )
    config = ResampleConfig(n_resamples=10, subsample_size=3, seed=2, replacement=False)
    trials = subsample_trials(matrix, config)
    assert all(ranking == ("c1", "c2", "c3") for _, ranking, _ in trials.runs)


def test_subsample_size_too_large():
    matrix = full_matrix({"c1": [0.5, 0.6]})
    config = ResampleConfig(n_resamples=3, subsample_size=5, seed=0, replacement=False)
    with pytest.raises(DataError):
        subsample_trials(matrix, config)


# --- stability metrics ------------------------------------------------------


def test_flip_rate_identical_runs():
    trials = trials_from_rankings(("a", "b", "c"), ("a", "b", "c"))
    assert flip_rate(trials) == 0.0


def test_flip_rate_direct_count():
    rankings = [("a", "b")] * 7 + [("b", "a")] * 3
    trials = trials_from_rankings(*rankings)
    assert flip_rate(trials) == pytest.approx(0.3)


def test_flip_rate_matches_double_loop_oracle():
    rankings = [
        ("a", "b", "c"),
        ("b", "a", "c"),
        ("a", "c", "b"),
        ("c", "b", "a"),
    ]
    trials = trials_from_rankings(*rankings)
    checkpoints = sorted(rankings[0])
    pairs = [
        (checkpoints[i], checkpoints[j])
        for i in range(len(checkpoints))
        for j in range(i + 1, len(checkpoints))
    ]
    disagreements = 0
    for a, b in pairs:
        orientations = [r.index(a) < r.index(b) for r in rankings]
        majority = sum(orientations) >= len(rankings) / 2
        disagreements += sum(1 for o in orientations if o != majority)
    expected = disagreements / (len(pairs) * len(rankings))
    assert flip_rate(trials) == pytest.approx(expected)


def test_flip_rate_needs_two_runs():
    with pytest.raises(DataError):
        flip_rate(trials_from_rankings(("a", "b")))


def test_inter_run_agreement_identical_and_reversed():
    assert inter_run_agreement(
        trials_from_rankings(("a", "b", "c"), ("a", "b", "c"))
    ) == pytest.approx(1.0)
    assert inter_run_agreement(
        trials_from_rankings(("a", "b", "c"), ("c", "b", "a"))
    ) == pytest.approx(-1.0)


def test_inter_run_agreement_matches_concordance_oracle():
    rankings = [
        ("a", "b", "c", "d"),
        ("b", "a", "d", "c"),
        ("d", "c", "b", "a"),
    ]
    trials = trials_from_rankings(*rankings)
    taus = []
    for i in range(3):
        for j in range(i + 1, 3):
            first, second = rankings[i], rankings[j]
            concordant = discordant = 0
            for x in range(4):
                for y in range(x + 1, 4):
                    a, b = first[x], first[y]
                    if second.index(a) < second.index(b):
                        concordant += 1
                    else:
                        discordant += 1
            taus.append((concordant - discordant) / 6)
    assert inter_run_agreement(trials) == pytest.approx(sum(taus) / len(taus))


def test_flip_rate_zero_iff_agreement_one():
    rng = np.random.default_rng(19)
    for _ in range(30):
        names = [f"c{i}" for i in range(4)]
        if rng.random() < 0.5:
            base = tuple(rng.permutation(names))
            rankings = [base] * 4
        else:
            rankings = [tuple(rng.permutation(names)) for _ in range(4)]
        trials = trials_from_rankings(*rankings)
        assert (flip_rate(trials) == 0.0) == (inter_run_agreement(trials) == 1.0)


def test_top1_consistency():
    rankings = [("c1", "c2")] * 6 + [("c2", "c1")] * 4
    assert top1_consistency(trials_from_rankings(*rankings)) == pytest.approx(0.6)
    assert top1_consistency(trials_from_rankings(("a", "b"))) == 1.0
    assert top1_consistency(trials_from_rankings(("a", "b"), ("a", "b"))) == 1.0


def test_score_std_dev():
    trials = trials_from_rankings(
        ("a", "b"),
        ("a", "b"),
        scores=[{"a": 0.4, "b": 0.1}, {"a": 0.6, "b": 0.1}],
    )
    assert score_std_dev(trials, "a") == pytest.approx(math.sqrt(0.02), abs=1e-6)
    assert score_std_dev(trials, "a") == pytest.approx(0.1414, abs=1e-3)
    assert score_std_dev(trials, "b") == 0.0


def test_score_std_dev_matches_two_pass_oracle():
    rng = np.random.default_rng(29)
    values = list(rng.random(12))
    trials = trials_from_rankings(
        *[("a", "b")] * 12,
        scores=[{"a": v, "b": 0.0} for v in values],
    )
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    assert score_std_dev(trials, "a") == pytest.approx(math.sqrt(var), abs=1e-12)


def test_agreement_with_subsampling_counts():
    trials = trials_from_rankings(
        ("a", "b", "c"), ("a", "b", "c"), ("a", "c", "b")
    )
    # Majorities: a>b, a>c, b>c.
    predicted = {("a", "b"): 0.9, ("a", "c"): 0.8, ("b", "c"): 0.7}
    assert agreement_with_subsampling(predicted, trials) == 1.0
    predicted = {("a", "b"): 0.9, ("a", "c"): 0.8, ("b", "c"): 0.3}
    assert agreement_with_subsampling(predicted, trials) == pytest.approx(2 / 3)


def test_agreement_reversed_key_orientation():
    trials = trials_from_rankings(("a", "b"), ("a", "b"))
    assert agreement_with_subsampling({("b", "a"): 0.1}, trials) == 1.0


def test_agreement_half_prediction_rules():
    trials_split = trials_from_rankings(("a", "b"), ("b", "a"))
    assert agreement_with_subsampling({("a", "b"): 0.5}, trials_split) == 1.0
    trials_majority = trials_from_rankings(("a", "b"), ("a", "b"))
    assert agreement_with_subsampling({("a", "b"): 0.5}, trials_majority) == 0.0


def test_agreement_missing_pair_errors():
    trials = trials_from_rankings(("a", "b"), ("a", "b"))
    with pytest.raises(DataError):
        agreement_with_subsampling({}, trials)


def test_agreement_single_checkpoint_errors():
    trials = TrialRankings(runs=((0, ("a",), {"a": 0.5}), (1, ("a",), {"a": 0.5})))
    with pytest.raises(DataError):
        agreement_with_subsampling({}, trials)


# --- listwise rank-score matrix ---------------------------------------------


def test_rank_score_matrix_normalizes():
    verdicts = [
        ListwiseVerdict("s1", ("a", "b", "c"), ("a", "b", "c")),
        ListwiseVerdict("s2", ("c", "b", "a"), ("a", "b", "c")),
    ]
    matrix = rank_score_matrix(verdicts)
    assert matrix.checkpoints == ("a", "b", "c")
    assert matrix.scores[0].tolist() == [1.0, 0.0]
    assert matrix.scores[1].tolist() == [0.5, 0.5]


def test_kendall_tau_bounds():
    assert kendall_tau(("a", "b", "c"), ("a", "b", "c")) == 1.0
    assert kendall_tau(("a", "b", "c"), ("c", "b", "a")) == -1.0
