from __future__ import annotations

import numpy as np
import pytest

from ckpt_arbiter.confidence import ResampleConfig, flip_rate, subsample_trials
from ckpt_arbiter.errors import DataError, JudgeBackendError
from ckpt_arbiter.gateway import (
    MODE_LISTWISE,
    MODE_POINTWISE,
    JudgeBackendConfig,
    Rubric,
    build_request,
    pairwise_both_orders,
    parse_verdict,
)
from ckpt_arbiter.models import OcrQuality, ScoreMatrix
from ckpt_arbiter.ranking import (
    borda_scores,
    pointwise_mean,
    rank_from_scores,
    win_rate_from_pairwise,
)
from ckpt_arbiter.simulate import (
    ExperimentConfig,
    SyntheticJudgeBackend,
    WorldConfig,
    make_world,
    run_experiment,
)

RUBRIC = Rubric()
BACKEND_CFG = JudgeBackendConfig(backoff_base=0.0)


def noiseless_config(**overrides) -> WorldConfig:
    defaults = dict(
        n_checkpoints=3,
        true_qualities=(0.8, 0.6, 0.4),
        n_samples=20,
        noise_sigma_readable=0.0,
        noise_sigma_ambiguous=0.0,
        seed=11,
    )
    defaults.update(overrides)
    return WorldConfig(**defaults)


def test_world_config_validation():
    with pytest.raises(DataError):
        WorldConfig(n_checkpoints=2, true_qualities=(0.5,))
    with pytest.raises(DataError):
        WorldConfig(
            n_checkpoints=1, true_qualities=(0.5,),
            noise_sigma_readable=0.3, noise_sigma_ambiguous=0.1,
        )


def test_ambiguous_fraction_zero_all_readable():
    world = make_world(noiseless_config())
    assert all(s.ocr_quality is OcrQuality.READABLE for s in world.samples)


def test_same_seed_identical_worlds():
    config = noiseless_config(noise_sigma_readable=0.2, noise_sigma_ambiguous=0.2,
                              ambiguous_fraction=0.5, difficulty_sigma=0.1,
                              latent_sigma=0.05, tail_failure_prob=0.1)
    first = make_world(config)
    second = make_world(config)
    assert np.array_equal(first.latents, second.latents)
    assert first.samples == second.samples
    assert first.responses == second.responses
    assert np.array_equal(first.tail_failures, second.tail_failures)


def test_tail_failure_binomial_count():
    config = WorldConfig(
        n_checkpoints=10,
        true_qualities=tuple([0.7] * 10),
        n_samples=1000,
        tail_failure_prob=0.1,
        seed=3,
    )
    world = make_world(config)
    failures = int(world.tail_failures.sum())
    # 10k latents at p=0.1: mean 1000, sigma 30; accept a 4-sigma band.
    assert 880 <= failures <= 1120


def test_noiseless_judge_reproduces_true_ordering_everywhere():
    world = make_world(noiseless_config())
    backend = SyntheticJudgeBackend(world)
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in world.responses}
    for sample in world.samples:
        responses = [by_cell[(sample.sample_id, c)] for c in world.checkpoints]
        request, label_map = build_request(MODE_LISTWISE, sample, responses, RUBRIC, seed=2)
        verdict = parse_verdict(backend.submit(request, BACKEND_CFG), request, label_map)
        assert verdict.ordering == world.checkpoints  # qualities are descending


def test_noiseless_pointwise_scores_equal_latents():
    world = make_world(noiseless_config())
    backend = SyntheticJudgeBackend(world)
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in world.responses}
    sample = world.samples[0]
    request, label_map = build_request(
        MODE_POINTWISE, sample, [by_cell[(sample.sample_id, "ckpt_2000")]], RUBRIC, 0
    )
    verdict = parse_verdict(backend.submit(request, BACKEND_CFG), request, label_map)
    assert verdict.score == pytest.approx(world.latents[0, 0])


def test_judge_rejects_unknown_candidate(sample):
    world = make_world(noiseless_config())
    backend = SyntheticJudgeBackend(world)
    from conftest import make_response

    request, _ = build_request(
        MODE_POINTWISE, sample, [make_response("s001", "c1", text="not from world")],
        RUBRIC, 0,
    )
    with pytest.raises(JudgeBackendError):
        backend.submit(request, BACKEND_CFG)


def test_judge_deterministic_per_request():
    world = make_world(noiseless_config(noise_sigma_readable=0.2, noise_sigma_ambiguous=0.2))
    backend = SyntheticJudgeBackend(world)
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in world.responses}
    sample = world.samples[3]
    request, _ = build_request(
        MODE_POINTWISE, sample, [by_cell[(sample.sample_id, "ckpt_4000")]], RUBRIC, 9
    )
    assert backend.submit(request, BACKEND_CFG) == backend.submit(request, BACKEND_CFG)


def _pairwise_win_rate(world, dual_order: bool, n_samples: int) -> float:
    backend = SyntheticJudgeBackend(world)
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in world.responses}
    a, b = world.checkpoints[0], world.checkpoints[1]
    verdicts = []
    for sample in world.samples[:n_samples]:
        resp_a = by_cell[(sample.sample_id, a)]
        resp_b = by_cell[(sample.sample_id, b)]
        first, second = pairwise_both_orders(
            sample, resp_a, resp_b, RUBRIC, seed=hash_free_seed(sample.sample_id)
        )
        pairs = (first, second) if dual_order else (first,)
        for request, label_map in pairs:
            raw = backend.submit(request, BACKEND_CFG)
            verdicts.append(parse_verdict(raw, request, label_map))
    return win_rate_from_pairwise(verdicts, a, b).rate


def hash_free_seed(sample_id: str) -> int:
    return int(sample_id[1:])


def test_equal_quality_pairwise_rate_near_half():
    config = WorldConfig(
        n_checkpoints=2,
        true_qualities=(0.5, 0.5),
        n_samples=400,
        noise_sigma_readable=0.15,
        noise_sigma_ambiguous=0.15,
        seed=21,
    )
    world = make_world(config)
    rate = _pairwise_win_rate(world, dual_order=False, n_samples=400)
    assert rate == pytest.approx(0.5, abs=0.08)


def test_position_bias_visible_single_order_mitigated_dual():
    config = WorldConfig(
        n_checkpoints=2,
        true_qualities=(0.5, 0.5),
        n_samples=300,
        noise_sigma_readable=0.15,
        noise_sigma_ambiguous=0.15,
        position_bias=0.3,
        seed=33,
    )
    world = make_world(config)
    # pairwise_both_orders presents (a, b) then (b, a): the first request of
    # each pair always shows checkpoint a first.
    single = _pairwise_win_rate(world, dual_order=False, n_samples=300)
    dual = _pairwise_win_rate(world, dual_order=True, n_samples=300)
    assert single > 0.60
    assert dual == pytest.approx(0.5, abs=0.07)


def test_checkpoint_symmetry_under_quality_permutation():
    base = make_world(noiseless_config(true_qualities=(0.8, 0.6, 0.4)))
    swapped = make_world(noiseless_config(true_qualities=(0.4, 0.6, 0.8)))
    assert base.true_best == "ckpt_2000"
    assert swapped.true_best == "ckpt_6000"
    matrix_base = ScoreMatrix(
        base.checkpoints,
        tuple(s.sample_id for s in base.samples),
        base.latents,
        np.zeros_like(base.latents, dtype=bool),
    )
    means = {c: pointwise_mean(matrix_base, c) for c in base.checkpoints}
    assert rank_from_scores(means)[0] == "ckpt_2000"
    matrix_swapped = ScoreMatrix(
        swapped.checkpoints,
        tuple(s.sample_id for s in swapped.samples),
        swapped.latents,
        np.zeros_like(swapped.latents, dtype=bool),
    )
    means_swapped = {c: pointwise_mean(matrix_swapped, c) for c in swapped.checkpoints}
    assert rank_from_scores(means_swapped)[0] == "ckpt_6000"


def test_flip_rate_monotone_in_noise():
    # Mean flip rate over 20 seeds per noise level must be non-decreasing
    # within statistical tolerance across a 3-point sigma grid.
    sigmas = (0.02, 0.1, 0.3)
    means = []
    for sigma in sigmas:
        rates = []
        for seed in range(20):
            config = WorldConfig(
                n_checkpoints=4,
                true_qualities=(0.62, 0.58, 0.54, 0.50),
                n_samples=80,
                noise_sigma_readable=sigma,
                noise_sigma_ambiguous=sigma,
                seed=seed,
            )
            world = make_world(config)
            rng = np.random.default_rng(seed)
            noisy = np.clip(
                world.latents + rng.normal(0.0, sigma, size=world.latents.shape), 0, 1
            )
            matrix = ScoreMatrix(
                world.checkpoints,
                tuple(s.sample_id for s in world.samples),
                noisy,
                np.zeros_like(noisy, dtype=bool),
            )
            trials = subsample_trials(
                matrix,
                ResampleConfig(n_resamples=12, subsample_size=40, seed=seed,
                               replacement=False),
            )
            rates.append(flip_rate(trials))
        means.append(sum(rates) / len(rates))
    assert means[1] >= means[0] - 0.02
    assert means[2] >= means[1] - 0.02


def test_run_experiment_noiseless_selects_truth():
    config = noiseless_config(n_samples=40)
    experiment = ExperimentConfig(n_trials=4, subsample_size=20, n_bootstrap=200, seed=1)
    metrics = run_experiment(config, experiment, n_campaigns=3)
    for campaign in metrics.campaigns:
        assert campaign.selection_error == {"mean": False, "percentile": False}
        assert campaign.worst_case_error_rate == {"mean": 0.0, "percentile": 0.0}
        assert campaign.flip_rate["pointwise"] == 0.0
        assert campaign.top1_consistency["listwise"] == 1.0


def test_run_experiment_metrics_roundtrip():
    config = noiseless_config(n_samples=30, noise_sigma_readable=0.1,
                              noise_sigma_ambiguous=0.1)
    experiment = ExperimentConfig(n_trials=3, subsample_size=10, n_bootstrap=100, seed=2)
    metrics = run_experiment(config, experiment, n_campaigns=2)
    from ckpt_arbiter.simulate import ExperimentMetrics

    clone = ExperimentMetrics.from_dict(metrics.to_dict())
    assert clone.to_dict() == metrics.to_dict()


def test_synthetic_listwise_verdicts_aggregate():
    world = make_world(noiseless_config())
    backend = SyntheticJudgeBackend(world)
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in world.responses}
    verdicts = []
    for sample in world.samples[:5]:
        responses = [by_cell[(sample.sample_id, c)] for c in world.checkpoints]
        request, label_map = build_request(MODE_LISTWISE, sample, responses, RUBRIC, 1)
        verdicts.append(parse_verdict(backend.submit(request, BACKEND_CFG), request, label_map))
    scores = borda_scores(verdicts)
    assert rank_from_scores(scores) == list(world.checkpoints)
