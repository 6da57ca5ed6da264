"""Synthetic worlds with known ground truth and a configurable noisy judge.

A world fixes true checkpoint qualities and per-(checkpoint, sample)
latent correctness; the synthetic judge then answers gateway requests by
adding tier-dependent noise, optional position bias for the first-presented
candidate, and a per-checkpoint calibration offset that distorts pointwise
scores only (relative judgments are calibration-invariant). Heavy tails
come from replacing a latent with a value in [0, 0.2] at a configurable
probability.

Experiments re-judge random sample subsets across repeated rounds, exactly
like running an evaluation batch several times, and report stability,
confidence, and selection-quality metrics per ranking method with ground
truth available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .confidence import (
    MomentSummary,
    ResampleConfig,
    TrialRankings,
    agreement_with_subsampling,
    bootstrap_preference,
    flip_rate,
    gaussian_preference,
    inter_run_agreement,
    top1_consistency,
)
from .errors import DataError, JudgeBackendError
from .gateway import (
    MODE_LISTWISE,
    MODE_PAIRWISE,
    MODE_POINTWISE,
    JudgeBackendConfig,
    JudgeRequest,
)
from .models import (
    CandidateResponse,
    CheckpointId,
    EvaluationSample,
    OcrQuality,
)
from .ranking import ScoringWeights, percentile_aggregate, rank_from_scores
from .seeding import derive_seed


@dataclass(frozen=True)
class WorldConfig:
    n_checkpoints: int = 4
    true_qualities: tuple[float, ...] = (0.70, 0.65, 0.60, 0.55)
    n_samples: int = 200
    ambiguous_fraction: float = 0.0
    noise_sigma_readable: float = 0.1
    noise_sigma_ambiguous: float = 0.1
    tail_failure_prob: float = 0.0
    position_bias: float = 0.0
    seed: int = 0
    difficulty_sigma: float = 0.0
    latent_sigma: float = 0.0
    calibration_sigma: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "true_qualities", tuple(self.true_qualities))
        if len(self.true_qualities) != self.n_checkpoints:
            raise DataError(
                f"{self.n_checkpoints} checkpoints need {self.n_checkpoints} qualities, "
                f"got {len(self.true_qualities)}"
            )
        if any(not 0.0 <= q <= 1.0 for q in self.true_qualities):
            raise DataError("true qualities must lie in [0, 1]")
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise DataError("ambiguous_fraction must lie in [0, 1]")
        if not 0.0 <= self.tail_failure_prob <= 1.0:
            raise DataError("tail_failure_prob must lie in [0, 1]")
        if self.noise_sigma_ambiguous < self.noise_sigma_readable:
            raise DataError("ambiguous noise must be at least the readable noise")
        if self.n_samples < 1 or self.n_checkpoints < 1:
            raise DataError("world needs at least one checkpoint and one sample")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_checkpoints": self.n_checkpoints,
            "true_qualities": list(self.true_qualities),
            "n_samples": self.n_samples,
            "ambiguous_fraction": self.ambiguous_fraction,
            "noise_sigma_readable": self.noise_sigma_readable,
            "noise_sigma_ambiguous": self.noise_sigma_ambiguous,
            "tail_failure_prob": self.tail_failure_prob,
            "position_bias": self.position_bias,
            "seed": self.seed,
            "difficulty_sigma": self.difficulty_sigma,
            "latent_sigma": self.latent_sigma,
            "calibration_sigma": self.calibration_sigma,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> WorldConfig:
        data = dict(data)
        if "true_qualities" in data:
            data["true_qualities"] = tuple(data["true_qualities"])
        return cls(**data)


@dataclass(frozen=True)
class SyntheticWorld:
    """Deterministic ground truth: regenerate from the same config and every
    latent, sample label, and response text comes back identical."""

    config: WorldConfig
    checkpoints: tuple[CheckpointId, ...]
    samples: tuple[EvaluationSample, ...]
    responses: tuple[CandidateResponse, ...]
    latents: np.ndarray
    tier_sigmas: np.ndarray
    calibration: np.ndarray
    tail_failures: np.ndarray
    response_index: dict[str, tuple[int, int]] = field(repr=False, default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def true_best(self) -> CheckpointId:
        best = int(np.argmax(self.config.true_qualities))
        return self.checkpoints[best]

    def sample_index(self, sample_id: str) -> int:
        return self._sample_positions[sample_id]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_sample_positions", {s.sample_id: i for i, s in enumerate(self.samples)}
        )


def make_world(config: WorldConfig) -> SyntheticWorld:
    """Generate checkpoints, samples, latents, and blinded response texts."""
    rng = np.random.default_rng(np.random.SeedSequence(derive_seed(config.seed, "world")))
    n_c, n_s = config.n_checkpoints, config.n_samples
    checkpoints = tuple(f"ckpt_{(i + 1) * 2000}" for i in range(n_c))

    ambiguous = rng.random(n_s) < config.ambiguous_fraction
    difficulties = (
        rng.normal(0.0, config.difficulty_sigma, size=n_s)
        if config.difficulty_sigma > 0
        else np.zeros(n_s)
    )
    qualities = np.asarray(config.true_qualities)
    latents = qualities[:, None] + difficulties[None, :]
    if config.latent_sigma > 0:
        latents = latents + rng.normal(0.0, config.latent_sigma, size=(n_c, n_s))
    latents = np.clip(latents, 0.0, 1.0)

    tail_failures = rng.random((n_c, n_s)) < config.tail_failure_prob
    if tail_failures.any():
        latents = np.where(tail_failures, rng.uniform(0.0, 0.2, size=(n_c, n_s)), latents)

    calibration = (
        rng.normal(0.0, config.calibration_sigma, size=n_c)
        if config.calibration_sigma > 0
        else np.zeros(n_c)
    )
    tier_sigmas = np.where(
        ambiguous, config.noise_sigma_ambiguous, config.noise_sigma_readable
    )

    samples = tuple(
        EvaluationSample(
            sample_id=f"s{i:05d}",
            image_ref=f"images/s{i:05d}.png",
            query=f"What does the visual text say? (item {i})",
            ocr_quality=OcrQuality.AMBIGUOUS if ambiguous[i] else OcrQuality.READABLE,
        )
        for i in range(n_s)
    )
    responses = []
    response_index: dict[str, tuple[int, int]] = {}
    for c in range(n_c):
        for i in range(n_s):
            text = f"answer {format(derive_seed(config.seed, 'resp', c, i), '012x')}"
            responses.append(
                CandidateResponse(
                    sample_id=samples[i].sample_id, checkpoint_id=checkpoints[c], text=text
                )
            )
            response_index[text] = (c, i)

    return SyntheticWorld(
        config=config,
        checkpoints=checkpoints,
        samples=samples,
        responses=tuple(responses),
        latents=latents,
        tier_sigmas=tier_sigmas,
        calibration=calibration,
        tail_failures=tail_failures,
        response_index=response_index,
    )


class SyntheticJudgeBackend:
    """In-process judge backend evaluating requests against a world.

    Deterministic: the noise for a request is derived from (world seed,
    request nonce), so re-submitting a request reproduces its reply.
    """

    def __init__(self, world: SyntheticWorld):
        self.world = world
        self.call_log: list[str] = []

    def submit(self, request: JudgeRequest, config: JudgeBackendConfig) -> str:
        self.call_log.append(request.mode)
        world = self.world
        cells = []
        for _, text in request.candidates:
            if text not in world.response_index:
                raise JudgeBackendError(f"unknown candidate text {text[:40]!r}")
            cells.append(world.response_index[text])
        sample_idx = cells[0][1]
        sigma = float(world.tier_sigmas[sample_idx])
        rng = np.random.default_rng(
            np.random.SeedSequence(derive_seed(world.seed, "judge", request.nonce))
        )

        if request.mode == MODE_POINTWISE:
            c, i = cells[0]
            score = world.latents[c, i] + world.calibration[c]
            if sigma > 0:
                score += rng.normal(0.0, sigma)
            score = float(np.clip(score, 0.0, 1.0))
            return json.dumps({"score": score, "rationale": "synthetic"})

        draws = np.array([world.latents[c, i] for c, i in cells])
        if sigma > 0:
            draws = draws + rng.normal(0.0, sigma, size=len(cells))
        draws[0] += world.config.position_bias

        labels = [label for label, _ in request.candidates]
        if request.mode == MODE_LISTWISE:
            order = sorted(range(len(draws)), key=lambda k: (-draws[k], k))
            return json.dumps({"ranking": [labels[k] for k in order]})

        if request.mode == MODE_PAIRWISE:
            if draws[0] == draws[1]:
                return json.dumps({"winner": "tie"})
            return json.dumps({"winner": labels[0] if draws[0] > draws[1] else labels[1]})

        raise JudgeBackendError(f"unsupported mode {request.mode!r}")


def write_world_dataset(world: SyntheticWorld, samples_path, responses_path) -> None:
    """Dump the world's samples and responses as ingestible JSONL files."""
    with open(samples_path, "w", encoding="utf-8") as fh:
        for sample in world.samples:
            fh.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")
    with open(responses_path, "w", encoding="utf-8") as fh:
        for response in world.responses:
            fh.write(json.dumps(response.to_dict(), sort_keys=True) + "\n")


# --- Experiment harness ----------------------------------------------------
#
# Rounds re-judge a fresh random subset each time (fresh judge noise and a
# fresh pointwise calibration drift per round), which is what repeated
# evaluation runs look like in practice. All draws are vectorized over the
# latent matrix rather than routed through prompt rendering; the
# distributions match the synthetic judge by construction.


@dataclass(frozen=True)
class ExperimentConfig:
    n_trials: int = 30
    subsample_size: int = 300
    n_bootstrap: int = 2000
    seed: int = 0
    weights: ScoringWeights = field(default_factory=ScoringWeights)
    worst_case_margin: float = 0.05

    def __post_init__(self) -> None:
        if self.n_trials < 2:
            raise DataError("need at least 2 trials")


@dataclass
class CampaignMetrics:
    """Ground-truth-scored metrics from one campaign (one world realization)."""

    flip_rate: dict[str, float]
    inter_run_agreement: dict[str, float]
    top1_consistency: dict[str, float]
    score_std: dict[str, float]
    best_pair_preference: dict[str, float]
    win_rates: dict[str, dict[str, float]]
    parametric_agreement: float
    bootstrap_agreement: float
    selection_error: dict[str, bool]
    worst_case_error_rate: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "flip_rate": self.flip_rate,
            "inter_run_agreement": self.inter_run_agreement,
            "top1_consistency": self.top1_consistency,
            "score_std": self.score_std,
            "best_pair_preference": self.best_pair_preference,
            "win_rates": self.win_rates,
            "parametric_agreement": self.parametric_agreement,
            "bootstrap_agreement": self.bootstrap_agreement,
            "selection_error": self.selection_error,
            "worst_case_error_rate": self.worst_case_error_rate,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CampaignMetrics:
        return cls(**data)


@dataclass
class ExperimentMetrics:
    campaigns: list[CampaignMetrics]

    def mean(self, metric: str, method: str | None = None) -> float:
        values = []
        for c in self.campaigns:
            value = getattr(c, metric)
            if method is not None:
                value = value[method]
            values.append(float(value))
        return sum(values) / len(values)

    def to_dict(self) -> dict[str, Any]:
        return {"campaigns": [c.to_dict() for c in self.campaigns]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentMetrics:
        return cls(campaigns=[CampaignMetrics.from_dict(c) for c in data["campaigns"]])


def _pointwise_round(
    world: SyntheticWorld, subset: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One fresh pointwise judging of the subset, with per-round calibration drift."""
    n_c = len(world.checkpoints)
    sigmas = world.tier_sigmas[subset][None, :]
    noise = rng.normal(0.0, 1.0, size=(n_c, len(subset))) * sigmas
    drift = (
        rng.normal(0.0, world.config.calibration_sigma, size=(n_c, 1))
        if world.config.calibration_sigma > 0
        else 0.0
    )
    return np.clip(world.latents[:, subset] + noise + drift, 0.0, 1.0)


def _listwise_round(
    world: SyntheticWorld, subset: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Fresh listwise rank scores (K - rank) per checkpoint over the subset."""
    n_c = len(world.checkpoints)
    sigmas = world.tier_sigmas[subset][None, :]
    draws = world.latents[:, subset] + rng.normal(0.0, 1.0, size=(n_c, len(subset))) * sigmas
    if world.config.position_bias != 0.0:
        first = rng.integers(0, n_c, size=len(subset))
        draws[first, np.arange(len(subset))] += world.config.position_bias
    order = np.argsort(-draws, axis=0, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(n_c)[:, None]
    np.put_along_axis(ranks, order, np.broadcast_to(rows, order.shape), axis=0)
    return (n_c - 1 - ranks).astype(np.float64)


def _pairwise_round(
    world: SyntheticWorld, a: int, b: int, subset: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Dual-order pairwise win values for checkpoint ``a`` in [0, 0.5, 1] steps."""
    sigmas = world.tier_sigmas[subset]
    bias = world.config.position_bias
    values = np.zeros(len(subset))
    for a_first in (True, False):
        za = world.latents[a, subset] + rng.normal(0.0, 1.0, size=len(subset)) * sigmas
        zb = world.latents[b, subset] + rng.normal(0.0, 1.0, size=len(subset)) * sigmas
        if a_first:
            za = za + bias
        else:
            zb = zb + bias
        values += np.where(za > zb, 1.0, np.where(za == zb, 0.5, 0.0))
    return values / 2.0


def _rank_trials(
    world: SyntheticWorld, per_trial_scores: list[dict[CheckpointId, float]]
) -> TrialRankings:
    runs = tuple(
        (t, tuple(rank_from_scores(scores)), scores)
        for t, scores in enumerate(per_trial_scores)
    )
    return TrialRankings(runs=runs)


def run_campaign(
    world: SyntheticWorld, experiment: ExperimentConfig, campaign_seed: int
) -> CampaignMetrics:
    rng = np.random.default_rng(np.random.SeedSequence(campaign_seed))
    n_s = world.config.n_samples
    size = min(experiment.subsample_size, n_s)
    qualities = np.asarray(world.config.true_qualities)
    order = np.argsort(-qualities, kind="stable")
    best, second = int(order[0]), int(order[1])
    weights = experiment.weights

    point_trials: list[dict[CheckpointId, float]] = []
    pct_trials: list[dict[CheckpointId, float]] = []
    list_trials: list[dict[CheckpointId, float]] = []
    for _ in range(experiment.n_trials):
        subset = rng.choice(n_s, size=size, replace=False)
        point_scores = _pointwise_round(world, subset, rng)
        rank_scores = _listwise_round(world, subset, rng)
        point_trials.append(
            {c: float(point_scores[i].mean()) for i, c in enumerate(world.checkpoints)}
        )
        pct_trials.append(
            {
                c: percentile_aggregate(point_scores[i], weights)
                for i, c in enumerate(world.checkpoints)
            }
        )
        list_trials.append(
            {c: float(rank_scores[i].mean()) for i, c in enumerate(world.checkpoints)}
        )

    trials = {
        "pointwise": _rank_trials(world, point_trials),
        "percentile": _rank_trials(world, pct_trials),
        "listwise": _rank_trials(world, list_trials),
    }

    # One full-data evaluation for confidence estimates (static calibration).
    full = np.arange(n_s)
    full_rng = np.random.default_rng(np.random.SeedSequence(derive_seed(campaign_seed, "full")))
    sigmas = world.tier_sigmas[None, :]
    full_point = np.clip(
        world.latents
        + full_rng.normal(0.0, 1.0, size=world.latents.shape) * sigmas
        + world.calibration[:, None],
        0.0,
        1.0,
    )
    full_rank = _listwise_round(world, full, full_rng)
    pair_values = _pairwise_round(world, best, second, full, full_rng)

    boot_cfg = ResampleConfig(
        n_resamples=experiment.n_bootstrap,
        seed=derive_seed(campaign_seed, "boot"),
        replacement=True,
    )
    best_pair = {
        "pointwise": bootstrap_preference(full_point[best], full_point[second], boot_cfg),
        "listwise": bootstrap_preference(full_rank[best], full_rank[second], boot_cfg),
        "pairwise": bootstrap_preference(pair_values, 1.0 - pair_values, boot_cfg),
    }

    # Appendix-style agreement: predicted pair directions vs trial majorities.
    parametric_preds = {}
    bootstrap_preds = {}
    for i in range(len(world.checkpoints)):
        for j in range(i + 1, len(world.checkpoints)):
            a_id, b_id = world.checkpoints[i], world.checkpoints[j]
            key = tuple(sorted((a_id, b_id)))
            a_row, b_row = (i, j) if key == (a_id, b_id) else (j, i)
            parametric_preds[key] = gaussian_preference(
                MomentSummary.from_scores(full_point[a_row]),
                MomentSummary.from_scores(full_point[b_row]),
            )
            bootstrap_preds[key] = bootstrap_preference(
                full_point[a_row], full_point[b_row], boot_cfg
            )
    parametric_agreement = agreement_with_subsampling(parametric_preds, trials["pointwise"])
    bootstrap_agreement = agreement_with_subsampling(bootstrap_preds, trials["pointwise"])

    true_best = world.checkpoints[best]
    margin = experiment.worst_case_margin
    best_quality = float(qualities[best])
    quality_of = {c: float(qualities[i]) for i, c in enumerate(world.checkpoints)}

    def trial_std(trial_list: list[dict[CheckpointId, float]]) -> float:
        values = [scores[true_best] for scores in trial_list]
        mean = sum(values) / len(values)
        return float(
            (sum((v - mean) ** 2 for v in values) / (len(values) - 1)) ** 0.5
        )

    score_std = {
        "pointwise": trial_std(point_trials),
        "percentile": trial_std(pct_trials),
        "listwise": trial_std(list_trials),
    }

    def empirical_rate(row_a: np.ndarray, row_b: np.ndarray) -> float:
        wins = np.count_nonzero(row_a > row_b) + 0.5 * np.count_nonzero(row_a == row_b)
        return float(wins / len(row_a))

    win_rates: dict[str, dict[str, float]] = {}
    top3 = [int(k) for k in order[:3]]
    for x in range(len(top3)):
        for y in range(x + 1, len(top3)):
            i, j = top3[x], top3[y]
            label = f"{world.checkpoints[i]} vs {world.checkpoints[j]}"
            win_rates[label] = {
                "pointwise": empirical_rate(full_point[i], full_point[j]),
                "listwise": empirical_rate(full_rank[i], full_rank[j]),
            }

    def worst_case_rate(trial_list: list[dict[CheckpointId, float]]) -> float:
        bad = sum(
            1
            for scores in trial_list
            if best_quality - quality_of[rank_from_scores(scores)[0]] > margin
        )
        return bad / len(trial_list)

    full_mean = {c: float(full_point[i].mean()) for i, c in enumerate(world.checkpoints)}
    full_pct = {
        c: percentile_aggregate(full_point[i], weights)
        for i, c in enumerate(world.checkpoints)
    }
    selection_error = {
        "mean": rank_from_scores(full_mean)[0] != true_best,
        "percentile": rank_from_scores(full_pct)[0] != true_best,
    }

    return CampaignMetrics(
        flip_rate={m: flip_rate(t) for m, t in trials.items()},
        inter_run_agreement={m: inter_run_agreement(t) for m, t in trials.items()},
        top1_consistency={m: top1_consistency(t) for m, t in trials.items()},
        score_std=score_std,
        best_pair_preference=best_pair,
        win_rates=win_rates,
        parametric_agreement=parametric_agreement,
        bootstrap_agreement=bootstrap_agreement,
        selection_error=selection_error,
        worst_case_error_rate={
            "mean": worst_case_rate(point_trials),
            "percentile": worst_case_rate(pct_trials),
        },
    )


def run_experiment(
    config: WorldConfig, experiment: ExperimentConfig, n_campaigns: int
) -> ExperimentMetrics:
    """Independent campaigns, each a fresh world realization of the same config."""
    campaigns = []
    for k in range(n_campaigns):
        world_cfg_seed = derive_seed(config.seed, experiment.seed, "campaign", k)
        world = make_world(_reseeded(config, world_cfg_seed))
        campaigns.append(run_campaign(world, experiment, derive_seed(world_cfg_seed, "run")))
    return ExperimentMetrics(campaigns=campaigns)


def _reseeded(config: WorldConfig, seed: int) -> WorldConfig:
    data = config.to_dict()
    data["seed"] = seed
    return WorldConfig.from_dict(data)
