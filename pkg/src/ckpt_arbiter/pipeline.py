"""Multi-stage checkpoint selection.

Stage order: pointwise filter (never finalizes, it only eliminates clearly
inferior checkpoints), listwise Borda ranking (finalizes when the top pair
is confident enough), pairwise refinement of near-ties, then optional human
verification. Escalation is gated on bootstrap preference probabilities:
a stage finalizes only when P(top beats runner-up) clears the configured
threshold, and pairs whose P sits inside the near-tie band move down to the
next, more discriminative stage.

Human verdicts are verification evidence with the weight of one judge
verdict each; when they flip the machine's lean, the report says so instead
of hiding it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .adjudication import ticket_id_for
from .confidence import ResampleConfig, bootstrap_diagnostics, flip_rate as _flip_rate
from .confidence import inter_run_agreement, subsample_trials, top1_consistency
from .errors import DataError
from .gateway import (
    MODE_LISTWISE,
    MODE_POINTWISE,
    JudgeBackend,
    JudgeBackendConfig,
    JudgedItem,
    Rubric,
    build_request,
    evaluate_requests,
    pairwise_both_orders,
)
from .models import (
    CandidateResponse,
    CheckpointId,
    EvaluationSample,
    ListwiseVerdict,
    PairwiseVerdict,
    ScoreMatrix,
    validate_dataset,
)
from .ranking import (
    ScoringWeights,
    borda_scores,
    percentile_aggregate,
    pointwise_mean,
    rank_from_scores,
    win_rate_from_pairwise,
)
from .seeding import derive_seed

MAX_JUDGE_FAILURE_RATE = 0.2

AGGREGATOR_MEAN = "mean"
AGGREGATOR_PERCENTILE = "percentile"

STAGE_POINTWISE = "pointwise"
STAGE_LISTWISE = "listwise"
STAGE_PAIRWISE = "pairwise"
STAGE_HUMAN = "human"

ACTION_FINALIZE = "finalize"
ACTION_ESCALATE = "escalate"


@dataclass(frozen=True)
class PipelineConfig:
    top_k_after_pointwise: int = 6
    aggregator: str = AGGREGATOR_MEAN
    finalize_threshold: float = 0.90
    near_tie_band: tuple[float, float] = (0.45, 0.55)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    weights: ScoringWeights = field(default_factory=ScoringWeights)
    human_loop_enabled: bool = False
    max_pairwise_pairs: int = 3
    seed: int = 0
    stage_sample_cap: int | None = None
    stability_trials: int = 30
    variance_escalation_threshold: float = 0.5
    human_samples_per_pair: int = 10
    max_verdicts_per_ticket: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "near_tie_band", tuple(self.near_tie_band))
        if not 2 <= self.top_k_after_pointwise <= 8:
            raise DataError("top_k_after_pointwise must be in [2, 8]")
        if self.aggregator not in (AGGREGATOR_MEAN, AGGREGATOR_PERCENTILE):
            raise DataError(f"unknown aggregator {self.aggregator!r}")
        low, high = self.near_tie_band
        if not 0.0 <= low <= 0.5 <= high <= 1.0:
            raise DataError("near_tie_band must lie in [0, 1] and contain 0.5")
        if self.finalize_threshold <= high:
            raise DataError("finalize_threshold must exceed the near-tie band")
        if self.max_pairwise_pairs < 1:
            raise DataError("max_pairwise_pairs must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "top_k_after_pointwise": self.top_k_after_pointwise,
            "aggregator": self.aggregator,
            "finalize_threshold": self.finalize_threshold,
            "near_tie_band": list(self.near_tie_band),
            "resample": {
                "n_resamples": self.resample.n_resamples,
                "subsample_size": self.resample.subsample_size,
                "seed": self.resample.seed,
                "replacement": self.resample.replacement,
            },
            "weights": {"beta": self.weights.beta, "gamma": self.weights.gamma},
            "human_loop_enabled": self.human_loop_enabled,
            "max_pairwise_pairs": self.max_pairwise_pairs,
            "seed": self.seed,
            "stage_sample_cap": self.stage_sample_cap,
            "stability_trials": self.stability_trials,
            "variance_escalation_threshold": self.variance_escalation_threshold,
            "human_samples_per_pair": self.human_samples_per_pair,
            "max_verdicts_per_ticket": self.max_verdicts_per_ticket,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        data = dict(data)
        if "resample" in data and isinstance(data["resample"], dict):
            data["resample"] = ResampleConfig(**data["resample"])
        if "weights" in data and isinstance(data["weights"], dict):
            data["weights"] = ScoringWeights(**data["weights"])
        if "near_tie_band" in data:
            data["near_tie_band"] = tuple(data["near_tie_band"])
        return cls(**data)


def pair_key(a: CheckpointId, b: CheckpointId) -> str:
    x, y = sorted((a, b))
    return f"{x}|{y}"


@dataclass
class StageDecision:
    stage: str
    surviving: tuple[CheckpointId, ...]
    confidences: dict[str, float]
    action: str
    rationale: str
    scores: dict[CheckpointId, float] = field(default_factory=dict)
    refine_pairs: list[tuple[CheckpointId, CheckpointId]] = field(default_factory=list)
    judge_calls: int = 0

    def __post_init__(self) -> None:
        if not self.surviving:
            raise DataError("a stage must leave at least one survivor")

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "surviving": list(self.surviving),
            "confidences": dict(sorted(self.confidences.items())),
            "action": self.action,
            "rationale": self.rationale,
            "scores": dict(sorted(self.scores.items())),
            "refine_pairs": [list(p) for p in self.refine_pairs],
            "judge_calls": self.judge_calls,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StageDecision:
        return cls(
            stage=data["stage"],
            surviving=tuple(data["surviving"]),
            confidences=dict(data["confidences"]),
            action=data["action"],
            rationale=data["rationale"],
            scores=dict(data.get("scores", {})),
            refine_pairs=[tuple(p) for p in data.get("refine_pairs", [])],
            judge_calls=data.get("judge_calls", 0),
        )


STATUS_FINAL = "final"
STATUS_PROVISIONAL = "provisional"


@dataclass
class SelectionReport:
    winner: CheckpointId
    stages: list[StageDecision]
    stability: dict[str, float]
    pending_human: list[str]
    config_echo: dict[str, Any]
    status: str = STATUS_FINAL
    human_machine_disagreement: bool = False
    pending_cases: dict[str, tuple[str, CheckpointId, CheckpointId]] = field(default_factory=dict)
    pairwise_evidence: list[PairwiseVerdict] = field(default_factory=list)
    listwise_order: tuple[CheckpointId, ...] = ()
    schema_version: str = "1"

    def __post_init__(self) -> None:
        if self.stages and self.winner not in self.stages[-1].surviving:
            raise DataError("winner must be in the final stage's surviving set")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "winner": self.winner,
            "status": self.status,
            "human_machine_disagreement": self.human_machine_disagreement,
            "stages": [s.to_dict() for s in self.stages],
            "stability": dict(sorted(self.stability.items())),
            "pending_human": list(self.pending_human),
            "pending_cases": {t: list(case) for t, case in sorted(self.pending_cases.items())},
            "pairwise_evidence": [v.to_dict() for v in self.pairwise_evidence],
            "listwise_order": list(self.listwise_order),
            "config_echo": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SelectionReport:
        return cls(
            winner=data["winner"],
            stages=[StageDecision.from_dict(s) for s in data["stages"]],
            stability=dict(data["stability"]),
            pending_human=list(data["pending_human"]),
            config_echo=dict(data["config_echo"]),
            status=data["status"],
            human_machine_disagreement=data["human_machine_disagreement"],
            pending_cases={
                t: tuple(case) for t, case in data.get("pending_cases", {}).items()
            },
            pairwise_evidence=[
                PairwiseVerdict.from_dict(v) for v in data.get("pairwise_evidence", [])
            ],
            listwise_order=tuple(data.get("listwise_order", ())),
            schema_version=data.get("schema_version", "1"),
        )


def _aggregate_row(matrix: ScoreMatrix, checkpoint: CheckpointId, config: PipelineConfig) -> float:
    if config.aggregator == AGGREGATOR_PERCENTILE:
        present = matrix.present_scores(checkpoint)
        if present.size == 0:
            raise DataError(f"checkpoint {checkpoint!r} has no scores")
        return percentile_aggregate(present, config.weights)
    return pointwise_mean(matrix, checkpoint)


def stage_pointwise_filter(matrix: ScoreMatrix, config: PipelineConfig) -> StageDecision:
    """Keep the top-K checkpoints by the configured aggregate. Always escalates:
    pointwise scores are treated purely as a coarse filter."""
    if len(matrix.checkpoints) < 2:
        raise DataError("pointwise filter needs at least 2 checkpoints")
    scores = {c: _aggregate_row(matrix, c, config) for c in matrix.checkpoints}
    ranked = rank_from_scores(scores)
    surviving = tuple(ranked[: config.top_k_after_pointwise])
    dropped = ranked[config.top_k_after_pointwise :]
    return StageDecision(
        stage=STAGE_POINTWISE,
        surviving=surviving,
        confidences={},
        action=ACTION_ESCALATE,
        rationale=(
            f"{config.aggregator} aggregate kept top {len(surviving)}"
            + (f", eliminated {', '.join(dropped)}" if dropped else "")
        ),
        scores=scores,
    )


def _listwise_sample_scores(
    verdicts: Sequence[ListwiseVerdict],
) -> dict[CheckpointId, list[float]]:
    ordered = sorted(verdicts, key=lambda v: v.sample_id)
    candidates = ordered[0].ordering
    return {c: [v.rank_scores[c] for v in ordered] for c in candidates}


def stage_listwise(
    verdicts: Sequence[ListwiseVerdict], config: PipelineConfig
) -> StageDecision:
    """Borda-rank the survivors and decide finalize vs pairwise escalation."""
    if not verdicts:
        raise DataError("listwise stage needs verdicts")
    borda = borda_scores(list(verdicts))
    order = rank_from_scores(borda)
    per_sample = _listwise_sample_scores(verdicts)
    boot_cfg = ResampleConfig(
        n_resamples=config.resample.n_resamples,
        subsample_size=config.resample.subsample_size,
        seed=derive_seed(config.resample.seed, "listwise-boot"),
        replacement=True,
    )
    confidences: dict[str, float] = {}
    band_lo, band_hi = config.near_tie_band
    in_band: list[tuple[float, tuple[CheckpointId, CheckpointId]]] = []
    variance_flagged: list[tuple[float, tuple[CheckpointId, CheckpointId]]] = []
    flagged_pairs: set[tuple[CheckpointId, CheckpointId]] = set()
    for i, a in enumerate(order):
        for b in order[i + 1 :]:
            if len(per_sample[a]) < 2:
                raise DataError("listwise bootstrap needs at least 2 samples")
            p, mean_d, std_d = bootstrap_diagnostics(
                per_sample[a], per_sample[b], boot_cfg
            )
            confidences[pair_key(a, b)] = p if a < b else 1.0 - p
            entry = (abs(p - 0.5), tuple(sorted((a, b))))
            if band_lo <= p <= band_hi:
                in_band.append(entry)
            elif std_d > config.variance_escalation_threshold * abs(mean_d):
                variance_flagged.append(entry)
                flagged_pairs.add(entry[1])

    top_pair = tuple(sorted((order[0], order[1])))
    top_pair_p = _pair_preference(confidences, order[0], order[1])
    top_pair_confident = (
        top_pair_p >= config.finalize_threshold and top_pair not in flagged_pairs
    )
    if top_pair_confident:
        return StageDecision(
            stage=STAGE_LISTWISE,
            surviving=tuple(order),
            confidences=confidences,
            action=ACTION_FINALIZE,
            rationale=(
                f"P({order[0]} beats {order[1]}) = {top_pair_p:.3f} "
                f">= {config.finalize_threshold}"
            ),
            scores=borda,
        )

    reason = (
        f"P({order[0]} beats {order[1]}) = {top_pair_p:.3f} below "
        f"{config.finalize_threshold}"
        if top_pair_p < config.finalize_threshold
        else f"bootstrap variance too high for P({order[0]} beats {order[1]})"
    )
    refine = [pair for _, pair in sorted(in_band)][: config.max_pairwise_pairs]
    if not refine:
        flagged = [pair for _, pair in sorted(variance_flagged)]
        refine = flagged[: config.max_pairwise_pairs] or [top_pair]
    return StageDecision(
        stage=STAGE_LISTWISE,
        surviving=tuple(order),
        confidences=confidences,
        action=ACTION_ESCALATE,
        rationale=f"{reason}; refining {len(refine)} pair(s)",
        scores=borda,
        refine_pairs=refine,
    )


def _pair_preference(confidences: dict[str, float], a: CheckpointId, b: CheckpointId) -> float:
    p = confidences[pair_key(a, b)]
    return p if a < b else 1.0 - p


def _pairwise_sample_values(
    verdicts: Sequence[PairwiseVerdict], a: CheckpointId, b: CheckpointId
) -> list[float]:
    """Per-sample win value for ``a``: verdict outcomes averaged within a sample."""
    by_sample: dict[str, list[float]] = {}
    for v in verdicts:
        if {v.a, v.b} != {a, b}:
            continue
        winner = v.winner_id()
        outcome = 0.5 if winner is None else (1.0 if winner == a else 0.0)
        by_sample.setdefault(v.sample_id, []).append(outcome)
    return [sum(vals) / len(vals) for _, vals in sorted(by_sample.items())]


def _check_dual_order(
    verdicts: Sequence[PairwiseVerdict], pair: tuple[CheckpointId, CheckpointId]
) -> None:
    seen: dict[str, set[str]] = {}
    for v in verdicts:
        if {v.a, v.b} != set(pair):
            continue
        seen.setdefault(v.sample_id, set()).add(
            v.presented_first.value if v.source == "judge" else "human"
        )
    if not seen:
        raise DataError(f"no pairwise verdicts for pair {pair}")
    for sample_id, firsts in seen.items():
        if "human" in firsts:
            continue
        if firsts != {"a", "b"}:
            raise DataError(
                f"pair {pair} lacks dual-order verdicts for sample {sample_id!r}"
            )


@dataclass
class PairStats:
    rate: float
    preference: float
    n_samples: int
    mean_diff: float = 0.0
    std_diff: float = 0.0

    def low_confidence(self, band: tuple[float, float], variance_threshold: float) -> bool:
        if band[0] <= self.preference <= band[1]:
            return True
        return self.std_diff > variance_threshold * abs(self.mean_diff)


def _pair_statistics(
    verdicts: Sequence[PairwiseVerdict],
    pairs: Sequence[tuple[CheckpointId, CheckpointId]],
    config: PipelineConfig,
) -> dict[tuple[CheckpointId, CheckpointId], PairStats]:
    stats = {}
    for pair in pairs:
        a, b = sorted(pair)
        entry = win_rate_from_pairwise(verdicts, a, b)
        values = _pairwise_sample_values(verdicts, a, b)
        if len(values) >= 2:
            boot_cfg = ResampleConfig(
                n_resamples=config.resample.n_resamples,
                subsample_size=config.resample.subsample_size,
                seed=derive_seed(config.resample.seed, "pairwise-boot", a, b),
                replacement=True,
            )
            complement = [1.0 - v for v in values]
            p, mean_d, std_d = bootstrap_diagnostics(values, complement, boot_cfg)
        else:
            p, mean_d, std_d = entry.rate, 2 * entry.rate - 1.0, 0.0
        stats[(a, b)] = PairStats(
            rate=entry.rate, preference=float(p), n_samples=len(values),
            mean_diff=mean_d, std_diff=std_d,
        )
    return stats


def _decide_from_pairs(
    stats: dict[tuple[CheckpointId, CheckpointId], PairStats],
    fallback_order: Sequence[CheckpointId],
    config: PipelineConfig,
) -> tuple[CheckpointId, str, list[tuple[CheckpointId, CheckpointId]]]:
    """Resolve refined pairs into a winner, noting cycles and remaining near-ties.

    A pair stays unresolved when its preference sits in the near-tie band or
    its bootstrap differences are too dispersed relative to their mean.
    """
    unresolved = [
        pair
        for pair, s in stats.items()
        if s.low_confidence(config.near_tie_band, config.variance_escalation_threshold)
    ]
    members = sorted({c for pair in stats for c in pair})
    losses: dict[CheckpointId, int] = {c: 0 for c in members}
    for (a, b), s in stats.items():
        if s.rate > 0.5:
            losses[b] += 1
        elif s.rate < 0.5:
            losses[a] += 1
        else:
            # Exact tie: lexicographic tie-break, consistent with rank_from_scores.
            losses[max(a, b)] += 1
    undefeated = [c for c in members if losses[c] == 0]
    if len(undefeated) == 1:
        winner_member = undefeated[0]
        note = ""
    else:
        winner_member = None
        note = "no undefeated candidate among refined pairs; keeping listwise order"

    if winner_member is not None:
        # The refined winner only displaces the leader if it beat the leader
        # head to head or already led; other pair outcomes refine lower ranks.
        leader = fallback_order[0]
        if winner_member == leader or tuple(sorted((winner_member, leader))) in stats:
            winner = winner_member
        else:
            winner = leader
    else:
        winner = fallback_order[0]
    return winner, note, unresolved


def stage_pairwise_refine(
    verdicts: Sequence[PairwiseVerdict],
    pairs: Sequence[tuple[CheckpointId, CheckpointId]],
    config: PipelineConfig,
    listwise_order: Sequence[CheckpointId],
) -> StageDecision:
    """Resolve near-tie pairs with dual-order pairwise evidence.

    Requires both presentation orders per (pair, sample). Escalates to human
    review when pairs stay inside the near-tie band and the human loop is
    enabled; otherwise finalizes by win rate with deterministic tie-breaks.
    """
    if not pairs:
        raise DataError("pairwise refinement needs at least one pair")
    for pair in pairs:
        _check_dual_order(verdicts, tuple(sorted(pair)))
    stats = _pair_statistics(verdicts, pairs, config)
    confidences = {pair_key(a, b): s.preference for (a, b), s in stats.items()}
    winner, note, unresolved = _decide_from_pairs(stats, listwise_order, config)
    surviving = (winner, *[c for c in listwise_order if c != winner])

    if unresolved and config.human_loop_enabled:
        return StageDecision(
            stage=STAGE_PAIRWISE,
            surviving=surviving,
            confidences=confidences,
            action=ACTION_ESCALATE,
            rationale=(
                f"{len(unresolved)} low-confidence pair(s) (near-tie band "
                f"{list(config.near_tie_band)} or high bootstrap variance); "
                "requesting human verification"
            ),
            refine_pairs=sorted(unresolved),
        )

    min_p = min(s.preference for s in stats.values())
    detail = f"refined {len(stats)} pair(s); min P = {min_p:.3f}"
    if unresolved:
        detail += "; near-ties finalized by win rate with tie-break"
    if note:
        detail += f"; {note}"
    return StageDecision(
        stage=STAGE_PAIRWISE,
        surviving=surviving,
        confidences=confidences,
        action=ACTION_FINALIZE,
        rationale=detail,
        refine_pairs=sorted(unresolved),
    )


def _failure_rate(items: Sequence[JudgedItem]) -> float:
    if not items:
        return 0.0
    return sum(1 for item in items if item.verdict is None) / len(items)


def _abort_on_failures(items: Sequence[JudgedItem], stage: str) -> None:
    rate = _failure_rate(items)
    if rate > MAX_JUDGE_FAILURE_RATE:
        raise DataError(
            f"{stage} stage judge failure rate {rate:.2f} exceeds "
            f"{MAX_JUDGE_FAILURE_RATE:.2f}; aborting"
        )


def run_pipeline(
    samples: Sequence[EvaluationSample],
    responses: Sequence[CandidateResponse],
    backend: JudgeBackend,
    config: PipelineConfig,
    backend_config: JudgeBackendConfig | None = None,
    rubric: Rubric | None = None,
    queue=None,
) -> SelectionReport:
    """Run every stage the evidence requires and assemble a SelectionReport.

    Judge-call budget per stage: pointwise issues one call per
    (sample, checkpoint), listwise one per sample, pairwise two per
    (sample, refined pair). Deterministic given inputs, seeds, and a
    deterministic backend.
    """
    backend_config = backend_config or JudgeBackendConfig()
    rubric = rubric or Rubric()
    report_check = validate_dataset(samples, responses)
    if not report_check.complete:
        raise DataError(
            f"dataset incomplete: {report_check.issues} issue(s), "
            f"{len(report_check.missing_pairs)} missing pair(s)"
        )

    samples = sorted(samples, key=lambda s: s.sample_id)
    if config.stage_sample_cap is not None and config.stage_sample_cap < len(samples):
        rng = np.random.default_rng(
            np.random.SeedSequence(derive_seed(config.seed, "sample-cap"))
        )
        chosen = sorted(rng.choice(len(samples), size=config.stage_sample_cap, replace=False))
        samples = [samples[i] for i in chosen]
    checkpoints = sorted({r.checkpoint_id for r in responses})
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in responses}
    sample_ids = [s.sample_id for s in samples]

    # Stage 1: pointwise filter.
    items = []
    for sample in samples:
        for ckpt in checkpoints:
            response = by_cell[(sample.sample_id, ckpt)]
            seed = derive_seed(config.seed, "pointwise", sample.sample_id, ckpt)
            items.append(build_request(MODE_POINTWISE, sample, [response], rubric, seed))
    judged = evaluate_requests(backend, backend_config, items)
    _abort_on_failures(judged, STAGE_POINTWISE)
    point_verdicts = [item.verdict for item in judged if item.verdict is not None]
    matrix = ScoreMatrix.from_verdicts(checkpoints, sample_ids, point_verdicts)
    pointwise_decision = stage_pointwise_filter(matrix, config)
    pointwise_decision.judge_calls = len(items)

    stability = _stability_metrics(matrix, config)
    stages = [pointwise_decision]
    survivors = list(pointwise_decision.surviving)

    # Stage 2: listwise ranking over the survivors.
    items = []
    for sample in samples:
        survivor_responses = [by_cell[(sample.sample_id, c)] for c in survivors]
        seed = derive_seed(config.seed, "listwise", sample.sample_id)
        items.append(build_request(MODE_LISTWISE, sample, survivor_responses, rubric, seed))
    judged = evaluate_requests(backend, backend_config, items)
    _abort_on_failures(judged, STAGE_LISTWISE)
    list_verdicts = [item.verdict for item in judged if item.verdict is not None]
    listwise_decision = stage_listwise(list_verdicts, config)
    listwise_decision.judge_calls = len(items)
    stages.append(listwise_decision)
    listwise_order = listwise_decision.surviving

    if listwise_decision.action == ACTION_FINALIZE:
        return SelectionReport(
            winner=listwise_order[0],
            stages=stages,
            stability=stability,
            pending_human=[],
            config_echo=config.to_dict(),
            status=STATUS_FINAL,
            listwise_order=listwise_order,
        )

    # Stage 3: pairwise refinement of the flagged pairs.
    refine_pairs = [tuple(p) for p in listwise_decision.refine_pairs]
    items = []
    for sample in samples:
        for a, b in refine_pairs:
            seed = derive_seed(config.seed, "pairwise", sample.sample_id, a, b)
            first, second = pairwise_both_orders(
                sample, by_cell[(sample.sample_id, a)], by_cell[(sample.sample_id, b)],
                rubric, seed,
            )
            items.extend([first, second])
    judged = evaluate_requests(backend, backend_config, items)
    _abort_on_failures(judged, STAGE_PAIRWISE)
    pair_verdicts = [item.verdict for item in judged if item.verdict is not None]
    pairwise_decision = stage_pairwise_refine(pair_verdicts, refine_pairs, config, listwise_order)
    pairwise_decision.judge_calls = len(items)
    stages.append(pairwise_decision)

    if pairwise_decision.action == ACTION_FINALIZE:
        return SelectionReport(
            winner=pairwise_decision.surviving[0],
            stages=stages,
            stability=stability,
            pending_human=[],
            config_echo=config.to_dict(),
            status=STATUS_FINAL,
            listwise_order=listwise_order,
            pairwise_evidence=sorted(pair_verdicts, key=_verdict_sort_key),
        )

    # Stage 4: human verification tickets for the unresolved pairs.
    pending_cases: dict[str, tuple[str, CheckpointId, CheckpointId]] = {}
    unresolved = [tuple(p) for p in pairwise_decision.refine_pairs]
    sample_by_id = {s.sample_id: s for s in samples}
    enqueue_tuples = []
    for a, b in unresolved:
        rng = np.random.default_rng(
            np.random.SeedSequence(derive_seed(config.seed, "human", a, b))
        )
        count = min(config.human_samples_per_pair, len(samples))
        chosen = sorted(rng.choice(len(samples), size=count, replace=False))
        for idx in chosen:
            sid = samples[idx].sample_id
            ticket_id = ticket_id_for(sid, a, b)
            pending_cases[ticket_id] = (sid, a, b)
            enqueue_tuples.append(
                (sample_by_id[sid], by_cell[(sid, a)], by_cell[(sid, b)])
            )
    if queue is not None and enqueue_tuples:
        queue.enqueue(enqueue_tuples)

    evidence = [
        v for v in pair_verdicts if tuple(sorted((v.a, v.b))) in {tuple(sorted(p)) for p in unresolved}
    ]
    return SelectionReport(
        winner=pairwise_decision.surviving[0],
        stages=stages,
        stability=stability,
        pending_human=sorted(pending_cases),
        config_echo=config.to_dict(),
        status=STATUS_PROVISIONAL,
        pending_cases=pending_cases,
        pairwise_evidence=sorted(evidence, key=_verdict_sort_key),
        listwise_order=listwise_order,
    )


def _verdict_sort_key(v: PairwiseVerdict):
    return (v.sample_id, v.a, v.b, v.presented_first.value, v.source, v.reviewer_id or "")


def _stability_metrics(matrix: ScoreMatrix, config: PipelineConfig) -> dict[str, float]:
    n_samples = len(matrix.sample_ids)
    trials_cfg = ResampleConfig(
        n_resamples=config.stability_trials,
        subsample_size=min(config.resample.subsample_size, max(2, n_samples // 2)),
        seed=derive_seed(config.resample.seed, "stability"),
        replacement=False,
    )
    trials = subsample_trials(matrix, trials_cfg)
    return {
        "flip_rate": _flip_rate(trials),
        "inter_run_agreement": inter_run_agreement(trials),
        "top1_consistency": top1_consistency(trials),
    }


def resolve_human_verdicts(
    report: SelectionReport, human: Sequence[PairwiseVerdict], config: PipelineConfig | None = None
) -> SelectionReport:
    """Merge human verdicts as additional pairwise evidence and re-decide.

    Each human verdict carries the weight of one judge verdict. If the
    merged evidence flips the winner, the human-informed winner stands and
    the report is flagged with ``human_machine_disagreement``.
    """
    if not human:
        return report
    config = config or PipelineConfig.from_dict(report.config_echo)
    pending_pairs = {tuple(sorted((a, b))) for _, a, b in report.pending_cases.values()}
    known_cases = {
        (sid, *sorted((a, b))) for sid, a, b in report.pending_cases.values()
    }
    for v in human:
        key = (v.sample_id, *sorted((v.a, v.b)))
        if key not in known_cases:
            raise DataError(
                f"human verdict for unknown ticket case (sample {v.sample_id!r}, "
                f"pair {tuple(sorted((v.a, v.b)))})"
            )

    # Dedupe so the caller may pass the queue's full verdict list on every
    # round without double-counting evidence merged in a prior resolve.
    merged: list[PairwiseVerdict] = []
    seen_keys: set[tuple] = set()
    for v in list(report.pairwise_evidence) + list(human):
        key = _verdict_sort_key(v)
        if key in seen_keys:
            continue
        seen_keys.add(key)
        merged.append(v)
    stats = _pair_statistics(merged, sorted(pending_pairs), config)
    confidences = {pair_key(a, b): s.preference for (a, b), s in stats.items()}
    fallback = report.listwise_order or report.stages[-1].surviving
    winner, note, unresolved = _decide_from_pairs(stats, fallback, config)

    verdicts_per_ticket: dict[str, int] = {t: 0 for t in report.pending_cases}
    for v in merged:
        if v.source != "human":
            continue
        for t, (sid, a, b) in report.pending_cases.items():
            if v.sample_id == sid and {v.a, v.b} == {a, b}:
                verdicts_per_ticket[t] += 1
    quorum_reached = all(
        n >= config.max_verdicts_per_ticket for n in verdicts_per_ticket.values()
    )
    resolved = not unresolved or quorum_reached

    prior_winner = report.winner
    disagreement = report.human_machine_disagreement or (winner != prior_winner)
    rationale = f"merged {len(human)} human verdict(s)"
    if note:
        rationale += f"; {note}"
    if not resolved:
        rationale += "; near-tie unresolved, awaiting further verdicts"
    if winner != prior_winner:
        rationale += f"; human evidence flipped winner from {prior_winner} to {winner}"

    surviving = (winner, *[c for c in fallback if c != winner])
    decision = StageDecision(
        stage=STAGE_HUMAN,
        surviving=surviving,
        confidences=confidences,
        action=ACTION_FINALIZE if resolved else ACTION_ESCALATE,
        rationale=rationale,
    )
    return SelectionReport(
        winner=winner,
        stages=list(report.stages) + [decision],
        stability=report.stability,
        pending_human=[] if resolved else list(report.pending_human),
        config_echo=report.config_echo,
        status=STATUS_FINAL if resolved else STATUS_PROVISIONAL,
        human_machine_disagreement=disagreement,
        pending_cases={} if resolved else dict(report.pending_cases),
        pairwise_evidence=sorted(merged, key=_verdict_sort_key),
        listwise_order=report.listwise_order,
    )
