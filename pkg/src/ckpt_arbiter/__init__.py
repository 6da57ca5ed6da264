"""Checkpoint selection under noisy judge evaluations.

Public surface: domain models, dataset ingest and curation, the judge
gateway, rank aggregation, confidence and stability estimation, the
multi-stage selection pipeline, the human adjudication queue, and the
synthetic-world simulator.
"""

from .confidence import (
    MomentSummary,
    ResampleConfig,
    TrialRankings,
    agreement_with_subsampling,
    bootstrap_preference,
    flip_rate,
    gaussian_preference,
    inter_run_agreement,
    parametric_ci,
    score_std_dev,
    subsample_trials,
    top1_consistency,
)
from .ingest import CurationPolicy, CurationResult, curate, ingest_responses, ingest_samples
from .models import (
    CandidateResponse,
    CheckpointId,
    EvaluationSample,
    ListwiseVerdict,
    OcrQuality,
    PairwiseVerdict,
    PairwiseWinner,
    PointwiseVerdict,
    ScoreMatrix,
    ValidationReport,
    validate_dataset,
)
from .pipeline import (
    PipelineConfig,
    SelectionReport,
    StageDecision,
    resolve_human_verdicts,
    run_pipeline,
)
from .ranking import (
    PercentileSummary,
    ScoringWeights,
    WinRateEntry,
    WinRateTable,
    borda_scores,
    percentile_score,
    percentile_summary,
    pointwise_mean,
    rank_from_scores,
    win_rate_from_listwise,
    win_rate_from_pairwise,
)
from .simulate import SyntheticJudgeBackend, WorldConfig, make_world, run_experiment
from .store import RunStore

__version__ = "0.1.0"
