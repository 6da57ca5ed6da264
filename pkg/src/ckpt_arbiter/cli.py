"""Command-line entry point.

Subcommands: ingest, curate, judge, rank, confidence, stability,
pipeline run, simulate, report, serve. Every invocation logs the config
hash, seed, and written artifact hashes so a run can be reproduced from
its log line. Exit codes: 0 success, 1 usage error, 2 data error,
3 judge-backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .adjudication import AdjudicationQueue
from .confidence import (
    MomentSummary,
    ResampleConfig,
    bootstrap_preference,
    flip_rate,
    gaussian_preference,
    inter_run_agreement,
    subsample_trials,
    top1_consistency,
)
from .errors import ArbiterError, DataError, JudgeError
from .gateway import (
    MODE_LISTWISE,
    MODE_PAIRWISE,
    MODE_POINTWISE,
    HttpJudgeBackend,
    JudgeBackendConfig,
    Rubric,
    build_request,
    evaluate_requests,
    pairwise_both_orders,
)
from .ingest import CurationPolicy, curate, ingest_responses, ingest_samples
from .models import (
    CandidateResponse,
    EvaluationSample,
    OcrQuality,
    ScoreMatrix,
    validate_dataset,
)
from .pipeline import PipelineConfig, run_pipeline
from .ranking import ScoringWeights, percentile_aggregate, pointwise_mean, rank_from_scores
from .report import build_bundle, config_hash, render_report
from .seeding import derive_seed
from .simulate import (
    ExperimentConfig,
    ExperimentMetrics,
    SyntheticJudgeBackend,
    WorldConfig,
    make_world,
    run_experiment,
    write_world_dataset,
)
from .store import RunStore

RUN_ROOT_ENV = "CKPT_ARBITER_RUN_ROOT"

log = logging.getLogger("ckpt_arbiter")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_JUDGE = 3


def _build_parser() -> argparse.ArgumentParser:
    # Shared flags are legal both before and after the subcommand. The
    # subparser copies use SUPPRESS defaults so values parsed by the main
    # parser survive unless explicitly overridden after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--run-root", default=argparse.SUPPRESS,
                        help=f"run directory root (or ${RUN_ROOT_ENV})")
    common.add_argument("--run-id", default=argparse.SUPPRESS, help="run identifier")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="ckpt-arbiter")
    parser.add_argument("--run-root", default=None,
                        help=f"run directory root (or ${RUN_ROOT_ENV})")
    parser.add_argument("--run-id", default="run", help="run identifier")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="load and validate JSONL datasets into a run")
    p.add_argument("--samples", required=True)
    p.add_argument("--responses", required=True)

    p = sub.add_parser("curate", parents=[common],
                       help="apply a quality-aware curation policy")
    p.add_argument("--allow", default="readable", help="comma-separated quality labels")
    p.add_argument("--min-samples", type=int, default=0)
    p.add_argument("--require-tag", action="append", default=[])

    p = sub.add_parser("judge", parents=[common], help="run judge evaluation for one mode")
    p.add_argument("--mode", choices=[MODE_POINTWISE, MODE_LISTWISE, MODE_PAIRWISE], required=True)
    p.add_argument("--backend", choices=["synthetic", "http"], default="synthetic")
    p.add_argument("--world-config", help="world config JSON (synthetic backend)")
    p.add_argument("--endpoint", default="", help="judge endpoint URL (http backend)")
    p.add_argument("--model-name", default="judge")
    p.add_argument("--pair", action="append", default=[], help="ckptA,ckptB (pairwise mode)")

    p = sub.add_parser("rank", parents=[common], help="rank checkpoints from stored verdicts")
    p.add_argument("--method", choices=["pointwise", "listwise", "percentile"], required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.25)

    p = sub.add_parser("confidence", parents=[common], help="preference confidence for a checkpoint pair")
    p.add_argument("--method", choices=["gaussian", "bootstrap"], required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--resamples", type=int, default=2000)

    p = sub.add_parser("stability", parents=[common], help="subsampling stability metrics for the score matrix")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--subsample-size", type=int, default=None)

    p = sub.add_parser("pipeline", parents=[common], help="pipeline operations")
    pipe_sub = p.add_subparsers(dest="pipeline_command", required=True)
    pr = pipe_sub.add_parser("run", parents=[common], help="run the full multi-stage selection")
    pr.add_argument("--config", help="PipelineConfig JSON file")
    pr.add_argument("--samples", required=True)
    pr.add_argument("--responses", required=True)
    pr.add_argument("--backend", choices=["synthetic", "http"], default="synthetic")
    pr.add_argument("--world-config", help="world config JSON (synthetic backend)")
    pr.add_argument("--endpoint", default="")
    pr.add_argument("--model-name", default="judge")

    p = sub.add_parser("simulate", parents=[common], help="run seeded experiment campaigns")
    p.add_argument("--world-config", required=True)
    p.add_argument("--campaigns", type=int, default=5)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--subsample-size", type=int, default=300)
    p.add_argument("--compare-ambiguous", type=float, default=None,
                   help="also run a variant world with this ambiguous fraction")
    p.add_argument("--emit-dataset", action="store_true",
                   help="write the world's samples/responses JSONL into the run dir")

    p = sub.add_parser("report", parents=[common], help="render stored experiment metrics as tables")
    p.add_argument("--format", choices=["markdown", "json"], default="markdown")

    p = sub.add_parser("serve", parents=[common], help="host the adjudication queue HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8651)
    p.add_argument("--ui-dir", default=None)

    return parser


def _store_for(args, create: bool = True) -> RunStore:
    root = args.run_root or os.environ.get(RUN_ROOT_ENV)
    if not root:
        raise DataError(f"no run root: pass --run-root or set ${RUN_ROOT_ENV}")
    if create and not (Path(root) / args.run_id / "manifest.json").exists():
        return RunStore.create(root, args.run_id)
    return RunStore.open(root, args.run_id)


def _log_artifact(store: RunStore, name: str) -> None:
    log.info("artifact %s sha256=%s", name, store.artifact_hash(name))


def _load_models(store: RunStore):
    samples = [EvaluationSample.from_dict(d) for d in store.load_artifact("samples")]
    responses = [CandidateResponse.from_dict(d) for d in store.load_artifact("responses")]
    return samples, responses


def _synthetic_backend(args) -> SyntheticJudgeBackend:
    if not args.world_config:
        raise DataError("synthetic backend needs --world-config")
    config = WorldConfig.from_dict(json.loads(Path(args.world_config).read_text()))
    return SyntheticJudgeBackend(make_world(config))


def _backend_for(args):
    if args.backend == "synthetic":
        return _synthetic_backend(args), JudgeBackendConfig(model_name=args.model_name)
    if not args.endpoint:
        raise DataError("http backend needs --endpoint")
    return HttpJudgeBackend(), JudgeBackendConfig(
        endpoint=args.endpoint, model_name=args.model_name
    )


def _cmd_ingest(args) -> int:
    store = _store_for(args)
    samples = ingest_samples(args.samples)
    responses = ingest_responses(args.responses)
    report = validate_dataset(samples, responses)
    store.persist_artifact("samples", [s.to_dict() for s in samples])
    store.persist_artifact("responses", [r.to_dict() for r in responses])
    _log_artifact(store, "samples")
    _log_artifact(store, "responses")
    print(
        f"ingested {len(samples)} samples, {len(responses)} responses; "
        f"complete={report.complete} issues={report.issues}"
    )
    return EXIT_OK


def _cmd_curate(args) -> int:
    store = _store_for(args, create=False)
    samples, _ = _load_models(store)
    policy = CurationPolicy(
        allowed_qualities=frozenset(OcrQuality(q.strip()) for q in args.allow.split(",")),
        min_samples=args.min_samples,
        required_tags=tuple(args.require_tag),
    )
    result = curate(samples, policy)
    store.persist_artifact("curated_samples", [s.to_dict() for s in result.kept])
    store.persist_artifact(
        "curation_log",
        {"kept": len(result.kept), "excluded": len(result.excluded), "reasons": result.reasons},
    )
    _log_artifact(store, "curated_samples")
    print(f"kept {len(result.kept)} samples, excluded {len(result.excluded)}")
    return EXIT_OK


def _cmd_judge(args) -> int:
    store = _store_for(args, create=False)
    samples, responses = _load_models(store)
    backend, backend_cfg = _backend_for(args)
    rubric = Rubric()
    by_cell = {(r.sample_id, r.checkpoint_id): r for r in responses}
    checkpoints = sorted({r.checkpoint_id for r in responses})
    samples = sorted(samples, key=lambda s: s.sample_id)

    items = []
    if args.mode == MODE_POINTWISE:
        for sample in samples:
            for ckpt in checkpoints:
                seed = derive_seed(args.seed, "pointwise", sample.sample_id, ckpt)
                items.append(
                    build_request(
                        MODE_POINTWISE, sample, [by_cell[(sample.sample_id, ckpt)]], rubric, seed
                    )
                )
    elif args.mode == MODE_LISTWISE:
        for sample in samples:
            cell = [by_cell[(sample.sample_id, c)] for c in checkpoints]
            seed = derive_seed(args.seed, "listwise", sample.sample_id)
            items.append(build_request(MODE_LISTWISE, sample, cell, rubric, seed))
    else:
        pairs = [tuple(p.split(",")) for p in args.pair]
        if not pairs:
            raise DataError("pairwise judging needs at least one --pair ckptA,ckptB")
        for sample in samples:
            for a, b in pairs:
                seed = derive_seed(args.seed, "pairwise", sample.sample_id, a, b)
                first, second = pairwise_both_orders(
                    sample, by_cell[(sample.sample_id, a)], by_cell[(sample.sample_id, b)],
                    rubric, seed,
                )
                items.extend([first, second])

    judged = evaluate_requests(backend, backend_cfg, items)
    verdicts = [item.verdict for item in judged if item.verdict is not None]
    failures = len(judged) - len(verdicts)
    name = f"verdicts_{args.mode}"
    store.persist_artifact(name, [v.to_dict() for v in verdicts])
    _log_artifact(store, name)
    if args.mode == MODE_POINTWISE:
        matrix = ScoreMatrix.from_verdicts(
            checkpoints, [s.sample_id for s in samples], verdicts
        )
        store.persist_artifact("score_matrix", matrix.to_dict())
        _log_artifact(store, "score_matrix")
    print(f"judged {len(verdicts)} verdicts ({failures} failures) in mode {args.mode}")
    return EXIT_OK


def _cmd_rank(args) -> int:
    store = _store_for(args, create=False)
    if args.method == "listwise":
        from .models import ListwiseVerdict
        from .ranking import borda_scores

        verdicts = [
            ListwiseVerdict.from_dict(d) for d in store.load_artifact("verdicts_listwise")
        ]
        scores = borda_scores(verdicts)
    else:
        matrix = ScoreMatrix.from_dict(store.load_artifact("score_matrix"))
        if args.method == "percentile":
            weights = ScoringWeights(beta=args.beta, gamma=args.gamma)
            scores = {
                c: percentile_aggregate(matrix.present_scores(c), weights)
                for c in matrix.checkpoints
            }
        else:
            scores = {c: pointwise_mean(matrix, c) for c in matrix.checkpoints}
    print(f"| Checkpoint | Score ({args.method}) |")
    print("| --- | --- |")
    for ckpt in rank_from_scores(scores):
        print(f"| {ckpt} | {scores[ckpt]:.4f} |")
    return EXIT_OK


def _cmd_confidence(args) -> int:
    store = _store_for(args, create=False)
    matrix = ScoreMatrix.from_dict(store.load_artifact("score_matrix"))
    scores_a = matrix.present_scores(args.a)
    scores_b = matrix.present_scores(args.b)
    if args.method == "gaussian":
        p = gaussian_preference(
            MomentSummary.from_scores(scores_a), MomentSummary.from_scores(scores_b)
        )
    else:
        config = ResampleConfig(n_resamples=args.resamples, seed=args.seed, replacement=True)
        p = bootstrap_preference(scores_a, scores_b, config)
    print(f"P({args.a} > {args.b}) = {p:.6f} [{args.method}]")
    return EXIT_OK


def _cmd_stability(args) -> int:
    store = _store_for(args, create=False)
    matrix = ScoreMatrix.from_dict(store.load_artifact("score_matrix"))
    n = len(matrix.sample_ids)
    size = args.subsample_size or max(2, n // 2)
    config = ResampleConfig(
        n_resamples=args.trials, subsample_size=size, seed=args.seed, replacement=False
    )
    trials = subsample_trials(matrix, config)
    print(f"flip_rate={flip_rate(trials):.4f}")
    print(f"inter_run_agreement={inter_run_agreement(trials):.4f}")
    print(f"top1_consistency={top1_consistency(trials):.4f}")
    return EXIT_OK


def _cmd_pipeline_run(args) -> int:
    store = _store_for(args)
    if args.config:
        config = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        config = PipelineConfig(seed=args.seed)
    samples = ingest_samples(args.samples)
    responses = ingest_responses(args.responses)
    backend, backend_cfg = _backend_for(args)
    queue = AdjudicationQueue(store, seed=config.seed)
    log.info("pipeline config hash=%s seed=%s", config_hash(config.to_dict()), config.seed)
    report = run_pipeline(samples, responses, backend, config,
                          backend_config=backend_cfg, queue=queue)
    store.persist_artifact("selection_report", report.to_dict())
    _log_artifact(store, "selection_report")
    print(
        f"winner={report.winner} status={report.status} "
        f"stages={[s.stage for s in report.stages]} pending={len(report.pending_human)}"
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    store = _store_for(args)
    world_cfg = WorldConfig.from_dict(json.loads(Path(args.world_config).read_text()))
    experiment = ExperimentConfig(
        n_trials=args.trials, subsample_size=args.subsample_size, seed=args.seed
    )
    log.info("simulate config hash=%s seed=%s", config_hash(world_cfg.to_dict()), args.seed)
    metrics = run_experiment(world_cfg, experiment, args.campaigns)
    store.persist_artifact("experiment_metrics", metrics.to_dict())
    _log_artifact(store, "experiment_metrics")
    if args.compare_ambiguous is not None:
        variant = dict(world_cfg.to_dict())
        variant["ambiguous_fraction"] = args.compare_ambiguous
        comparison = run_experiment(WorldConfig.from_dict(variant), experiment, args.campaigns)
        store.persist_artifact("experiment_metrics_comparison", comparison.to_dict())
        _log_artifact(store, "experiment_metrics_comparison")
    if args.emit_dataset:
        world = make_world(world_cfg)
        write_world_dataset(
            world, store.run_dir / "world_samples.jsonl", store.run_dir / "world_responses.jsonl"
        )
        print(f"dataset written to {store.run_dir}")
    print(f"simulated {args.campaigns} campaign(s)")
    return EXIT_OK


def _cmd_report(args) -> int:
    store = _store_for(args, create=False)
    metrics = ExperimentMetrics.from_dict(store.load_artifact("experiment_metrics"))
    comparison = None
    if store.has_artifact("experiment_metrics_comparison"):
        comparison = ExperimentMetrics.from_dict(
            store.load_artifact("experiment_metrics_comparison")
        )
    provenance = {
        "run_id": store.run_id,
        "metrics_hash": store.artifact_hash("experiment_metrics"),
        "seed": args.seed,
    }
    bundle = build_bundle(metrics, comparison, provenance)
    print(render_report(bundle, args.format))
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve

    store = _store_for(args)
    queue = AdjudicationQueue(store, seed=args.seed)
    serve(queue, host=args.host, port=args.port, static_dir=args.ui_dir)
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "curate": _cmd_curate,
    "judge": _cmd_judge,
    "rank": _cmd_rank,
    "confidence": _cmd_confidence,
    "stability": _cmd_stability,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    log.info("command=%s run_id=%s seed=%s", args.command, args.run_id, args.seed)
    try:
        if args.command == "pipeline":
            return _cmd_pipeline_run(args)
        return _COMMANDS[args.command](args)
    except JudgeError as exc:
        print(f"judge error: {exc}", file=sys.stderr)
        return EXIT_JUDGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArbiterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
