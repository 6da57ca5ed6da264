from __future__ import annotations

import json

import pytest

from ckpt_arbiter.report import ReportBundle, build_bundle, config_hash, render_report
from ckpt_arbiter.simulate import ExperimentConfig, WorldConfig, run_experiment


@pytest.fixture(scope="module")
def metrics():
    config = WorldConfig(
        n_checkpoints=3,
        true_qualities=(0.7, 0.6, 0.5),
        n_samples=40,
        noise_sigma_readable=0.1,
        noise_sigma_ambiguous=0.1,
        seed=2,
    )
    experiment = ExperimentConfig(n_trials=4, subsample_size=20, n_bootstrap=150, seed=3)
    return run_experiment(config, experiment, n_campaigns=2)


def test_bundle_contains_all_tables(metrics):
    bundle = build_bundle(metrics)
    assert set(bundle.tables) == {
        "curation_metrics",
        "global_consistency",
        "win_rates",
        "confidence_levels",
        "appendix_a",
        "appendix_b",
    }


def test_markdown_has_direction_markers(metrics):
    text = render_report(build_bundle(metrics), "markdown")
    assert "Ranking Flip Rate ↓" in text
    assert "Top-1 Consistency ↑" in text
    assert "| Pointwise |" in text


def test_markdown_rounds_to_two_decimals(metrics):
    bundle = build_bundle(metrics)
    bundle.tables["confidence_levels"]["rows"][0][1] = 0.61234
    text = render_report(bundle, "markdown")
    assert "0.61" in text
    assert "0.61234" not in text


def test_json_keeps_full_precision(metrics):
    bundle = build_bundle(metrics)
    bundle.tables["confidence_levels"]["rows"][0][1] = 0.612345678
    payload = json.loads(render_report(bundle, "json"))
    value = payload["tables"]["confidence_levels"]["rows"][0][1]
    assert value == 0.612345678


def test_missing_tables_render_not_computed():
    text = render_report(ReportBundle(), "markdown")
    assert text.count("not computed") == 6


def test_json_render_is_lossless_round_trip(metrics):
    bundle = build_bundle(metrics, provenance={"run_id": "r1"})
    first = render_report(bundle, "json")
    reparsed = json.loads(first)
    rebuilt = ReportBundle(tables=reparsed["tables"], provenance=reparsed["provenance"])
    assert render_report(rebuilt, "json") == first


def test_comparison_world_adds_row(metrics):
    bundle = build_bundle(metrics, comparison=metrics)
    assert len(bundle.tables["curation_metrics"]["rows"]) == 2


def test_config_hash_stable():
    a = config_hash({"x": 1, "y": [1, 2]})
    b = config_hash({"y": [1, 2], "x": 1})
    assert a == b
    assert len(a) == 16


def test_unknown_format_rejected(metrics):
    from ckpt_arbiter.errors import DataError

    with pytest.raises(DataError):
        render_report(build_bundle(metrics), "yaml")
