"""Report assembly and rendering.

Tables mirror the shapes used for evaluation summaries: flip rate and
inter-run agreement per dataset, top-1 consistency and score spread per
ranking method, pairwise win rates, confidence levels, and the two
appendix-style comparisons (parametric vs subsampling agreement, mean vs
percentile scoring). Markdown output carries direction markers; JSON output
keeps full precision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import DataError
from .simulate import ExperimentMetrics

TABLE_NAMES = (
    "curation_metrics",
    "global_consistency",
    "win_rates",
    "confidence_levels",
    "appendix_a",
    "appendix_b",
)

REPORT_SCHEMA_VERSION = "1"

_UP = "↑"
_DOWN = "↓"


@dataclass
class ReportBundle:
    tables: dict[str, dict[str, Any]] = field(default_factory=dict)
    provenance: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tables": self.tables,
            "provenance": self.provenance,
        }


def config_hash(config: dict[str, Any]) -> str:
    data = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:16]


def _table(title: str, columns: list[tuple[str, str | None]], rows: list[list]) -> dict:
    return {
        "title": title,
        "columns": [{"name": name, "direction": direction} for name, direction in columns],
        "rows": rows,
    }


def build_bundle(
    experiment: ExperimentMetrics,
    comparison: ExperimentMetrics | None = None,
    provenance: dict[str, Any] | None = None,
) -> ReportBundle:
    """Assemble every table computable from one experiment run.

    ``comparison`` supplies the degraded-data counterpart for the curation
    table; without it that table reports the primary world only.
    """
    bundle = ReportBundle(provenance=provenance or {})

    rows = [
        [
            "Primary world",
            experiment.mean("flip_rate", "pointwise"),
            experiment.mean("inter_run_agreement", "pointwise"),
        ]
    ]
    if comparison is not None:
        rows.insert(
            0,
            [
                "Comparison world",
                comparison.mean("flip_rate", "pointwise"),
                comparison.mean("inter_run_agreement", "pointwise"),
            ],
        )
    bundle.tables["curation_metrics"] = _table(
        "Ranking metrics by dataset",
        [("Dataset", None), ("Ranking Flip Rate", "down"), ("Inter-run Agreement", "up")],
        rows,
    )

    bundle.tables["global_consistency"] = _table(
        "Global ranking consistency by method",
        [("Method", None), ("Top-1 Consistency", "up"), ("Std. Dev. of Score", "down")],
        [
            [
                method.capitalize(),
                experiment.mean("top1_consistency", method),
                experiment.mean("score_std", method),
            ]
            for method in ("pointwise", "listwise")
        ],
    )

    win_rows = []
    first = experiment.campaigns[0]
    for pair_label in sorted(first.win_rates):
        point = sum(c.win_rates[pair_label]["pointwise"] for c in experiment.campaigns)
        listw = sum(c.win_rates[pair_label]["listwise"] for c in experiment.campaigns)
        n = len(experiment.campaigns)
        win_rows.append([pair_label, point / n, listw / n])
    bundle.tables["win_rates"] = _table(
        "Win rates between checkpoints",
        [("Comparison", None), ("Pointwise", None), ("Listwise", None)],
        win_rows,
    )

    bundle.tables["confidence_levels"] = _table(
        "Confidence levels by method",
        [("Method", None), ("P(A>B)", "up")],
        [
            [method.capitalize(), experiment.mean("best_pair_preference", method)]
            for method in ("pointwise", "listwise", "pairwise")
        ],
    )

    bundle.tables["appendix_a"] = _table(
        "Parametric vs subsampling confidence",
        [("Method", None), ("Agreement with Subsampling", "up")],
        [
            ["Parametric CI", experiment.mean("parametric_agreement")],
            ["Bootstrap (subsampling)", experiment.mean("bootstrap_agreement")],
        ],
    )

    bundle.tables["appendix_b"] = _table(
        "Mean-only vs percentile scoring",
        [("Metric", None), ("Mean-only", None), ("Percentile-based", None)],
        [
            [
                "Ranking stability",
                experiment.mean("inter_run_agreement", "pointwise"),
                experiment.mean("inter_run_agreement", "percentile"),
            ],
            [
                "Worst-case error rate",
                experiment.mean("worst_case_error_rate", "mean"),
                experiment.mean("worst_case_error_rate", "percentile"),
            ],
        ],
    )
    return bundle


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def render_report(bundle: ReportBundle, fmt: str = "markdown") -> str:
    """Render all known tables; missing ones get an explicit placeholder row."""
    if fmt == "json":
        return json.dumps(bundle.to_dict(), sort_keys=True, indent=2)
    if fmt != "markdown":
        raise DataError(f"unknown report format {fmt!r}")

    parts: list[str] = []
    for name in TABLE_NAMES:
        table = bundle.tables.get(name)
        if table is None:
            parts.append(f"## {name}\n\n| not computed |\n| --- |\n")
            continue
        header_cells = []
        for col in table["columns"]:
            marker = {None: "", "up": f" {_UP}", "down": f" {_DOWN}"}[col["direction"]]
            header_cells.append(f"{col['name']}{marker}")
        lines = [
            f"## {table['title']}",
            "",
            "| " + " | ".join(header_cells) + " |",
            "| " + " | ".join("---" for _ in header_cells) + " |",
        ]
        for row in table["rows"]:
            lines.append("| " + " | ".join(_format_cell(v) for v in row) + " |")
        parts.append("\n".join(lines) + "\n")
    if bundle.provenance:
        prov = ", ".join(f"{k}={v}" for k, v in sorted(bundle.provenance.items()))
        parts.append(f"provenance: {prov}\n")
    return "\n".join(parts)
