"""
Plain-text reports: a fixed-width table for people followed by a JSON block
for scripts.

Lengths display in millimeters with one decimal; accuracies as percentages.
"""

import json
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

from ..metrics import EvaluationReport
from ..optimizer import AblationRow, ablation_table

JSON_MARKER = "--- json ---"


def mm(meters: float) -> str:
    return f"{meters * 1000.0:.1f}"


def percent(fraction: float) -> str:
    return f"{fraction * 100.0:.1f}"


METRIC_ROWS: List[Tuple[str, Callable[[EvaluationReport], str]]] = [
    ("EPE (mm)", lambda r: mm(r.flow.epe)),
    ("1-Cos", lambda r: f"{r.flow.one_minus_cos:.4f}"),
    ("Acc.S (%)", lambda r: percent(r.flow.acc_strict)),
    ("Acc.R (%)", lambda r: percent(r.flow.acc_relaxed)),
    ("MPJPE (mm)", lambda r: mm(r.pose.mpjpe)),
    ("PA (mm)", lambda r: mm(r.pose.pa_mpjpe)),
    ("MAE (mm)", lambda r: mm(r.depth.mae)),
    ("SiLog", lambda r: f"{r.depth.silog:.2f}"),
]


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    widths = [max(len(str(row[k])) for row in [header, *rows]) for k in range(len(header))]
    lines = []
    for index, row in enumerate([header, *rows]):
        cells = [str(row[0]).ljust(widths[0])] + [str(cell).rjust(widths[k]) for k, cell in enumerate(row) if k]
        lines.append("  ".join(cells).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return lines


def _json_block(payload: object) -> List[str]:
    return [JSON_MARKER, json.dumps(payload, sort_keys=True, indent=2)]


def render_report(reports: Mapping[str, EvaluationReport]) -> str:
    """One column per labelled report, in the mapping's order."""
    labels = list(reports)
    rows = [[name] + [fmt(reports[label]) for label in labels] for name, fmt in METRIC_ROWS]
    lines = _table(["metric", *labels], rows)
    lines += _json_block({label: report.to_dict() for label, report in reports.items()})
    return "\n".join(lines) + "\n"


def render_ablation(rows: Sequence[AblationRow]) -> str:
    body = [[row.label, mm(row.epe_m), mm(row.mpjpe_m), mm(row.mae_m)] for row in rows]
    lines = _table(["run", "EPE (mm)", "MPJPE (mm)", "MAE (mm)"], body)
    lines += _json_block(ablation_table(rows))
    return "\n".join(lines) + "\n"


def render_scores(parts: Mapping[str, float], weights: Mapping[str, float], total: float, extras: Dict[str, object]) -> str:
    """Constraint values, their weights and the weighted total."""
    body = [[name, f"{weights[name]:g}", f"{value:.6g}"] for name, value in parts.items()]
    body.append(["total", "", f"{total:.6g}"])
    lines = _table(["constraint", "weight", "value"], body)
    lines += _json_block({"parts": dict(parts), "weights": dict(weights), "total": total, **extras})
    return "\n".join(lines) + "\n"


def render_gradcheck(results: Mapping[str, Mapping[int, float]], thresholds: Mapping[str, float]) -> str:
    body = []
    for name, errors in results.items():
        worst = max(errors.values())
        verdict = "pass" if worst <= thresholds[name] else "FAIL"
        body.append([name, str(len(errors)), f"{worst:.3e}", f"{thresholds[name]:.0e}", verdict])
    lines = _table(["constraint", "seeds", "max rel. error", "threshold", "result"], body)
    payload = {name: {str(seed): error for seed, error in errors.items()} for name, errors in results.items()}
    lines += _json_block(payload)
    return "\n".join(lines) + "\n"
