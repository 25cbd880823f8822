"""Render result sets into CSV tables and simple self-contained SVG charts.

Every numeric cell comes straight out of ``metrics.aggregate`` (reports never
recompute means another way); CSVs are deterministic, comma-separated with a
header row and ``\\n`` line endings, values formatted with 4 fractional
digits. Charts round to 3 digits and need no external libraries. Missing
cells and failed sweep steps render as empty fields and broken line
segments, never as zeros.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .metrics import GroupSummary, MetricRow, aggregate, attraction_effect
from .runner import ResultSet

REPORT_KINDS = ("overall", "by_condition", "learning_curve", "metric_comparison", "attraction")
METRIC_CHOICES = ("binary", "pd", "both")
FORMATS = ("csv", "svg")

CONDITION_COLUMNS = (
    ("short", "absent"),
    ("short", "present"),
    ("long", "absent"),
    ("long", "present"),
)

_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
    "#7f7f7f",
)
_BASELINE_COLOR = "#cc0000"


class ReportError(ValueError):
    """The requested report cannot be produced from this result set."""


@dataclass(frozen=True)
class ReportSpec:
    """What to render: report kind, metric selection, output format, extras.

    ``baselines`` (named horizontal reference values) are only meaningful for
    learning curves; ``condition_detail`` adds length/attractor columns to the
    learning-curve output.
    """

    kind: str
    metric: str = "both"
    fmt: str = "csv"
    baselines: Optional[Mapping[str, float]] = None
    condition_detail: bool = False

    def __post_init__(self) -> None:
        if self.kind not in REPORT_KINDS:
            raise ReportError(f"unknown report kind {self.kind!r}")
        if self.metric not in METRIC_CHOICES:
            raise ReportError(f"unknown metric {self.metric!r}")
        if self.fmt not in FORMATS:
            raise ReportError(f"unknown format {self.fmt!r}")
        if self.baselines and self.kind != "learning_curve":
            raise ReportError("baselines are only valid for learning_curve reports")

    @property
    def metrics(self) -> tuple[str, ...]:
        return ("binary", "pd") if self.metric == "both" else (self.metric,)


def _fmt4(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def _fmt3(value: float) -> str:
    return f"{value:.3f}"


def _mean(summary: GroupSummary, metric: str) -> float:
    return summary.mean_binary if metric == "binary" else summary.mean_pd


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _out_path(out_dir: Union[str, Path], spec: ReportSpec) -> Path:
    return Path(out_dir) / f"{spec.kind}__{spec.metric}.{spec.fmt}"


def _require_rows(rs: ResultSet) -> None:
    if not rs.rows:
        raise ReportError("result set has no metric rows")


# --- SVG primitives -----------------------------------------------------------


def _svg_doc(width: int, height: int, body: list[str], title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _y_scale(values: Sequence[float], height: float, top: float) -> tuple[float, float, float]:
    lo = min(values)
    hi = max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad, height / ((hi - lo) + 2 * pad)


def _svg_line_chart(
    series: Sequence[tuple[str, Sequence[tuple[float, Optional[float]]]]],
    baselines: Mapping[str, float],
    title: str,
    width: int = 860,
    height: int = 460,
) -> str:
    left, right, top, bottom = 70, width - 200, 40, height - 50
    plot_w, plot_h = right - left, bottom - top
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts if y is not None]
    ys.extend(baselines.values())
    if not xs or not ys:
        raise ReportError("nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi, _ = _y_scale(ys, plot_h, top)

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return bottom - (y - y_lo) / (y_hi - y_lo) * plot_h

    body = [f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>']
    for i in range(5):
        y_val = y_lo + (y_hi - y_lo) * i / 4
        y_px = sy(y_val)
        body.append(f'<line x1="{left}" y1="{y_px:.1f}" x2="{right}" y2="{y_px:.1f}" stroke="#eee"/>')
        body.append(f'<text x="{left - 6}" y="{y_px + 4:.1f}" text-anchor="end">{_fmt3(y_val)}</text>')
    for i in range(5):
        x_val = x_lo + (x_hi - x_lo) * i / 4
        x_px = sx(x_val)
        body.append(
            f'<text x="{x_px:.1f}" y="{bottom + 16}" text-anchor="middle">{int(round(x_val))}</text>'
        )
    for idx, (name, points) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        segment: list[str] = []
        segments = [segment]
        for x, y in points:
            if y is None:
                segment = []
                segments.append(segment)
            else:
                segment.append(f"{sx(x):.1f},{sy(y):.1f}")
        for seg in segments:
            if len(seg) >= 2:
                body.append(
                    f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
                )
        for x, y in points:
            if y is not None:
                body.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = top + 14 * idx
        body.append(f'<line x1="{right + 8}" y1="{ly}" x2="{right + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{right + 32}" y="{ly + 4}">{name}</text>')
    for b_idx, name in enumerate(sorted(baselines)):
        y_px = sy(baselines[name])
        body.append(
            f'<line x1="{left}" y1="{y_px:.1f}" x2="{right}" y2="{y_px:.1f}" '
            f'stroke="{_BASELINE_COLOR}" stroke-dasharray="6 3"/>'
        )
        ly = top + 14 * (len(series) + b_idx)
        body.append(
            f'<line x1="{right + 8}" y1="{ly}" x2="{right + 28}" y2="{ly}" '
            f'stroke="{_BASELINE_COLOR}" stroke-dasharray="6 3" stroke-width="2"/>'
        )
        body.append(f'<text x="{right + 32}" y="{ly + 4}">{name} = {_fmt3(baselines[name])}</text>')
    return _svg_doc(width, height, body, title)


def _svg_bar_chart(
    labels: Sequence[str],
    series: Sequence[tuple[str, Sequence[Optional[float]]]],
    title: str,
    width: int = 860,
    height: int = 460,
) -> str:
    left, right, top, bottom = 70, width - 200, 40, height - 70
    plot_w, plot_h = right - left, bottom - top
    values = [v for _, vals in series for v in vals if v is not None]
    if not values or not labels:
        raise ReportError("nothing to plot")
    y_lo, y_hi, _ = _y_scale(values + [0.0], plot_h, top)

    def sy(y: float) -> float:
        return bottom - (y - y_lo) / (y_hi - y_lo) * plot_h

    body = [f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>']
    for i in range(5):
        y_val = y_lo + (y_hi - y_lo) * i / 4
        y_px = sy(y_val)
        body.append(f'<line x1="{left}" y1="{y_px:.1f}" x2="{right}" y2="{y_px:.1f}" stroke="#eee"/>')
        body.append(f'<text x="{left - 6}" y="{y_px + 4:.1f}" text-anchor="end">{_fmt3(y_val)}</text>')
    zero_px = sy(0.0)
    body.append(f'<line x1="{left}" y1="{zero_px:.1f}" x2="{right}" y2="{zero_px:.1f}" stroke="#999"/>')
    group_w = plot_w / len(labels)
    bar_w = max(2.0, 0.8 * group_w / max(1, len(series)))
    for g_idx, label in enumerate(labels):
        gx = left + g_idx * group_w
        for s_idx, (_, vals) in enumerate(series):
            value = vals[g_idx]
            if value is None:
                continue
            color = _PALETTE[s_idx % len(_PALETTE)]
            x = gx + group_w * 0.1 + s_idx * bar_w
            y0, y1 = sorted((sy(value), zero_px))
            body.append(
                f'<rect x="{x:.1f}" y="{y0:.1f}" width="{bar_w:.1f}" height="{max(0.5, y1 - y0):.1f}" fill="{color}"/>'
            )
        body.append(
            f'<text x="{gx + group_w / 2:.1f}" y="{bottom + 14}" text-anchor="middle" font-size="9">{label}</text>'
        )
    for idx, (name, _) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        ly = top + 14 * idx
        body.append(f'<rect x="{right + 8}" y="{ly - 8}" width="12" height="10" fill="{color}"/>')
        body.append(f'<text x="{right + 26}" y="{ly + 1}">{name}</text>')
    return _svg_doc(width, height, body, title)


# --- report emitters -----------------------------------------------------------


def emit_overall(rs: ResultSet, spec: ReportSpec, out_dir: Union[str, Path]) -> Path:
    """Mean metric per (scorer x dependency)."""
    _require_rows(rs)
    summaries = aggregate(rs.rows, ("scorer", "dependency"))
    path = _out_path(out_dir, spec)
    if spec.fmt == "csv":
        rows = [
            [str(s.group_key["scorer"]), str(s.group_key["dependency"]), metric, _fmt4(_mean(s, metric)), str(s.n)]
            for s in summaries
            for metric in spec.metrics
        ]
        return _write_csv(path, ("scorer", "dependency", "metric", "mean", "n"), rows)
    labels = [f'{s.group_key["scorer"]}|{s.group_key["dependency"]}' for s in summaries]
    series = [(metric, [_mean(s, metric) for s in summaries]) for metric in spec.metrics]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg_bar_chart(labels, series, "mean accuracy by scorer and dependency"), encoding="utf-8")
    return path


def emit_condition_breakdown(rs: ResultSet, spec: ReportSpec, out_dir: Union[str, Path]) -> Path:
    """Mean metric per (scorer x dependency), split into the four length/attractor cells."""
    _require_rows(rs)
    summaries = aggregate(rs.rows, ("scorer", "dependency", "length", "attractor"))
    if not summaries:
        raise ReportError("no groups to report")
    cells: dict[tuple[str, str], dict[tuple[str, str], GroupSummary]] = {}
    for s in summaries:
        outer = (str(s.group_key["scorer"]), str(s.group_key["dependency"]))
        inner = (str(s.group_key["length"]), str(s.group_key["attractor"]))
        cells.setdefault(outer, {})[inner] = s
    header = ["scorer", "dependency", "metric"] + [f"{l}_{a}" for l, a in CONDITION_COLUMNS]
    path = _out_path(out_dir, spec)
    if spec.fmt == "csv":
        rows = []
        for outer in sorted(cells):
            for metric in spec.metrics:
                row = [outer[0], outer[1], metric]
                for col in CONDITION_COLUMNS:
                    summary = cells[outer].get(col)
                    row.append(_fmt4(_mean(summary, metric)) if summary else "")
                rows.append(row)
        return _write_csv(path, header, rows)
    labels = [f"{l}/{a}" for l, a in CONDITION_COLUMNS]
    series = []
    for outer in sorted(cells):
        for metric in spec.metrics:
            series.append(
                (
                    f"{outer[0]}|{outer[1]}|{metric}",
                    [
                        (_mean(cells[outer][col], metric) if col in cells[outer] else None)
                        for col in CONDITION_COLUMNS
                    ],
                )
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg_bar_chart(labels, series, "mean accuracy by experimental condition"), encoding="utf-8")
    return path


def _curve_table(rs: ResultSet, spec: ReportSpec) -> list[dict]:
    """Long-format curve rows honoring condition detail, with explicit null gaps."""
    sweep_rows = [r for r in rs.rows if r.checkpoint_steps is not None]
    if not sweep_rows and not rs.curve:
        raise ReportError("result set has no checkpoint dimension; run a sweep first")
    gap_pairs: set[tuple[str, int]] = set()
    if rs.curve:
        gap_pairs = {(r["scorer"], r["steps"]) for r in rs.curve if r["value"] is None}
    table: list[dict] = []
    if spec.condition_detail:
        if rs.curve is not None:
            for r in rs.curve:
                if r["metric"] in spec.metrics:
                    table.append(dict(r))
        else:
            for s in aggregate(sweep_rows, ("scorer", "checkpoint", "dependency", "length", "attractor")):
                for metric in spec.metrics:
                    table.append(
                        {
                            "scorer": s.group_key["scorer"],
                            "steps": s.group_key["checkpoint"],
                            "dependency": s.group_key["dependency"],
                            "length": s.group_key["length"],
                            "attractor": s.group_key["attractor"],
                            "metric": metric,
                            "value": _mean(s, metric),
                        }
                    )
    else:
        deps = sorted({r.condition.dependency.value for r in sweep_rows})
        if rs.curve:
            deps = sorted(set(deps) | {r["dependency"] for r in rs.curve})
        for s in aggregate(sweep_rows, ("scorer", "checkpoint", "dependency")):
            for metric in spec.metrics:
                table.append(
                    {
                        "scorer": s.group_key["scorer"],
                        "steps": s.group_key["checkpoint"],
                        "dependency": s.group_key["dependency"],
                        "metric": metric,
                        "value": _mean(s, metric),
                    }
                )
        for scorer_id, steps in sorted(gap_pairs):
            for dep in deps:
                for metric in spec.metrics:
                    table.append(
                        {"scorer": scorer_id, "steps": steps, "dependency": dep, "metric": metric, "value": None}
                    )
    table.sort(
        key=lambda r: (
            r["scorer"],
            r["dependency"],
            r.get("length", ""),
            r.get("attractor", ""),
            r["metric"],
            r["steps"],
        )
    )
    return table


def emit_learning_curve(rs: ResultSet, spec: ReportSpec, out_dir: Union[str, Path]) -> Path:
    """Mean metric per checkpoint step, long format, steps ascending per series.

    Baselines appear as constant reference series in the CSV and as red
    horizontal lines in the SVG.
    """
    table = _curve_table(rs, spec)
    baselines = dict(spec.baselines or {})
    steps_seen = sorted({r["steps"] for r in table})
    path = _out_path(out_dir, spec)
    if spec.fmt == "csv":
        columns = (
            ["scorer", "steps", "dependency", "length", "attractor", "metric", "value"]
            if spec.condition_detail
            else ["scorer", "steps", "dependency", "metric", "value"]
        )
        rows = [[
            str(r["scorer"]), str(r["steps"]), str(r["dependency"]),
            *( [str(r["length"]), str(r["attractor"])] if spec.condition_detail else [] ),
            r["metric"], _fmt4(r["value"]),
        ] for r in table]
        for name in sorted(baselines):
            for metric in spec.metrics:
                for steps in steps_seen:
                    rows.append(
                        [f"baseline:{name}", str(steps), ""]
                        + ([""] * 2 if spec.condition_detail else [])
                        + [metric, _fmt4(baselines[name])]
                    )
        return _write_csv(path, columns, rows)
    series_map: dict[str, list[tuple[float, Optional[float]]]] = {}
    for r in table:
        parts = [str(r["scorer"]), str(r["dependency"])]
        if spec.condition_detail:
            parts += [str(r["length"]), str(r["attractor"])]
        parts.append(r["metric"])
        series_map.setdefault("|".join(parts), []).append((float(r["steps"]), r["value"]))
    series = [(name, sorted(pts)) for name, pts in sorted(series_map.items())]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        _svg_line_chart(series, baselines, "mean accuracy by checkpoint"), encoding="utf-8"
    )
    return path


def emit_metric_comparison(
    rs: ResultSet,
    spec: ReportSpec,
    out_dir: Union[str, Path],
    dims: Sequence[str] = ("scorer", "dependency"),
) -> Path:
    """Side-by-side binary vs PD means per group, with the (always >= 0) gap."""
    _require_rows(rs)
    summaries = aggregate(rs.rows, tuple(dims))
    if not summaries:
        raise ReportError("empty selection")
    path = _out_path(out_dir, spec)
    if spec.fmt == "csv":
        header = [*dims, "n", "mean_binary", "mean_pd", "gap"]
        rows = [
            [
                *(str(s.group_key[d]) for d in dims),
                str(s.n),
                _fmt4(s.mean_binary),
                _fmt4(s.mean_pd),
                _fmt4(s.mean_binary - s.mean_pd),
            ]
            for s in summaries
        ]
        return _write_csv(path, header, rows)
    labels = ["|".join(str(s.group_key[d]) for d in dims) for s in summaries]
    series = [
        ("binary", [s.mean_binary for s in summaries]),
        ("pd", [s.mean_pd for s in summaries]),
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg_bar_chart(labels, series, "binary vs probability-distance accuracy"), encoding="utf-8")
    return path


def emit_attraction(rs: ResultSet, spec: ReportSpec, out_dir: Union[str, Path]) -> Path:
    """Attractor-effect deltas (absent minus present) per scorer and dependency/length."""
    _require_rows(rs)
    by_scorer: dict[str, list[MetricRow]] = {}
    for row in rs.rows:
        by_scorer.setdefault(row.scorer_id, []).append(row)
    records: list[tuple[str, str, str, str, float]] = []
    for scorer_id in sorted(by_scorer):
        effects = attraction_effect(
            aggregate(by_scorer[scorer_id], ("dependency", "length", "attractor"))
        )
        for effect in effects:
            for metric, delta in (("binary", effect.delta_binary), ("pd", effect.delta_pd)):
                if metric in spec.metrics:
                    records.append((scorer_id, effect.dependency, effect.length, metric, delta))
    path = _out_path(out_dir, spec)
    if spec.fmt == "csv":
        rows = [[s, d, l, m, _fmt4(v)] for s, d, l, m, v in records]
        return _write_csv(path, ("scorer", "dependency", "length", "metric", "delta"), rows)
    labels_order = sorted({(d, l) for _, d, l, _, _ in records})
    labels = [f"{d}/{l}" for d, l in labels_order]
    series = []
    for scorer_id in sorted(by_scorer):
        for metric in spec.metrics:
            values: list[Optional[float]] = []
            for d, l in labels_order:
                found = [v for s, dd, ll, m, v in records if s == scorer_id and (dd, ll) == (d, l) and m == metric]
                values.append(found[0] if found else None)
            series.append((f"{scorer_id}|{metric}", values))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_svg_bar_chart(labels, series, "attraction effect (absent - present)"), encoding="utf-8")
    return path


_EMITTERS = {
    "overall": emit_overall,
    "by_condition": emit_condition_breakdown,
    "learning_curve": emit_learning_curve,
    "metric_comparison": emit_metric_comparison,
    "attraction": emit_attraction,
}


def emit_report(rs: ResultSet, spec: ReportSpec, out_dir: Union[str, Path]) -> Path:
    """Dispatch to the emitter for ``spec.kind``; returns the written path."""
    return _EMITTERS[spec.kind](rs, spec, out_dir)
