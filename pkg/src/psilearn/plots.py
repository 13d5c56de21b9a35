"""Deterministic SVG line charts for sweep results.

Hand-rolled SVG output (no plotting library) so that re-rendering the same
aggregates produces byte-identical files. One file per figure: accuracy by
shots, mean alpha by shots, accuracy by alpha bin, mean edge weight of the
distinguishing vs other relations by shots, and accuracy by distinguishing
weight bin. Accuracy charts draw a dashed chance line at 0.5 and Wilson 95%
bands.
"""

from __future__ import annotations

from pathlib import Path

from .relgraph import NUM_RELATIONS, RELATION_NAMES
from .scenegen import default_catalog

_W, _H = 480, 320
_ML, _MR, _MT, _MB = 56, 16, 24, 44
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _sx(x: float, lo: float, hi: float) -> float:
    span = hi - lo if hi > lo else 1.0
    return _ML + (x - lo) / span * (_W - _ML - _MR)


def _sy(y: float, lo: float, hi: float) -> float:
    span = hi - lo if hi > lo else 1.0
    return _H - _MB - (y - lo) / span * (_H - _MT - _MB)


class _Chart:
    def __init__(self, title: str, xlab: str, ylab: str, xlo, xhi, ylo, yhi):
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2:.1f}" y="15" text-anchor="middle" font-size="12">{title}</text>',
            f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 8}" text-anchor="middle" '
            f'font-size="11">{xlab}</text>',
            f'<text x="14" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" font-size="11" '
            f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2:.1f})">{ylab}</text>',
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
            f'fill="none" stroke="#888"/>',
        ]
        self._legend_y = _MT + 12

    def _pt(self, x, y) -> tuple[float, float]:
        return _sx(x, self.xlo, self.xhi), _sy(y, self.ylo, self.yhi)

    def ticks(self, xticks, yticks):
        for x in xticks:
            px, _ = self._pt(x, self.ylo)
            self.parts.append(
                f'<text x="{px:.1f}" y="{_H - _MB + 14}" text-anchor="middle" '
                f'font-size="10">{x:g}</text>'
            )
        for y in yticks:
            _, py = self._pt(self.xlo, y)
            self.parts.append(
                f'<text x="{_ML - 5}" y="{py + 3:.1f}" text-anchor="end" font-size="10">{y:g}</text>'
            )

    def hline(self, y: float, dashed: bool = True, color: str = "#555"):
        _, py = self._pt(self.xlo, y)
        dash = ' stroke-dasharray="5,4"' if dashed else ""
        self.parts.append(
            f'<line x1="{_ML}" y1="{py:.1f}" x2="{_W - _MR}" y2="{py:.1f}" '
            f'stroke="{color}"{dash}/>'
        )

    def band(self, pts_lo, pts_hi, color: str):
        if len(pts_lo) < 2:
            return
        coords = [self._pt(x, y) for x, y in pts_hi] + [self._pt(x, y) for x, y in reversed(pts_lo)]
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in coords)
        self.parts.append(f'<polygon points="{path}" fill="{color}" fill-opacity="0.15"/>')

    def line(self, pts, color: str, label: str | None = None):
        if len(pts) >= 2:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in (self._pt(x, y) for x, y in pts))
            self.parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for x, y in pts:
            px, py = self._pt(x, y)
            self.parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="2.5" fill="{color}"/>')
        if label:
            self.parts.append(
                f'<rect x="{_W - _MR - 150}" y="{self._legend_y - 8}" width="10" height="10" '
                f'fill="{color}"/>'
                f'<text x="{_W - _MR - 136}" y="{self._legend_y + 1}" font-size="10">{label}</text>'
            )
            self._legend_y += 14

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"])


def _variants(rows):
    return sorted({r["variant"] for r in rows})


def _write(path: Path, text: str) -> None:
    path.write_text(text + "\n", encoding="utf-8")


def render_plots(aggregates: list[dict], output_dir, records: list[dict] | None = None) -> list[Path]:
    """Render figure files from aggregate rows (and, optionally, raw records
    for the accuracy-vs-parameter figures). Returns the written paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pooled = [r for r in aggregates if r["problem_id"] == "ALL"]
    shots_all = sorted({int(r["total_shots"]) for r in pooled})
    if not shots_all:
        raise ValueError("no pooled aggregate rows to plot")
    xlo, xhi = min(shots_all), max(shots_all)
    paths = []

    chart = _Chart("Accuracy by total few-shot examples", "total shots", "accuracy",
                   xlo, xhi, 0.0, 1.0)
    chart.ticks(shots_all, [0.0, 0.25, 0.5, 0.75, 1.0])
    chart.hline(0.5)
    for i, variant in enumerate(_variants(pooled)):
        rows = sorted((r for r in pooled if r["variant"] == variant),
                      key=lambda r: int(r["total_shots"]))
        color = _COLORS[i % len(_COLORS)]
        chart.band(
            [(int(r["total_shots"]), float(r["wilson_low"])) for r in rows],
            [(int(r["total_shots"]), float(r["wilson_high"])) for r in rows],
            color,
        )
        chart.line([(int(r["total_shots"]), float(r["accuracy"])) for r in rows], color, variant)
    p = out / "fig_accuracy_by_shots.svg"
    _write(p, chart.render())
    paths.append(p)

    chart = _Chart("Final alpha by total few-shot examples", "total shots", "mean final alpha",
                   xlo, xhi, 0.0, 1.0)
    chart.ticks(shots_all, [0.0, 0.25, 0.5, 0.75, 1.0])
    drew = 0
    for i, variant in enumerate(_variants(pooled)):
        rows = sorted(
            (r for r in pooled if r["variant"] == variant and r["mean_alpha"] not in (None, "")),
            key=lambda r: int(r["total_shots"]),
        )
        if not rows:
            continue
        chart.line([(int(r["total_shots"]), float(r["mean_alpha"])) for r in rows],
                   _COLORS[i % len(_COLORS)], variant)
        drew += 1
    if drew:
        p = out / "fig_alpha_by_shots.svg"
        _write(p, chart.render())
        paths.append(p)

    distinguishing = {
        pid: spec.distinguishing_relation for pid, spec in default_catalog().problems.items()
    }
    per_problem = [r for r in aggregates if r["problem_id"] in distinguishing]
    weight_rows = [r for r in per_problem if r.get("mean_w0") not in (None, "")]
    if weight_rows:
        chart = _Chart("Edge weight by total few-shot examples", "total shots", "mean weight",
                       xlo, xhi, 0.0, 1.0)
        chart.ticks(shots_all, [0.0, 0.25, 0.5, 0.75, 1.0])
        chart.hline(1.0 / NUM_RELATIONS)
        by_shots_dist: dict[int, list[float]] = {}
        by_shots_other: dict[int, list[float]] = {}
        for r in weight_rows:
            shots = int(r["total_shots"])
            d = distinguishing[r["problem_id"]]
            ws = [float(r[f"mean_w{i}"]) for i in range(NUM_RELATIONS)]
            by_shots_dist.setdefault(shots, []).append(ws[d])
            by_shots_other.setdefault(shots, []).extend(
                ws[i] for i in range(NUM_RELATIONS) if i != d
            )
        chart.line(
            [(s, sum(v) / len(v)) for s, v in sorted(by_shots_dist.items())],
            _COLORS[0], "distinguishing",
        )
        chart.line(
            [(s, sum(v) / len(v)) for s, v in sorted(by_shots_other.items())],
            _COLORS[1], "non-distinguishing",
        )
        p = out / "fig_edge_weights_by_shots.svg"
        _write(p, chart.render())
        paths.append(p)

    if records:
        paths.extend(_record_figures(records, distinguishing, out))
    return paths


def _binned_accuracy(pairs: list[tuple[float, int]], bins: int = 10):
    """(bin center, accuracy, n) for value/correct pairs binned over [0, 1]."""
    acc = []
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        sel = [c for v, c in pairs if lo <= v < hi or (b == bins - 1 and v == 1.0)]
        if sel:
            acc.append(((lo + hi) / 2.0, sum(sel) / len(sel), len(sel)))
    return acc


def _record_figures(records, distinguishing, out: Path) -> list[Path]:
    paths = []
    alpha_pairs = [
        (float(r["final_alpha"]), int(r["correct"]))
        for r in records
        if r["final_alpha"] != ""
    ]
    if alpha_pairs:
        chart = _Chart("Accuracy by final alpha", "final alpha", "accuracy", 0.0, 1.0, 0.0, 1.0)
        chart.ticks([0.0, 0.5, 1.0], [0.0, 0.25, 0.5, 0.75, 1.0])
        chart.hline(0.5)
        chart.line([(x, y) for x, y, _ in _binned_accuracy(alpha_pairs)], _COLORS[0])
        p = out / "fig_accuracy_by_alpha.svg"
        _write(p, chart.render())
        paths.append(p)

    weight_pairs = [
        (float(r[f"final_w{distinguishing[r['problem_id']]}"]), int(r["correct"]))
        for r in records
        if r["problem_id"] in distinguishing and r["final_w0"] != ""
    ]
    if weight_pairs:
        chart = _Chart("Accuracy by weight of the distinguishing relation",
                       "final weight", "accuracy", 0.0, 1.0, 0.0, 1.0)
        chart.ticks([0.0, 0.5, 1.0], [0.0, 0.25, 0.5, 0.75, 1.0])
        chart.hline(0.5)
        chart.line([(x, y) for x, y, _ in _binned_accuracy(weight_pairs)], _COLORS[0])
        p = out / "fig_accuracy_by_edge_weight.svg"
        _write(p, chart.render())
        paths.append(p)
    return paths
