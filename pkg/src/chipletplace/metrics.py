"""Post-hoc analysis: correlations between fields and run-to-run comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

METRICS = ("peak_temp", "peak_stress", "wirelength", "grad_mean", "grad_std", "grad_max", "ts_corr", "gs_corr")
HEADLINE = ("peak_temp", "peak_stress", "wirelength")


class UndefinedCorrelationError(ValueError):
    pass


def pearson(x, y) -> float:
    """Pearson product-moment correlation of two equal-length samples."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"sample lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant sample")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def field_correlations(t, svm, grad, plane="interposer", strict: bool = True) -> dict:
    """Temperature-stress and gradient-stress correlations on one plane.

    ``t`` and ``svm`` are full stack fields, ``grad`` a plane field from
    :func:`chipletplace.thermal.surface_gradient_stats` for the same plane.
    With ``strict=False`` undefined correlations come back as None.
    """
    tp = t.plane(plane)
    sp = svm.plane(plane)
    gp = grad.values[0] if grad.values.ndim == 3 else grad.values
    if not (tp.shape == sp.shape == gp.shape):
        raise ValueError(f"plane grids differ: {tp.shape}, {sp.shape}, {gp.shape}")
    out = {}
    for key, a in (("ts", tp), ("gs", gp)):
        try:
            out[key] = pearson(a, sp)
        except UndefinedCorrelationError:
            if strict:
                raise
            out[key] = None
    return out


def report_metrics(report: Mapping) -> dict:
    """Flatten one report (as loaded from JSON) into the comparison metric set."""
    best = report["best"]["metrics"]
    stats = report.get("stats") or {}
    grad = stats.get("gradient") or {}
    corr = stats.get("correlations") or {}
    nan = float("nan")
    val = lambda v: nan if v is None else float(v)
    return {
        "peak_temp": float(best["peak_temp"]),
        "peak_stress": float(best["peak_stress"]),
        "wirelength": float(best["wirelength"]),
        "grad_mean": val(grad.get("mean")),
        "grad_std": val(grad.get("std")),
        "grad_max": val(grad.get("max")),
        "ts_corr": val(corr.get("ts")),
        "gs_corr": val(corr.get("gs")),
    }


@dataclass
class RunComparison:
    architecture: str
    rows: dict[str, dict]  # objective -> medians (+ min/max, n)
    baseline: str | None = None
    candidate: str | None = None
    deltas: dict[str, dict] = field(default_factory=dict)  # metric -> {"abs", "pct"}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "n_runs", *METRICS])
        for obj, row in self.rows.items():
            w.writerow([obj, row["n_runs"], *(repr(row[m]) for m in METRICS)])
        if self.deltas:
            label = f"delta_pct_{self.candidate}_vs_{self.baseline}"
            w.writerow([label, "", *(repr(self.deltas[m]["pct"]) if m in self.deltas else "" for m in METRICS)])
        return buf.getvalue()

    def format_table(self) -> str:
        head = ["objective", "runs", "T (C)", "stress (MPa)", "WL (mm)", "grad mean", "grad std", "grad max", "T-S", "G-S"]
        lines = []
        for obj, row in self.rows.items():
            lines.append([
                obj.upper(), str(row["n_runs"]),
                f"{row['peak_temp']:.2f}", f"{row['peak_stress']:.2f}", f"{row['wirelength']:.1f}",
                f"{row['grad_mean']:.3f}", f"{row['grad_std']:.3f}", f"{row['grad_max']:.3f}",
                f"{row['ts_corr']:.3f}", f"{row['gs_corr']:.3f}",
            ])
        if self.deltas:
            d = self.deltas
            lines.append([
                f"{self.candidate.upper()} vs {self.baseline.upper()}", "",
                f"{d['peak_temp']['pct']:+.2f}%", f"{d['peak_stress']['pct']:+.2f}%", f"{d['wirelength']['pct']:+.2f}%",
                "", "", "", "", "",
            ])
        widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.rjust(wd) for c, wd in zip(r, widths))
        sep = "  ".join("-" * wd for wd in widths)
        return "\n".join([f"architecture: {self.architecture}", fmt(head), sep, *map(fmt, lines)])


def read_comparison_csv(text: str) -> dict[str, dict]:
    rows = {}
    for rec in csv.DictReader(io.StringIO(text)):
        rows[rec["row"]] = {m: float(rec[m]) if rec[m] != "" else None for m in METRICS}
    return rows


def percent_delta(base: float, new: float) -> float:
    return (new - base) / base * 100.0


def compare_runs(reports: Sequence[Mapping], baseline: str = "wt", candidate: str = "wst") -> RunComparison:
    """One row per objective (median over seeds) plus candidate-vs-baseline deltas."""
    if not reports:
        raise ValueError("no reports to compare")
    archs = {r["architecture"] for r in reports}
    if len(archs) != 1:
        raise ValueError(f"reports mix architectures: {', '.join(sorted(archs))}")
    grouped: dict[str, list[dict]] = {}
    for r in reports:
        grouped.setdefault(r["objective"], []).append(report_metrics(r))
    order = [o for o in ("wt", "ws", "wst") if o in grouped] + sorted(set(grouped) - {"wt", "ws", "wst"})
    rows = {}
    for obj in order:
        runs = grouped[obj]
        row = {"n_runs": len(runs)}
        for m in METRICS:
            vals = np.array([x[m] for x in runs], dtype=float)
            row[m] = float(np.median(vals))
            row[f"{m}_min"] = float(vals.min())
            row[f"{m}_max"] = float(vals.max())
        rows[obj] = row
    out = RunComparison(architecture=archs.pop(), rows=rows)
    if baseline in rows and candidate in rows:
        out.baseline, out.candidate = baseline, candidate
        for m in METRICS:
            b, c = rows[baseline][m], rows[candidate][m]
            out.deltas[m] = {"abs": c - b, "pct": percent_delta(b, c) if b else float("nan")}
    return out
