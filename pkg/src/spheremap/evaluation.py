"""Count metrics (MAE, RMSE, FP%, FN%), localization scoring and CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, ZeroGroundTruth


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    fp_pct: float
    fn_pct: float
    n: int


def _as_pairs(pairs):
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(arr) == 0:
        raise EmptyInput("no (ground_truth, predicted) pairs")
    return arr[:, 0], arr[:, 1]


def mae(pairs) -> float:
    gt, pred = _as_pairs(pairs)
    return float(np.abs(gt - pred).mean())


def rmse(pairs) -> float:
    gt, pred = _as_pairs(pairs)
    return float(np.sqrt(((gt - pred) ** 2).mean()))


def fp_fn_count_based(pairs) -> tuple[float, float]:
    """Mean per-sample count surplus / deficit as percentages of the truth."""
    gt, pred = _as_pairs(pairs)
    if (gt <= 0).any():
        raise ZeroGroundTruth("count-based FP/FN needs positive ground truth")
    fp = 100.0 * float((np.maximum(pred - gt, 0.0) / gt).mean())
    fn = 100.0 * float((np.maximum(gt - pred, 0.0) / gt).mean())
    return fp, fn


def metrics_report(pairs) -> MetricsReport:
    gt, _ = _as_pairs(pairs)
    fp, fn = fp_fn_count_based(pairs)
    return MetricsReport(mae(pairs), rmse(pairs), fp, fn, len(gt))


def fp_fn_localized(pred_centers, gt_points, match_radius: float,
                    width: int | None = None):
    """Greedy nearest-first matching of predictions to keypoints.

    Each side is matched at most once and only within match_radius;
    column distances wrap when `width` is given.  Returns
    (fp_count, fn_count, matches) with matches as (pred_idx, gt_idx) pairs.
    """
    if match_radius <= 0:
        raise ValueError("match_radius must be > 0")
    preds = np.asarray(pred_centers, dtype=np.float64).reshape(-1, 2)
    gts = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    if len(preds) == 0 or len(gts) == 0:
        return len(preds), len(gts), []
    dr = preds[:, 0][:, None] - gts[:, 0][None, :]
    dc = np.abs(preds[:, 1][:, None] - gts[:, 1][None, :])
    if width is not None:
        dc = np.minimum(dc, width - dc)
    dist = np.sqrt(dr * dr + dc * dc)

    order = np.argsort(dist, axis=None, kind="stable")
    used_p, used_g = set(), set()
    matches = []
    for flat in order:
        p, g = divmod(int(flat), len(gts))
        if dist[p, g] > match_radius:
            break
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        matches.append((p, g))
    return len(preds) - len(matches), len(gts) - len(matches), matches


def _linear_regression(gt: np.ndarray, pred: np.ndarray):
    """Closed-form least squares pred ~ slope*gt + intercept; returns r^2 too."""
    n = len(gt)
    mx, my = gt.mean(), pred.mean()
    sxx = ((gt - mx) ** 2).sum()
    sxy = ((gt - mx) * (pred - my)).sum()
    slope = sxy / sxx if sxx > 0 else 0.0
    intercept = my - slope * mx
    syy = ((pred - my) ** 2).sum()
    r2 = (sxy * sxy) / (sxx * syy) if sxx > 0 and syy > 0 else (1.0 if syy == 0 else 0.0)
    return float(slope), float(intercept), float(r2)


def export_report(results: dict[str, list], out_dir) -> dict[str, Path]:
    """Write metrics/scatter/errors/regression CSVs for per-method count pairs.

    `results` maps method name to a list of (ground_truth, predicted) pairs.
    Error histogram bins have width 5 centered on zero.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {k: out_dir / f"{k}.csv" for k in ("metrics", "scatter", "errors", "regression")}

    with paths["metrics"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mae", "rmse", "fp_pct", "fn_pct", "n"])
        for method, pairs in results.items():
            rep = metrics_report(pairs)
            w.writerow([method, repr(rep.mae), repr(rep.rmse),
                        repr(rep.fp_pct), repr(rep.fn_pct), rep.n])

    with paths["scatter"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "gt", "pred"])
        for method, pairs in results.items():
            for gt, pred in pairs:
                w.writerow([method, repr(float(gt)), repr(float(pred))])

    bin_width = 5.0
    with paths["errors"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "bin_low", "bin_high", "count"])
        for method, pairs in results.items():
            gt, pred = _as_pairs(pairs)
            err = pred - gt
            lo = np.floor(err.min() / bin_width) * bin_width
            hi = np.ceil(err.max() / bin_width) * bin_width
            if hi <= lo:
                hi = lo + bin_width
            edges = np.arange(lo, hi + bin_width / 2, bin_width)
            counts, _ = np.histogram(err, bins=edges)
            for b, cnt in enumerate(counts):
                w.writerow([method, repr(float(edges[b])), repr(float(edges[b + 1])), int(cnt)])

    with paths["regression"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "slope", "intercept", "r2"])
        for method, pairs in results.items():
            gt, pred = _as_pairs(pairs)
            if len(gt) < 2:
                raise EmptyInput(f"method {method!r}: regression needs >= 2 samples")
            slope, intercept, r2 = _linear_regression(gt, pred)
            w.writerow([method, repr(slope), repr(intercept), repr(r2)])

    return paths
