"""From predicted maps to counts: thresholding + connected components for
Gaussian maps, pixel integration for density maps, and the geometric
non-maxima-suppression baseline on the radial channel."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .projection import RasterGrid


@dataclass(frozen=True)
class BinaryMap:
    mask: np.ndarray  # (H, W) bool
    threshold: float


@dataclass(frozen=True)
class Cluster:
    pixels: np.ndarray  # (K, 2) int rows/cols
    centroid: tuple  # (row, col) real pixels, wrap-aware on col
    size: int


@dataclass(frozen=True)
class CountResult:
    count: float
    centers: list = field(default_factory=list)
    method: str = ""
    p_t: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "count": self.count,
            "centers": [[float(r), float(c)] for r, c in self.centers],
            "method": self.method,
            "p_t": self.p_t,
        })

    @staticmethod
    def from_json(text: str) -> "CountResult":
        d = json.loads(text)
        return CountResult(d["count"], [tuple(c) for c in d["centers"]],
                           d.get("method", ""), d.get("p_t"))


def binarize(values: np.ndarray, p_t: float) -> BinaryMap:
    """Strict greater-than threshold."""
    return BinaryMap(np.asarray(values) > p_t, p_t)


def _circular_mean_cols(cols: np.ndarray, width: int) -> float:
    ang = cols * (2.0 * np.pi / width)
    mean = np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())
    return float(np.mod(mean * width / (2.0 * np.pi), width))


def connected_components(bin_map: BinaryMap, connectivity: int = 8,
                         wrap_azimuth: bool = True) -> list[Cluster]:
    """Maximal connected true-regions via union-find.

    With wrap_azimuth, column 0 and column W-1 are adjacent.  Clusters come
    back ordered by their first (row-major) pixel.
    """
    mask = bin_map.mask
    H, W = mask.shape
    idx = np.full((H, W), -1, dtype=np.int64)
    ys, xs = np.nonzero(mask)
    n = len(ys)
    if n == 0:
        return []
    idx[ys, xs] = np.arange(n)

    parent = list(range(n))

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    if connectivity == 8:
        offsets = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
    elif connectivity == 4:
        offsets = ((-1, 0), (0, -1))
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")

    for k in range(n):
        r, c = ys[k], xs[k]
        for dr, dc in offsets:
            rr, cc = r + dr, c + dc
            if rr < 0:
                continue
            if wrap_azimuth:
                cc %= W
            elif cc < 0 or cc >= W:
                continue
            j = idx[rr, cc]
            if j >= 0:
                union(k, j)

    groups: dict[int, list[int]] = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(k)

    clusters = []
    for root in sorted(groups):
        members = groups[root]
        pix = np.stack([ys[members], xs[members]], axis=1)
        row_c = float(pix[:, 0].mean())
        if wrap_azimuth:
            col_c = _circular_mean_cols(pix[:, 1].astype(np.float64), W)
        else:
            col_c = float(pix[:, 1].mean())
        clusters.append(Cluster(pix, (row_c, col_c), len(members)))
    return clusters


def count_from_gaussian(values: np.ndarray, p_t: float = 0.33,
                        min_cluster_size: int = 1,
                        wrap_azimuth: bool = True) -> CountResult:
    """Threshold, label, filter small clusters; count = cluster count."""
    clusters = [c for c in connected_components(binarize(values, p_t),
                                                wrap_azimuth=wrap_azimuth)
                if c.size >= min_cluster_size]
    return CountResult(float(len(clusters)), [c.centroid for c in clusters],
                       "gaussian_cluster", p_t)


def count_from_density(values: np.ndarray) -> CountResult:
    """Integrate the map; negative pixels are clamped to zero."""
    arr = np.asarray(values, dtype=np.float64)
    negatives = int((arr < 0).sum())
    if negatives:
        warnings.warn(f"density map had {negatives} negative pixels (clamped)")
        arr = np.maximum(arr, 0.0)
    return CountResult(float(arr.sum()), [], "density_integration", None)


def _circle_iou(dist: float, radius: float) -> float:
    if dist >= 2.0 * radius:
        return 0.0
    if radius <= 0:
        return 1.0 if dist == 0 else 0.0
    # lens (two-circle intersection) area, equal radii
    half = dist / 2.0
    lens = 2.0 * radius * radius * np.arccos(half / radius) \
        - half * np.sqrt(4.0 * radius * radius - dist * dist)
    union = 2.0 * np.pi * radius * radius - lens
    return float(lens / union)


def _box_filter_3x3(arr: np.ndarray, wrap_azimuth: bool) -> np.ndarray:
    mode_w = "wrap" if wrap_azimuth else "edge"
    padded = np.pad(arr, ((1, 1), (0, 0)), mode="edge")
    padded = np.pad(padded, ((0, 0), (1, 1)), mode=mode_w)
    out = np.zeros_like(arr, dtype=np.float64)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr : dr + arr.shape[0], dc : dc + arr.shape[1]]
    return out / 9.0


def nms_baseline(grid: RasterGrid, beta: float,
                 wrap_azimuth: bool = True) -> CountResult:
    """Count strict local maxima of smoothed rho after greedy circle NMS.

    Proposals are circles of diameter beta at 8-neighborhood strict maxima
    of the once box-filtered rho channel; any proposal whose circle overlaps
    an accepted one with IoU > 0.5 is suppressed.
    """
    rho = _box_filter_3x3(grid.rho, wrap_azimuth)
    H, W = rho.shape
    mode_w = "wrap" if wrap_azimuth else "edge"
    padded = np.pad(rho, ((1, 1), (0, 0)), mode="constant", constant_values=-np.inf)
    padded = np.pad(padded, ((0, 0), (1, 1)), mode=mode_w)
    strict = np.ones((H, W), dtype=bool)
    for dr in range(3):
        for dc in range(3):
            if dr == 1 and dc == 1:
                continue
            strict &= rho > padded[dr : dr + H, dc : dc + W]
    ys, xs = np.nonzero(strict)
    if len(ys) == 0:
        return CountResult(0.0, [], "nms", None)

    # descending rho, ties broken lexicographically by (row, col)
    order = sorted(range(len(ys)), key=lambda i: (-rho[ys[i], xs[i]], ys[i], xs[i]))
    radius = beta / 2.0
    accepted: list[tuple] = []
    for i in order:
        r, c = float(ys[i]), float(xs[i])
        ok = True
        for ar, ac in accepted:
            dc = abs(c - ac)
            if wrap_azimuth:
                dc = min(dc, W - dc)
            d = np.hypot(r - ar, dc)
            if _circle_iou(d, radius) > 0.5:
                ok = False
                break
        if ok:
            accepted.append((r, c))
    return CountResult(float(len(accepted)), accepted, "nms", None)


def save_count_result(path: str | Path, result: CountResult) -> None:
    Path(path).write_text(result.to_json())
