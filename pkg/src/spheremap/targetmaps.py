"""Ground-truth target maps from keypoint annotations.

Two kinds: Gaussian likelihood maps (peak-1 kernels, fixed or adaptive
sigma, globally max-normalized) and density maps (unit-mass kernels whose
integral equals the keypoint count).

Kernels are evaluated on an integer patch around floor(row/col) using the
fractional offsets, then splatted with wrapped column indices.  This makes
integer circular shifts of the keypoints commute with map generation
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError


COL_QUANTUM = 256.0  # sub-pixel resolution of keypoint columns


@dataclass(frozen=True)
class KeypointSet:
    """(N, 2) array of (row, col) pixel locations on an H x W raster.

    Columns are quantized to 1/256 pixel so that integer circular shifts of
    the azimuth are exact in floating point (map generation then commutes
    with shifting bit-for-bit).
    """

    points: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts):
            pts = pts.copy()
            pts[:, 1] = np.round(pts[:, 1] * COL_QUANTUM) / COL_QUANTUM
            pts[:, 1] = np.where(pts[:, 1] >= self.width, 0.0, pts[:, 1])
            if not np.isfinite(pts).all():
                raise ValueError("keypoints must be finite")
            if pts[:, 0].min() < 0 or pts[:, 0].max() >= self.height:
                raise ValueError("keypoint row out of raster bounds")
            if pts[:, 1].min() < 0 or pts[:, 1].max() >= self.width:
                raise ValueError("keypoint col out of raster bounds")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GaussianMapConfig:
    mode: str = "fixed"  # fixed | adaptive
    sigma: float = 2.5
    p_t: float = 0.33
    beta: float = 2.5
    wrap_azimuth: bool = True
    truncation_radius: float = 4.0

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown gaussian map mode {self.mode!r}")
        if self.sigma <= 0 or self.beta <= 0 or not (0 < self.p_t < 1):
            raise ConfigError("need sigma > 0, beta > 0, 0 < p_t < 1")


@dataclass(frozen=True)
class DensityMapConfig:
    k_neighbors: int = 3
    f: float = 10.0
    sigma_fallback: float = 2.5
    wrap_azimuth: bool = True
    truncation_radius: float = 4.0

    def __post_init__(self):
        if self.k_neighbors < 1 or self.f <= 0:
            raise ConfigError("need k_neighbors >= 1 and f > 0")


@dataclass(frozen=True)
class TargetMap:
    values: np.ndarray
    kind: str  # gaussian | density


def shift_keypoints(kps: KeypointSet, offset: int) -> KeypointSet:
    """Circularly shift keypoint columns by an integer pixel offset.

    The integer and fractional parts are shifted separately so the result is
    exact in floating point.
    """
    pts = kps.points.copy()
    if len(pts):
        base = np.floor(pts[:, 1])
        frac = pts[:, 1] - base
        pts[:, 1] = np.mod(base + int(offset), kps.width) + frac
    return replace(kps, points=pts)


def nearest_neighbor_distances(kps: KeypointSet, k: int, wrap_azimuth: bool = True):
    """Per keypoint: ascending distances to its k nearest other keypoints.

    Distances are Euclidean on the cylinder (wrapped width) when requested.
    Points with fewer than k neighbors get a shorter list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = kps.points
    n = len(pts)
    if n <= 1:
        return [[] for _ in range(n)]
    dr = pts[:, 0][:, None] - pts[:, 0][None, :]
    dc = np.abs(pts[:, 1][:, None] - pts[:, 1][None, :])
    if wrap_azimuth:
        dc = np.minimum(dc, kps.width - dc)
    dist = np.sqrt(dr * dr + dc * dc)
    np.fill_diagonal(dist, np.inf)
    kk = min(k, n - 1)
    part = np.sort(dist, axis=1)[:, :kk]
    return [row.tolist() for row in part]


def adaptive_sigma(d_min: float | None, cfg: GaussianMapConfig) -> float:
    """sigma_a = min(d_min * p_t, beta); beta when the point has no neighbor."""
    if d_min is None:
        return cfg.beta
    return min(d_min * cfg.p_t, cfg.beta)


def _per_point_sigmas_gaussian(kps: KeypointSet, cfg: GaussianMapConfig) -> np.ndarray:
    if cfg.mode == "fixed":
        return np.full(len(kps), cfg.sigma)
    nn = nearest_neighbor_distances(kps, 1, cfg.wrap_azimuth)
    return np.array([adaptive_sigma(d[0] if d else None, cfg) for d in nn])


def _splat_kernel(values, row, col, sigma, trunc, wrap, normalize_mass):
    """Accumulate one truncated Gaussian kernel into `values` (H, W).

    Returns nothing; mutates `values`.  With normalize_mass the in-image
    kernel pixels are scaled to sum to exactly 1.
    """
    H, W = values.shape
    radius = trunc * sigma
    R = int(np.ceil(radius))
    br, bc = int(np.floor(row)), int(np.floor(col))
    fr, fc = row - br, col - bc
    jr = np.arange(-R, R + 2, dtype=np.float64)
    jc = np.arange(-R, R + 2, dtype=np.float64)
    drow = jr - fr
    dcol = jc - fc
    d2 = drow[:, None] ** 2 + dcol[None, :] ** 2
    patch = np.exp(-d2 / (2.0 * sigma * sigma))
    patch[d2 > radius * radius] = 0.0

    rows = br + jr.astype(np.int64)
    cols = bc + jc.astype(np.int64)
    rvalid = (rows >= 0) & (rows < H)
    if wrap:
        cols = np.mod(cols, W)
        cvalid = np.ones(len(cols), dtype=bool)
    else:
        cvalid = (cols >= 0) & (cols < W)
    patch = patch[rvalid][:, cvalid]
    if patch.size == 0:
        return
    if normalize_mass:
        total = patch.sum()
        if total <= 0:
            return
        patch = patch / total
    rr, cc = np.meshgrid(rows[rvalid], cols[cvalid], indexing="ij")
    np.add.at(values, (rr, cc), patch)


def gaussian_map(kps: KeypointSet, cfg: GaussianMapConfig) -> TargetMap:
    """Sum of per-keypoint Gaussian kernels, globally scaled to peak 1.0."""
    values = np.zeros((kps.height, kps.width), dtype=np.float64)
    if len(kps):
        sigmas = _per_point_sigmas_gaussian(kps, cfg)
        for (row, col), sigma in zip(kps.points, sigmas):
            _splat_kernel(values, row, col, sigma, cfg.truncation_radius,
                          cfg.wrap_azimuth, normalize_mass=False)
        peak = values.max()
        if peak > 0:
            values /= peak
    return TargetMap(values, "gaussian")


def _per_point_sigmas_density(kps: KeypointSet, cfg: DensityMapConfig) -> np.ndarray:
    nn = nearest_neighbor_distances(kps, cfg.k_neighbors, cfg.wrap_azimuth)
    sigmas = np.empty(len(kps))
    for i, dists in enumerate(nn):
        if dists:
            # average of available neighbours, scaled as if k were present
            sigmas[i] = cfg.k_neighbors * float(np.mean(dists)) / cfg.f
        else:
            sigmas[i] = cfg.sigma_fallback
    return sigmas


def density_map(kps: KeypointSet, cfg: DensityMapConfig) -> TargetMap:
    """Unit-mass kernel per keypoint; the map integrates to the count."""
    values = np.zeros((kps.height, kps.width), dtype=np.float64)
    if len(kps):
        sigmas = _per_point_sigmas_density(kps, cfg)
        for (row, col), sigma in zip(kps.points, sigmas):
            _splat_kernel(values, row, col, max(sigma, 1e-6), cfg.truncation_radius,
                          cfg.wrap_azimuth, normalize_mass=True)
    return TargetMap(values, "density")


# ---------------------------------------------------------------------------
# Annotation JSON


def save_annotations(path: str | Path, kps: KeypointSet, delta: float) -> None:
    payload = {
        "height": kps.height,
        "width": kps.width,
        "delta": delta,
        "points": [[float(r), float(c)] for r, c in kps.points],
    }
    Path(path).write_text(json.dumps(payload))


def load_annotations(path: str | Path):
    """Returns (KeypointSet, delta)."""
    payload = json.loads(Path(path).read_text())
    kps = KeypointSet(
        np.array(payload["points"], dtype=np.float64).reshape(-1, 2),
        int(payload["height"]),
        int(payload["width"]),
    )
    return kps, float(payload["delta"])
