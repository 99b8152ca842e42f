"""Synthetic spheroids with spiral-arranged surface bumps and exact keypoints.

The base surface is an ellipsoid of revolution r0(theta).  Features sit on a
golden-angle spiral (uniform-area inclination spacing inside a latitude
band) and each adds a compact cosine bump to the radius.  A smooth
low-frequency field supplies multiplicative surface noise, and normals come
from central finite differences of the full radius field, so they stay
consistent with both bumps and noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import PackingError
from .geometry import PointCloud
from .projection import ProjectionConfig
from .targetmaps import KeypointSet


@dataclass(frozen=True)
class SpheroidSpec:
    a: float = 1.0  # equatorial radius
    c: float = 1.15  # polar radius
    n_features: int = 200
    spiral_divergence: float = 137.5
    bump_amplitude: float = 0.08
    bump_angular_radius: float = 4.0  # degrees
    surface_noise: float = 0.01
    sample_count: int = 80000
    theta_min_frac: float = 0.235  # feature band, fraction of [0, 180]
    theta_max_frac: float = 0.765
    seed: int = 0

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ValueError("radii must be positive")
        if self.n_features < 0:
            raise ValueError("n_features must be >= 0")
        if not (0 <= self.bump_amplitude < 0.3):
            raise ValueError("bump_amplitude must be in [0, 0.3)")
        if self.n_features and self.sample_count < 10 * self.n_features:
            raise ValueError("sample_count must be >= 10 * n_features")


@dataclass(frozen=True)
class SyntheticSample:
    cloud: PointCloud
    feature_centers: np.ndarray  # (F, 3) cartesian
    feature_angles: np.ndarray  # (F, 2) theta, phi in degrees
    spec: SpheroidSpec

    def keypoints(self, cfg: ProjectionConfig, roi: bool = True) -> KeypointSet:
        """Exact pixel projection of the feature centers.

        With roi=True only features inside the [h_min, h_max) row band are
        kept and rows are expressed in cropped-raster coordinates.
        """
        H, W = cfg.height, cfg.width
        rows = self.feature_angles[:, 0] / cfg.delta
        cols = (self.feature_angles[:, 1] + 180.0) / cfg.delta
        cols = np.mod(cols, W)
        if roi:
            r0 = int(np.floor(cfg.h_min * H))
            r1 = int(np.ceil(cfg.h_max * H))
            keep = (rows >= r0) & (rows < r1)
            pts = np.stack([rows[keep] - r0, cols[keep]], axis=1)
            return KeypointSet(pts, r1 - r0, W)
        pts = np.stack([np.clip(rows, 0, H - 1e-9), cols], axis=1)
        return KeypointSet(pts, H, W)


def _spiral_angles(spec: SpheroidSpec) -> np.ndarray:
    """(F, 2) theta/phi degrees: uniform-area band spacing, golden azimuth."""
    n = spec.n_features
    if n == 0:
        return np.empty((0, 2))
    t0 = np.cos(np.radians(spec.theta_min_frac * 180.0))
    t1 = np.cos(np.radians(spec.theta_max_frac * 180.0))
    cos_t = t0 + (np.arange(n) + 0.5) / n * (t1 - t0)
    theta = np.degrees(np.arccos(cos_t))
    phi = np.mod(np.arange(n) * spec.spiral_divergence, 360.0) - 180.0
    return np.stack([theta, phi], axis=1)


def _unit_dirs(theta_deg, phi_deg):
    t, p = np.radians(theta_deg), np.radians(phi_deg)
    st = np.sin(t)
    return np.stack([st * np.cos(p), st * np.sin(p), np.cos(t)], axis=-1)


class _RadiusField:
    """r(theta, phi) of the perturbed spheroid, vectorized over points."""

    def __init__(self, spec: SpheroidSpec, rng: np.random.Generator):
        self.spec = spec
        self.centers = _unit_dirs(*_spiral_angles(spec).T) if spec.n_features else \
            np.empty((0, 3))
        self.cos_support = np.cos(np.radians(spec.bump_angular_radius))
        # smooth multiplicative noise: a few random low-order waves
        self.noise_freqs = rng.integers(1, 5, size=(4, 2))
        self.noise_phases = rng.uniform(0, 2 * np.pi, size=(4, 2))
        self.noise_amps = rng.uniform(0.5, 1.0, size=4)
        self.noise_amps *= spec.surface_noise / max(self.noise_amps.sum(), 1e-12)

    def __call__(self, theta_deg, phi_deg):
        spec = self.spec
        t = np.radians(theta_deg)
        p = np.radians(phi_deg)
        st, ct = np.sin(t), np.cos(t)
        base = spec.a * spec.c / np.sqrt((spec.c * st) ** 2 + (spec.a * ct) ** 2)
        bump = np.zeros_like(base)
        if len(self.centers):
            dirs = _unit_dirs(theta_deg, phi_deg)
            for lo in range(0, dirs.shape[0], 20000):
                sl = slice(lo, lo + 20000)
                cosg = dirs[sl] @ self.centers.T
                near = cosg > self.cos_support
                if near.any():
                    g = np.arccos(np.clip(cosg[near], -1.0, 1.0))
                    prof = 0.5 * (1.0 + np.cos(np.pi * np.degrees(g)
                                               / spec.bump_angular_radius))
                    contrib = np.zeros_like(cosg)
                    contrib[near] = prof
                    bump[sl] = bump[sl] + spec.bump_amplitude * contrib.sum(axis=1)
        noise = np.zeros_like(base)
        for k in range(4):
            noise += self.noise_amps[k] * np.sin(self.noise_freqs[k, 0] * t
                                                 + self.noise_phases[k, 0]) \
                * np.sin(self.noise_freqs[k, 1] * p + self.noise_phases[k, 1])
        return base * (1.0 + bump + noise)


def _surface_points(field: _RadiusField, theta_deg, phi_deg):
    r = field(theta_deg, phi_deg)
    return r[:, None] * _unit_dirs(theta_deg, phi_deg)


def generate_spheroid(spec: SpheroidSpec) -> SyntheticSample:
    """Sample the perturbed spheroid surface with finite-difference normals."""
    angles = _spiral_angles(spec)
    if len(angles) >= 2:
        dirs = _unit_dirs(*angles.T)
        cosg = np.clip(dirs @ dirs.T, -1.0, 1.0)
        np.fill_diagonal(cosg, -1.0)
        min_gap = np.degrees(np.arccos(cosg.max()))
        if min_gap < spec.bump_angular_radius:
            raise PackingError(
                f"min feature gap {min_gap:.2f} deg < bump radius "
                f"{spec.bump_angular_radius} deg; use fewer features")

    rng = np.random.default_rng(spec.seed)
    field = _RadiusField(spec, rng)

    # uniform-area sampling over the full sphere
    cos_t = rng.uniform(-1.0, 1.0, size=spec.sample_count)
    theta = np.degrees(np.arccos(cos_t))
    phi = rng.uniform(-180.0, 180.0, size=spec.sample_count)

    positions = _surface_points(field, theta, phi)

    h = 0.01  # degrees, central-difference step
    d_theta = (_surface_points(field, theta + h, phi)
               - _surface_points(field, theta - h, phi))
    d_phi = (_surface_points(field, theta, phi + h)
             - _surface_points(field, theta, phi - h))
    normals = np.cross(d_theta, d_phi)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    normals /= norms
    # orient outward
    flip = np.einsum("ij,ij->i", normals, positions) < 0
    normals[flip] *= -1.0

    centers = _surface_points(field, angles[:, 0], angles[:, 1]) if len(angles) \
        else np.empty((0, 3))
    return SyntheticSample(PointCloud(positions, normals), centers, angles, spec)


DEFAULT_RANGES = {
    "a": (0.9, 1.1),
    "c": (1.0, 1.3),
    "n_features": (150, 350),
    "bump_amplitude": (0.06, 0.10),
    "surface_noise": (0.005, 0.015),
}


@dataclass(frozen=True)
class DatasetManifest:
    seed: int
    specs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "specs": self.specs}, indent=1)


def generate_dataset(n_samples: int, spec_ranges: dict | None = None,
                     seed: int = 0, base_spec: SpheroidSpec = SpheroidSpec()):
    """Draw per-sample specs uniformly from ranges; deterministic per seed.

    Returns (samples, manifest).  A sample hitting PackingError is redrawn
    up to 10 times before the error propagates.
    """
    ranges = dict(DEFAULT_RANGES)
    if spec_ranges:
        ranges.update(spec_ranges)
    rng = np.random.default_rng(seed)
    samples, spec_dicts = [], []
    for i in range(n_samples):
        last_error = None
        for _ in range(10):
            draw = {}
            for key, (lo, hi) in ranges.items():
                if key == "n_features":
                    draw[key] = int(rng.integers(lo, hi + 1))
                else:
                    draw[key] = float(rng.uniform(lo, hi))
            spec = SpheroidSpec(**{**asdict(base_spec), **draw,
                                   "seed": int(rng.integers(0, 2**31 - 1))})
            try:
                samples.append(generate_spheroid(spec))
                spec_dicts.append(asdict(spec))
                last_error = None
                break
            except PackingError as exc:
                last_error = exc
        if last_error is not None:
            raise last_error
    return samples, DatasetManifest(seed, spec_dicts)


def write_dataset(samples, manifest: DatasetManifest, out_dir,
                  cfg: ProjectionConfig) -> None:
    """NNN.ply point clouds, NNN.json ROI annotations, manifest.json."""
    from .meshio import save_ply
    from .targetmaps import save_annotations

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(samples):
        save_ply(out / f"{i:03d}.ply", sample.cloud)
        save_annotations(out / f"{i:03d}.json", sample.keypoints(cfg), cfg.delta)
    (out / "manifest.json").write_text(manifest.to_json())
