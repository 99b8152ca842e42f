"""3D point clouds with unit normals, spherical coordinate conversion, rotations.

Angle conventions: theta is the inclination from +Z in degrees [0, 180],
phi the azimuth in degrees [-180, 180].  Both are computed with the
two-argument arctangent so the full quadrant is resolved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput


@dataclass(frozen=True)
class PointCloud:
    """Surface samples: positions (N, 3) and unit normals (N, 3)."""

    positions: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        nrm = np.ascontiguousarray(self.normals, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {pos.shape}")
        if nrm.shape != pos.shape:
            raise ValueError(f"normals shape {nrm.shape} != positions {pos.shape}")
        if pos.shape[0] == 0:
            raise EmptyInput("point cloud has no samples")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.positions.shape[0]


def center_to_origin(cloud: PointCloud) -> PointCloud:
    """Translate positions so their centroid is the origin; normals unchanged."""
    centroid = cloud.positions.mean(axis=0)
    return PointCloud(cloud.positions - centroid, cloud.normals)


def cartesian_to_spherical(points: np.ndarray) -> np.ndarray:
    """Convert (..., 3) cartesian points to (..., 3) [rho, theta, phi] in degrees.

    The origin maps to (0, 0, 0) and points on the Z axis to phi=0 by
    convention.
    """
    pts = np.asarray(points, dtype=np.float64)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    rho = np.sqrt(x * x + y * y + z * z)
    rxy = np.hypot(x, y)
    theta = np.degrees(np.arctan2(rxy, z))
    theta = np.where(rho == 0.0, 0.0, theta)
    phi = np.degrees(np.arctan2(y, x))
    return np.stack([rho, theta, phi], axis=-1)


def spherical_to_cartesian(spherical: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cartesian_to_spherical`; input (..., 3) [rho, theta, phi]."""
    sph = np.asarray(spherical, dtype=np.float64)
    rho, theta, phi = sph[..., 0], np.radians(sph[..., 1]), np.radians(sph[..., 2])
    st = np.sin(theta)
    x = rho * st * np.cos(phi)
    y = rho * st * np.sin(phi)
    z = rho * np.cos(theta)
    return np.stack([x, y, z], axis=-1)


def _rotation_matrix(axis: int, angle_deg: float) -> np.ndarray:
    a = np.radians(angle_deg)
    c, s = np.cos(a), np.sin(a)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def _rotate(cloud: PointCloud, axis: int, angle_deg: float) -> PointCloud:
    rot = _rotation_matrix(axis, angle_deg)
    return PointCloud(cloud.positions @ rot.T, cloud.normals @ rot.T)


def rotate_about_x(cloud: PointCloud, angle_deg: float) -> PointCloud:
    """Right-handed rotation of positions and normals about the X axis."""
    return _rotate(cloud, 0, angle_deg)


def rotate_about_z(cloud: PointCloud, angle_deg: float) -> PointCloud:
    """Right-handed rotation about the Z axis (azimuthal spin)."""
    return _rotate(cloud, 2, angle_deg)


def estimate_normals_from_mesh(vertices: np.ndarray, faces: np.ndarray) -> PointCloud:
    """Per-vertex normals as the normalized area-weighted mean of incident faces.

    Degenerate (zero-area) faces are skipped.  The orientation is flipped so
    that the majority of normals point away from the centroid.
    """
    verts = np.asarray(vertices, dtype=np.float64)
    fcs = np.asarray(faces, dtype=np.int64)
    if verts.ndim != 2 or verts.shape[1] != 3:
        raise ValueError(f"vertices must be (V, 3), got {verts.shape}")
    if len(verts) == 0:
        raise EmptyInput("mesh has no vertices")
    if fcs.size and (fcs.min() < 0 or fcs.max() >= len(verts)):
        raise ValueError("face index out of range")

    normals = np.zeros_like(verts)
    skipped = 0
    if fcs.size:
        v0, v1, v2 = verts[fcs[:, 0]], verts[fcs[:, 1]], verts[fcs[:, 2]]
        # cross product magnitude = 2 * area, so this is area weighting
        fn = np.cross(v1 - v0, v2 - v0)
        areas = np.linalg.norm(fn, axis=1)
        good = areas > 0
        skipped = int((~good).sum())
        for k in range(3):
            np.add.at(normals, fcs[good, k], fn[good])

    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    normals = normals / norms

    centroid = verts.mean(axis=0)
    outward = np.einsum("ij,ij->i", normals, verts - centroid)
    if (outward < 0).sum() > len(verts) / 2:
        normals = -normals

    if skipped:
        import warnings

        warnings.warn(f"skipped {skipped} zero-area faces during normal estimation")
    return PointCloud(verts, normals)
