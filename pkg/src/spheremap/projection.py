"""Equirectangular rasterization of centered point clouds.

A cloud is binned into an H x W grid (H = 180/delta rows of inclination,
W = 360/delta columns of azimuth) carrying five channels: the three surface
normal components, the radial distance rho, and a 0/1 occupancy flag.
Holes are filled by Catmull-Rom cubic interpolation, rows first (wrapping
across the azimuth seam), then columns.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInput, RoiTooSmall
from .geometry import PointCloud, cartesian_to_spherical

CHANNEL_NAMES = ("nx", "ny", "nz", "rho", "occupancy")


@dataclass(frozen=True)
class ProjectionConfig:
    delta: float = 1.0
    h_min: float = 0.0
    h_max: float = 1.0
    wrap_azimuth: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        for n, frac in (("180", 180.0), ("360", 360.0)):
            steps = frac / self.delta
            if abs(steps - round(steps)) > 1e-9:
                raise ConfigError(f"{n}/delta must be an integer, got {steps}")
        if not (0 <= self.h_min < self.h_max <= 1):
            raise ConfigError(f"need 0 <= h_min < h_max <= 1, got {self.h_min}, {self.h_max}")

    @property
    def height(self) -> int:
        return round(180.0 / self.delta)

    @property
    def width(self) -> int:
        return round(360.0 / self.delta)


@dataclass(frozen=True)
class RasterGrid:
    """(C, H, W) channel stack; channel order follows CHANNEL_NAMES."""

    data: np.ndarray
    delta: float
    channel_names: tuple = CHANNEL_NAMES
    row_offset: int = 0  # rows cropped off the top by crop_roi
    filled: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != len(self.channel_names):
            raise ValueError(f"data must be ({len(self.channel_names)}, H, W), got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def channel(self, name: str) -> np.ndarray:
        return self.data[self.channel_names.index(name)]

    @property
    def occupancy(self) -> np.ndarray:
        return self.channel("occupancy")

    @property
    def rho(self) -> np.ndarray:
        return self.channel("rho")

    @property
    def normals(self) -> np.ndarray:
        return self.data[:3]


def project_equirectangular(cloud: PointCloud, cfg: ProjectionConfig) -> RasterGrid:
    """Bin a centered cloud into the equirectangular grid.

    Cells hit by several samples store the mean rho and the renormalized
    mean normal.
    """
    if len(cloud) == 0:
        raise EmptyInput("empty point cloud")
    H, W = cfg.height, cfg.width
    sph = cartesian_to_spherical(cloud.positions)
    rows = np.clip(np.floor(sph[:, 1] / cfg.delta).astype(np.int64), 0, H - 1)
    cols = np.clip(np.floor((sph[:, 2] + 180.0) / cfg.delta).astype(np.int64), 0, W - 1)
    flat = rows * W + cols

    counts = np.bincount(flat, minlength=H * W).astype(np.float64)
    data = np.zeros((5, H, W), dtype=np.float64)
    occupied = counts > 0
    safe = np.where(occupied, counts, 1.0)
    for c in range(3):
        acc = np.bincount(flat, weights=cloud.normals[:, c], minlength=H * W)
        data[c] = (acc / safe).reshape(H, W)
    acc = np.bincount(flat, weights=sph[:, 0], minlength=H * W)
    data[3] = (acc / safe).reshape(H, W)
    data[4] = occupied.reshape(H, W).astype(np.float64)

    norms = np.sqrt((data[:3] ** 2).sum(axis=0))
    nz = norms > 0
    data[:3, nz] /= norms[nz]
    return RasterGrid(data, cfg.delta)


def _catmull_rom_1d(xk: np.ndarray, yk: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Cubic Hermite interpolation with central-difference tangents.

    Queries outside [xk[0], xk[-1]] clamp to the end values.
    """
    if len(xk) == 1:
        return np.full(len(xq), yk[0])
    tangents = np.gradient(yk, xk)
    idx = np.clip(np.searchsorted(xk, xq, side="right") - 1, 0, len(xk) - 2)
    x0, x1 = xk[idx], xk[idx + 1]
    h = x1 - x0
    t = np.clip((xq - x0) / h, 0.0, 1.0)
    t2, t3 = t * t, t * t * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * yk[idx] + h10 * h * tangents[idx] + h01 * yk[idx + 1] + h11 * h * tangents[idx + 1]


def _fill_line(values: np.ndarray, known: np.ndarray, wrap: bool, period: int) -> np.ndarray:
    """Fill unknown entries of one row/column; returns the completed line."""
    out = values.copy()
    xk = np.nonzero(known)[0].astype(np.float64)
    xq = np.nonzero(~known)[0].astype(np.float64)
    n = len(xk)
    if n == 0 or len(xq) == 0:
        return out
    if n < 4:
        # nearest-neighbor fallback (wrap-aware)
        d = np.abs(xq[:, None] - xk[None, :])
        if wrap:
            d = np.minimum(d, period - d)
        out[xq.astype(np.int64)] = values[known][np.argmin(d, axis=1)]
        return out
    yk = values[known]
    if wrap:
        # replicate two support points past each seam end
        xk_ext = np.concatenate([xk[-2:] - period, xk, xk[:2] + period])
        yk_ext = np.concatenate([yk[-2:], yk, yk[:2]])
    else:
        xk_ext, yk_ext = xk, yk
    out[xq.astype(np.int64)] = _catmull_rom_1d(xk_ext, yk_ext, xq)
    return out


def fill_holes_cubic(grid: RasterGrid, wrap_azimuth: bool = True) -> RasterGrid:
    """Fill unoccupied cells of the nx/ny/nz/rho channels.

    Row pass first (azimuth, wrapping across the seam when requested), then a
    column pass for rows that had too little support.  Occupied cells are
    left bit-identical; the occupancy channel keeps recording the original
    coverage while the `filled` mask records post-fill coverage.
    """
    occ = grid.occupancy > 0
    if not occ.any():
        raise EmptyInput("cannot fill a fully empty grid")
    data = grid.data.copy()
    filled = occ.copy()

    for r in range(grid.height):
        row_known = occ[r]
        if row_known.all() or not row_known.any():
            continue
        for c in range(4):
            data[c, r] = _fill_line(data[c, r], row_known, wrap_azimuth, grid.width)
        filled[r] = True

    if (~filled).any():
        for col in range(grid.width):
            col_known = filled[:, col]
            if col_known.all() or not col_known.any():
                continue
            for c in range(4):
                data[c, :, col] = _fill_line(data[c, :, col], col_known, False, grid.height)
            filled[:, col] = True

    new_pixels = filled & ~occ
    norms = np.sqrt((data[:3] ** 2).sum(axis=0))
    renorm = new_pixels & (norms > 0)
    data[:3, renorm] /= norms[renorm]
    return replace(grid, data=data, filled=filled)


def crop_roi(grid: RasterGrid, cfg: ProjectionConfig) -> RasterGrid:
    """Keep rows [floor(h_min*H), ceil(h_max*H)); width unchanged."""
    H = grid.height
    r0 = int(np.floor(cfg.h_min * H))
    r1 = int(np.ceil(cfg.h_max * H))
    if r1 - r0 < 8:
        raise RoiTooSmall(f"ROI height {r1 - r0} < 8 rows")
    filled = grid.filled[r0:r1] if grid.filled is not None else None
    return replace(
        grid,
        data=grid.data[:, r0:r1],
        row_offset=grid.row_offset + r0,
        filled=filled,
    )


def circular_shift(grid: RasterGrid, offset: int) -> RasterGrid:
    """Cyclic shift of all channels along the width axis."""
    offset = int(offset) % grid.width
    filled = np.roll(grid.filled, offset, axis=1) if grid.filled is not None else None
    return replace(grid, data=np.roll(grid.data, offset, axis=2), filled=filled)


def normalize_input_channels(grid: RasterGrid) -> np.ndarray:
    """Map normal components from [-1, 1] to [0, 1]; unfilled pixels get 0.5."""
    out = (grid.normals + 1.0) / 2.0
    covered = grid.filled if grid.filled is not None else (grid.occupancy > 0)
    out = np.where(covered[None, :, :], out, 0.5)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# SMR1 raster files


def write_smr1(path: str | Path, data: np.ndarray, channel_names=None) -> None:
    """Write a (C, H, W) or (H, W) float stack as an SMR1 file."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    C, H, W = arr.shape
    if channel_names is None:
        channel_names = [f"c{i}" for i in range(C)]
    if len(channel_names) != C:
        raise ValueError("channel name count mismatch")
    with Path(path).open("wb") as fh:
        fh.write(b"SMR1")
        fh.write(struct.pack("<III", H, W, C))
        for name in channel_names:
            enc = name.encode("ascii")
            fh.write(struct.pack("<B", len(enc)))
            fh.write(enc)
        # pixel-major, channels interleaved
        fh.write(np.ascontiguousarray(arr.transpose(1, 2, 0)).tobytes())


def read_smr1(path: str | Path):
    """Read an SMR1 file; returns ((C, H, W) float32 array, channel names)."""
    raw = Path(path).read_bytes()
    if raw[:4] != b"SMR1":
        raise ValueError(f"{path}: bad SMR1 magic")
    H, W, C = struct.unpack_from("<III", raw, 4)
    pos = 16
    names = []
    for _ in range(C):
        (ln,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        names.append(raw[pos : pos + ln].decode("ascii"))
        pos += ln
    arr = np.frombuffer(raw, dtype="<f4", count=H * W * C, offset=pos)
    return arr.reshape(H, W, C).transpose(2, 0, 1).copy(), names


def grid_to_smr1(path: str | Path, grid: RasterGrid) -> None:
    write_smr1(path, grid.data, list(grid.channel_names))


def grid_from_smr1(path: str | Path, delta: float) -> RasterGrid:
    data, names = read_smr1(path)
    return RasterGrid(data.astype(np.float64), delta, tuple(names))


def export_png(path: str | Path, channel: np.ndarray) -> None:
    """Write one channel as an 8-bit PNG, linearly min-max scaled."""
    from PIL import Image

    arr = np.asarray(channel, dtype=np.float64)
    lo, hi = arr.min(), arr.max()
    scale = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    Image.fromarray((scale * 255).round().astype(np.uint8)).save(Path(path))
