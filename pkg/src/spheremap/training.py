"""Dataset split, circular-shift augmentation and the training loop.

Two regimes share one backbone: Gaussian likelihood targets trained with
BCE, and density targets trained with MSE.  Rasters whose spatial dims are
not divisible by 16 are padded (wrap on the azimuth, reflect on rows)
before entering the network and cropped back afterwards.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import smw1
from .errors import ConfigError, DatasetTooSmall, DivergedError
from .gnet import DOWNSAMPLE_FACTOR, GNetModel
from .projection import (ProjectionConfig, RasterGrid, crop_roi,
                         fill_holes_cubic, normalize_input_channels,
                         project_equirectangular)
from .targetmaps import (DensityMapConfig, GaussianMapConfig, KeypointSet,
                         density_map, gaussian_map, shift_keypoints)

TARGET_MODES = ("gaussian_fixed", "gaussian_adaptive", "density")


@dataclass(frozen=True)
class Sample:
    """Network-ready sample: normalized input raster, keypoints, target."""

    input: np.ndarray  # (3, H, W) float32 in [0, 1]
    keypoints: KeypointSet
    target: np.ndarray  # (H, W) float32

    def __post_init__(self):
        if self.input.shape[1:] != self.target.shape:
            raise ConfigError(
                f"input {self.input.shape} and target {self.target.shape} disagree")


@dataclass(frozen=True)
class TrainConfig:
    target_mode: str = "gaussian_adaptive"
    loss: str | None = None  # default: bce for gaussian, mse for density
    lr: float | None = None  # default: 1e-6 gaussian, 1e-5 density
    batch_size: int = 4
    max_epochs: int = 100
    plateau_patience: int = 20
    plateau_min_delta: float = 0.005  # relative improvement threshold
    augment: bool = True
    seed: int = 0
    split_fraction: float = 0.8
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.target_mode not in TARGET_MODES:
            raise ConfigError(f"unknown target_mode {self.target_mode!r}")
        if not (0 < self.split_fraction < 1):
            raise ConfigError("split_fraction must be in (0, 1)")
        if self.effective_lr <= 0:
            raise ConfigError("lr must be > 0")

    @property
    def effective_loss(self) -> str:
        if self.loss is not None:
            return self.loss
        return "mse" if self.target_mode == "density" else "bce"

    @property
    def effective_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-5 if self.target_mode == "density" else 1e-6


def build_sample(cloud_or_grid, proj_cfg: ProjectionConfig,
                 keypoints: KeypointSet, target_mode: str,
                 gauss_cfg: GaussianMapConfig | None = None,
                 density_cfg: DensityMapConfig | None = None) -> Sample:
    """Project/fill/crop a cloud (or take a prepared ROI grid) and attach the
    target map generated from the ROI keypoints."""
    if isinstance(cloud_or_grid, RasterGrid):
        roi = cloud_or_grid
    else:
        grid = project_equirectangular(cloud_or_grid, proj_cfg)
        roi = crop_roi(fill_holes_cubic(grid, proj_cfg.wrap_azimuth), proj_cfg)
    x = normalize_input_channels(roi).astype(np.float32)
    target = make_target(keypoints, target_mode, gauss_cfg, density_cfg)
    return Sample(x, keypoints, target)


def make_target(keypoints: KeypointSet, target_mode: str,
                gauss_cfg: GaussianMapConfig | None = None,
                density_cfg: DensityMapConfig | None = None) -> np.ndarray:
    if target_mode == "gaussian_fixed":
        cfg = replace(gauss_cfg or GaussianMapConfig(), mode="fixed")
        return gaussian_map(keypoints, cfg).values.astype(np.float32)
    if target_mode == "gaussian_adaptive":
        cfg = replace(gauss_cfg or GaussianMapConfig(), mode="adaptive")
        return gaussian_map(keypoints, cfg).values.astype(np.float32)
    if target_mode == "density":
        return density_map(keypoints, density_cfg or DensityMapConfig()).values.astype(np.float32)
    raise ConfigError(f"unknown target_mode {target_mode!r}")


def split_dataset(samples: list, cfg: TrainConfig):
    """Deterministic shuffled split into (train, test); disjoint, exhaustive."""
    n = len(samples)
    if n < 5:
        raise DatasetTooSmall(f"need >= 5 samples, got {n}")
    perm = np.random.default_rng(cfg.seed).permutation(n)
    n_train = int(round(cfg.split_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    train = [samples[i] for i in perm[:n_train]]
    test = [samples[i] for i in perm[n_train:]]
    return train, test


def augment_sample(sample: Sample, rng: np.random.Generator) -> Sample:
    """Apply one random circular shift to raster, keypoints and target."""
    W = sample.input.shape[2]
    offset = int(rng.integers(0, W))
    if offset == 0:
        return sample
    return Sample(
        np.roll(sample.input, offset, axis=2),
        shift_keypoints(sample.keypoints, offset),
        np.roll(sample.target, offset, axis=1),
    )


# ---------------------------------------------------------------------------
# padding to the network's divisibility constraint


def _pad_amounts(H, W):
    ph = (-H) % DOWNSAMPLE_FACTOR
    pw = (-W) % DOWNSAMPLE_FACTOR
    return ph, pw


def pad_for_network(arr: np.ndarray) -> np.ndarray:
    """Pad trailing (H, W) axes: wrap on width, reflect on height."""
    H, W = arr.shape[-2], arr.shape[-1]
    ph, pw = _pad_amounts(H, W)
    if ph == 0 and pw == 0:
        return arr
    lead = [(0, 0)] * (arr.ndim - 2)
    out = np.pad(arr, lead + [(0, 0), (0, pw)], mode="wrap")
    if ph:
        out = np.pad(out, lead + [(0, ph), (0, 0)], mode="reflect")
    return out


def crop_after_network(arr: np.ndarray, H: int, W: int) -> np.ndarray:
    return arr[..., :H, :W]


# ---------------------------------------------------------------------------
# checkpointing


@dataclass
class Checkpoint:
    model_arrays: dict
    adam_m: dict
    adam_v: dict
    adam_t: int
    epoch: int
    best_val_loss: float

    def save(self, path) -> None:
        path = Path(path)
        smw1.save_smw1(path, self.model_arrays)
        smw1.save_smw1(path.with_suffix(".opt"),
                       {**{f"m.{k}": v for k, v in self.adam_m.items()},
                        **{f"v.{k}": v for k, v in self.adam_v.items()}})
        path.with_suffix(".meta.json").write_text(json.dumps({
            "adam_t": self.adam_t,
            "epoch": self.epoch,
            "best_val_loss": self.best_val_loss,
        }))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        arrays = smw1.load_smw1(path)
        opt = smw1.load_smw1(path.with_suffix(".opt"))
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        m = {k[2:]: v for k, v in opt.items() if k.startswith("m.")}
        v = {k[2:]: v for k, v in opt.items() if k.startswith("v.")}
        return cls(arrays, m, v, meta["adam_t"], meta["epoch"], meta["best_val_loss"])


# ---------------------------------------------------------------------------
# loops


def _forward_batch(model: GNetModel, batch: list[Sample], training: bool):
    x = np.stack([pad_for_network(s.input) for s in batch]).astype(np.float32)
    t = np.stack([pad_for_network(s.target)[None] for s in batch]).astype(np.float32)
    pred = model.forward(ad.Tensor(x), training=training)
    return pred, ad.Tensor(t)


def _loss_fn(name):
    return ad.bce_loss if name == "bce" else ad.mse_loss


def evaluate_loss(model: GNetModel, samples: list[Sample], cfg: TrainConfig) -> float:
    loss_fn = _loss_fn(cfg.effective_loss)
    total, count = 0.0, 0
    for lo in range(0, len(samples), cfg.batch_size):
        batch = samples[lo : lo + cfg.batch_size]
        pred, t = _forward_batch(model, batch, training=False)
        total += loss_fn(pred, t).item() * len(batch)
        count += len(batch)
    return total / max(count, 1)


def train(train_set: list[Sample], val_set: list[Sample], model: GNetModel,
          cfg: TrainConfig, run_dir=None, log=None):
    """Adam training with patience-on-best-validation plateau stopping.

    Returns (best Checkpoint, history) where history rows are
    (epoch, train_loss, val_loss).  With run_dir set, writes config.json,
    metrics.csv and best.smw1 there.
    """
    if not train_set or not val_set:
        raise DatasetTooSmall("train and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    loss_fn = _loss_fn(cfg.effective_loss)
    params = model.params()
    state = ad.AdamState(lr=cfg.effective_lr)

    best_val = np.inf
    best: Checkpoint | None = None
    stale = 0
    history = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_set))
        epoch_loss, seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[lo : lo + cfg.batch_size]]
            if cfg.augment:
                batch = [augment_sample(s, rng) for s in batch]
            pred, t = _forward_batch(model, batch, training=True)
            loss = loss_fn(pred, t)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergedError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            ad.adam_step(params, state)
            epoch_loss += value * len(batch)
            seen += len(batch)
        train_loss = epoch_loss / seen
        val_loss = evaluate_loss(model, val_set, cfg)
        if not np.isfinite(val_loss):
            raise DivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss))
        if log:
            log(f"epoch {epoch}: train {train_loss:.6f} val {val_loss:.6f}")

        if val_loss < best_val * (1.0 - cfg.plateau_min_delta) or best is None:
            best_val = min(best_val, val_loss)
            best = Checkpoint(
                {k: v.copy() for k, v in model.state_arrays().items()},
                {k: v.copy() for k, v in state.m.items()},
                {k: v.copy() for k, v in state.v.items()},
                state.t, epoch, float(val_loss))
            stale = 0
        else:
            best_val = min(best_val, val_loss)
            stale += 1
            if stale >= cfg.plateau_patience:
                break

    model.load_state(best.model_arrays)
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(asdict(cfg)))
        with (run_dir / "metrics.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for row in history:
                w.writerow([row[0], repr(row[1]), repr(row[2])])
        best.save(run_dir / "best.smw1")
    return best, history


def predict(model: GNetModel, raster_input: np.ndarray) -> np.ndarray:
    """Single-raster inference: (3, H, W) in, (H, W) map out."""
    H, W = raster_input.shape[1], raster_input.shape[2]
    x = pad_for_network(raster_input.astype(np.float32))[None]
    out = model.forward(ad.Tensor(x), training=False)
    return crop_after_network(out.data[0, 0], H, W)
