"""Encoder-decoder network for Gaussian likelihood map regression.

Five scales: DoubleConv stem, four maxpool+DoubleConv stages doubling the
channel count, then four upsampling stages that halve channels, concatenate
the matching encoder skip and run another DoubleConv, finished by a 1x1
convolution and a sigmoid.  The three upsample modes differ only in the
upsampling block:

  nearest_upsample   2x nearest neighbor + 3x3 conv
  transpose          transposed conv k=2, s=2
  transpose_dilated  transposed conv k=3, s=2, d=2, p=2, op=1
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import smw1
from .errors import ConfigError, ShapeError

UPSAMPLE_MODES = ("nearest_upsample", "transpose", "transpose_dilated")
DOWNSAMPLE_FACTOR = 16  # 2^(depth-1) with depth 5


@dataclass(frozen=True)
class GNetConfig:
    in_channels: int = 3
    base_width: int = 8
    upsample_mode: str = "transpose_dilated"
    out_channels: int = 1
    batchnorm: bool = True
    circular_width: bool = False

    def __post_init__(self):
        if self.base_width < 4:
            raise ConfigError(f"base_width must be >= 4, got {self.base_width}")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ConfigError(f"unknown upsample_mode {self.upsample_mode!r}")


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    def __init__(self, rng, name, cin, cout, k, stride=1, padding=0, dilation=1,
                 dtype=np.float32):
        self.stride, self.padding, self.dilation = stride, padding, dilation
        self.weight = ad.Parameter(
            ad.Tensor(_he_uniform(rng, (cout, cin, k, k), cin * k * k, dtype)),
            f"{name}.weight")
        self.bias = ad.Parameter(ad.Tensor(np.zeros(cout, dtype=dtype)), f"{name}.bias")

    def __call__(self, x):
        return ad.conv2d(x, self.weight.tensor, self.bias.tensor,
                         self.stride, self.padding, self.dilation)

    def params(self):
        return [self.weight, self.bias]


class ConvTranspose2d:
    def __init__(self, rng, name, cin, cout, k, stride, padding=0, dilation=1,
                 output_padding=0, dtype=np.float32):
        self.stride, self.padding = stride, padding
        self.dilation, self.output_padding = dilation, output_padding
        self.weight = ad.Parameter(
            ad.Tensor(_he_uniform(rng, (cin, cout, k, k), cin * k * k, dtype)),
            f"{name}.weight")
        self.bias = ad.Parameter(ad.Tensor(np.zeros(cout, dtype=dtype)), f"{name}.bias")

    def __call__(self, x):
        return ad.conv_transpose2d(x, self.weight.tensor, self.bias.tensor,
                                   self.stride, self.padding, self.dilation,
                                   self.output_padding)

    def params(self):
        return [self.weight, self.bias]


class BatchNorm2d:
    def __init__(self, name, c, dtype=np.float32):
        self.gamma = ad.Parameter(ad.Tensor(np.ones(c, dtype=dtype)), f"{name}.gamma")
        self.beta = ad.Parameter(ad.Tensor(np.zeros(c, dtype=dtype)), f"{name}.beta")
        # float32 so SMW1 checkpoints round-trip bit-exactly
        self.running_mean = np.zeros(c, dtype=np.float32)
        self.running_var = np.ones(c, dtype=np.float32)
        self.name = name

    def __call__(self, x, training):
        return ad.batchnorm2d(x, self.gamma.tensor, self.beta.tensor,
                              self.running_mean, self.running_var, training)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}


class DoubleConv:
    """[conv3x3 pad1 -> (batchnorm) -> relu] x2."""

    def __init__(self, rng, name, cin, cout, batchnorm=True, circular_width=False,
                 dtype=np.float32):
        self.circular_width = circular_width
        pad = (1, 0) if circular_width else 1
        self.conv1 = Conv2d(rng, f"{name}.conv1", cin, cout, 3, padding=pad, dtype=dtype)
        self.conv2 = Conv2d(rng, f"{name}.conv2", cout, cout, 3, padding=pad, dtype=dtype)
        self.bn1 = BatchNorm2d(f"{name}.bn1", cout, dtype=dtype) if batchnorm else None
        self.bn2 = BatchNorm2d(f"{name}.bn2", cout, dtype=dtype) if batchnorm else None

    def __call__(self, x, training):
        for conv, bn in ((self.conv1, self.bn1), (self.conv2, self.bn2)):
            if self.circular_width:
                x = ad.pad_circular_width(x, 1)
            x = conv(x)
            if bn is not None:
                x = bn(x, training)
            x = ad.relu(x)
        return x

    def params(self):
        out = self.conv1.params() + self.conv2.params()
        for bn in (self.bn1, self.bn2):
            if bn is not None:
                out += bn.params()
        return out

    def buffers(self):
        out = {}
        for bn in (self.bn1, self.bn2):
            if bn is not None:
                out.update(bn.buffers())
        return out


class UpBlock:
    def __init__(self, rng, name, cin, cout, mode, batchnorm, circular_width,
                 dtype=np.float32):
        self.mode = mode
        if mode == "nearest_upsample":
            self.up = Conv2d(rng, f"{name}.upconv", cin, cout, 3, padding=1, dtype=dtype)
        elif mode == "transpose":
            self.up = ConvTranspose2d(rng, f"{name}.upconv", cin, cout, 2, stride=2,
                                      dtype=dtype)
        else:  # transpose_dilated
            self.up = ConvTranspose2d(rng, f"{name}.upconv", cin, cout, 3, stride=2,
                                      padding=2, dilation=2, output_padding=1,
                                      dtype=dtype)
        self.block = DoubleConv(rng, f"{name}.double", cout * 2, cout,
                                batchnorm, circular_width, dtype=dtype)

    def __call__(self, x, skip, training):
        if self.mode == "nearest_upsample":
            x = self.up(ad.nearest_upsample2x(x))
        else:
            x = self.up(x)
        x = ad.concat_channels(skip, x)
        return self.block(x, training)

    def params(self):
        return self.up.params() + self.block.params()

    def buffers(self):
        return self.block.buffers()


class GNetModel:
    def __init__(self, cfg: GNetConfig, seed: int, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c0 = cfg.base_width
        widths = [c0, 2 * c0, 4 * c0, 8 * c0, 16 * c0]
        bn, cw = cfg.batchnorm, cfg.circular_width
        self.stem = DoubleConv(rng, "enc0", cfg.in_channels, widths[0], bn, cw, dtype)
        self.downs = [
            DoubleConv(rng, f"enc{i}", widths[i - 1], widths[i], bn, cw, dtype)
            for i in range(1, 5)
        ]
        self.ups = [
            UpBlock(rng, f"dec{i}", widths[4 - i], widths[3 - i],
                    cfg.upsample_mode, bn, cw, dtype)
            for i in range(4)
        ]
        self.head = Conv2d(rng, "head", widths[0], cfg.out_channels, 1, dtype=dtype)

    def params(self) -> list[ad.Parameter]:
        out = self.stem.params()
        for d in self.downs:
            out += d.params()
        for u in self.ups:
            out += u.params()
        out += self.head.params()
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = dict(self.stem.buffers())
        for blk in self.downs + self.ups:
            out.update(blk.buffers())
        return out

    def forward(self, x: ad.Tensor, training: bool = False) -> ad.Tensor:
        if x.data.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected N x {self.cfg.in_channels} x H x W, got {x.shape}")
        H, W = x.shape[2], x.shape[3]
        if H % DOWNSAMPLE_FACTOR or W % DOWNSAMPLE_FACTOR:
            raise ShapeError(
                f"spatial dims must be divisible by {DOWNSAMPLE_FACTOR}, got {H}x{W}")
        skips = [self.stem(x, training)]
        h = skips[0]
        for down in self.downs:
            h = down(ad.maxpool2d(h), training)
            skips.append(h)
        for i, up in enumerate(self.ups):
            h = up(h, skips[3 - i], training)
        return ad.sigmoid(self.head(h))

    # -- persistence ------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {p.name: p.data for p in self.params()}
        arrays.update(self.buffers())
        return arrays

    def save(self, path) -> None:
        smw1.save_smw1(path, self.state_arrays())
        sidecar = Path(path).with_suffix(Path(path).suffix + ".json")
        sidecar.write_text(json.dumps(asdict(self.cfg)))

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if p.name not in arrays:
                raise KeyError(f"checkpoint missing parameter {p.name!r}")
            if arrays[p.name].shape != p.data.shape:
                raise ShapeError(
                    f"{p.name}: checkpoint shape {arrays[p.name].shape} != {p.data.shape}")
            p.tensor.data = arrays[p.name].astype(self.dtype)
        for name, buf in self.buffers().items():
            if name in arrays:
                buf[...] = arrays[name].astype(buf.dtype)

    @classmethod
    def load(cls, path) -> "GNetModel":
        sidecar = Path(path).with_suffix(Path(path).suffix + ".json")
        cfg = GNetConfig(**json.loads(sidecar.read_text()))
        model = cls(cfg, seed=0)
        model.load_state(smw1.load_smw1(path))
        return model


def build_model(cfg: GNetConfig, seed: int) -> GNetModel:
    """Deterministically initialized model (He-uniform weights from seed)."""
    return GNetModel(cfg, seed)


def count_parameters(model: GNetModel) -> int:
    return sum(p.data.size for p in model.params())
