"""Finite-difference verification of every differentiable op.

Each check builds small float64 tensors, reduces the op output to a scalar
through a fixed random projection, and compares reverse-mode gradients
against central differences.  Shared by the CLI `gradcheck` command and the
test suite.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

THRESHOLD = 1e-5


def _t(rng, *shape, low=-1.0, high=1.0):
    return ad.Tensor(rng.uniform(low, high, size=shape))


def _proj(out, w):
    """Fixed random projection so every output element reaches the loss."""
    t = ad.Tensor(np.asarray((out.data * w).sum()))
    t.requires_grad = True
    t._parents = (out,)
    t._backward_fn = lambda g: out._accumulate(g * w)
    return t


def _check(op, inputs, rng, out_shape):
    w = rng.standard_normal(out_shape)
    return ad.finite_difference_check(lambda *ts: _proj(op(*ts), w), inputs)


def _cases(rng):
    """Yields (name, max_rel_error) for one random draw."""
    x = _t(rng, 2, 3, 6, 8)
    wt = _t(rng, 4, 3, 3, 3, low=-0.5, high=0.5)
    b = _t(rng, 4)
    yield "conv2d", _check(
        lambda a, ww, bb: ad.conv2d(a, ww, bb, stride=1, padding=1),
        [x, wt, b], rng, (2, 4, 6, 8))

    x2 = _t(rng, 2, 3, 7, 9)
    w2 = _t(rng, 2, 3, 3, 3, low=-0.5, high=0.5)
    yield "conv2d_strided", _check(
        lambda a, ww: ad.conv2d(a, ww, stride=2, padding=1),
        [x2, w2], rng, (2, 2, 4, 5))

    xt = _t(rng, 2, 4, 4, 5)
    wt2 = _t(rng, 4, 3, 2, 2, low=-0.5, high=0.5)
    yield "conv_transpose2d", _check(
        lambda a, ww: ad.conv_transpose2d(a, ww, stride=2),
        [xt, wt2], rng, (2, 3, 8, 10))

    wt3 = _t(rng, 4, 3, 3, 3, low=-0.5, high=0.5)
    yield "conv_transpose2d_dilated", _check(
        lambda a, ww: ad.conv_transpose2d(a, ww, stride=2, padding=2,
                                          dilation=2, output_padding=1),
        [xt, wt3], rng, (2, 3, 8, 10))

    xp = _t(rng, 2, 3, 4, 6)
    yield "maxpool2d", _check(lambda a: ad.maxpool2d(a, 2),
                              [xp], rng, (2, 3, 2, 3))

    yield "nearest_upsample2x", _check(ad.nearest_upsample2x,
                                       [xp], rng, (2, 3, 8, 12))

    # keep relu inputs away from the kink at zero
    xr = ad.Tensor(rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)))
    yield "relu", _check(ad.relu, [xr], rng, (3, 4))
    yield "sigmoid", _check(ad.sigmoid, [_t(rng, 3, 4)], rng, (3, 4))

    a, bb = _t(rng, 2, 3, 4, 4), _t(rng, 2, 2, 4, 4)
    yield "concat_channels", _check(ad.concat_channels, [a, bb], rng,
                                    (2, 5, 4, 4))

    yield "pad_circular_width", _check(lambda t: ad.pad_circular_width(t, 2),
                                       [xp], rng, (2, 3, 4, 10))

    xb = _t(rng, 3, 2, 4, 5)
    gamma = _t(rng, 2, low=0.5, high=1.5)
    beta = _t(rng, 2, low=-0.5, high=0.5)
    rm = np.zeros(2)
    rv = np.ones(2)
    yield "batchnorm2d_train", _check(
        lambda t, g, bt: ad.batchnorm2d(t, g, bt, rm.copy(), rv.copy(), True),
        [xb, gamma, beta], rng, (3, 2, 4, 5))
    rm2 = rng.uniform(-0.3, 0.3, 2)
    rv2 = rng.uniform(0.5, 1.5, 2)
    yield "batchnorm2d_eval", _check(
        lambda t, g, bt: ad.batchnorm2d(t, g, bt, rm2, rv2, False),
        [xb, gamma, beta], rng, (3, 2, 4, 5))

    # binary targets keep per-pixel gradients away from zero, where the
    # relative-error metric is dominated by fd roundoff
    pred = _t(rng, 2, 1, 4, 4, low=0.2, high=0.8)
    tgt = ad.Tensor((rng.uniform(0, 1, size=(2, 1, 4, 4)) > 0.5).astype(float))
    tgt.requires_grad = False
    yield "bce_loss", ad.finite_difference_check(
        lambda p: ad.bce_loss(p, tgt), [pred])
    yield "mse_loss", ad.finite_difference_check(
        lambda p: ad.mse_loss(p, tgt), [pred])


def run_gradcheck(seed: int = 0, n_seeds: int = 20,
                  threshold: float = THRESHOLD):
    """Worst error per op over n_seeds draws.

    Returns (rows, all_passed) with rows as (op_name, max_error, passed).
    """
    worst: dict[str, float] = {}
    for k in range(n_seeds):
        rng = np.random.default_rng(seed + k)
        for name, err in _cases(rng):
            worst[name] = max(worst.get(name, 0.0), err)
    rows = [(name, err, err < threshold) for name, err in worst.items()]
    return rows, all(passed for _, _, passed in rows)
