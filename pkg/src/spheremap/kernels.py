"""Convolution kernels: numba @njit loops with a pure-numpy (im2col + BLAS)
fallback selected by SPHEREMAP_NO_NUMBA.

Only two primitives are needed; everything else (transposed convolution,
input gradients) is expressed through them:

  conv_forward      cross-correlation with stride / padding / dilation
  conv_weight_grad  gradient of conv_forward w.r.t. the kernel

conv_input_grad re-writes the input gradient as a stride-1 correlation of
the zero-upsampled output gradient with the flipped kernel, so both
backends share it.
"""

from __future__ import annotations

import numpy as np

from . import backend


def _as_pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_out_size(size, k, stride, pad, dil):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def _pad_input(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


# ---------------------------------------------------------------------------
# numpy path: im2col + BLAS


def _im2col(xp, KH, KW, stride, dil, OH, OW):
    """(N, C, Hp, Wp) -> (N, C*KH*KW, OH*OW) patch matrix."""
    N, C, Hp, Wp = xp.shape
    sN, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(N, C, KH, KW, OH, OW),
        strides=(sN, sC, sH * dil, sW * dil, sH * stride, sW * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(N, C * KH * KW, OH * OW)


def _conv_forward_np(x, w, stride, ph, pw, dil):
    N = x.shape[0]
    OC, C, KH, KW = w.shape
    xp = _pad_input(x, ph, pw)
    OH = conv_out_size(x.shape[2], KH, stride, ph, dil)
    OW = conv_out_size(x.shape[3], KW, stride, pw, dil)
    cols = _im2col(xp, KH, KW, stride, dil, OH, OW)
    out = np.matmul(w.reshape(OC, -1)[None], cols)
    return out.reshape(N, OC, OH, OW)


def _conv_weight_grad_np(x, gout, KH, KW, stride, ph, pw, dil):
    N, OC, OH, OW = gout.shape
    C = x.shape[1]
    xp = _pad_input(x, ph, pw)
    cols = _im2col(xp, KH, KW, stride, dil, OH, OW)
    g = gout.reshape(N, OC, OH * OW)
    gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(OC, C, KH, KW)


# ---------------------------------------------------------------------------
# numba path

if backend.NUMBA_AVAILABLE:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _conv_forward_nb_kernel(xp, w2, out, KH, KW, stride, dil):
        # per output row: gather the (C*KH*KW, OW) patch matrix, then one
        # GEMM against the flattened (OC, C*KH*KW) kernel
        N, C = xp.shape[0], xp.shape[1]
        OH, OW = out.shape[2], out.shape[3]
        K = C * KH * KW
        for n in prange(N):
            patch = np.empty((K, OW), dtype=xp.dtype)
            for oh in range(OH):
                i = 0
                for c in range(C):
                    for kh in range(KH):
                        ih = oh * stride + kh * dil
                        row = xp[n, c, ih]
                        for kw in range(KW):
                            j0 = kw * dil
                            if stride == 1:
                                patch[i, :] = row[j0 : j0 + OW]
                            else:
                                for ow in range(OW):
                                    patch[i, ow] = row[j0 + ow * stride]
                            i += 1
                out[n, :, oh, :] = np.dot(w2, patch)

    @njit(parallel=True, cache=True)
    def _conv_weight_grad_nb_kernel(xp, gout, gw_all, KH, KW, stride, dil):
        # per output row: gather the (C*KH*KW, OW) patch matrix once, then a
        # single GEMM against the (OW, OC) gradient block
        N, C = xp.shape[0], xp.shape[1]
        OC, OH, OW = gout.shape[1], gout.shape[2], gout.shape[3]
        K = C * KH * KW
        for n in prange(N):
            patch = np.empty((K, OW), dtype=xp.dtype)
            g_t = np.empty((OW, OC), dtype=xp.dtype)
            for oh in range(OH):
                i = 0
                for c in range(C):
                    for kh in range(KH):
                        ih = oh * stride + kh * dil
                        row = xp[n, c, ih]
                        for kw in range(KW):
                            j0 = kw * dil
                            for ow in range(OW):
                                patch[i, ow] = row[j0 + ow * stride]
                            i += 1
                for oc in range(OC):
                    g = gout[n, oc, oh]
                    for ow in range(OW):
                        g_t[ow, oc] = g[ow]
                gw_all[n] += np.dot(patch, g_t)


def _conv_forward_numba(x, w, stride, ph, pw, dil):
    N = x.shape[0]
    OC, C, KH, KW = w.shape
    xp = np.ascontiguousarray(_pad_input(x, ph, pw))
    OH = conv_out_size(x.shape[2], KH, stride, ph, dil)
    OW = conv_out_size(x.shape[3], KW, stride, pw, dil)
    out = np.empty((N, OC, OH, OW), dtype=x.dtype)
    w2 = np.ascontiguousarray(w.reshape(OC, C * KH * KW))
    _conv_forward_nb_kernel(xp, w2, out, KH, KW, stride, dil)
    return out


def _conv_weight_grad_numba(x, gout, KH, KW, stride, ph, pw, dil):
    N, OC = gout.shape[0], gout.shape[1]
    C = x.shape[1]
    xp = np.ascontiguousarray(_pad_input(x, ph, pw))
    gw_all = np.zeros((N, C * KH * KW, OC), dtype=x.dtype)
    _conv_weight_grad_nb_kernel(xp, np.ascontiguousarray(gout), gw_all,
                                KH, KW, stride, dil)
    # (C*KH*KW, OC) summed over batch -> (OC, C, KH, KW)
    return gw_all.sum(axis=0).T.reshape(OC, C, KH, KW).copy()


# ---------------------------------------------------------------------------
# public API


def conv_forward(x, w, stride=1, padding=0, dilation=1):
    """Cross-correlation of (N, C, H, W) with (OC, C, KH, KW); no bias."""
    ph, pw = _as_pair(padding)
    if backend.use_numba():
        return _conv_forward_numba(x, w, int(stride), ph, pw, int(dilation))
    return _conv_forward_np(x, w, int(stride), ph, pw, int(dilation))


def conv_weight_grad(x, gout, KH, KW, stride=1, padding=0, dilation=1):
    """Gradient of conv_forward w.r.t. the (OC, C, KH, KW) kernel."""
    ph, pw = _as_pair(padding)
    if backend.use_numba():
        return _conv_weight_grad_numba(x, gout, KH, KW, int(stride), ph, pw, int(dilation))
    return _conv_weight_grad_np(x, gout, KH, KW, int(stride), ph, pw, int(dilation))


def conv_input_grad(gout, w, input_hw, stride=1, padding=0, dilation=1):
    """Gradient of conv_forward w.r.t. its input.

    input_hw is the (H, W) of the original convolution input.  The
    transposed convolution's forward pass is this same computation with its
    own input in the role of gout.
    """
    stride, dil = int(stride), int(dilation)
    ph, pw = _as_pair(padding)
    N, OC, OH, OW = gout.shape
    _, C, KH, KW = w.shape
    H, W = input_hw
    Hp, Wp = H + 2 * ph, W + 2 * pw

    # zero-upsample gout by the stride and pad so a stride-1 correlation with
    # the flipped kernel produces the padded input gradient
    lh, lw = (OH - 1) * stride + 1, (OW - 1) * stride + 1
    mh, mw = dil * (KH - 1), dil * (KW - 1)
    gz = np.zeros((N, OC, mh + Hp, mw + Wp), dtype=gout.dtype)
    gz[:, :, mh : mh + lh : stride, mw : mw + lw : stride] = gout

    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gxp = conv_forward(gz, wflip, stride=1, padding=0, dilation=dil)
    return gxp[:, :, ph : ph + H, pw : pw + W]
