"""Hot numeric kernels: 2D cross-correlation forward/backward and the
finite-difference gradient probe.

Two interchangeable implementations live here: numba @njit loops (default)
and a pure-numpy path. Selection happens once at import from the
GRIDLIFE_BACKEND environment variable ("numba" or "numpy"); use_backend()
rebinds the public aliases at runtime for tests and benchmarks.

All kernels take float64 arrays. Convolutions are cross-correlations
(no kernel flip) with zero padding kernel_size // 2, so spatial shape is
preserved for both 3x3 and 1x1 kernels.
"""

import os
import warnings

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def conv2d_forward_numpy(x, kernels, bias):
    """Cross-correlate x (H, W, Cin) with kernels (Cout, Cin, K, K) + bias."""
    k = kernels.shape[2]
    pad = k // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(0, 1))  # (H, W, Cin, K, K)
    return np.einsum("hwcuv,ocuv->hwo", win, kernels) + bias


def conv2d_backward_numpy(x, kernels, d_out):
    """Gradients of sum(conv2d_forward(x, k, b) * d_out) wrt x, kernels, bias."""
    k = kernels.shape[2]
    pad = k // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(0, 1))
    d_bias = d_out.sum(axis=(0, 1))
    d_kernels = np.einsum("hwo,hwcuv->ocuv", d_out, win)
    # d_x is the correlation of zero-padded d_out with spatially flipped,
    # channel-transposed kernels (pad = K - 1 - pad keeps shapes aligned).
    dp = np.pad(d_out, ((k - 1 - pad,) * 2, (k - 1 - pad,) * 2, (0, 0)))
    dwin = sliding_window_view(dp, (k, k), axis=(0, 1))
    d_x = np.einsum("hwouv,ocuv->hwc", dwin, kernels[:, :, ::-1, ::-1])
    return d_x, d_kernels, d_bias


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True)
def _nb_conv2d_forward(x, kernels, bias):
    h, w, cin = x.shape
    cout = kernels.shape[0]
    k = kernels.shape[2]
    pad = k // 2
    out = np.empty((h, w, cout))
    for i in range(h):
        for j in range(w):
            for co in range(cout):
                acc = bias[co]
                for u in range(k):
                    ii = i + u - pad
                    if ii < 0 or ii >= h:
                        continue
                    for v in range(k):
                        jj = j + v - pad
                        if jj < 0 or jj >= w:
                            continue
                        for ci in range(cin):
                            acc += kernels[co, ci, u, v] * x[ii, jj, ci]
                out[i, j, co] = acc
    return out


def conv2d_forward_numba(x, kernels, bias):
    """Cross-correlate x (H, W, Cin) with kernels (Cout, Cin, K, K) + bias."""
    return _nb_conv2d_forward(x, kernels, bias)


@njit(cache=True, fastmath=True)
def _nb_conv2d_backward(x, kernels, d_out):
    h, w, cin = x.shape
    cout = kernels.shape[0]
    k = kernels.shape[2]
    pad = k // 2
    d_x = np.zeros((h, w, cin))
    d_kernels = np.zeros(kernels.shape)
    d_bias = np.zeros(cout)
    for i in range(h):
        for j in range(w):
            for co in range(cout):
                g = d_out[i, j, co]
                d_bias[co] += g
                for u in range(k):
                    ii = i + u - pad
                    if ii < 0 or ii >= h:
                        continue
                    for v in range(k):
                        jj = j + v - pad
                        if jj < 0 or jj >= w:
                            continue
                        for ci in range(cin):
                            d_kernels[co, ci, u, v] += g * x[ii, jj, ci]
                            d_x[ii, jj, ci] += g * kernels[co, ci, u, v]
    return d_x, d_kernels, d_bias


def conv2d_backward_numba(x, kernels, d_out):
    """Gradients of sum(conv2d_forward(x, k, b) * d_out) wrt x, kernels, bias."""
    return _nb_conv2d_backward(x, kernels, d_out)


# ---------------------------------------------------------------------------
# fused flat-parameter forward + finite differences (numba only)
#
# The network layout duplicated here (stem -> relu -> two residual blocks
# -> 1x1 head, parameters in flatten() order) is what makes the
# finite-difference loop fast enough to probe every parameter; equality
# with the structured forward in nn.py is covered by tests.
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True)
def _nb_relu_inplace(a):
    h, w, c = a.shape
    for i in range(h):
        for j in range(w):
            for ci in range(c):
                if a[i, j, ci] < 0.0:
                    a[i, j, ci] = 0.0


@njit(cache=True, fastmath=True)
def _nb_forward_flat(theta, x, width, out_ch):
    h, w, cin = x.shape
    o = 0
    sk = theta[o:o + width * cin * 9].reshape(width, cin, 3, 3)
    o += width * cin * 9
    sb = theta[o:o + width]
    o += width
    a = _nb_conv2d_forward(x, sk, sb)
    _nb_relu_inplace(a)
    for _blk in range(2):
        ka = theta[o:o + width * width * 9].reshape(width, width, 3, 3)
        o += width * width * 9
        ba = theta[o:o + width]
        o += width
        kb = theta[o:o + width * width * 9].reshape(width, width, 3, 3)
        o += width * width * 9
        bb = theta[o:o + width]
        o += width
        t = _nb_conv2d_forward(a, ka, ba)
        _nb_relu_inplace(t)
        u = _nb_conv2d_forward(t, kb, bb)
        for i in range(h):
            for j in range(w):
                for ci in range(width):
                    s = a[i, j, ci] + u[i, j, ci]
                    a[i, j, ci] = s if s > 0.0 else 0.0
    hk = theta[o:o + out_ch * width].reshape(out_ch, width, 1, 1)
    o += out_ch * width
    hb = theta[o:o + out_ch]
    return _nb_conv2d_forward(a, hk, hb)


def network_output_from_flat(theta, x, width, out_ch):
    """Forward pass straight from a flat parameter vector (numba path)."""
    return _nb_forward_flat(theta, x, width, out_ch)


@njit(cache=True, fastmath=True)
def _nb_fd_gradient(theta, x, proj, width, out_ch, step):
    n = theta.size
    grad = np.empty(n)
    th = theta.copy()
    for i in range(n):
        th[i] = theta[i] + step
        yp = _nb_forward_flat(th, x, width, out_ch)
        th[i] = theta[i] - step
        ym = _nb_forward_flat(th, x, width, out_ch)
        th[i] = theta[i]
        fp = 0.0
        fm = 0.0
        for a in range(yp.shape[0]):
            for b in range(yp.shape[1]):
                for c in range(yp.shape[2]):
                    fp += yp[a, b, c] * proj[a, b, c]
                    fm += ym[a, b, c] * proj[a, b, c]
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def fd_gradient_numba(theta, x, proj, width, out_ch, step):
    """Central-difference gradient of sum(forward(theta) * proj) per parameter."""
    return _nb_fd_gradient(theta, x, proj, width, out_ch, step)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_IMPLEMENTATIONS = {
    "numpy": (conv2d_forward_numpy, conv2d_backward_numpy),
    "numba": (conv2d_forward_numba, conv2d_backward_numba),
}

ACTIVE_BACKEND = None
conv2d_forward = None
conv2d_backward = None


def use_backend(name):
    """Rebind the public kernel aliases; testing/benchmark hook."""
    global ACTIVE_BACKEND, conv2d_forward, conv2d_backward
    if name not in _IMPLEMENTATIONS:
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ValueError("numba backend requested but numba is not importable")
    conv2d_forward, conv2d_backward = _IMPLEMENTATIONS[name]
    ACTIVE_BACKEND = name


def _detect_backend():
    choice = os.environ.get("GRIDLIFE_BACKEND", "").strip().lower()
    if choice in ("numba", "numpy"):
        if choice == "numba" and not NUMBA_AVAILABLE:
            warnings.warn("GRIDLIFE_BACKEND=numba but numba is not importable; "
                          "falling back to numpy kernels")
            return "numpy"
        return choice
    if choice:
        warnings.warn(f"ignoring unknown GRIDLIFE_BACKEND={choice!r}")
    return "numba" if NUMBA_AVAILABLE else "numpy"


use_backend(_detect_backend())
