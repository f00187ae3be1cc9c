"""Single-pass numba kernels behind the layer implementations.

Layout is NHWC throughout; the convolutions run as one GEMM over patch
matrices with a trailing ones column so weights and bias share the GEMM.
Kernels are dtype-generic (numba specializes per call signature).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def im2col_bias(x, k, cols):
    """Valid k x k patches of x (B,H,W,C) into cols (B,Ho,Wo,k*k*C+1);
    the last column is the constant 1 that carries the bias through the GEMM."""
    B, H, W, C = x.shape
    Ho = H - k + 1
    Wo = W - k + 1
    kk = k * k * C
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                idx = 0
                for u in range(k):
                    for v in range(k):
                        for c in range(C):
                            cols[b, i, j, idx] = x[b, i + u, j + v, c]
                            idx += 1
                cols[b, i, j, kk] = 1.0


@njit(cache=True, fastmath=True)
def col2im_add(g, k, dx):
    """Scatter-add patch gradients g (B,Ho,Wo,k,k,C) back to dx (B,H,W,C)."""
    B, Ho, Wo = g.shape[:3]
    C = g.shape[5]
    dx[:] = 0.0
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                for u in range(k):
                    for v in range(k):
                        for c in range(C):
                            dx[b, i + u, j + v, c] += g[b, i, j, u, v, c]


@njit(cache=True, fastmath=True)
def relu_fwd(a, mask):
    """In-place ReLU over a flat view, recording the pass-through mask."""
    n = a.size
    af = a.reshape(n)
    mf = mask.reshape(n)
    for i in range(n):
        if af[i] > 0.0:
            mf[i] = True
        else:
            af[i] = 0.0
            mf[i] = False


@njit(cache=True, fastmath=True)
def maxpool_fwd(x, window, stride, out, am):
    """Max over window x window patches at the given stride; am records the
    winning in-window offset (u * window + v) for the backward scatter."""
    B, H, W, C = x.shape
    Ho = (H - window) // stride + 1
    Wo = (W - window) // stride + 1
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                ii = i * stride
                jj = j * stride
                for c in range(C):
                    best = x[b, ii, jj, c]
                    arg = 0
                    for u in range(window):
                        for v in range(window):
                            t = x[b, ii + u, jj + v, c]
                            if t > best:
                                best = t
                                arg = u * window + v
                    out[b, i, j, c] = best
                    am[b, i, j, c] = arg


@njit(cache=True, fastmath=True)
def maxpool_bwd(dy, am, window, stride, dx):
    """Route each upstream gradient to its recorded argmax position."""
    B, Ho, Wo, C = dy.shape
    dx[:] = 0.0
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                ii = i * stride
                jj = j * stride
                for c in range(C):
                    a = am[b, i, j, c]
                    u = a // window
                    v = a - u * window
                    dx[b, ii + u, jj + v, c] += dy[b, i, j, c]


@njit(cache=True, fastmath=True)
def lrn_fwd(x, k0, n, alpha, beta, out, den, scale):
    """Across-channel response normalization:
    out = x * (k0 + alpha * sum_{|c'-c| <= n//2} x_c'^2) ** -beta.
    den and scale cache the normalizer and its -beta power for backward."""
    B, H, W, C = x.shape
    h = n // 2
    for b in range(B):
        for i in range(H):
            for j in range(W):
                for c in range(C):
                    lo = c - h if c - h > 0 else 0
                    hi = c + h + 1 if c + h + 1 < C else C
                    s = 0.0
                    for c2 in range(lo, hi):
                        s += x[b, i, j, c2] * x[b, i, j, c2]
                    d = k0 + alpha * s
                    sc = d ** (-beta)
                    den[b, i, j, c] = d
                    scale[b, i, j, c] = sc
                    out[b, i, j, c] = x[b, i, j, c] * sc


@njit(cache=True, fastmath=True)
def lrn_bwd(x, dy, n, alpha, beta, den, scale, dx, g):
    """dx_c = dy_c * scale_c - 2*alpha*beta * x_c * sum_win(dy * x * scale / den).

    The window sum uses the same clamped channel window as forward (the
    membership relation c in win(c') is symmetric)."""
    B, H, W, C = x.shape
    h = n // 2
    for b in range(B):
        for i in range(H):
            for j in range(W):
                for c in range(C):
                    g[b, i, j, c] = (
                        dy[b, i, j, c] * x[b, i, j, c] * scale[b, i, j, c] / den[b, i, j, c]
                    )
                for c in range(C):
                    lo = c - h if c - h > 0 else 0
                    hi = c + h + 1 if c + h + 1 < C else C
                    s = 0.0
                    for c2 in range(lo, hi):
                        s += g[b, i, j, c2]
                    dx[b, i, j, c] = (
                        dy[b, i, j, c] * scale[b, i, j, c]
                        - 2.0 * alpha * beta * x[b, i, j, c] * s
                    )


def warmup(dtype=np.float64) -> None:
    """Trigger JIT compilation for a dtype so timing-sensitive callers
    (tests, the CLI) pay the compile cost once, up front."""
    x = np.ones((1, 6, 6, 2), dtype)
    cols = np.empty((1, 4, 4, 19), dtype)
    im2col_bias(x, 3, cols)
    g = np.ones((1, 4, 4, 3, 3, 2), dtype)
    col2im_add(g, 3, np.empty_like(x))
    mask = np.empty(x.shape, np.bool_)
    relu_fwd(x.copy(), mask)
    out = np.empty((1, 2, 2, 2), dtype)
    am = np.empty((1, 2, 2, 2), np.int8)
    maxpool_fwd(x, 3, 2, out, am)
    maxpool_bwd(out, am, 3, 2, np.empty_like(x))
    den = np.empty_like(x)
    scale = np.empty_like(x)
    lrn_fwd(x, 2.0, 5, 1e-4, 0.75, np.empty_like(x), den, scale)
    lrn_bwd(x, x, 5, 1e-4, 0.75, den, scale, np.empty_like(x), np.empty_like(x))
