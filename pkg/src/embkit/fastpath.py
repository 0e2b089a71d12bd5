"""Optional numba kernels for the two training hot paths.

The kernels run the exact sequential per-pair (or per-window) update loop,
including per-element AdaGrad, in compiled code; they are deterministic
given the pre-drawn negative samples. When numba is unavailable, or
EMBKIT_NO_NUMBA is set, training falls back to the vectorized numpy batch
path, which implements the same objective with mini-batch aggregation.

The optimizer branch is hoisted out of the inner dimension loops so LLVM
can vectorize the AdaGrad sqrt/div chain.
"""

import math
import os

import numpy as np

try:
    if os.environ.get("EMBKIT_NO_NUMBA"):
        raise ImportError("disabled via EMBKIT_NO_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    numba = None
    HAVE_NUMBA = False


def _log_sigmoid_scalar(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def _score_and_update_target(ep, acc_ep, x, grad_x, row, g, lr, eps, adagrad):
    """Push g through one target row; accumulates d/dx into grad_x."""
    dim = ep.shape[1]
    if adagrad:
        for d in range(dim):
            grad_x[d] += g * ep[row, d]
            ge = g * x[d]
            acc_ep[row, d] += ge * ge
            ep[row, d] += lr * ge / (math.sqrt(acc_ep[row, d]) + eps)
    else:
        for d in range(dim):
            grad_x[d] += g * ep[row, d]
            ep[row, d] += lr * g * x[d]


def _pairs_kernel_py(e, ep, acc_e, acc_ep, ctx, tgt, wgt, negs,
                     lr, eps, adagrad):
    """Sequential negative-sampling updates over (context -> target) pairs."""
    total = 0.0
    n_pairs, k = negs.shape
    dim = e.shape[1]
    grad_x = np.empty(dim)
    x = np.empty(dim)
    for n in range(n_pairs):
        c = ctx[n]
        w = wgt[n]
        for d in range(dim):
            grad_x[d] = 0.0
            x[d] = e[c, d]
        for m in range(k + 1):
            row = tgt[n] if m == 0 else negs[n, m - 1]
            s = 0.0
            for d in range(dim):
                s += ep[row, d] * x[d]
            if m == 0:
                total += -w * _log_sigmoid_scalar(s)
                g = w * _sigmoid_scalar(-s)
            else:
                total += -w * _log_sigmoid_scalar(-s)
                g = -w * _sigmoid_scalar(s)
            _score_and_update_target(ep, acc_ep, x, grad_x, row, g,
                                     lr, eps, adagrad)
        if adagrad:
            for d in range(dim):
                gx = grad_x[d]
                acc_e[c, d] += gx * gx
                e[c, d] += lr * gx / (math.sqrt(acc_e[c, d]) + eps)
        else:
            for d in range(dim):
                e[c, d] += lr * grad_x[d]
    return total


def _cbow_kernel_py(e, ep, acc_e, acc_ep, tgt, ctx, wgt, negs,
                    lr, eps, adagrad):
    """Sequential negative-sampling updates over mean-context windows.

    `ctx` is (n, win-1) with -1 marking empty slots; rows must contain at
    least one context word.
    """
    total = 0.0
    n_windows, slots = ctx.shape
    k = negs.shape[1]
    dim = e.shape[1]
    x = np.empty(dim)
    grad_x = np.empty(dim)
    for n in range(n_windows):
        w = wgt[n]
        cnt = 0
        for d in range(dim):
            x[d] = 0.0
            grad_x[d] = 0.0
        for s_i in range(slots):
            row = ctx[n, s_i]
            if row >= 0:
                cnt += 1
                for d in range(dim):
                    x[d] += e[row, d]
        inv = 1.0 / cnt
        for d in range(dim):
            x[d] *= inv
        for m in range(k + 1):
            row = tgt[n] if m == 0 else negs[n, m - 1]
            s = 0.0
            for d in range(dim):
                s += ep[row, d] * x[d]
            if m == 0:
                total += -w * _log_sigmoid_scalar(s)
                g = w * _sigmoid_scalar(-s)
            else:
                total += -w * _log_sigmoid_scalar(-s)
                g = -w * _sigmoid_scalar(s)
            _score_and_update_target(ep, acc_ep, x, grad_x, row, g,
                                     lr, eps, adagrad)
        if adagrad:
            for s_i in range(slots):
                row = ctx[n, s_i]
                if row >= 0:
                    for d in range(dim):
                        gx = grad_x[d] * inv
                        acc_e[row, d] += gx * gx
                        e[row, d] += lr * gx / (math.sqrt(acc_e[row, d]) + eps)
        else:
            for s_i in range(slots):
                row = ctx[n, s_i]
                if row >= 0:
                    for d in range(dim):
                        e[row, d] += lr * grad_x[d] * inv
    return total


if HAVE_NUMBA:
    # nogil so the lock-free multi-worker mode actually runs concurrently;
    # no fastmath: the kernels are memory-bound and IEEE inf/nan semantics
    # must survive so divergent runs fail loudly instead of corrupting
    _opts = dict(cache=True, nogil=True)
    _log_sigmoid_scalar = numba.njit(**_opts)(_log_sigmoid_scalar)
    _sigmoid_scalar = numba.njit(**_opts)(_sigmoid_scalar)
    _score_and_update_target = numba.njit(**_opts)(_score_and_update_target)
    pairs_kernel = numba.njit(**_opts)(_pairs_kernel_py)
    cbow_kernel = numba.njit(**_opts)(_cbow_kernel_py)
else:  # pragma: no cover - exercised via env flag
    pairs_kernel = _pairs_kernel_py
    cbow_kernel = _cbow_kernel_py
