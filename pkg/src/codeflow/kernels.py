"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The active backend is chosen once at import time from the environment
variable ``CODEFLOW_KERNELS``:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require numba, raise if it is missing
* ``numpy``: force the pure-numpy implementations

Both backends implement identical element-wise math; reductions may differ
in summation order, so cross-backend comparisons are tolerance-based.
Matrix products stay in numpy (BLAS) throughout the package; only fusable
element-wise chains live here.  ``benchmarks/bench_kernels.py`` compares
the two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "CODEFLOW_KERNELS"


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _np_silu_fwd(x):
    return x * _np_sigmoid(x)


def _np_silu_bwd(x, dy):
    s = _np_sigmoid(x)
    return dy * (s * (1.0 + x * (1.0 - s)))


def _np_perturb(x0, x1, alpha, sigma, z):
    return x0 + (x1 - x0) * alpha[:, None] + sigma[:, None] * z


def _np_euler_update(x, x0h, x1, slog, a, ap, dt):
    diff = x1 - x0h
    mu = x0h + diff * a
    u = slog * (x - mu) + diff * ap
    return x - dt * u


def _np_rmsnorm_mod_fwd(x, scale, shift, eps):
    rms = np.sqrt(np.mean(x * x, axis=-1) + eps)
    y = (x / rms[..., None]) * (1.0 + scale[:, None, :]) + shift[:, None, :]
    return y, rms


def _np_rmsnorm_mod_bwd(x, rms, scale, dy):
    w = x.shape[-1]
    xhat = x / rms[..., None]
    dxhat = dy * (1.0 + scale[:, None, :])
    dscale = np.sum(dy * xhat, axis=1)
    dshift = np.sum(dy, axis=1)
    dot = np.sum(dxhat * x, axis=-1)
    dx = dxhat / rms[..., None] - x * (dot / (w * rms**3))[..., None]
    return dx, dscale, dshift


def _np_adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2, clip_coef):
    gc = g * clip_coef
    m[:] = beta1 * m + (1.0 - beta1) * gc
    v[:] = beta2 * v + (1.0 - beta2) * gc * gc
    p[:] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    # keep persistent state on the float32 grid so checkpoints are lossless
    p[:] = p.astype(np.float32)
    m[:] = m.astype(np.float32)
    v[:] = v.astype(np.float32)


_NUMPY_IMPLS = {
    "silu_fwd": _np_silu_fwd,
    "silu_bwd": _np_silu_bwd,
    "perturb": _np_perturb,
    "euler_update": _np_euler_update,
    "rmsnorm_mod_fwd": _np_rmsnorm_mod_fwd,
    "rmsnorm_mod_bwd": _np_rmsnorm_mod_bwd,
    "adam_step": _np_adam_step,
}


# ---------------------------------------------------------------------------
# numba implementations (explicit loops; compiled lazily, cached on disk)


def _build_numba_impls():
    from numba import njit

    opts = dict(cache=True, fastmath=False)

    @njit(**opts)
    def _sigmoid(x):
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        ex = math.exp(x)
        return ex / (1.0 + ex)

    @njit(**opts)
    def silu_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            out[i] = x[i] * _sigmoid(x[i])
        return out

    @njit(**opts)
    def silu_bwd(x, dy):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            s = _sigmoid(x[i])
            out[i] = dy[i] * (s * (1.0 + x[i] * (1.0 - s)))
        return out

    @njit(**opts)
    def perturb(x0, x1, alpha, sigma, z):
        n, l = x0.shape
        out = np.empty_like(x0)
        for i in range(n):
            a = alpha[i]
            s = sigma[i]
            for j in range(l):
                out[i, j] = x0[i, j] + (x1[i, j] - x0[i, j]) * a + s * z[i, j]
        return out

    @njit(**opts)
    def euler_update(x, x0h, x1, slog, a, ap, dt):
        n, l = x.shape
        out = np.empty_like(x)
        for i in range(n):
            for j in range(l):
                diff = x1[i, j] - x0h[i, j]
                mu = x0h[i, j] + diff * a
                u = slog * (x[i, j] - mu) + diff * ap
                out[i, j] = x[i, j] - dt * u
        return out

    @njit(**opts)
    def rmsnorm_mod_fwd(x, scale, shift, eps):
        n, s, w = x.shape
        y = np.empty_like(x)
        rms = np.empty((n, s), dtype=x.dtype)
        for i in range(n):
            for k in range(s):
                acc = 0.0
                for j in range(w):
                    acc += x[i, k, j] * x[i, k, j]
                r = math.sqrt(acc / w + eps)
                rms[i, k] = r
                for j in range(w):
                    y[i, k, j] = (x[i, k, j] / r) * (1.0 + scale[i, j]) + shift[i, j]
        return y, rms

    @njit(**opts)
    def rmsnorm_mod_bwd(x, rms, scale, dy):
        n, s, w = x.shape
        dx = np.empty_like(x)
        dscale = np.zeros((n, w), dtype=x.dtype)
        dshift = np.zeros((n, w), dtype=x.dtype)
        for i in range(n):
            for k in range(s):
                r = rms[i, k]
                dot = 0.0
                for j in range(w):
                    xhat = x[i, k, j] / r
                    dscale[i, j] += dy[i, k, j] * xhat
                    dshift[i, j] += dy[i, k, j]
                    dot += dy[i, k, j] * (1.0 + scale[i, j]) * x[i, k, j]
                for j in range(w):
                    dxhat = dy[i, k, j] * (1.0 + scale[i, j])
                    dx[i, k, j] = dxhat / r - x[i, k, j] * dot / (w * r * r * r)
        return dx, dscale, dshift

    @njit(**opts)
    def adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2, clip_coef):
        for i in range(p.shape[0]):
            gc = g[i] * clip_coef
            m[i] = beta1 * m[i] + (1.0 - beta1) * gc
            v[i] = beta2 * v[i] + (1.0 - beta2) * gc * gc
            step = lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)
            p[i] = np.float32(p[i] - step)
            m[i] = np.float32(m[i])
            v[i] = np.float32(v[i])

    return {
        "silu_fwd": silu_fwd,
        "silu_bwd": silu_bwd,
        "perturb": perturb,
        "euler_update": euler_update,
        "rmsnorm_mod_fwd": rmsnorm_mod_fwd,
        "rmsnorm_mod_bwd": rmsnorm_mod_bwd,
        "adam_step": adam_step,
    }


_numba_impls = None


def impls(backend: str) -> dict:
    """Return the kernel table for ``backend`` ("numpy" or "numba")."""
    global _numba_impls
    if backend == "numpy":
        return _NUMPY_IMPLS
    if backend == "numba":
        if _numba_impls is None:
            _numba_impls = _build_numba_impls()
        return _numba_impls
    raise ValueError(f"unknown kernel backend {backend!r}")


def _select_backend() -> str:
    choice = os.environ.get(_ENV_FLAG, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_FLAG} must be one of auto/numba/numpy, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError(f"{_ENV_FLAG}=numba but numba is not importable")
        return "numpy"
    return "numba"


_ACTIVE = _select_backend()
_active_impls = impls(_ACTIVE)

silu_fwd = _active_impls["silu_fwd"]
silu_bwd = _active_impls["silu_bwd"]
perturb = _active_impls["perturb"]
euler_update = _active_impls["euler_update"]
rmsnorm_mod_fwd = _active_impls["rmsnorm_mod_fwd"]
rmsnorm_mod_bwd = _active_impls["rmsnorm_mod_bwd"]
adam_step = _active_impls["adam_step"]


def active_backend() -> str:
    """Name of the backend the module-level kernels are bound to."""
    return _ACTIVE
