"""Kernel dispatch: numba-compiled hot loops with a pure-numpy fallback.

The fallback is selected by setting RAYFORGE_NO_NUMBA=1 before import (or
automatically when numba is unavailable). Scalar path-following kernels run
the same source either way; the batch field/grid kernels have a genuinely
vectorized numpy implementation on the fallback path. See
benchmarks/bench_kernels.py for the speed comparison.
"""

from __future__ import annotations

import os

import numpy as np

from . import _core
from .config import numba_disabled, thread_count

NUMBA_ENABLED = False
_numba = None

if not numba_disabled():
    try:
        # workqueue is always available and keeps row-parallel loops
        # deterministic across thread counts
        os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
        import numba as _numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - mirror covers numba
        _numba = None
        NUMBA_ENABLED = False

# Scalar kernels: compile the _core call graph in dependency order, rebinding
# the module globals so later functions call the compiled versions.
_SCALAR_ORDER = (
    "poly_eval",
    "poly_eval_d",
    "wrap_pi",
    "green_value",
    "grad_ratio",
    "log_chart_tail",
    "phi_eval",
    "chart_residual",
    "corrector",
    "crash_match",
    "_nearest_two",
    "_descend_leg",
    "trace_descent",
    "green_field_loop",
    "green_grid_rows",
)

if NUMBA_ENABLED:
    for _name in _SCALAR_ORDER:
        _fn = getattr(_core, _name)
        setattr(_core, _name, _numba.njit(cache=True)(_fn))

poly_eval = _core.poly_eval
poly_eval_d = _core.poly_eval_d
wrap_pi = _core.wrap_pi
green_value = _core.green_value
grad_ratio = _core.grad_ratio
log_chart_tail = _core.log_chart_tail
phi_eval = _core.phi_eval
chart_residual = _core.chart_residual
corrector = _core.corrector
crash_match = _core.crash_match
trace_descent = _core.trace_descent

if NUMBA_ENABLED:
    _prange = _numba.prange

    @_numba.njit(cache=True, parallel=True)
    def _green_grid_parallel(coeffs, x0, dx, y0, dy, w, h, r_esc, n_max, amp, out):
        for iy in _prange(h):
            y = y0 + dy * iy
            for ix in range(w):
                v, esc, _ = _core.green_value(coeffs, complex(x0 + dx * ix, y), r_esc, n_max, amp)
                if esc == 1:
                    out[iy, ix] = v
                else:
                    out[iy, ix] = 0.0


def _green_field_numpy(coeffs, zs, r_esc, n_max, amp):
    """Vectorized escape iteration matching green_value's phases."""
    zn = np.array(zs, dtype=np.complex128)
    flat = zn.ravel()
    d = len(coeffs)
    out = np.zeros(flat.shape)
    depth = np.zeros(flat.shape, dtype=np.int64)
    extra = np.zeros(flat.shape, dtype=np.int64)
    pre = np.ones(flat.shape, dtype=bool)       # not yet past escape radius
    grow = np.zeros(flat.shape, dtype=bool)     # escaped, amplifying
    for _ in range(n_max + 66):
        act = pre | grow
        if not act.any():
            break
        za = flat[act]
        acc = np.ones_like(za)
        for k in range(d - 1, -1, -1):
            acc = acc * za + coeffs[k]
        mag_prev = np.abs(flat[act])
        mag_next = np.abs(acc)

        idx = np.flatnonzero(act)
        pre_a = pre[idx]
        # pre-phase elements past the radius move to grow without stepping
        crossed = pre_a & (mag_prev > r_esc)
        pre[idx[crossed]] = False
        grow[idx[crossed]] = True
        # pre-phase below the radius advance one step
        stepping = pre_a & ~crossed
        step_idx = idx[stepping]
        flat[step_idx] = acc[stepping]
        depth[step_idx] += 1
        exhausted = step_idx[depth[step_idx] >= n_max]
        pre[exhausted] = False

        # grow-phase: advance while |z| < amp, next value finite
        grow_a = grow[idx] & ~crossed
        g_idx = idx[grow_a]
        if g_idx.size:
            ok = (mag_prev[grow_a] < amp) & (mag_next[grow_a] < 1e290) & (extra[g_idx] < 64)
            adv = g_idx[ok]
            flat[adv] = acc[grow_a][ok]
            depth[adv] += 1
            extra[adv] += 1
            stop = g_idx[~ok]
            grow[stop] = False
    grow_done = depth > 0
    escaped = np.zeros(flat.shape, dtype=bool)
    escaped[:] = ~pre & ~grow & grow_done
    # non-escaped points that exhausted n_max stay at 0
    esc_idx = np.flatnonzero(escaped & (np.abs(flat) > r_esc))
    vals = np.log(np.abs(flat[esc_idx])) / np.power(float(d), depth[esc_idx].astype(np.float64))
    out[esc_idx] = np.maximum(vals, 1e-300)
    return out.reshape(np.shape(zs))


def green_field(coeffs, zs, r_esc, n_max, amp):
    """Potential for an array of complex points (0 where bounded)."""
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    zs = np.asarray(zs, dtype=np.complex128)
    if NUMBA_ENABLED:
        out = np.empty(zs.size)
        _core.green_field_loop(coeffs, np.ascontiguousarray(zs.real).ravel(),
                               np.ascontiguousarray(zs.imag).ravel(),
                               r_esc, n_max, amp, out)
        return out.reshape(zs.shape)
    return _green_field_numpy(coeffs, zs, r_esc, n_max, amp)


def green_grid(coeffs, x0, dx, y0, dy, w, h, r_esc, n_max, amp):
    """Potential over a pixel grid; row-parallel under numba."""
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    out = np.zeros((h, w))
    if NUMBA_ENABLED:
        _numba.set_num_threads(max(1, min(thread_count(), _numba.config.NUMBA_NUM_THREADS)))
        _green_grid_parallel(coeffs, x0, dx, y0, dy, w, h, r_esc, n_max, amp, out)
        return out
    xs = x0 + dx * np.arange(w)
    ys = y0 + dy * np.arange(h)
    zz = xs[None, :] + 1j * ys[:, None]
    return _green_field_numpy(coeffs, zz, r_esc, n_max, amp)


def warmup(degree=2):
    """Force compilation of the scalar kernels on a tiny workload."""
    coeffs = np.zeros(degree, dtype=np.complex128)
    coeffs[0] = 1.0
    green_value(coeffs, 3.0 + 0.0j, 1e8, 64, 1e40)
    grad_ratio(coeffs, 3.0 + 0.0j, 1e8, 64, 1e40)
    phi_eval(coeffs, 1, 3.0 + 0.0j, 1e8, 64, 1e40)
    corrector(coeffs, 0, 2.0, 0.0, 7.0 + 0.1j, 1e8, 64, 1e40, 1e-10, 20)
    green_field(coeffs, np.array([3.0 + 0.0j]), 1e8, 64, 1e40)
