"""Escape-rate potential, its gradient, and the conformal chart at infinity."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .config import CORRECTOR_MAX_ITER, CORRECTOR_TOL, GREEN_MAX_ITER, STEP_ETA
from .errors import BranchTrackingError, PreconditionError, TraceFailure
from .poly import Polynomial, critical_points


@dataclass(frozen=True)
class PotentialSample:
    value: float
    error_bound: float
    escaped: bool


def green(poly: Polynomial, z: complex) -> PotentialSample:
    """Potential of z: the escape rate of its orbit, 0 on bounded orbits.

    green(P(z)) = D * green(z) holds to rounding because both computations
    walk the same floating orbit.
    """
    val, esc, _depth = kernels.green_value(poly.coeff_array(), complex(z),
                                           poly.escape_radius, GREEN_MAX_ITER,
                                           poly.amplify_bound)
    if not esc:
        return PotentialSample(0.0, 0.0, False)
    return PotentialSample(float(val), 1e-14 * max(1.0, val), True)


def green_many(poly: Polynomial, zs) -> np.ndarray:
    """Vector potential; 0 where the orbit stays bounded."""
    return kernels.green_field(poly.coeff_array(), np.asarray(zs, dtype=np.complex128),
                               poly.escape_radius, GREEN_MAX_ITER, poly.amplify_bound)


def green_gradient(poly: Polynomial, z: complex) -> complex:
    """Gradient of the potential at an escaping point, as a complex vector.

    Vanishes identically when the forward orbit passes through a critical
    point (the chain-rule product carries the zero factor)."""
    r, status = kernels.grad_ratio(poly.coeff_array(), complex(z),
                                   poly.escape_radius, GREEN_MAX_ITER,
                                   poly.amplify_bound)
    if status != 0:
        raise PreconditionError("green_gradient requires an escaping point")
    return complex(r).conjugate()


def chart_depth(poly: Polynomial, s: float) -> int:
    """Smallest m with D^m * s at or above the branch-safe chart potential."""
    s_b = poly.safe_chart_potential
    if s >= s_b:
        return 0
    return int(math.ceil(math.log(s_b / s) / math.log(poly.degree) - 1e-12))


@lru_cache(maxsize=64)
def top_potential(poly: Polynomial) -> float:
    """Highest potential among escaping critical points (0 if none escape)."""
    best = 0.0
    for c, _m in critical_points(poly):
        gs = green(poly, c)
        if gs.escaped:
            best = max(best, gs.value)
    return best


def log_chart(poly: Polynomial, z: complex) -> complex:
    """Principal-product logarithm of the chart value; needs a branch-safe orbit."""
    val, ok = kernels.log_chart_tail(poly.coeff_array(), complex(z))
    if ok != 1:
        raise BranchTrackingError("chart branch ambiguous along the orbit")
    return complex(val)


def boettcher(poly: Polynomial, z: complex, top_singular: float = None) -> complex:
    """Chart-at-infinity value B(z), univalent above the highest singularity.

    B conjugates the map to w -> w^D near infinity, B(z)/z -> 1, and
    log|B| equals the potential. Below the branch-safe modulus the angle is
    recovered by ascending the field line through z into the safe region;
    the ascent cannot stall because no singularity lies above."""
    gs = green(poly, z)
    if not gs.escaped:
        raise PreconditionError("point does not escape")
    if top_singular is None:
        top_singular = top_potential(poly)
    if gs.value <= top_singular:
        raise PreconditionError(
            f"potential {gs.value:.6g} not above the highest singularity "
            f"{top_singular:.6g}")
    coeffs = poly.coeff_array()
    val, ok = kernels.log_chart_tail(coeffs, complex(z))
    if ok == 1:
        return cmath.exp(val)
    # below the branch-safe modulus: the lifted chart pins the angle up to a
    # D^-m alias, and a coarse ascent resolves which alias
    m = chart_depth(poly, gs.value)
    phi, _fp, okp = kernels.phi_eval(coeffs, m, complex(z), poly.escape_radius,
                                     GREEN_MAX_ITER, poly.amplify_bound)
    if okp != 1:
        raise BranchTrackingError("lifted chart evaluation failed")
    dm = poly.degree**m
    base = (phi.imag / (2.0 * math.pi)) % 1.0
    caps = np.array([c for c, _m in critical_points(poly)], dtype=np.complex128)
    raw = _ascended_chart_angle(poly, complex(z), gs.value, caps) / (2.0 * math.pi) % 1.0
    j = round(raw * dm - base)
    theta = ((base + j) / dm) % 1.0
    return cmath.exp(complex(gs.value, 2.0 * math.pi * theta))


def _ascended_chart_angle(poly: Polynomial, z: complex, s0: float,
                          cap_points: np.ndarray = None) -> float:
    """arg of the chart value at z, read at the top of the ascending field line.

    cap_points: saddle locations used to cap predictor steps; required when
    the ascent starts near a saddle (crash-angle extraction)."""
    coeffs = poly.coeff_array()
    d = poly.degree
    s_top = poly.safe_chart_potential * 1.05
    ratio = float(d) ** (1.0 / 24.0)
    nodes = [s0]
    while nodes[-1] < s_top:
        nodes.append(min(nodes[-1] * ratio, s_top))
    n = len(nodes)
    s_nodes = np.array(nodes)
    m_nodes = np.array([chart_depth(poly, s) for s in nodes], dtype=np.int64)
    ang_nodes = np.zeros(n)
    level_of_node = np.full(n, -1, dtype=np.int64)
    empty_i = np.zeros(0, dtype=np.int64)
    if cap_points is None:
        cap_points = np.zeros(0, dtype=np.complex128)
    cap_points = np.asarray(cap_points, dtype=np.complex128)
    sing_re = np.ascontiguousarray(cap_points.real)
    sing_im = np.ascontiguousarray(cap_points.imag)
    sing_pot = np.zeros(len(cap_points))
    band_lo = np.zeros(n, dtype=np.int64)
    band_hi = np.full(n, len(cap_points), dtype=np.int64)
    out_re = np.zeros(n)
    out_im = np.zeros(n)
    out_ok = np.zeros(n, dtype=np.int64)
    status, stop, _ = kernels.trace_descent(
        coeffs, s_nodes, m_nodes, ang_nodes, level_of_node,
        sing_re, sing_im, sing_pot, empty_i, empty_i,
        band_lo, band_hi,
        complex(z), poly.escape_radius, GREEN_MAX_ITER, poly.amplify_bound,
        STEP_ETA, CORRECTOR_TOL, CORRECTOR_MAX_ITER, 0,
        out_re, out_im, out_ok)
    if status != 0:
        raise TraceFailure(f"ascent to the chart-safe region failed (status {status})")
    top = complex(out_re[-1], out_im[-1])
    return log_chart(poly, top).imag
