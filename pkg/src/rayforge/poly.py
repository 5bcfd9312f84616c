"""Monic complex polynomials: evaluation, orbits, critical points, fibers,
and periodic points with multiplier classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .config import (CLASS_TOL, CRIT_RESIDUAL, GREEN_AMPLIFY, OVERFLOW_GUARD,
                     PARABOLIC_M_MAX, PERIOD_K_MAX, PERIODIC_RESIDUAL,
                     PREIMAGE_RESIDUAL)
from .errors import PreconditionError, SolverFailure, UnsupportedInputError
from .roots import aberth_roots, cluster_roots, polish_roots


@dataclass(frozen=True)
class Polynomial:
    """Monic polynomial z^D + sum coeffs[k] z^k, degree D = len(coeffs) >= 2."""

    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) < 2:
            raise PreconditionError("degree must be at least 2")
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    @staticmethod
    def quadratic(c) -> "Polynomial":
        return Polynomial((complex(c), 0.0))

    @staticmethod
    def power_map(d: int) -> "Polynomial":
        return Polynomial((0.0,) * d)

    @staticmethod
    def from_coeff_list(coeffs: Sequence[complex]) -> "Polynomial":
        return Polynomial(tuple(coeffs))

    def coeff_array(self) -> np.ndarray:
        return np.ascontiguousarray(self.coeffs, dtype=np.complex128)

    def full_coeffs(self) -> np.ndarray:
        """Ascending coefficients including the leading 1."""
        return np.concatenate([self.coeff_array(), [1.0 + 0j]])

    @property
    def coeff_norm(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))

    @property
    def escape_radius(self) -> float:
        return max(1e8, 2.0 * (1.0 + self.coeff_norm))

    @property
    def amplify_bound(self) -> float:
        """Keep |z|**D below overflow during post-escape amplification."""
        return min(1e40, 10.0 ** (260.0 / self.degree))

    @property
    def safe_chart_potential(self) -> float:
        """Potential above which the chart-at-infinity product is branch-safe."""
        s = self.coeff_norm
        return math.log(1.0 + s) + math.log(2.0) + math.log(max(4.0, 4.0 * s, 1.0 + 2.0 * s))

    def __call__(self, z: complex) -> complex:
        acc = 1.0 + 0.0j
        for k in range(self.degree - 1, -1, -1):
            acc = acc * z + self.coeffs[k]
        return acc

    def eval_d(self, z: complex):
        acc = 1.0 + 0.0j
        dacc = 0.0 + 0.0j
        for k in range(self.degree - 1, -1, -1):
            dacc = dacc * z + acc
            acc = acc * z + self.coeffs[k]
        return acc, dacc

    def derivative_coeffs(self) -> np.ndarray:
        """Ascending coefficients of P', including the leading D."""
        d = self.degree
        out = np.empty(d, dtype=np.complex128)
        for k in range(1, d):
            out[k - 1] = k * self.coeffs[k]
        out[d - 1] = d
        return out

    def iterate_coeffs(self, k: int) -> np.ndarray:
        """Ascending coefficients of P^k (composition, not power)."""
        cur = self.full_coeffs()
        for _ in range(k - 1):
            cur = _compose(self.full_coeffs(), cur)
        return cur

    def __repr__(self):
        return f"Polynomial(degree={self.degree}, coeffs={self.coeffs})"


def _compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Coefficients of outer(inner(z)), both ascending."""
    acc = np.array([outer[-1]], dtype=np.complex128)
    for k in range(len(outer) - 2, -1, -1):
        acc = np.convolve(acc, inner)
        acc[0] += outer[k]
    return acc


@dataclass(frozen=True)
class OrbitResult:
    orbit: tuple
    chain_derivative: complex
    overflowed: bool


@dataclass(frozen=True)
class PeriodicPointRecord:
    location: complex
    period: int
    multiplier: complex
    cls: str

    @property
    def is_repelling_or_parabolic(self) -> bool:
        return self.cls in ("repelling", "parabolic")


def eval_orbit_with_derivative(poly: Polynomial, z: complex, n: int) -> OrbitResult:
    """Orbit z, P(z), ..., P^n(z) and the chain-rule derivative of P^n at z.

    Exits early with the overflow flag once the orbit magnitude passes the
    guard; the partial orbit up to that point is still returned.
    """
    if n < 0:
        raise PreconditionError("orbit length must be nonnegative")
    orbit = [complex(z)]
    chain = 1.0 + 0.0j
    cur = complex(z)
    overflow = False
    for _ in range(n):
        val, dval = poly.eval_d(cur)
        chain = chain * dval
        cur = val
        orbit.append(cur)
        if abs(cur) > OVERFLOW_GUARD or abs(chain) > OVERFLOW_GUARD:
            overflow = True
            break
    return OrbitResult(tuple(orbit), chain, overflow)


def critical_points(poly: Polynomial) -> list[tuple[complex, int]]:
    """Roots of P' with multiplicity, polished; raises SolverFailure on bad residuals."""
    roots = aberth_roots(poly.derivative_coeffs())
    clusters = cluster_roots(roots)
    d = poly.degree
    bad = []
    for center, _mult in clusters:
        _, dval = poly.eval_d(center)
        if abs(dval) > CRIT_RESIDUAL * max(1.0, abs(center)) ** (d - 1) * 10:
            bad.append(abs(dval))
    if bad:
        raise SolverFailure("critical point residuals too large", residuals=bad)
    clusters.sort(key=lambda t: (t[0].real, t[0].imag))
    return clusters


def preimages(poly: Polynomial, w: complex) -> list[complex]:
    """The D solutions of P(z) = w, with multiplicity, sorted by (re, im)."""
    coeffs = poly.full_coeffs().copy()
    coeffs[0] -= w
    roots = aberth_roots(coeffs)
    res = np.abs([poly(z) - w for z in roots])
    tol = PREIMAGE_RESIDUAL * max(1.0, abs(w))
    if np.any(res > tol * 100):
        raise SolverFailure("preimage residuals too large", residuals=res.tolist())
    out = sorted((complex(z) for z in roots), key=lambda z: (z.real, z.imag))
    return out


def preimages_batch(poly: Polynomial, ws: np.ndarray) -> np.ndarray:
    """Fibers over many points at once; returns array of shape (len(ws), D).

    Quadratics and cubics use closed forms plus a Newton polish; higher
    degrees fall back to the per-point simultaneous solver."""
    ws = np.asarray(ws, dtype=np.complex128)
    d = poly.degree
    if d == 2:
        c0, c1 = poly.coeffs
        disc = np.sqrt(c1 * c1 - 4.0 * (c0 - ws))
        roots = np.stack([(-c1 + disc) / 2.0, (-c1 - disc) / 2.0], axis=1)
    elif d == 3:
        c0, c1, c2 = poly.coeffs
        roots = _cardano(c2, c1, c0 - ws)
    else:
        roots = np.empty((len(ws), d), dtype=np.complex128)
        for i, w in enumerate(ws):
            roots[i] = preimages(poly, complex(w))
        return roots
    full = poly.full_coeffs()
    for _ in range(3):
        p = np.full_like(roots, full[-1])
        dp = np.zeros_like(roots)
        for k in range(d - 1, -1, -1):
            dp = dp * roots + p
            p = p * roots + full[k]
        p = p - ws[:, None]
        safe = np.abs(dp) > 1e-200
        roots = roots - np.where(safe, p / np.where(safe, dp, 1.0), 0.0)
    n = roots.shape[0]
    flat = np.lexsort((roots.imag.ravel(), roots.real.ravel(),
                       np.repeat(np.arange(n), d)))
    return roots.ravel()[flat].reshape(n, d)


def _cardano(b, c, dcoef):
    """Roots of z^3 + b z^2 + c z + dcoef for a vector of dcoef values."""
    dcoef = np.asarray(dcoef, dtype=np.complex128)
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + dcoef
    disc = np.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3 + 0j)
    u3 = -q / 2.0 + disc
    alt = -q / 2.0 - disc
    swap = np.abs(alt) > np.abs(u3)
    u3 = np.where(swap, alt, u3)
    u = u3 ** (1.0 / 3.0)
    tiny = np.abs(u) < 1e-140
    u = np.where(tiny, 1e-140, u)
    v = -p / (3.0 * u)
    w1 = complex(-0.5, math.sqrt(3.0) / 2.0)
    w2 = w1.conjugate()
    t = np.stack([u + v, w1 * u + w2 * v, w2 * u + w1 * v], axis=-1)
    return t - b / 3.0


def periodic_points(poly: Polynomial, k: int) -> list[PeriodicPointRecord]:
    """Fixed points of P^k with exact period k, classified by multiplier."""
    if not 1 <= k <= PERIOD_K_MAX:
        raise UnsupportedInputError(f"period {k} outside supported range 1..{PERIOD_K_MAX}")
    coeffs = poly.iterate_coeffs(k).copy()
    coeffs[1] -= 1.0
    roots = aberth_roots(coeffs)
    # polish on the orbit form, which is better conditioned than the
    # expanded composition
    pts = list(roots)
    for _ in range(4):
        for i, z in enumerate(pts):
            res = eval_orbit_with_derivative(poly, z, k)
            if res.overflowed:
                continue
            f = res.orbit[-1] - z
            fp = res.chain_derivative - 1.0
            if abs(fp) > 1e-200 and abs(f / fp) < 0.5 * (1 + abs(z)):
                pts[i] = z - f / fp
    clusters = cluster_roots(pts)
    records = []
    for center, _mult in clusters:
        res = eval_orbit_with_derivative(poly, center, k)
        if res.overflowed:
            continue
        if abs(res.orbit[-1] - center) > PERIODIC_RESIDUAL * max(1.0, abs(center)):
            raise SolverFailure("periodic point residual too large",
                                residuals=[abs(res.orbit[-1] - center)])
        exact = k
        for j in range(1, k):
            if k % j == 0:
                rj = eval_orbit_with_derivative(poly, center, j)
                if abs(rj.orbit[-1] - center) <= PERIODIC_RESIDUAL * max(1.0, abs(center)) * 10:
                    exact = j
                    break
        if exact != k:
            continue
        lam = res.chain_derivative
        records.append(PeriodicPointRecord(complex(center), k, complex(lam), _classify(lam)))
    records.sort(key=lambda r: (round(r.location.real, 9), round(r.location.imag, 9)))
    return records


def _classify(lam: complex) -> str:
    mag = abs(lam)
    if mag <= CLASS_TOL:
        return "superattracting"
    if mag < 1.0 - CLASS_TOL:
        return "attracting"
    if mag > 1.0 + CLASS_TOL:
        return "repelling"
    acc = lam
    for _ in range(PARABOLIC_M_MAX):
        if abs(acc - 1.0) <= CLASS_TOL:
            return "parabolic"
        acc *= lam
    return "indifferent-irrational"


@lru_cache(maxsize=64)
def _cached_critical_points(poly: Polynomial):
    return tuple(critical_points(poly))


def local_degree(poly: Polynomial, z: complex, merge_tol: float = 1e-7) -> int:
    """1 + multiplicity of z among the critical points of P."""
    deg = 1
    for c, mult in _cached_critical_points(poly):
        if abs(z - c) <= merge_tol * (1.0 + abs(c)):
            deg += mult
    return deg
