"""External-ray tracing: smooth descent, crash detection and broken rays.

A ray at angle theta is followed by descending the potential on a geometric
grid. The corrector solves the lifted chart equation
    log-chart(P^m(z)) = D^m s + 2*pi*i * frac(D^m theta)   (angle mod 2*pi)
which holds along smooth rays and, by the pushforward rules, along broken
continuations as well. A ray crashes into a cataloged saddle omega exactly
when omega itself satisfies that equation, so crash-vs-passage is decided by
an exact chart-angle match rather than a raw proximity threshold.

Broken rays are one-sided angular limits: smooth traces at exact rational
perturbations theta +/- eps_j accepted by a Cauchy criterion on the shared
grid, with crash samples snapped to the matched saddles.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from . import kernels
from .angles import Angle, snap_to_rational
from .config import (APPROACH_MARGINS, CAPTURE_COEFF, CORRECTOR_MAX_ITER,
                     CORRECTOR_TOL, EPS0_DEN, EPS0_NUM, GREEN_MAX_ITER,
                     PERTURB_J_MAX, RAY_LIMIT_TOL, S_FLOOR, SNAP_DEN_POWER,
                     STEP_ETA, SUBSTEPS_PER_FACTOR)
from .errors import (AmbiguousCaptureError, IncompleteCatalogWarning,
                     PartnerMatchError, PreconditionError, SeedFailure,
                     TraceFailure)
from .poly import Polynomial
from .potential import chart_depth, green, top_potential
from .singularities import Singularity, SingularityCatalog, singularity_catalog

NODE_REGULAR, NODE_MARGIN, NODE_LEVEL = 0, 1, 2


@dataclass(frozen=True)
class CrashEvent:
    singularity: Singularity
    potential: float
    incoming_direction: Optional[complex]
    outgoing_direction: Optional[complex]
    turn: Optional[str]                 # "left" / "right"; None on terminated traces
    approach_distance: float = 0.0      # pre-snap distance of the limit trace

    @property
    def capture_radius(self) -> float:
        return CAPTURE_COEFF * (1.0 + abs(self.singularity.location))


@dataclass
class RayTrace:
    angle: Angle
    kind: str                           # smooth | left_broken | right_broken | crashed
    potentials: np.ndarray
    points: np.ndarray
    crashes: list
    grid: "_Grid" = field(default=None, repr=False)

    @property
    def samples(self):
        return list(zip(self.potentials.tolist(), self.points.tolist()))

    def point_at(self, s: float, rel=1e-9) -> complex:
        idx = np.argmin(np.abs(self.potentials - s))
        if abs(self.potentials[idx] - s) > rel * max(s, self.potentials[idx]):
            raise KeyError(f"no sample at potential {s}")
        return complex(self.points[idx])

    @property
    def endpoint(self) -> complex:
        return complex(self.points[-1])

    @property
    def first_crash_potential(self) -> float:
        return self.crashes[0].potential if self.crashes else 0.0


@dataclass
class _Grid:
    s: np.ndarray
    m: np.ndarray
    ang: np.ndarray
    kind: np.ndarray
    level_row: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    level_node: dict                    # catalog level row -> node index


@lru_cache(maxsize=16)
def default_catalog(poly: Polynomial, s_min: float) -> SingularityCatalog:
    return singularity_catalog(poly, s_min)


def default_s_hi(poly: Polynomial, catalog: SingularityCatalog = None) -> float:
    top = catalog.top_potential if catalog is not None else top_potential(poly)
    return max(poly.safe_chart_potential * 1.02, 1.25 * top, 1.0)


def _build_grid(poly: Polynomial, s_lo: float, s_hi: float,
                catalog: SingularityCatalog, ladder_q: int = 0) -> _Grid:
    """Angle-independent descent grid: geometric nodes, saddle margins and
    exact saddle-level nodes; optionally a D^q ladder over s_lo so the deep
    tail of a period-q ray can be refined by pullback."""
    d = poly.degree
    ratio = float(d) ** (-1.0 / SUBSTEPS_PER_FACTOR)
    nodes = []
    s = s_hi
    while s > s_lo * (1.0 + 1e-12):
        nodes.append((s, NODE_REGULAR, -1))
        s *= ratio
    nodes.append((s_lo, NODE_REGULAR, -1))
    if ladder_q:
        step = float(d) ** ladder_q
        sv = s_lo * step
        while sv < s_hi * (1 - 1e-12):
            nodes.append((sv, NODE_REGULAR, -1))
            sv *= step
    for row in catalog.levels_between(s_lo, s_hi):
        sigma = float(catalog.level_pot[row])
        for mgn in APPROACH_MARGINS:
            sv = sigma * (1.0 + mgn)
            if s_lo < sv < s_hi:
                nodes.append((sv, NODE_MARGIN, -1))
        sv = sigma * (1.0 - APPROACH_MARGINS[-1])
        if s_lo < sv < s_hi:
            nodes.append((sv, NODE_MARGIN, -1))
        nodes.append((sigma, NODE_LEVEL, row))
    nodes.sort(key=lambda t: (-t[0], t[1]))
    merged = []
    for s, kind, row in nodes:
        if merged and abs(merged[-1][0] - s) <= 1e-9 * s:
            if kind > merged[-1][1]:
                merged[-1] = (merged[-1][0], kind, row)
            continue
        merged.append((s, kind, row))
    n = len(merged)
    s_arr = np.array([t[0] for t in merged])
    kind_arr = np.array([t[1] for t in merged], dtype=np.int64)
    row_arr = np.array([t[2] for t in merged], dtype=np.int64)
    m_arr = np.array([chart_depth(poly, v) for v in s_arr], dtype=np.int64)
    band_lo = np.zeros(n, dtype=np.int64)
    band_hi = np.zeros(n, dtype=np.int64)
    if len(catalog.entries):
        neg = -catalog.pot
        for k in range(1, n):
            hi_pot = s_arr[k - 1] * 1.05
            lo_pot = s_arr[k] * 0.70
            band_lo[k] = np.searchsorted(neg, -hi_pot, side="left")
            band_hi[k] = np.searchsorted(neg, -lo_pot, side="right")
    level_node = {int(r): i for i, (_, kk, r) in enumerate(merged) if kk == NODE_LEVEL}
    return _Grid(s_arr, m_arr, None, kind_arr, row_arr, band_lo, band_hi, level_node)


def _grid_angles(poly: Polynomial, grid: _Grid, theta: Angle) -> np.ndarray:
    d = poly.degree
    return np.array([theta.lifted_fraction(d ** int(m)) for m in grid.m])


def ray_seed(poly: Polynomial, theta: Angle, s_hi: float,
             catalog: SingularityCatalog = None) -> complex:
    """Point on the ray at potential s_hi, from Newton on the chart at infinity."""
    top = catalog.top_potential if catalog is not None else top_potential(poly)
    if s_hi <= top:
        raise PreconditionError(f"s_hi={s_hi} not above the top singular potential {top}")
    coeffs = poly.coeff_array()
    d = poly.degree
    s_try = float(s_hi)
    for attempt in range(6):
        m = chart_depth(poly, s_try)
        ang = theta.lifted_fraction(d**m)
        z0 = cmath.exp(complex(s_try, 2.0 * math.pi * theta.approx))
        z, ok = kernels.corrector(coeffs, m, (float(d) ** m) * s_try, ang, z0,
                                  poly.escape_radius, GREEN_MAX_ITER,
                                  poly.amplify_bound, CORRECTOR_TOL,
                                  CORRECTOR_MAX_ITER)
        if ok == 1:
            if attempt == 0:
                return complex(z)
            # walked up for stability: bring the seed back down to s_hi
            return _plain_descent(poly, theta, complex(z), s_try, s_hi)
        s_try += 1.0
    raise SeedFailure(f"ray seed failed at angle {theta} for s_hi={s_hi}")


def _plain_descent(poly: Polynomial, theta: Angle, z_from: complex,
                   s_from: float, s_to: float) -> complex:
    """Short level-free descent used only above the singular band."""
    d = poly.degree
    ratio = float(d) ** (-1.0 / SUBSTEPS_PER_FACTOR)
    vals = [s_from]
    while vals[-1] * ratio > s_to * (1 + 1e-12):
        vals.append(vals[-1] * ratio)
    vals.append(s_to)
    s_arr = np.array(vals)
    m_arr = np.array([chart_depth(poly, v) for v in vals], dtype=np.int64)
    ang_arr = np.array([theta.lifted_fraction(d ** int(m)) for m in m_arr])
    nil = np.full(len(vals), -1, dtype=np.int64)
    band = np.zeros(len(vals), dtype=np.int64)
    out_re = np.zeros(len(vals))
    out_im = np.zeros(len(vals))
    out_ok = np.zeros(len(vals), dtype=np.int64)
    empty_f = np.zeros(0)
    empty_i = np.zeros(0, dtype=np.int64)
    status, stop, _ = kernels.trace_descent(
        poly.coeff_array(), s_arr, m_arr, ang_arr, nil,
        empty_f, empty_f, empty_f, empty_i, empty_i, band, band,
        z_from, poly.escape_radius, GREEN_MAX_ITER, poly.amplify_bound,
        STEP_ETA, CORRECTOR_TOL, CORRECTOR_MAX_ITER, 1,
        out_re, out_im, out_ok)
    if status != 0:
        raise SeedFailure("descent from the raised seed failed")
    return complex(out_re[-1], out_im[-1])


def _run_trace(poly: Polynomial, theta: Angle, s_lo: float, s_hi: float,
               catalog: SingularityCatalog, grid: _Grid = None):
    if grid is None:
        grid = _build_grid(poly, s_lo, s_hi, catalog)
    ang = _grid_angles(poly, grid, theta)
    z0 = ray_seed(poly, theta, s_hi, catalog)
    n = len(grid.s)
    out_re = np.zeros(n)
    out_im = np.zeros(n)
    out_ok = np.zeros(n, dtype=np.int64)
    status, stop, crash_idx = kernels.trace_descent(
        poly.coeff_array(), grid.s, grid.m, ang, grid.level_row,
        catalog.loc_re if len(catalog.entries) else np.zeros(0),
        catalog.loc_im if len(catalog.entries) else np.zeros(0),
        catalog.pot if len(catalog.entries) else np.zeros(0),
        catalog.level_lo if len(catalog.entries) else np.zeros(0, dtype=np.int64),
        catalog.level_hi if len(catalog.entries) else np.zeros(0, dtype=np.int64),
        grid.band_lo, grid.band_hi,
        z0, poly.escape_radius, GREEN_MAX_ITER, poly.amplify_bound,
        STEP_ETA, CORRECTOR_TOL, CORRECTOR_MAX_ITER, 1,
        out_re, out_im, out_ok)
    pts = out_re + 1j * out_im
    return grid, status, stop, crash_idx, pts


def _validate_window(poly, s_lo, s_hi, catalog):
    if s_lo < S_FLOOR * (1 - 1e-9):
        raise PreconditionError(f"s_lo={s_lo} below the potential floor {S_FLOOR}")
    if catalog.cutoff > s_lo * (1 + 1e-9):
        raise PreconditionError(
            f"catalog cutoff {catalog.cutoff} exceeds s_lo={s_lo}")
    if s_hi <= catalog.top_potential:
        raise PreconditionError("s_hi must exceed the top singular potential")


def trace_smooth(poly: Polynomial, theta: Angle, s_lo: float,
                 s_hi: float = None, catalog: SingularityCatalog = None,
                 grid: _Grid = None) -> RayTrace:
    """Descend the smooth ray at theta; terminate at s_lo or at its crash.

    A crashed return has kind "crashed", its last sample at the saddle."""
    if catalog is None:
        catalog = default_catalog(poly, min(s_lo, S_FLOOR * 10))
    if s_hi is None:
        s_hi = default_s_hi(poly, catalog)
    _validate_window(poly, s_lo, s_hi, catalog)
    grid, status, stop, crash_idx, pts = _run_trace(poly, theta, s_lo, s_hi,
                                                    catalog, grid)
    if status == 0:
        return RayTrace(theta, "smooth", grid.s.copy(), pts, [], grid)
    if status == 2:
        sing = catalog.entries[crash_idx]
        sigma = float(grid.s[stop])
        prev = pts[stop - 1] if stop >= 1 else pts[stop]
        inc = _unit(sing.location - prev)
        event = CrashEvent(sing, sigma, inc, None, None,
                           approach_distance=abs(prev - sing.location))
        return RayTrace(theta, "crashed", grid.s[:stop + 1].copy(),
                        pts[:stop + 1], [event], grid)
    if status == 4:
        raise AmbiguousCaptureError(
            f"two singularities match the crash of angle {theta}")
    partial = RayTrace(theta, "smooth", grid.s[:stop].copy(), pts[:stop], [], grid)
    raise TraceFailure(f"corrector diverged tracing angle {theta} "
                       f"near potential {grid.s[stop]:.6g}", partial=partial)


def crash_potential(poly: Polynomial, theta: Angle,
                    catalog: SingularityCatalog) -> float:
    """First crash potential of the ray at theta; 0 when it reaches the cutoff."""
    trace = trace_smooth(poly, theta, max(catalog.cutoff, S_FLOOR), None, catalog)
    return trace.first_crash_potential


def _unit(v: complex) -> complex:
    a = abs(v)
    return v / a if a > 0 else 0j


def _perturbed_angle(theta: Angle, side: str, j: int, skew: bool) -> Angle:
    eps = Fraction(EPS0_NUM, EPS0_DEN) / (2**j)
    if skew:
        eps *= Fraction(113, 355)
    sgn = 1 if side == "right" else -1
    if theta.exact is not None:
        return Angle.from_fraction(theta.exact + sgn * eps)
    return Angle(theta.approx + sgn * float(eps))


def trace_broken(poly: Polynomial, theta: Angle, side: str, s_lo: float,
                 s_hi: float = None, catalog: SingularityCatalog = None) -> RayTrace:
    """One-sided limit of smooth traces at theta +/- eps; crash samples snapped.

    The right limit approaches from angles above theta, the left from below.
    Acceptance: two successive perturbed traces agree within RAY_LIMIT_TOL on
    the regular grid nodes above first_crash / D^3. Saddle-level nodes obey a
    one-sided power law and are reconstructed by the exact chart match; below
    the gate the limit converges at a Hoelder rate set by the landing
    multiplier, so for periodic angles the deep tail is refined by pullback
    through P^q, which is exact on the invariant broken ray."""
    if side not in ("left", "right"):
        raise PreconditionError(f"side must be left or right, got {side!r}")
    if catalog is None:
        catalog = default_catalog(poly, min(s_lo, S_FLOOR * 10))
    if s_hi is None:
        s_hi = default_s_hi(poly, catalog)
    base = trace_smooth(poly, theta, s_lo, s_hi, catalog)
    if base.kind == "smooth":
        return base
    first_crash = base.crashes[0].potential

    q = theta.period(poly.degree) or 0
    grid = _build_grid(poly, s_lo, s_hi, catalog, ladder_q=q)
    gate = max(s_lo, first_crash * float(poly.degree) ** -3)
    band_top = min(s_hi * 0.999, max(1.0, first_crash * poly.degree))
    mask = (grid.kind == NODE_REGULAR) & (grid.s >= gate * (1 - 1e-12)) \
        & (grid.s <= band_top)
    # regular nodes that land within a few percent of a saddle level obey the
    # same one-sided power law as the level itself; keep them out of the gate
    for row in catalog.levels_between(s_lo, s_hi):
        sigma = float(catalog.level_pot[row])
        mask &= np.abs(grid.s / sigma - 1.0) > 0.04

    window: list[RayTrace] = []
    prev_extrap = None
    accepted = None
    skew = False
    for j in range(PERTURB_J_MAX + 1):
        th_j = _perturbed_angle(theta, side, j, skew)
        try:
            t_j = trace_smooth(poly, th_j, s_lo, s_hi, catalog, grid=grid)
        except (TraceFailure, AmbiguousCaptureError):
            window = []
            prev_extrap = None
            continue
        if t_j.kind != "smooth":
            if not skew:
                skew = True
                window = []
                prev_extrap = None
                continue
            window = []
            prev_extrap = None
            continue
        window.append(t_j)
        if len(window) > 3:
            window.pop(0)
        if len(window) == 3:
            # the perturbed traces converge geometrically in eps; one Aitken
            # step per node removes the leading tail
            extrap = _aitken(window[0].points, window[1].points, window[2].points)
            if prev_extrap is not None:
                delta = float(np.max(np.abs(extrap[mask] - prev_extrap[mask])))
                if delta <= RAY_LIMIT_TOL:
                    accepted = RayTrace(th_j, "smooth", grid.s.copy(), extrap,
                                        [], grid)
                    break
            prev_extrap = extrap
    if accepted is None:
        raise TraceFailure(
            f"one-sided limit for {side} broken ray at {theta} did not converge",
            partial=window[-1] if window else None)

    if q:
        _pullback_refine(poly, theta, accepted, q, gate)
    return _reconstruct_broken(poly, theta, side, accepted, catalog)


def _aitken(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Componentwise geometric-tail extrapolation of three successive traces."""
    d1 = b - a
    d2 = c - b
    denom = d1 - d2
    safe = np.abs(denom) > 1e-3 * np.abs(d2) + 1e-300
    corr = np.where(safe, d2 * d2 / np.where(safe, denom, 1.0), 0.0)
    wild = np.abs(corr) > 10.0 * np.abs(d2) + 1e-30
    corr = np.where(wild, 0.0, corr)
    return c + corr


def _pullback_refine(poly: Polynomial, theta: Angle, trace: RayTrace,
                     q: int, gate: float) -> None:
    """Sharpen samples below `gate` by solving P^q(z) = (sample at D^q s).

    Valid because a ray at a period-q angle is invariant under P^q up to the
    potential rescaling s -> D^q s; the inverse branch through the one-sided
    limit's approximation contracts toward the exact ray."""
    d = poly.degree
    step = float(d) ** q
    s_arr = trace.potentials
    pts = trace.points
    neg = -s_arr
    for i in range(len(s_arr)):
        s = float(s_arr[i])
        if s >= gate:
            continue
        target_s = s * step
        j = int(np.searchsorted(neg, -target_s))
        hit = -1
        for cand in (j - 1, j, j + 1):
            if 0 <= cand < len(s_arr) and abs(s_arr[cand] - target_s) <= 1e-9 * target_s:
                hit = cand
                break
        if hit < 0:
            continue
        z_t = complex(pts[hit])
        z = complex(pts[i])
        from .poly import eval_orbit_with_derivative

        for _ in range(30):
            res = eval_orbit_with_derivative(poly, z, q)
            f = res.orbit[-1] - z_t
            if abs(f) <= 1e-13 * (1.0 + abs(z_t)):
                break
            if abs(res.chain_derivative) < 1e-200:
                break
            stepz = f / res.chain_derivative
            if abs(stepz) > 0.1 * (1.0 + abs(z)):
                break
            z = z - stepz
        if abs(z - complex(pts[i])) <= 1e-2 * (1.0 + abs(z)):
            pts[i] = z


def _reconstruct_broken(poly: Polynomial, theta: Angle, side: str,
                        accepted: RayTrace, catalog: SingularityCatalog) -> RayTrace:
    """Identify the crash chain of the limit trace by exact chart matches."""
    coeffs = poly.coeff_array()
    d = poly.degree
    grid = accepted.grid
    pts = accepted.points.copy()
    events = []
    for row, node in sorted(grid.level_node.items(), key=lambda kv: kv[1]):
        sigma = float(grid.s[node])
        m = int(grid.m[node])
        ang = theta.lifted_fraction(d**m)
        t_re = (float(d) ** m) * sigma
        j1, d1, d2 = catalog.nearest_at_level(row, complex(pts[node]))
        lo = int(catalog.level_lo[row])
        hi = int(catalog.level_hi[row])
        cands = [j1]
        if hi - lo > 1:
            dists = np.hypot(catalog.loc_re[lo:hi] - pts[node].real,
                             catalog.loc_im[lo:hi] - pts[node].imag)
            order = np.argsort(dists)
            cands = [lo + int(i) for i in order[:2]]
        hit = -1
        for jidx in cands:
            om = complex(catalog.loc_re[jidx], catalog.loc_im[jidx])
            if abs(complex(pts[node]) - om) > 0.25 * (1.0 + abs(om)):
                continue
            if kernels.crash_match(coeffs, m, om, t_re, ang,
                                   poly.escape_radius, GREEN_MAX_ITER,
                                   poly.amplify_bound) == 1:
                hit = jidx
                break
        if hit < 0:
            continue
        sing = catalog.entries[hit]
        approach = abs(complex(pts[node]) - sing.location)
        pts[node] = sing.location
        inc = _unit(sing.location - pts[node - 1]) if node >= 1 else 0j
        out = _unit(pts[node + 1] - sing.location) if node + 1 < len(pts) else None
        turn = None
        if out is not None and inc != 0:
            cross = (inc.conjugate() * out).imag
            turn = "right" if cross < 0 else "left"
        events.append(CrashEvent(sing, sigma, inc, out, turn, approach))
    kind = f"{side}_broken" if events else "smooth"
    return RayTrace(theta, kind, accepted.potentials.copy(), pts, events, grid)


def landing_estimate(poly: Polynomial, trace: RayTrace) -> complex:
    """Limit point of a periodic ray, sharpened below the trace floor.

    The deepest sample is pulled back through the period-q cycle; near a
    repelling landing point the inverse branch contracts by 1/|multiplier|,
    so the iteration converges to the landing point itself. Non-periodic
    angles return the raw endpoint."""
    q = trace.angle.period(poly.degree)
    if q is None:
        return trace.endpoint
    from .poly import eval_orbit_with_derivative

    w = trace.endpoint
    prev_step = float("inf")
    for _ in range(400):
        # one inverse step of P^q by Newton from the current point: the
        # nearest fiber point continues the ray
        z = w
        for _ in range(40):
            res = eval_orbit_with_derivative(poly, z, q)
            f = res.orbit[-1] - w
            if abs(f) <= 1e-14 * (1.0 + abs(w)):
                break
            if abs(res.chain_derivative) < 1e-200:
                return w
            stepz = f / res.chain_derivative
            if abs(stepz) > 0.5 * (1.0 + abs(z)):
                return w
            z = z - stepz
        step = abs(z - w)
        if step > prev_step * 1.5 and step > 1e-10:
            return w
        w = z
        if step < 1e-13 * (1.0 + abs(w)):
            break
        prev_step = max(step, 1e-300)
    return w


# --- crash-angle enumeration -------------------------------------------------


@dataclass
class CrashAngleTable:
    """Crash events as (angle, potential) pairs.

    candidate_events map angles to fiber groups of saddles at each level;
    fiber siblings share their forward orbit, so the pointwise chart match
    cannot tell them apart and the per-saddle assignment is a candidate
    pool, verified downstream by continuation or tracing."""

    pairs: list                  # (Angle, event potential), deduped
    candidate_events: list       # (Angle, potential, tuple of catalog indices)
    unresolved: list             # singularities whose top angles failed

    def angles_at(self, sing_index: int) -> list:
        return [a for a, _s, idxs in self.candidate_events if sing_index in idxs]

    def max_potential(self, angle: Angle) -> float:
        best = 0.0
        for a, s in self.pairs:
            if _same_angle(a, angle):
                best = max(best, s)
        return best

    @property
    def angles(self) -> list:
        seen = []
        for a, _s in self.pairs:
            if not any(_same_angle(a, b) for b in seen):
                seen.append(a)
        return seen


def _same_angle(a: Angle, b: Angle) -> bool:
    if a.exact is not None and b.exact is not None:
        return a.exact == b.exact
    return a.circular_distance(b) < 1e-12


def _fit_saddle_coefficient(poly: Polynomial, c: complex, sigma: float, q: int):
    """Leading coefficient A of the local model  G - sigma ~ Re(A (z-c)^q)."""
    h = 1e-4 * (1.0 + abs(c))
    n_s = 4 * q + 4
    phis = 2.0 * math.pi * np.arange(n_s) / n_s
    vals = []
    for ph in phis:
        vals.append(green(poly, c + h * cmath.exp(1j * ph)).value - sigma)
    vals = np.array(vals)
    # linear LSQ for Re(A e^{i q phi}) = x cos(q phi) - y sin(q phi)
    cosq = np.cos(q * phis)
    sinq = np.sin(q * phis)
    mat = np.stack([cosq, -sinq], axis=1)
    sol, *_ = np.linalg.lstsq(mat, vals / h**q, rcond=None)
    return complex(sol[0], sol[1])


def _ascended_angle(poly: Polynomial, z_start: complex,
                    catalog: SingularityCatalog = None) -> float:
    """Chart angle (in [0,1)) of the ascending field line from z_start.

    Starting near a saddle requires the catalog so predictor steps stay
    capped by the saddle distance."""
    from .potential import _ascended_chart_angle

    s0 = green(poly, z_start)
    if not s0.escaped:
        raise PreconditionError("ascent start does not escape")
    caps = None
    if catalog is not None and len(catalog.entries):
        caps = catalog.loc_re + 1j * catalog.loc_im
    im = _ascended_chart_angle(poly, z_start, s0.value, caps)
    return (im / (2.0 * math.pi)) % 1.0


def crash_angles(poly: Polynomial, s_min: float,
                 catalog: SingularityCatalog) -> CrashAngleTable:
    """All (angle, potential) crash events at or above s_min.

    Top-generation events are read off by ascending the unstable directions
    of each escaping critical point; deeper events are the exact rational
    angle preimages filtered by the chart match at each candidate saddle."""
    if catalog.cutoff > s_min * (1 + 1e-9):
        raise PreconditionError("catalog cutoff exceeds s_min")
    coeffs = poly.coeff_array()
    d = poly.degree
    events = []
    unresolved = []
    max_den = d**SNAP_DEN_POWER - 1

    for idx, entry in enumerate(catalog.entries):
        if entry.generation != 0 or entry.potential < s_min:
            continue
        c = entry.location
        sigma = entry.potential
        q = entry.order
        try:
            m = chart_depth(poly, sigma)
            dm = d**m
            phi, _fp, okp = kernels.phi_eval(coeffs, m, c, poly.escape_radius,
                                             GREEN_MAX_ITER, poly.amplify_bound)
            if okp != 1:
                unresolved.append(entry)
                continue
            base = (phi.imag / (2.0 * math.pi)) % 1.0
            a_coef = _fit_saddle_coefficient(poly, c, sigma, q)
            dir0 = (-cmath.phase(a_coef)) / q
            found = 0
            for k in range(q):
                phi_dir = dir0 + 2.0 * math.pi * k / q
                z0 = c + 1e-5 * (1.0 + abs(c)) * cmath.exp(1j * phi_dir)
                # the ascent only resolves which depth-m alias the exact
                # chart value at c corresponds to
                raw = _ascended_angle(poly, z0, catalog)
                j = round(raw * dm - base)
                theta_val = ((base + j) / dm) % 1.0
                snapped = snap_to_rational(theta_val, max_den)
                theta = (Angle.from_fraction(snapped) if snapped is not None
                         else Angle(theta_val))
                ang = theta.lifted_fraction(dm)
                if kernels.crash_match(coeffs, m, c, (float(d) ** m) * sigma, ang,
                                       poly.escape_radius, GREEN_MAX_ITER,
                                       poly.amplify_bound) == 1:
                    if not any(_same_angle(e[0], theta) and e[2] == idx
                               for e in events):
                        events.append((theta, sigma, idx))
                        found += 1
            if found == 0:
                unresolved.append(entry)
        except (TraceFailure, PreconditionError):
            unresolved.append(entry)

    children = _children_map(poly, catalog, s_min)
    events = [(th, s, (i,)) for th, s, i in events]
    frontier = list(events)
    while frontier:
        theta, sigma, idxs = frontier.pop()
        child_pot = sigma / d
        if child_pot < s_min * (1 - 1e-12):
            continue
        group = tuple(sorted({ci for i in idxs for ci in children.get(i, ())}))
        if not group:
            continue
        m = chart_depth(poly, child_pot)
        t_re = (float(d) ** m) * child_pot
        for th_c in theta.preimages(d):
            # every angle preimage of a crashing angle crashes one level
            # down (its fiber arc carries one sibling); the chart match is a
            # consistency guard on the arithmetic
            ang = th_c.lifted_fraction(d**m)
            om = catalog.entries[group[0]].location
            if kernels.crash_match(coeffs, m, om, t_re, ang,
                                   poly.escape_radius, GREEN_MAX_ITER,
                                   poly.amplify_bound) != 1:
                continue
            if not any(_same_angle(e[0], th_c) and abs(e[1] - child_pot) < 1e-12
                       and e[2] == group for e in events):
                ev = (th_c, child_pot, group)
                events.append(ev)
                frontier.append(ev)
    pairs = []
    for th, s, _g in events:
        if not any(_same_angle(p[0], th) and abs(p[1] - s) <= 1e-12 * s for p in pairs):
            pairs.append((th, s))
    pairs.sort(key=lambda p: (-p[1], p[0].approx))
    return CrashAngleTable(pairs, events, unresolved)


def _children_map(poly: Polynomial, catalog: SingularityCatalog,
                  s_min: float) -> dict:
    """Catalog index -> indices of its fiber preimages one level down,
    restricted to levels with potential >= s_min."""
    out: dict[int, list[int]] = {}
    loc = catalog.loc_re + 1j * catalog.loc_im
    for row in range(1, len(catalog.level_pot)):
        if catalog.level_pot[row] < s_min * (1 - 1e-12):
            break
        lo, hi = int(catalog.level_lo[row]), int(catalog.level_hi[row])
        parent_row = catalog.find_level(float(catalog.level_pot[row]) * poly.degree)
        if parent_row < 0:
            continue
        plo, phi_ = int(catalog.level_lo[parent_row]), int(catalog.level_hi[parent_row])
        acc = np.full(hi - lo, 1.0 + 0j)
        zs = loc[lo:hi]
        for k in range(poly.degree - 1, -1, -1):
            acc = acc * zs + poly.coeffs[k]
        for ci in range(lo, hi):
            img = acc[ci - lo]
            dists = np.hypot(catalog.loc_re[plo:phi_] - img.real,
                             catalog.loc_im[plo:phi_] - img.imag)
            pi = plo + int(np.argmin(dists))
            if dists[pi - plo] <= 1e-6 * (1.0 + abs(img)):
                out.setdefault(pi, []).append(ci)
    return out


# --- partnership -------------------------------------------------------------


def partner_at(poly: Polynomial, omega: Singularity, arriving: RayTrace,
               catalog: SingularityCatalog,
               table: CrashAngleTable = None):
    """Angle and side of the ray pairing with `arriving` at the saddle omega.

    Partners crash along different unstable directions and leave along the
    same stable one; the match is verified by comparing broken continuations
    on the potential band [sigma/D, sigma)."""
    sigma = omega.potential
    ev = None
    for e in arriving.crashes:
        if abs(e.potential - sigma) <= 1e-9 * max(sigma, e.potential) and \
                abs(e.singularity.location - omega.location) <= 1e-9 * (1 + abs(omega.location)):
            ev = e
            break
    if ev is None:
        raise PreconditionError("arriving trace has no crash at this singularity")
    if arriving.kind == "right_broken":
        arr_side = "right"
    elif arriving.kind == "left_broken":
        arr_side = "left"
    else:
        raise PreconditionError("arriving trace must be a broken ray")
    other = "left" if arr_side == "right" else "right"

    if table is None:
        table = crash_angles(poly, sigma * 0.999, catalog)
    sing_idx = None
    for i, entry in enumerate(catalog.entries):
        if abs(entry.location - omega.location) <= 1e-9 * (1 + abs(omega.location)) \
                and abs(entry.potential - sigma) <= 1e-9 * sigma:
            sing_idx = i
            break
    if sing_idx is None:
        raise PreconditionError("singularity not found in catalog")
    candidates = [a for a in table.angles_at(sing_idx)
                  if not _same_angle(a, arriving.angle)]
    if not candidates:
        raise PartnerMatchError("no other crash angle recorded at this singularity")

    # candidate pools carry chart-aliased siblings; a cheap smooth trace
    # tells which candidates genuinely crash at this saddle, and those are
    # tried first (the usual case: the partner is smooth above sigma)
    direct = []
    rest = []
    for cand in candidates:
        try:
            probe = trace_smooth(poly, cand, sigma * 0.9, None, catalog)
        except (TraceFailure, AmbiguousCaptureError):
            rest.append(cand)
            continue
        if probe.kind == "crashed" and probe.crashes and \
                abs(probe.crashes[0].singularity.location - omega.location) \
                <= 1e-9 * (1 + abs(omega.location)):
            direct.append(cand)
        else:
            rest.append(cand)

    # partners coincide exactly on [sigma/D, sigma] (they separate at the
    # next saddle of the shared stable arm); compare safely inside that band
    s_lo_cmp = sigma / poly.degree * 1.02
    if s_lo_cmp < catalog.cutoff:
        s_lo_cmp = catalog.cutoff
    band = (arriving.potentials <= sigma * 0.985) \
        & (arriving.potentials >= s_lo_cmp * 1.02) \
        & (arriving.grid.kind == NODE_REGULAR)
    if not band.any():
        raise PreconditionError("arriving trace carries no samples below the crash")

    def continuation_mismatch(cand):
        try:
            t_c = trace_broken(poly, cand, other, s_lo_cmp, None, catalog)
        except (TraceFailure, AmbiguousCaptureError):
            return None
        diffs = []
        for s_v, z_v in zip(arriving.potentials[band], arriving.points[band]):
            try:
                z_c = t_c.point_at(float(s_v))
            except KeyError:
                continue
            diffs.append(abs(z_c - z_v))
        return max(diffs) if diffs else None

    matches = []
    for cand in direct:
        mm = continuation_mismatch(cand)
        if mm is not None and mm <= 50 * RAY_LIMIT_TOL:
            matches.append((cand, mm))
    if len(matches) == 1:
        return matches[0][0], other
    if not matches:
        for cand in rest:
            mm = continuation_mismatch(cand)
            if mm is not None and mm <= 50 * RAY_LIMIT_TOL:
                matches.append((cand, mm))
    if not matches:
        raise PartnerMatchError(
            f"no continuation match at singularity {omega.location}")
    matches.sort(key=lambda t: t[1])
    if len(matches) > 1 and matches[1][1] <= 100 * RAY_LIMIT_TOL:
        raise PartnerMatchError("partner match ambiguous")
    return matches[0][0], other
