"""Constructive search for a smooth ray landing at a repelling or parabolic
fixed point, executed as a checkable numerical procedure.

Starting from a landing angle a1 whose ray is broken, the partner angles
b_1, b_2, ... at its successive saddles form a monotone sequence whose limit
a2 is again a fixed angle; the open arc between a1 and a2 contains no angle
whose ray accumulates on the component, and a2 lands at the same point. The
chain a1 -> a2 -> ... must reach a smooth ray within D-1 steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .angles import Angle, interval_contains, snap_to_rational
from .config import IN_I_S_TEST, S_FLOOR
from .errors import (InconsistencyError, NumericalError, PreconditionError,
                     TheoremViolation)
from .poly import PeriodicPointRecord, Polynomial
from .rays import (CrashAngleTable, crash_angles, crash_potential,
                   default_catalog, partner_at, trace_broken)
from .landing import component_probe, in_accumulation_set, land
from .singularities import SingularityCatalog


@dataclass(frozen=True)
class PartnerStep:
    n: int
    sigma: float
    omega: complex
    b: Angle
    snapped: bool


@dataclass
class PartnerSequence:
    a1: Angle
    side: str
    degree: int
    entries: list  # of PartnerStep

    @property
    def drift(self) -> float:
        """Signed direction of the monotone angle sequence (lift units)."""
        lifts = self.lifts()
        return lifts[1] - lifts[0]

    def lifts(self) -> list[float]:
        """Representative lifts a1, b_1, b_2, ... moving monotonically."""
        vals = [self.a1.approx]
        for step in self.entries:
            prev = vals[-1]
            delta = (step.b.approx - prev) % 1.0
            if delta > 0.5:
                delta -= 1.0
            vals.append(prev + delta)
        return vals


@dataclass
class GapReport:
    a_from: Angle
    a_to: Angle
    direction: int
    samples_tested: int
    crash_angles_tested: int
    violations: list
    proxy_positives: list = field(default_factory=list)
    wake_cleared: list = field(default_factory=list)


@dataclass
class ChainStep:
    angle: Angle
    kind: str
    sequence: Optional[PartnerSequence] = None


@dataclass
class VerificationReport:
    poly: Polynomial
    z0: PeriodicPointRecord
    chain: list = field(default_factory=list)
    gap_checks: list = field(default_factory=list)
    terminated_smooth: bool = False
    steps: int = 0
    violation: Optional[str] = None


def _is_fixed_angle(theta: Angle, degree: int) -> bool:
    return theta.is_exact and (theta.exact * (degree - 1)) % 1 == 0


def partner_sequence(poly: Polynomial, a1: Angle, side: str, n_max: int,
                     catalog: SingularityCatalog = None,
                     table: CrashAngleTable = None) -> PartnerSequence:
    """Partner angles along the broken fixed ray at a1, cross-checked two ways:
    geometric continuation matching and the exact angle-preimage filter."""
    d = poly.degree
    if not _is_fixed_angle(a1, d):
        raise PreconditionError(f"{a1} is not fixed under multiplication by {d}")
    if n_max < 1:
        raise PreconditionError("n_max must be positive")
    if catalog is None:
        catalog = default_catalog(poly, S_FLOOR)
    s1 = crash_potential(poly, a1, catalog)
    if s1 <= 0:
        raise PreconditionError(f"ray at {a1} is smooth; no partner sequence")
    s_lo = s1 * float(d) ** (-n_max) * 0.9
    if s_lo < catalog.cutoff:
        raise NumericalError(
            f"catalog cutoff {catalog.cutoff:.3g} too high to reach {n_max} crashes")
    trace = trace_broken(poly, a1, side, s_lo, None, catalog)
    if len(trace.crashes) < n_max:
        raise NumericalError(
            f"trace depth insufficient: {len(trace.crashes)} crashes < {n_max}")
    if table is None:
        table = crash_angles(poly, trace.crashes[n_max - 1].potential * 0.999, catalog)

    from .rays import trace_smooth

    steps = []
    prev_b = a1
    for n in range(1, n_max + 1):
        ev = trace.crashes[n - 1]
        sigma = ev.potential
        if abs(sigma - s1 * float(d) ** (1 - n)) > 1e-9 * sigma:
            raise NumericalError(
                f"crash {n} at potential {sigma:.6g} breaks the /{d} cascade")
        omega = ev.singularity
        # (a) geometric: continuation matching among the saddle's angles
        b_geo, _side_geo = partner_at(poly, omega, trace, catalog, table)
        # (b) exact arithmetic: among the angle preimages of the previous
        # partner, the one whose smooth ray crashes into this very saddle
        # (partner angles have their first crash exactly here)
        exact_hits = []
        for cand in prev_b.preimages(d):
            if cand.exact == a1.exact:
                continue
            t_c = trace_smooth(poly, cand, sigma * 0.9, None, catalog)
            if t_c.kind == "crashed" and len(t_c.crashes) == 1:
                hit = t_c.crashes[0]
                if abs(hit.singularity.location - omega.location) <= \
                        1e-9 * (1 + abs(omega.location)):
                    exact_hits.append(cand)
        if len(exact_hits) != 1:
            raise InconsistencyError(
                f"expected one preimage of {prev_b} crashing at step {n}, "
                f"got {len(exact_hits)}", candidates=exact_hits)
        b_exact = exact_hits[0]
        snapped = b_geo.is_exact
        same = (b_geo.exact == b_exact.exact if snapped
                else b_geo.circular_distance(b_exact) <= 1e-9)
        if not same:
            raise InconsistencyError(
                f"partner mismatch at step {n}: continuation gives {b_geo}, "
                f"preimage filter gives {b_exact}",
                candidates=[b_geo, b_exact])
        steps.append(PartnerStep(n, sigma, omega.location, b_exact, True))
        prev_b = b_exact
    return PartnerSequence(a1, side, d, steps)


def limit_angle(seq: PartnerSequence) -> Angle:
    """Limit of the monotone partner angles, snapped to the fixed-angle grid.

    The tail is geometric with ratio 1/D; the last difference is summed as
    the full tail before snapping."""
    if len(seq.entries) < 3:
        raise PreconditionError("need at least 3 partner steps to extrapolate")
    d = seq.degree
    lifts = seq.lifts()
    diffs = np.diff(lifts)
    est = lifts[-1] + diffs[-1] / (d - 1)
    snapped = snap_to_rational(est % 1.0, d - 1, tol=1e-6)
    if snapped is None:
        raise NumericalError(
            f"partner-sequence limit {est % 1.0:.9f} does not snap onto the "
            f"fixed-angle grid with denominator {d - 1}")
    return Angle.from_fraction(snapped)


def gap_check(poly: Polynomial, a1: Angle, a2: Angle, m_samples: int,
              probe_base: complex, catalog: SingularityCatalog = None,
              direction: int = 1, crash_s_min: float = None,
              blocking: PartnerSequence = None) -> GapReport:
    """Sample the open arc from a1 toward a2 and test accumulation on the
    probe component; violations are returned as data, never raised.

    The raster proxy cannot resolve component splits whose separating
    saddles lie below the probe level, so proxy positives near the arc's
    far end are re-examined against the blocking geometry when a partner
    sequence is supplied: an angle inside the arc bounded by a partner
    angle b_n whose ray verifiably stays inside the wake at the saddle
    omega_n cannot accumulate on the component."""
    if a1.circular_distance(a2) == 0:
        raise PreconditionError("gap endpoints coincide")
    if catalog is None:
        catalog = default_catalog(poly, S_FLOOR)
    span = ((a2.approx - a1.approx) * direction) % 1.0
    probe = component_probe(poly, probe_base, IN_I_S_TEST)
    sampled = []
    if a1.is_exact and a2.is_exact:
        span_f = ((a2.exact - a1.exact) * direction) % 1
        for i in range(m_samples):
            off = span_f * Fraction(2 * i + 1, 2 * m_samples)
            sampled.append(Angle.from_fraction(a1.exact + direction * off))
    else:
        for i in range(m_samples):
            off = span * (2 * i + 1) / (2 * m_samples)
            sampled.append(Angle((a1.approx + direction * off) % 1.0))
    if crash_s_min is None:
        crash_s_min = max(catalog.cutoff, 1e-3)
    table = crash_angles(poly, crash_s_min, catalog)
    if direction == 1:
        extra = [th for th in table.angles
                 if interval_contains(a1.approx, a2.approx, th.approx)]
    else:
        extra = [th for th in table.angles
                 if interval_contains(a2.approx, a1.approx, th.approx)]
    positives = []
    for th in sampled + extra:
        if in_accumulation_set(poly, th, probe_base, IN_I_S_TEST, catalog, probe):
            positives.append(th)
    violations = list(positives)
    cleared = []
    if blocking is not None and positives:
        shield = _WakeShield(poly, blocking, catalog, probe_base)
        violations = []
        for th in positives:
            if shield.blocks(th):
                cleared.append(th)
            else:
                violations.append(th)
    return GapReport(a1, a2, direction, len(sampled), len(extra), violations,
                     positives, cleared)


class _WakeShield:
    """Wake containment checks along a partner sequence.

    The pair (broken ray at a1, partner at b_n) bounds a region hanging off
    the saddle omega_n; rays at angles strictly between a1 and b_n stay in
    its closure, hence off the component. The check verifies the sampled
    ray's deep samples inside the traced wake polygon and the probe base
    outside it."""

    def __init__(self, poly, seq: PartnerSequence, catalog, base_point):
        self.poly = poly
        self.seq = seq
        self.catalog = catalog
        self.base = complex(base_point)
        self.direction = 1 if seq.drift > 0 else -1
        self._polygons = {}
        self._extended = seq

    def _arc_contains(self, b: Angle, theta: Angle) -> bool:
        a1 = self.seq.a1
        off = ((theta.approx - a1.approx) * self.direction) % 1.0
        end = ((b.approx - a1.approx) * self.direction) % 1.0
        return 0.0 < off < end

    def _step_for(self, theta: Angle):
        for step in self._extended.entries:
            if self._arc_contains(step.b, theta):
                return step
        # extend the sequence when samples sit closer to the limit angle
        # than the last computed partner
        for extra in range(len(self._extended.entries) + 1, 12):
            try:
                self._extended = partner_sequence(
                    self.poly, self.seq.a1, self.seq.side, extra, self.catalog)
            except (NumericalError, PreconditionError, InconsistencyError):
                return None
            step = self._extended.entries[-1]
            if self._arc_contains(step.b, theta):
                return step
        return None

    def _polygon(self, step: PartnerStep):
        if step.n in self._polygons:
            return self._polygons[step.n]
        s_lo = step.sigma * 0.999
        other = "left" if self.seq.side == "right" else "right"
        t_a = trace_broken(self.poly, self.seq.a1, self.seq.side, s_lo,
                           None, self.catalog)
        t_b = trace_broken(self.poly, step.b, other, s_lo, None, self.catalog)
        xs = np.concatenate([t_a.points.real[::-1], t_b.points.real])
        ys = np.concatenate([t_a.points.imag[::-1], t_b.points.imag])
        poly_path = np.stack([xs, ys], axis=1)
        self._polygons[step.n] = poly_path
        return poly_path

    def blocks(self, theta: Angle) -> bool:
        step = self._step_for(theta)
        if step is None:
            return False
        path = self._polygon(step)
        if _point_in_polygon(path, self.base):
            return False
        s_lo = max(step.sigma / self.poly.degree**2, S_FLOOR)
        from .rays import crash_potential, trace_smooth

        s_t = crash_potential(self.poly, theta, self.catalog)
        try:
            if s_t > 0:
                traces = [trace_broken(self.poly, theta, side, s_lo, None,
                                       self.catalog) for side in ("right", "left")]
            else:
                traces = [trace_smooth(self.poly, theta, s_lo, None, self.catalog)]
        except NumericalError:
            return False
        for tr in traces:
            deep = tr.points[tr.potentials <= s_lo * 1.7]
            for z in deep:
                if not _point_in_polygon(path, complex(z)):
                    return False
        return True


def _point_in_polygon(path: np.ndarray, z: complex) -> bool:
    """Even-odd rule containment for a closed polyline given as (n, 2)."""
    x, y = z.real, z.imag
    xs = path[:, 0]
    ys = path[:, 1]
    x2 = np.roll(xs, -1)
    y2 = np.roll(ys, -1)
    crosses = ((ys > y) != (y2 > y))
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = xs + (y - ys) / (y2 - ys) * (x2 - xs)
    hits = crosses & (x_int > x)
    return bool(np.count_nonzero(hits) % 2)


def verify_main_theorem(poly: Polynomial, z0: PeriodicPointRecord, a1: Angle,
                        catalog: SingularityCatalog = None,
                        n_partner: int = 4,
                        gap_samples: int = 64) -> VerificationReport:
    """Follow the partner-limit chain from a1 until a smooth ray lands at z0.

    Periods are assumed pre-reduced: z0 is a fixed point and a1 a fixed
    angle. The report carries the chain, the gap checks, and a violation
    message when the numerics contradict the expected landing behavior."""
    d = poly.degree
    if z0.period != 1:
        raise PreconditionError("verify_main_theorem expects a fixed point "
                                "(reduce the period by iterating the map first)")
    if not z0.is_repelling_or_parabolic:
        raise PreconditionError("fixed point must be repelling or parabolic")
    if not _is_fixed_angle(a1, d):
        raise PreconditionError(f"{a1} is not a fixed angle")
    if catalog is None:
        catalog = default_catalog(poly, S_FLOOR)

    probe = component_probe(poly, z0.location, 1e-3)
    if probe.diameter_cells <= 10:
        raise PreconditionError(
            "component of the landing point looks degenerate "
            f"({probe.diameter_cells} cells at potential 1e-3)")

    report = VerificationReport(poly, z0)
    loc_tol = 1e-6 * (1 + abs(z0.location))

    def lands_at_z0(theta):
        s_t = crash_potential(poly, theta, catalog)
        sides = (None,) if s_t == 0 else ("right", "left")
        hits = []
        for side in sides:
            rep = land(poly, theta, side, catalog)
            if rep.landed_at is not None and \
                    abs(rep.landed_at.location - z0.location) <= loc_tol:
                hits.append(rep)
        return hits

    current = a1
    seen = [a1]
    for _step in range(d - 1):
        hits = lands_at_z0(current)
        if not hits:
            if current == a1:
                raise PreconditionError(f"angle {a1} does not land at {z0.location}")
            report.violation = (f"angle {current} from the partner-limit chain "
                                f"fails to land at the fixed point")
            report.chain.append(ChainStep(current, "unlanded"))
            break
        smooth_hits = [r for r in hits if r.kind == "smooth"]
        if smooth_hits:
            report.chain.append(ChainStep(current, "smooth"))
            report.terminated_smooth = True
            break
        rep = hits[0]
        side = "right" if rep.kind == "right_broken" else "left"
        seq = partner_sequence(poly, current, side, n_partner, catalog)
        report.chain.append(ChainStep(current, rep.kind, seq))
        nxt = limit_angle(seq)
        direction = 1 if seq.drift > 0 else -1
        report.gap_checks.append(
            gap_check(poly, current, nxt, gap_samples, z0.location, catalog,
                      direction))
        if any(nxt.circular_distance(s) == 0 for s in seen):
            report.violation = f"chain angle {nxt} repeats an earlier angle"
            break
        seen.append(nxt)
        current = nxt
    report.steps = len(report.chain)
    if report.terminated_smooth and report.steps > d - 1:
        report.violation = f"chain used {report.steps} steps, more than D-1"
    return report
