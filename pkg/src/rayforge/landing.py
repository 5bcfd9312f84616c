"""Landing analysis: where rays end up, which angles land at a point, and
whether a ray accumulates on a given component of the filled set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .angles import Angle, angles_of_period_dividing
from .config import IN_I_S_TEST, LAND_TOL, PROBE_RESOLUTION, S_FLOOR
from .errors import PreconditionError, UnsupportedInputError
from .poly import PeriodicPointRecord, Polynomial, periodic_points
from .potential import green, green_many
from .rays import (RayTrace, crash_potential, default_catalog, landing_estimate,
                   trace_broken, trace_smooth)
from .singularities import SingularityCatalog


@dataclass(frozen=True)
class LandingReport:
    angle: Angle
    kind: str
    endpoint: complex                  # raw trace point at the floor
    landing_point: complex             # pullback-sharpened limit estimate
    landed_at: Optional[PeriodicPointRecord]
    distance: float
    converged: bool


@dataclass
class ComponentProbe:
    base_point: complex
    potential: float
    resolution: int
    x0: float
    y0: float
    cell: float
    mask: np.ndarray = field(repr=False)

    def contains(self, z: complex) -> bool:
        ix = int(math.floor((z.real - self.x0) / self.cell))
        iy = int(math.floor((z.imag - self.y0) / self.cell))
        if 0 <= iy < self.mask.shape[0] and 0 <= ix < self.mask.shape[1]:
            return bool(self.mask[iy, ix])
        return False

    @property
    def diameter_cells(self) -> int:
        ys, xs = np.nonzero(self.mask)
        if len(xs) == 0:
            return 0
        return int(max(xs.max() - xs.min(), ys.max() - ys.min())) + 1


def _divisors(q: int):
    return [k for k in range(1, q + 1) if q % k == 0]


def land(poly: Polynomial, theta: Angle, side: str = None,
         catalog: SingularityCatalog = None, s_floor: float = S_FLOOR) -> LandingReport:
    """Trace the ray at theta to the floor and match its limit against the
    repelling/parabolic periodic points whose period divides the angle's."""
    if not theta.is_exact:
        raise UnsupportedInputError("landing analysis needs a rational angle")
    if catalog is None:
        catalog = default_catalog(poly, s_floor)
    s_theta = crash_potential(poly, theta, catalog)
    if s_theta > 0:
        if side is None:
            raise PreconditionError(
                f"ray at {theta} is broken (crash at {s_theta:.6g}); pass a side")
        trace = trace_broken(poly, theta, side, s_floor, None, catalog)
    else:
        trace = trace_smooth(poly, theta, s_floor, None, catalog)

    landing = landing_estimate(poly, trace)
    q = theta.period(poly.degree)
    landed = None
    distance = float("inf")
    if q is not None:
        candidates = []
        for k in _divisors(q):
            candidates.extend(r for r in periodic_points(poly, k)
                              if r.is_repelling_or_parabolic)
        for rec in candidates:
            dist = abs(landing - rec.location)
            if dist < distance:
                distance = dist
                if dist <= LAND_TOL:
                    landed = rec
    ref = landed.location if landed is not None else landing
    converged = _endpoint_converging(trace, ref, s_floor)
    return LandingReport(theta, trace.kind, trace.endpoint, landing,
                         landed, distance, converged)


def _endpoint_converging(trace: RayTrace, ref: complex, s_floor: float) -> bool:
    """Distances to `ref` decrease across the floor's last three decades."""
    dists = []
    for s_lvl in (100.0 * s_floor, 10.0 * s_floor, s_floor):
        idx = int(np.argmin(np.abs(trace.potentials - s_lvl)))
        if trace.potentials[idx] > 1.31 * s_lvl or trace.potentials[idx] < 0.7 * s_lvl:
            return False
        dists.append(abs(complex(trace.points[idx]) - ref))
    return dists[0] > dists[1] > dists[2] * 0.999999


def lambda_set(poly: Polynomial, z0: PeriodicPointRecord, q: int,
               catalog: SingularityCatalog = None) -> list[tuple[Angle, str]]:
    """Angles with period dividing q whose (possibly broken) ray lands at z0."""
    if not z0.is_repelling_or_parabolic:
        raise PreconditionError("landing point must be repelling or parabolic")
    limit = 5 if poly.degree <= 3 else 3
    if q > limit:
        raise PreconditionError(
            f"period {q} too large for degree {poly.degree} (limit {limit})")
    if catalog is None:
        catalog = default_catalog(poly, S_FLOOR)
    found = []
    for theta in angles_of_period_dividing(poly.degree, q):
        s_theta = crash_potential(poly, theta, catalog)
        sides = ("right", "left") if s_theta > 0 else (None,)
        for side in sides:
            rep = land(poly, theta, side, catalog)
            if rep.landed_at is not None and \
                    abs(rep.landed_at.location - z0.location) <= 1e-6 * (1 + abs(z0.location)):
                found.append((theta, rep.kind))
    if found:
        periods = {th.period(poly.degree) for th, _ in found}
        if len(periods) != 1:
            raise PreconditionError(
                f"landing angles disagree on exact period: {sorted(periods)}")
    return found


def component_probe(poly: Polynomial, base_point: complex, s: float,
                    resolution: int = PROBE_RESOLUTION) -> ComponentProbe:
    """Raster of the sublevel component of {potential < s} containing base_point.

    The box is auto-fitted: a coarse pass over the a-priori disk bounds the
    sublevel set, and the full-resolution raster covers that box padded 20%,
    which keeps the cell size small enough to separate nearby islands."""
    if s <= 0:
        raise PreconditionError("probe potential must be positive")
    if green(poly, base_point).escaped:
        raise PreconditionError("probe base point must lie in the filled set")
    cn = poly.coeff_norm
    rho = 1.2 * max(1.0 + 2.0 * cn, 2.0 * math.exp(s))
    coarse = _grid_values(poly, base_point.real - rho, base_point.imag - rho,
                          2 * rho / 256, 256)
    ys, xs = np.nonzero(coarse < s)
    if len(xs):
        cell0 = 2 * rho / 256
        x_lo = base_point.real - rho + cell0 * (xs.min() - 1)
        x_hi = base_point.real - rho + cell0 * (xs.max() + 2)
        y_lo = base_point.imag - rho + cell0 * (ys.min() - 1)
        y_hi = base_point.imag - rho + cell0 * (ys.max() + 2)
        cx = 0.5 * (x_lo + x_hi)
        cy = 0.5 * (y_lo + y_hi)
        half = 0.6 * max(x_hi - x_lo, y_hi - y_lo)  # 20% pad
        center = complex(cx, cy)
    else:
        center, half = complex(base_point), rho
    for _attempt in range(2):
        probe = _rasterize(poly, base_point, s, resolution, center, half)
        mask = probe.mask
        touches = (mask[0, :].any() or mask[-1, :].any()
                   or mask[:, 0].any() or mask[:, -1].any())
        if not touches:
            return probe
        half *= 1.6
    raise PreconditionError("sublevel component keeps touching the probe box")


def _grid_values(poly, x0, y0, cell, n):
    from . import kernels
    from .config import GREEN_MAX_ITER

    return kernels.green_grid(poly.coeff_array(), x0 + cell / 2, cell,
                              y0 + cell / 2, cell, n, n,
                              poly.escape_radius, GREEN_MAX_ITER,
                              poly.amplify_bound)


def _rasterize(poly, base_point, s, resolution, center, half):
    x0 = center.real - half
    y0 = center.imag - half
    cell = 2.0 * half / resolution
    vals = _grid_values(poly, x0, y0, cell, resolution)
    sub = vals < s
    labels, _n = ndimage.label(sub)  # default structure = 4-connectivity
    bx = int((base_point.real - x0) / cell)
    by = int((base_point.imag - y0) / cell)
    if not (0 <= by < resolution and 0 <= bx < resolution):
        raise PreconditionError("probe base point fell outside the fitted box")
    lab = labels[by, bx]
    mask = labels == lab if lab != 0 else np.zeros_like(sub)
    return ComponentProbe(complex(base_point), float(s), resolution,
                          x0, y0, cell, mask)


def in_accumulation_set(poly: Polynomial, theta: Angle, probe_base: complex,
                        s_test: float = IN_I_S_TEST,
                        catalog: SingularityCatalog = None,
                        probe: ComponentProbe = None) -> bool:
    """True iff a ray at theta accumulates on the component of probe_base.

    The sublevel components are properly nested in s, so the criterion
    reduces to meeting the component of {potential < s_test} at small
    potential. The ray is tested near its own floor: shallower samples can
    shadow an accumulating corridor before veering off, so only the deepest
    samples witness the s -> 0 behavior."""
    if s_test < S_FLOOR:
        raise PreconditionError("s_test below the potential floor")
    s_lo = max(S_FLOOR, s_test / 32.0)
    if catalog is None:
        catalog = default_catalog(poly, min(s_lo, S_FLOOR * 10))
    if probe is None:
        probe = component_probe(poly, probe_base, s_test)
    base = trace_smooth(poly, theta, s_lo, None, catalog)
    variants = [base]
    if base.kind == "crashed":
        variants = [trace_broken(poly, theta, side, s_lo, None, catalog)
                    for side in ("right", "left")]
    for tr in variants:
        sel = tr.potentials <= s_lo * 1.7
        for z in tr.points[sel]:
            if probe.contains(complex(z)):
                return True
    return False
