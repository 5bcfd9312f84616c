"""Catalog of the potential's saddle points: escaping precritical orbits.

A saddle of the potential outside the filled set is a point whose forward
orbit hits a critical point. The catalog enumerates all of them above a
potential cutoff by pulling the escaping critical points backward
generation by generation; child potentials are parent/D exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import GREEN_MAX_ITER
from .errors import NotASingularityError, PreconditionError
from .poly import Polynomial, critical_points, local_degree, preimages_batch
from .potential import green


@dataclass(frozen=True)
class Singularity:
    location: complex
    potential: float
    order: int
    generation: int


@dataclass
class SingularityCatalog:
    cutoff: float
    entries: list  # Singularity, sorted by (potential desc, re, im)
    # flat arrays mirroring `entries` for the kernels
    loc_re: np.ndarray = field(default=None, repr=False)
    loc_im: np.ndarray = field(default=None, repr=False)
    pot: np.ndarray = field(default=None, repr=False)
    # level structure: distinct potentials (descending) with index ranges
    level_pot: np.ndarray = field(default=None, repr=False)
    level_lo: np.ndarray = field(default=None, repr=False)
    level_hi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.entries.sort(key=lambda e: (-e.potential, e.location.real, e.location.imag))
        n = len(self.entries)
        self.loc_re = np.array([e.location.real for e in self.entries])
        self.loc_im = np.array([e.location.imag for e in self.entries])
        self.pot = np.array([e.potential for e in self.entries])
        levels = []
        lo = 0
        for i in range(1, n + 1):
            if i == n or abs(self.pot[i] - self.pot[lo]) > 1e-9 * self.pot[lo]:
                levels.append((self.pot[lo], lo, i))
                lo = i
        self.level_pot = np.array([l[0] for l in levels])
        self.level_lo = np.array([l[1] for l in levels], dtype=np.int64)
        self.level_hi = np.array([l[2] for l in levels], dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    @property
    def top_potential(self) -> float:
        return float(self.level_pot[0]) if len(self.entries) else 0.0

    def levels_between(self, lo: float, hi: float) -> list[int]:
        """Level rows with lo < potential < hi, descending."""
        return [i for i, p in enumerate(self.level_pot) if lo < p < hi]

    def level_entries(self, row: int) -> list[Singularity]:
        return self.entries[self.level_lo[row]:self.level_hi[row]]

    def find_level(self, sigma: float, rel=1e-9) -> int:
        for i, p in enumerate(self.level_pot):
            if abs(p - sigma) <= rel * max(p, sigma):
                return i
        return -1

    def nearest_at_level(self, row: int, z: complex):
        """(index, distance, second_distance) among the level's entries."""
        lo, hi = int(self.level_lo[row]), int(self.level_hi[row])
        d = np.hypot(self.loc_re[lo:hi] - z.real, self.loc_im[lo:hi] - z.imag)
        order = np.argsort(d)
        j = lo + int(order[0])
        d2 = float(d[order[1]]) if len(d) > 1 else float("inf")
        return j, float(d[order[0]]), d2

    def to_json_obj(self):
        return [{"location": [e.location.real, e.location.imag],
                 "potential": e.potential, "order": e.order,
                 "generation": e.generation} for e in self.entries]


def order_of(poly: Polynomial, omega: complex) -> int:
    """Product of local degrees along the forward orbit of an escaping point.

    At least 2 for a genuine saddle; raises when no forward image is critical."""
    gs = green(poly, omega)
    if not gs.escaped:
        raise NotASingularityError("point does not escape")
    z = complex(omega)
    prod = 1
    r_esc = poly.escape_radius
    for _ in range(GREEN_MAX_ITER):
        prod *= local_degree(poly, z)
        if abs(z) > r_esc:
            break
        z = poly(z)
    if prod < 2:
        raise NotASingularityError("no critical point on the forward orbit")
    return prod


def singularity_catalog(poly: Polynomial, s_min: float) -> SingularityCatalog:
    """All saddles with potential >= s_min, seeded at escaping critical points
    and closed under escaping preimages (potentials divide by D each step)."""
    if s_min <= 0:
        raise PreconditionError("catalog cutoff must be positive")
    seeds = []
    for c, _mult in critical_points(poly):
        gs = green(poly, c)
        if gs.escaped:
            seeds.append(Singularity(complex(c), gs.value, order_of(poly, c), 0))

    entries: list[Singularity] = [s for s in seeds if s.potential >= s_min]
    frontier = list(entries)
    crit_locs = [complex(c) for c, _ in critical_points(poly)]

    def is_seed_duplicate(z, pot):
        for s in seeds:
            if (abs(z - s.location) <= 1e-9 * (1 + abs(s.location))
                    and abs(pot - s.potential) <= 1e-9 * max(pot, s.potential)):
                return True
        return False

    while frontier:
        parents = [e for e in frontier if e.potential / poly.degree >= s_min]
        frontier = []
        if not parents:
            break
        ws = np.array([p.location for p in parents])
        fibers = preimages_batch(poly, ws)
        for parent, row in zip(parents, fibers):
            child_pot = parent.potential / poly.degree
            seen_in_row = []
            for z in row:
                z = complex(z)
                # collapse multiple fiber points (critical child)
                if any(abs(z - other) <= 1e-9 * (1 + abs(z)) for other in seen_in_row):
                    continue
                seen_in_row.append(z)
                if is_seed_duplicate(z, child_pot):
                    continue
                deg = local_degree(poly, z)
                child = Singularity(z, child_pot, deg * parent.order,
                                    parent.generation + 1)
                entries.append(child)
                frontier.append(child)
    return SingularityCatalog(float(s_min), entries)
