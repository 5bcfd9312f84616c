"""Simultaneous polynomial root finding (Aberth-Ehrlich) with Newton polish.

Used for critical points, fiber solves, and periodic points. Degrees here
stay small (at most D**4), so the O(n^2) correction sum is cheap. Restarts
use a fixed-seed generator: results are deterministic.
"""

from __future__ import annotations

import numpy as np

from .config import ABERTH_MAX_ITER
from .errors import SolverFailure


def _eval_and_deriv(coeffs, z):
    """Horner evaluation of a full coefficient array (ascending powers)."""
    acc = np.zeros_like(z) + coeffs[-1]
    dacc = np.zeros_like(z)
    for k in range(len(coeffs) - 2, -1, -1):
        dacc = dacc * z + acc
        acc = acc * z + coeffs[k]
    return acc, dacc


def aberth_roots(coeffs, tol=1e-13, max_iter=ABERTH_MAX_ITER):
    """All roots of the polynomial with ascending coefficients `coeffs`.

    The leading coefficient must be nonzero. Raises SolverFailure when the
    simultaneous iteration stagnates even after perturbation restarts.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    n = len(coeffs) - 1
    if n <= 0:
        return np.zeros(0, dtype=np.complex128)
    if n == 1:
        return np.array([-coeffs[0] / coeffs[1]])
    lead = coeffs[-1]
    monic = coeffs / lead

    radius = 1.0 + max(abs(monic[k]) for k in range(n))
    rng = np.random.default_rng(1234321)
    angles = 2 * np.pi * (np.arange(n) + 0.25) / n
    z = radius * np.exp(1j * angles) * (1 + 0.05 * np.sin(np.arange(n)))

    scale = np.maximum(1.0, np.abs(z))
    last_delta = np.inf
    for it in range(max_iter):
        p, dp = _eval_and_deriv(monic, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        ssum = inv.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), 0.0)
            denom = 1.0 - newton * ssum
            delta = np.where(np.abs(denom) > 1e-290, newton / denom, newton)
        bad = ~np.isfinite(delta)
        if bad.any():
            delta = np.where(bad, 0.1 * radius * np.exp(2j * np.pi * rng.random(n)), delta)
        z = z - delta
        scale = np.maximum(1.0, np.abs(z))
        dmax = float(np.max(np.abs(delta) / scale))
        if dmax < tol:
            break
        # stagnation: perturb the worst cluster and keep iterating
        if it > 40 and it % 40 == 0 and dmax > 0.5 * last_delta:
            z = z + 1e-3 * radius * np.exp(2j * np.pi * rng.random(n))
        last_delta = dmax
    else:
        p, _ = _eval_and_deriv(monic, z)
        res = np.abs(p) / np.maximum(1.0, np.abs(z)) ** n
        if np.max(res) > 1e-6:
            raise SolverFailure("simultaneous root iteration did not converge",
                                residuals=res.tolist())
    return polish_roots(coeffs, z)


def polish_roots(coeffs, roots, sweeps=4):
    """A few Newton sweeps on each root; skipped where P' underflows."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    z = np.array(roots, dtype=np.complex128)
    for _ in range(sweeps):
        p, dp = _eval_and_deriv(coeffs, z)
        safe = np.abs(dp) > 1e-290
        step = np.where(safe, p / np.where(safe, dp, 1.0), 0.0)
        big = np.abs(step) > 0.5 * (1.0 + np.abs(z))
        step = np.where(big, 0.0, step)
        z = z - step
    return z


def cluster_roots(roots, rtol=2e-6):
    """Group near-coincident roots into (center, multiplicity) pairs.

    Multiple roots split by floating error ~eps**(1/m); the tolerance is
    far above that split and far below genuine root separations here."""
    roots = sorted(roots, key=lambda w: (round(w.real, 12), round(w.imag, 12)))
    groups: list[list[complex]] = []
    for w in roots:
        placed = False
        for g in groups:
            if abs(w - g[0]) <= rtol * (1.0 + abs(g[0])):
                g.append(w)
                placed = True
                break
        if not placed:
            groups.append([w])
    out = []
    for g in groups:
        center = sum(g) / len(g)
        out.append((center, len(g)))
    return out
