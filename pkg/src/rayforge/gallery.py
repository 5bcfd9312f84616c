"""Named example maps used across tests, docs and the CLI."""

from __future__ import annotations

from .poly import Polynomial

# Cubic z^3 + a z^2 whose half-angle ray crashes into the escaping critical
# point -2a/3 exactly, so its right-broken continuation co-lands with the
# smooth zero-angle ray at a repelling fixed point. Calibrated from the seed
# 0.31629 - 1.92522i by Newton on the chart-angle condition; see
# calibrate_co_landing_cubic.
CO_LANDING_CUBIC_A = complex(0.3162050828744986, -1.925522218135369)
CO_LANDING_CUBIC_SEED = complex(0.31629, -1.92522)


def co_landing_cubic() -> Polynomial:
    return Polynomial((0.0, 0.0, CO_LANDING_CUBIC_A))


def cantor_quadratic() -> Polynomial:
    """z^2 + 1: totally disconnected filled set, both fixed rays broken."""
    return Polynomial.quadratic(1.0)


def calibrate_co_landing_cubic(seed: complex = CO_LANDING_CUBIC_SEED,
                               tol: float = 1e-13) -> complex:
    """Solve for the cubic coefficient putting the half-angle ray exactly on
    the escaping critical point (one real condition, minimal-norm Newton)."""
    import math

    from . import kernels
    from .config import GREEN_MAX_ITER
    from .potential import chart_depth, green

    def residual(a):
        poly = Polynomial((0.0, 0.0, a))
        omega = -2.0 * a / 3.0
        gs = green(poly, omega)
        if not gs.escaped:
            return None
        m = chart_depth(poly, gs.value)
        phi, _fp, ok = kernels.phi_eval(poly.coeff_array(), m, omega,
                                        poly.escape_radius, GREEN_MAX_ITER,
                                        poly.amplify_bound)
        if ok != 1:
            return None
        return kernels.wrap_pi(phi.imag - math.pi)

    cur = complex(seed)
    for _ in range(20):
        val = residual(cur)
        if val is None:
            raise ValueError("critical point stopped escaping during calibration")
        if abs(val) < tol:
            return cur
        h = 1e-7
        gx = (residual(cur + h) - residual(cur - h)) / (2 * h)
        gy = (residual(cur + 1j * h) - residual(cur - 1j * h)) / (2 * h)
        step = -val * complex(gx, gy) / (gx * gx + gy * gy)
        if abs(step) > 0.005:
            step *= 0.005 / abs(step)
        cur += step
    return cur
