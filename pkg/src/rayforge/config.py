"""Numeric constants and environment switches.

All tolerances live here so tests and docs refer to one place. Values are
pinned; they are part of the artifact's contract, not tuning knobs.
"""

import os

# --- potential / escape iteration ---
OVERFLOW_GUARD = 1e150        # orbit magnitude above which iteration flags overflow
GREEN_MAX_ITER = 2048         # escape iteration cap
GREEN_AMPLIFY = 1e40          # keep iterating past escape until |z| exceeds this

# --- root finding ---
CRIT_RESIDUAL = 1e-12         # |P'(root)| <= CRIT_RESIDUAL * max(1,|root|)^(D-1)
PREIMAGE_RESIDUAL = 1e-10     # |P(root) - w| <= PREIMAGE_RESIDUAL * max(1,|w|)
PERIODIC_RESIDUAL = 1e-9      # |P^k(z) - z| <= PERIODIC_RESIDUAL * max(1,|z|)
ABERTH_MAX_ITER = 400

# --- multiplier classification ---
CLASS_TOL = 1e-8
PARABOLIC_M_MAX = 64
PERIOD_K_MAX = 4

# --- ray tracing ---
POT_TOL = 1e-9                # |green(sample) - potential| bound per trace sample
POT_TOL_CRASH = 1e-7          # potential window for matching a crash to a catalog level
CAPTURE_COEFF = 1e-6          # capture radius = CAPTURE_COEFF * (1 + |omega|)
RAY_LIMIT_TOL = 1e-6          # Cauchy acceptance for one-sided limits
S_FLOOR = 1e-6                # potential floor: traces reaching it count as landed
SUBSTEPS_PER_FACTOR = 24      # descent grid: D^(-1/24) ratio per node
EPS0_NUM, EPS0_DEN = 1, 1000  # first angular perturbation for one-sided limits
PERTURB_J_MAX = 20
STEP_ETA = 0.2                # predictor displacement cap as fraction of saddle distance
SNAP_TOL = 1e-9               # angle snap tolerance to rationals
SNAP_DEN_POWER = 6            # snap denominators up to D**6 - 1
DIRECTION_TOL = 0.08          # radians, for saddle-direction sanity checks
APPROACH_MARGINS = (2e-2, 5e-3, 1.25e-3)  # relative offsets inserted above each saddle level

# --- landing ---
LAND_TOL = 1e-3
PROBE_RESOLUTION = 2048
IN_I_S_TEST = 1e-3

# --- corrector ---
CORRECTOR_TOL = 1e-12         # relative tolerance on the lifted chart residual
CORRECTOR_MAX_ITER = 80
CRASH_MATCH_RE = 1e-8         # chart-residual tolerances identifying an exact crash
CRASH_MATCH_IM = 1e-7


def thread_count():
    """Worker cap from RAYFORGE_THREADS (defaults to 1 for determinism-by-default)."""
    raw = os.environ.get("RAYFORGE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def numba_disabled():
    return os.environ.get("RAYFORGE_NO_NUMBA", "") not in ("", "0", "false", "False")
