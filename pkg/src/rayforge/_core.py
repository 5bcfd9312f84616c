"""Scalar numeric kernels, written in the numba-compatible subset of Python.

Every function here is compiled by `rayforge.kernels` when numba is enabled
and runs as-is otherwise. Polynomials are monic: `coeffs[k]` is the
coefficient of z**k for k = 0..D-1, the z**D term is implicit.

Status codes shared by the trace kernel:
    0  completed to the last node
    2  crashed into a cataloged singularity (exact chart-angle match)
    3  corrector failure
    4  ambiguous capture (two singularities match at one level)
"""

import cmath
import math

TWO_PI = 6.283185307179586476925287
# crash identification: the chart value at a saddle matches the ray target to
# rounding on a true crash (the potential is flat at a saddle), while the
# nearest non-crashing angles of interest miss by >= 2*pi/2^40
CRASH_RE_TOL = 1e-10
CRASH_IM_TOL = 1e-11


def poly_eval(coeffs, z):
    acc = 1.0 + 0.0j
    for k in range(len(coeffs) - 1, -1, -1):
        acc = acc * z + coeffs[k]
    return acc


def poly_eval_d(coeffs, z):
    acc = 1.0 + 0.0j
    dacc = 0.0 + 0.0j
    for k in range(len(coeffs) - 1, -1, -1):
        dacc = dacc * z + acc
        acc = acc * z + coeffs[k]
    return acc, dacc


def wrap_pi(x):
    return x - TWO_PI * math.floor(x / TWO_PI + 0.5)


def green_value(coeffs, z, r_esc, n_max, amp):
    """Escape-rate potential. Returns (value, escaped, depth).

    Iterates past the escape radius until |z| exceeds `amp` so the monic
    tail correction is below rounding; `amp` is chosen by the caller so
    one more step cannot overflow.
    """
    d = len(coeffs)
    zn = z
    n = 0
    while n < n_max:
        if abs(zn) > r_esc:
            break
        zn = poly_eval(coeffs, zn)
        n += 1
    else:
        return 0.0, 0, n
    extra = 0
    while extra < 64 and abs(zn) < amp:
        znext = poly_eval(coeffs, zn)
        if not (abs(znext) < 1e290):
            break
        zn = znext
        n += 1
        extra += 1
    val = math.log(abs(zn)) / float(d) ** n
    if val < 1e-300:
        val = 1e-300
    return val, 1, n


def grad_ratio(coeffs, z, r_esc, n_max, amp):
    """Limit of (P^n)'(z) / (D^n P^n(z)); the potential gradient is its conjugate.

    Returns (ratio, status): status 0 ok, 1 not escaped. Numerator and
    denominator are renormalized each step to avoid overflow; the ratio is
    exactly 0 when the orbit passes through a critical point.
    """
    d = len(coeffs)
    num = 1.0 + 0.0j
    den = 1.0
    zn = z
    n = 0
    while n < n_max:
        if abs(zn) > r_esc:
            break
        p, dp = poly_eval_d(coeffs, zn)
        num = num * dp
        den = den * d
        mag = abs(num)
        if mag > den:
            sc = 1.0 / mag
        else:
            sc = 1.0 / den
        if sc < 1.0:
            num *= sc
            den *= sc
        zn = p
        n += 1
    else:
        return 0.0j, 1
    extra = 0
    while extra < 64 and abs(zn) < amp:
        p, dp = poly_eval_d(coeffs, zn)
        if not (abs(p) < 1e290):
            break
        num = num * dp
        den = den * d
        mag = abs(num)
        if mag > den:
            sc = 1.0 / mag
        else:
            sc = 1.0 / den
        if sc < 1.0:
            num *= sc
            den *= sc
        zn = p
        extra += 1
    return num / (den * zn), 0


def log_chart_tail(coeffs, z):
    """Principal-branch product form of the conformal chart logarithm at z.

    Valid when the forward orbit keeps each monic correction factor well away
    from the branch cut; returns (value, ok).
    """
    d = len(coeffs)
    acc = cmath.log(z)
    w = z
    p = 1.0
    for _ in range(64):
        p /= d
        iw = 1.0 / w
        t = coeffs[0]
        for k in range(1, d):
            t = coeffs[k] + iw * t
        u = 1.0 + iw * t
        if abs(u - 1.0) > 0.75:
            return 0.0j, 0
        acc += cmath.log(u) * p
        w = poly_eval(coeffs, w)
        if abs(w) > 1e15:
            break
    return acc, 1


def phi_eval(coeffs, m, z, r_esc, n_max, amp):
    """Lifted chart value phi = log-chart(P^m(z)) and its z-derivative.

    Returns (phi, dphi, ok). The imaginary part carries the principal branch;
    callers compare angles modulo 2*pi.
    """
    zm = z
    dm = 1.0 + 0.0j
    for _ in range(m):
        p, dp = poly_eval_d(coeffs, zm)
        dm = dm * dp
        zm = p
        if not (abs(zm) < 1e200 and abs(dm) < 1e250):
            return 0.0j, 0.0j, 0
    phi, ok = log_chart_tail(coeffs, zm)
    if ok == 0:
        return 0.0j, 0.0j, 0
    r, st = grad_ratio(coeffs, zm, r_esc, n_max, amp)
    if st != 0:
        return 0.0j, 0.0j, 0
    return phi, r * dm, 1


def chart_residual(coeffs, m, z, t_re, ang, r_esc, n_max, amp):
    """Residual of the lifted-chart equation at z: (F, dphi, ok).

    F.real is the potential mismatch in lifted units, F.imag the angular
    mismatch wrapped to (-pi, pi]."""
    phi, fp, ok = phi_eval(coeffs, m, z, r_esc, n_max, amp)
    if ok == 0:
        return 0.0j, 0.0j, 0
    fre = phi.real - t_re
    fim = wrap_pi(phi.imag - TWO_PI * ang)
    return complex(fre, fim), fp, 1


def corrector(coeffs, m, t_re, ang, z0, r_esc, n_max, amp, tol, maxit):
    """Newton solve of the lifted-chart equation from z0. Returns (z, ok).

    Converges linearly at multiple roots (crash points), so the iteration
    budget is generous. Backtracks when the residual grows."""
    z = z0
    f, fp, ok = chart_residual(coeffs, m, z, t_re, ang, r_esc, n_max, amp)
    if ok == 0:
        return z0, 0
    scale = max(1.0, abs(t_re))
    for _ in range(maxit):
        res = abs(f.real) + abs(f.imag)
        if res <= tol * scale:
            return z, 1
        if abs(fp) < 1e-280:
            return z, 0
        step = f / fp
        # near a saddle the chart derivative is small and the residual
        # criterion alone leaves coarse positions; converge on step size too
        if abs(step) <= 3e-14 * (1.0 + abs(z)) and res <= 1e5 * tol * scale:
            return z, 1
        znew = z - step
        fn, fpn, okn = chart_residual(coeffs, m, znew, t_re, ang, r_esc, n_max, amp)
        tries = 0
        while tries < 6 and (okn == 0 or abs(fn.real) + abs(fn.imag) > 0.9 * res + tol * scale):
            step *= 0.5
            znew = z - step
            fn, fpn, okn = chart_residual(coeffs, m, znew, t_re, ang, r_esc, n_max, amp)
            tries += 1
        if okn == 0:
            return z, 0
        z = znew
        f = fn
        fp = fpn
    res = abs(f.real) + abs(f.imag)
    if res <= 100.0 * tol * scale:
        return z, 1
    return z, 0


def crash_match(coeffs, m, omega, t_re, ang, r_esc, n_max, amp):
    """1 iff the lifted chart value at omega matches the ray's target exactly.

    A ray crashes into omega iff omega satisfies the ray's own chart
    equation: same potential and the same angle at depth m."""
    f, fp, ok = chart_residual(coeffs, m, omega, t_re, ang, r_esc, n_max, amp)
    if ok == 0:
        return 0
    if abs(f.real) <= CRASH_RE_TOL * max(1.0, abs(t_re)) and abs(f.imag) <= CRASH_IM_TOL:
        return 1
    return 0


def _nearest_two(z, sing_re, sing_im, lo, hi):
    j1 = -1
    j2 = -1
    d1 = 1e300
    d2 = 1e300
    for j in range(lo, hi):
        dx = z.real - sing_re[j]
        dy = z.imag - sing_im[j]
        d = dx * dx + dy * dy
        if d < d1:
            d2 = d1
            j2 = j1
            d1 = d
            j1 = j
        elif d < d2:
            d2 = d
            j2 = j
    return j1, math.sqrt(d1), j2, math.sqrt(d2)


def _descend_leg(coeffs, z, s_from, s_to, m, ang, locked,
                 sing_re, sing_im, blo, bhi,
                 r_esc, n_max, amp, eta, tol, maxit):
    """Adaptive predictor-corrector continuation from s_from to s_to.

    Returns (z, ok). Predictor displacement is capped by the distance to
    the saddles indexed [blo, bhi)."""
    d = len(coeffs)
    dm_f = float(d) ** m
    descending = s_to < s_from
    s = s_from
    guard = 0
    while (descending and s > s_to) or ((not descending) and s < s_to):
        guard += 1
        if guard > 200000:
            return z, 0
        r, st = grad_ratio(coeffs, z, r_esc, n_max, amp)
        if st != 0 or abs(r) < 1e-280:
            return z, 0
        absr = abs(r)
        dmin2 = 1e300
        for j in range(blo, bhi):
            dx = z.real - sing_re[j]
            dy = z.imag - sing_im[j]
            dd = dx * dx + dy * dy
            if dd < dmin2:
                dmin2 = dd
        ds = abs(s_to - s)
        if dmin2 < 1e299:
            lim = eta * math.sqrt(dmin2) * absr
            if ds > lim:
                ds = lim
        cap_rel = 0.06 * s
        if ds > cap_rel:
            ds = cap_rel
        accepted = 0
        for _ in range(12):
            if descending:
                s_try = s - ds
                if s_try < s_to:
                    s_try = s_to
            else:
                s_try = s + ds
                if s_try > s_to:
                    s_try = s_to
            z_pred = z + (s_try - s) / r
            if locked == 1:
                a_t = ang
            else:
                # free mode has no angle anchor; a midpoint predictor keeps
                # the transverse drift second order
                r_mid, st_mid = grad_ratio(coeffs, z + 0.5 * (s_try - s) / r,
                                           r_esc, n_max, amp)
                if st_mid == 0 and abs(r_mid) > 1e-280:
                    z_pred = z + (s_try - s) / r_mid
                phi_p, fp_p, ok_p = phi_eval(coeffs, m, z_pred, r_esc, n_max, amp)
                if ok_p == 0:
                    ds *= 0.25
                    continue
                a_t = (phi_p.imag / TWO_PI) % 1.0
            z_new, okc = corrector(coeffs, m, dm_f * s_try, a_t, z_pred,
                                   r_esc, n_max, amp, tol, maxit)
            if okc == 1:
                moved = abs(z_new - z_pred)
                ref = abs(z_pred - z) + 1e-12 * (1.0 + abs(z))
                if moved <= 4.0 * ref:
                    z = z_new
                    s = s_try
                    accepted = 1
                    break
            ds *= 0.25
            if ds < 1e-17 * max(s, 1e-30):
                break
        if accepted == 0:
            return z, 0
    return z, 1


def trace_descent(coeffs,
                  s_nodes, m_nodes, ang_nodes, level_of_node,
                  sing_re, sing_im, sing_pot, level_lo, level_hi,
                  band_lo, band_hi,
                  z_start, r_esc, n_max, amp,
                  eta, tol, maxit, locked,
                  out_re, out_im, out_ok):
    """Field-line continuation across the potential grid in s_nodes.

    At nodes carrying a catalog level, crash vs passage is decided in two
    stages: the exact chart-angle match is necessary (it cannot produce
    false negatives), and among chart-aliased candidates the approach is
    refined geometrically: on a true crash the saddle distance contracts
    like (s - sigma)^(1/order) down to the capture radius, while a passage
    stalls at its passing distance.

    Returns (status, stop_node, crash_index): 0 done, 2 crashed, 3 failed,
    4 ambiguous capture.
    """
    d = len(coeffs)
    npts = len(s_nodes)
    z = z_start
    out_re[0] = z.real
    out_im[0] = z.imag
    out_ok[0] = 1
    for k in range(npts - 1):
        s_a = s_nodes[k]
        s_b = s_nodes[k + 1]
        m = m_nodes[k + 1]
        ang = ang_nodes[k + 1]
        dm_f = float(d) ** m
        lvl = level_of_node[k + 1]
        blo = band_lo[k + 1]
        bhi = band_hi[k + 1]
        s_here = s_a

        if locked == 1 and lvl >= 0 and s_a > s_b:
            # candidate saddles: chart-matched among the two nearest
            j1, d1, j2, d2 = _nearest_two(z, sing_re, sing_im,
                                          level_lo[lvl], level_hi[lvl])
            cand0 = -1
            cand1 = -1
            for jj in range(2):
                j = j1 if jj == 0 else j2
                dd = d1 if jj == 0 else d2
                if j < 0:
                    continue
                om = complex(sing_re[j], sing_im[j])
                if dd <= 0.1 * (1.0 + abs(om)):
                    if crash_match(coeffs, m, om, dm_f * s_b, ang,
                                   r_esc, n_max, amp) == 1:
                        if cand0 < 0:
                            cand0 = j
                        else:
                            cand1 = j
            if cand0 >= 0:
                # geometric refinement toward the level
                s_cur = s_a
                d_prev = 1e300
                stall = 0
                crashed = -1
                ambiguous = 0
                for _ref in range(18):
                    s_ref = s_b + (s_cur - s_b) * 0.25
                    z2, ok2 = _descend_leg(coeffs, z, s_cur, s_ref, m, ang,
                                           locked, sing_re, sing_im, blo, bhi,
                                           r_esc, n_max, amp, eta, tol, maxit)
                    if ok2 == 0:
                        break
                    z = z2
                    s_cur = s_ref
                    dbest = 1e300
                    jbest = cand0
                    for jj in range(2):
                        j = cand0 if jj == 0 else cand1
                        if j < 0:
                            continue
                        dx = z.real - sing_re[j]
                        dy = z.imag - sing_im[j]
                        dd = math.sqrt(dx * dx + dy * dy)
                        if dd < dbest:
                            dbest = dd
                            jbest = j
                    omb = complex(sing_re[jbest], sing_im[jbest])
                    if dbest <= 1e-6 * (1.0 + abs(omb)):
                        crashed = jbest
                        break
                    if dbest > 0.8 * d_prev:
                        stall += 1
                        if stall >= 2:
                            break
                    else:
                        stall = 0
                    d_prev = dbest
                else:
                    ambiguous = 1
                if crashed >= 0:
                    out_re[k + 1] = sing_re[crashed]
                    out_im[k + 1] = sing_im[crashed]
                    out_ok[k + 1] = 1
                    return 2, k + 1, crashed
                if ambiguous == 1:
                    return 4, k + 1, cand0
                # passage: finish the leg from wherever refinement stopped
                s_here = s_cur

        z2, ok2 = _descend_leg(coeffs, z, s_here, s_b, m, ang, locked,
                               sing_re, sing_im, blo, bhi,
                               r_esc, n_max, amp, eta, tol, maxit)
        if ok2 == 0:
            return 3, k + 1, -1
        z = z2
        out_re[k + 1] = z.real
        out_im[k + 1] = z.imag
        out_ok[k + 1] = 1
    return 0, npts - 1, -1


def green_field_loop(coeffs, re, im, r_esc, n_max, amp, out):
    """Potential on a flat array of points; out[i] = 0 for non-escaping."""
    for i in range(len(re)):
        v, esc, _ = green_value(coeffs, complex(re[i], im[i]), r_esc, n_max, amp)
        if esc == 1:
            out[i] = v
        else:
            out[i] = 0.0


def green_grid_rows(coeffs, x0, dx, y0, dy, w, h, r_esc, n_max, amp, out):
    """Potential over an h-by-w pixel grid, row-parallel when compiled."""
    for iy in range(h):
        y = y0 + dy * iy
        for ix in range(w):
            v, esc, _ = green_value(coeffs, complex(x0 + dx * ix, y), r_esc, n_max, amp)
            if esc == 1:
                out[iy, ix] = v
            else:
                out[iy, ix] = 0.0
