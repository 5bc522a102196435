"""Compiled inner loops.

Landscapes are dispatched to kernels by an integer kind plus a parameter
vector, so every hot path (SGD trajectories, flow integration, rare-event
sampling) stays inside one ``@njit`` function.  ``fastmath`` is left off
everywhere: runs must be bitwise reproducible.
"""
from __future__ import annotations

import numpy as np
from numba import njit

#: kernel ids for 1-D landscapes
KIND_BUILTIN_1D = 0  # the analytic multi-well product function
KIND_POLY = 1        # f' given by ascending polynomial coefficients


@njit(cache=True)
def fprime_1d(kind, params, x):
    """Evaluate f'(x) for a kernel-dispatched 1-D landscape."""
    if kind == KIND_POLY:
        acc = 0.0
        for i in range(params.size - 1, -1, -1):
            acc = acc * x + params[i]
        return acc

    # Nine-factor product; the derivative is assembled with prefix/suffix
    # products so that factor zeros stay exact.
    p0 = x + 1.6
    d0 = 1.0
    t1 = x + 1.3
    p1 = t1 * t1
    d1 = 2.0 * t1
    t2 = x - 0.2
    p2 = t2 * t2
    d2 = 2.0 * t2
    t3 = x - 0.7
    p3 = t3 * t3
    d3 = 2.0 * t3
    p4 = x - 1.6
    d4 = 1.0
    a = 1.65 - x
    if a >= 0.0:
        p5 = (0.05 * a) ** 0.6
        d5 = -0.03 * (0.05 * a) ** (-0.4)
    else:
        p5 = (-0.05 * a) ** 0.6
        d5 = 0.03 * (-0.05 * a) ** (-0.4)
    u1 = x - 0.5
    den1 = 0.01 + 4.0 * u1 * u1
    p6 = 1.0 + 1.0 / den1
    d6 = -8.0 * u1 / (den1 * den1)
    u2 = x + 1.5
    den2 = 0.1 + 4.0 * u2 * u2
    p7 = 1.0 + 1.0 / den2
    d7 = -8.0 * u2 / (den2 * den2)
    u3 = x + 0.8
    e3 = np.exp(-5.0 * u3 * u3)
    p8 = 1.0 - 0.25 * e3
    d8 = 2.5 * u3 * e3

    # prefix products q_k = p_0 ... p_{k-1}
    q0 = 1.0
    q1 = p0
    q2 = q1 * p1
    q3 = q2 * p2
    q4 = q3 * p3
    q5 = q4 * p4
    q6 = q5 * p5
    q7 = q6 * p6
    q8 = q7 * p7
    # suffix products s_k = p_k ... p_8
    s8 = p8
    s7 = p7 * s8
    s6 = p6 * s7
    s5 = p5 * s6
    s4 = p4 * s5
    s3 = p3 * s4
    s2 = p2 * s3
    s1 = p1 * s2
    return (d0 * q0 * s1 + d1 * q1 * s2 + d2 * q2 * s3 + d3 * q3 * s4
            + d4 * q4 * s5 + d5 * q5 * s6 + d6 * q6 * s7 + d7 * q7 * s8
            + d8 * q8)


@njit(cache=True)
def f_1d(kind, params, x):
    """Evaluate f(x) for a kernel-dispatched 1-D landscape.

    For the polynomial kind, ``params`` must be the ascending coefficients
    of f itself (not of f').
    """
    if kind == KIND_POLY:
        acc = 0.0
        for i in range(params.size - 1, -1, -1):
            acc = acc * x + params[i]
        return acc
    t1 = x + 1.3
    t2 = x - 0.2
    t3 = x - 0.7
    u1 = x - 0.5
    u2 = x + 1.5
    u3 = x + 0.8
    p = (x + 1.6) * t1 * t1 * t2 * t2 * t3 * t3 * (x - 1.6)
    p *= (0.05 * abs(1.65 - x)) ** 0.6
    p *= 1.0 + 1.0 / (0.01 + 4.0 * u1 * u1)
    p *= 1.0 + 1.0 / (0.1 + 4.0 * u2 * u2)
    p *= 1.0 - 0.25 * np.exp(-5.0 * u3 * u3)
    return p


@njit(cache=True)
def run_exit_chunk(kind, params, x, lo, hi, eta, b, L, z, max_take):
    """Advance the clipped/projected recursion through one noise chunk.

    Returns ``(x, taken, status, exit_x)`` with status 0 = still inside,
    1 = exited (strictly outside (lo, hi)), -1 = non-finite gradient.
    A position exactly on a saddle counts as still inside.
    """
    n = z.size
    if max_take < n:
        n = max_take
    for i in range(n):
        g = fprime_1d(kind, params, x)
        if not np.isfinite(g):
            return x, i, -1, 0.0
        u = eta * (g - z[i])
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x = x - u
        if x > L:
            x = L
        elif x < -L:
            x = -L
        if x < lo or x > hi:
            return x, i + 1, 1, x
    return x, n, 0, 0.0


@njit(cache=True)
def run_occupancy_chunk(kind, params, x, eta, b, L, z, saddles, counts, stride, countdown, max_take):
    """Advance, binning every ``stride``-th iterate by field.

    ``counts[0]`` is the out/saddle bucket, ``counts[k]`` field k.
    Returns ``(x, countdown, taken, status)``.
    """
    n = z.size
    if max_take < n:
        n = max_take
    for i in range(n):
        g = fprime_1d(kind, params, x)
        if not np.isfinite(g):
            return x, countdown, i, -1
        u = eta * (g - z[i])
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x = x - u
        if x > L:
            x = L
        elif x < -L:
            x = -L
        countdown -= 1
        if countdown == 0:
            countdown = stride
            field = 1
            for j in range(saddles.size):
                if x > saddles[j]:
                    field = j + 2
                elif x == saddles[j]:
                    field = 0
                    break
                else:
                    break
            counts[field] += 1
    return x, countdown, n, 0


@njit(cache=True)
def trace_chunk(kind, params, x, eta, b, L, z, stride, countdown, out, filled, max_take):
    """Like an occupancy pass but records positions every ``stride`` steps."""
    n = z.size
    if max_take < n:
        n = max_take
    for i in range(n):
        g = fprime_1d(kind, params, x)
        if not np.isfinite(g):
            return x, countdown, i, filled, -1
        u = eta * (g - z[i])
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x = x - u
        if x > L:
            x = L
        elif x < -L:
            x = -L
        countdown -= 1
        if countdown == 0:
            countdown = stride
            out[filled] = x
            filled += 1
    return x, countdown, n, filled, 0


@njit(cache=True)
def fuzz_steps(kind, params, xs, zs, eta, b, L):
    """One clipped/projected step from each fuzzed state.

    Returns the number of (containment, step-bound) violations.  Containment
    is exact; the step bound allows one rounding ulp, since ``x - u`` with
    ``u`` clamped to exactly ``b`` can re-round past ``b`` when recomputed.
    """
    bad = 0
    for i in range(xs.size):
        x = xs[i]
        g = fprime_1d(kind, params, x)
        u = eta * (g - zs[i])
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x1 = x - u
        if x1 > L:
            x1 = L
        elif x1 < -L:
            x1 = -L
        slack = 2.220446049250313e-16 * (abs(x) + b)
        if abs(x1) > L or abs(x1 - x) > b + slack:
            bad += 1
    return bad


@njit(cache=True)
def rk4_flow(kind, params, x, t, dt):
    """Integrate dx/dt = -f'(x) for time t (classic fixed-step RK4).

    Stops early once |f'| < 1e-10 (the state is parked at the attractor).
    Returns NaN on a non-finite state.
    """
    if t <= 0.0:
        return x
    nsteps = int(t / dt)
    rem = t - nsteps * dt
    for i in range(nsteps + 1):
        h = dt if i < nsteps else rem
        if h <= 0.0:
            continue
        k1 = -fprime_1d(kind, params, x)
        if not np.isfinite(k1):
            return np.nan
        if abs(k1) < 1e-10:
            return x
        k2 = -fprime_1d(kind, params, x + 0.5 * h * k1)
        k3 = -fprime_1d(kind, params, x + 0.5 * h * k2)
        k4 = -fprime_1d(kind, params, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x):
            return np.nan
    return x


@njit(cache=True)
def jump_ode_endpoint(kind, params, m, w, tp, b, L, dt):
    """Endpoint of the gradient flow from m punctuated by clipped jumps."""
    u = w[0]
    if u > b:
        u = b
    elif u < -b:
        u = -b
    x = m + u
    if x > L:
        x = L
    elif x < -L:
        x = -L
    for j in range(1, w.size):
        x = rk4_flow(kind, params, x, tp[j - 1], dt)
        if not np.isfinite(x):
            return np.nan
        u = w[j]
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x = x + u
        if x > L:
            x = L
        elif x < -L:
            x = -L
    return x


@njit(cache=True)
def rates_chunk(kind, params, m, lo, hi, saddles, r, b, L, dt, w, tp, counts):
    """Classify a chunk of jump-vector samples by escape destination.

    ``w`` is (n, l*) signed jump sizes, ``tp`` (n, l*-1) gaps.  ``counts``
    (size n_fields + 1) accumulates destination fields; index 0 is unused.

    Inside the field, the flow only contracts |x - m|, and each remaining
    jump moves the state by at most min(|w_j|, b).  A sample is therefore a
    certain non-escape as soon as |x - m| plus the clipped mass of its
    remaining jumps cannot exceed the field width r; such samples are
    abandoned without (or mid-way through) the flow integration.  Escaping
    samples integrate exactly like ``jump_ode_endpoint``.

    Returns ``(n_escaped, max_gap, min_absw, n_simulated)`` where the gap and
    jump-size extremes are over escaping samples only and n_simulated counts
    the samples that survived the no-escape prefilter.
    """
    n = w.shape[0]
    l = w.shape[1]
    n_esc = 0
    n_sim = 0
    max_gap = -1.0
    min_absw = np.inf
    for i in range(n):
        total = 0.0
        for j in range(l):
            a = abs(w[i, j])
            if a > b:
                a = b
            total += a
        if total <= r:
            continue
        n_sim += 1

        u = w[i, 0]
        if u > b:
            u = b
        elif u < -b:
            u = -b
        x = m + u
        if x > L:
            x = L
        elif x < -L:
            x = -L
        a0 = abs(w[i, 0])
        if a0 > b:
            a0 = b
        pref = a0
        dead = l > 1 and abs(x - m) + (total - pref) <= r
        if not dead:
            for j in range(1, l):
                rem = total - pref
                t = tp[i, j - 1]
                nst = int(t / dt)
                rdt = t - nst * dt
                for sidx in range(nst + 1):
                    h = dt if sidx < nst else rdt
                    if h <= 0.0:
                        continue
                    k1 = -fprime_1d(kind, params, x)
                    if not np.isfinite(k1):
                        return -1, max_gap, min_absw, n_sim
                    if abs(k1) < 1e-10:
                        break
                    k2 = -fprime_1d(kind, params, x + 0.5 * h * k1)
                    k3 = -fprime_1d(kind, params, x + 0.5 * h * k2)
                    k4 = -fprime_1d(kind, params, x + h * k3)
                    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    if not np.isfinite(x):
                        return -1, max_gap, min_absw, n_sim
                    if abs(x - m) + rem <= r:
                        dead = True
                        break
                if dead:
                    break
                u = w[i, j]
                if u > b:
                    u = b
                elif u < -b:
                    u = -b
                x = x + u
                if x > L:
                    x = L
                elif x < -L:
                    x = -L
                aj = abs(w[i, j])
                if aj > b:
                    aj = b
                pref += aj
                if j < l - 1 and abs(x - m) + (total - pref) <= r:
                    dead = True
                    break
        if dead:
            continue
        if x < lo or x > hi:
            # strict exit; an endpoint exactly on a saddle is a non-escape
            field = 1
            on_saddle = False
            for j in range(saddles.size):
                if x > saddles[j]:
                    field = j + 2
                elif x == saddles[j]:
                    on_saddle = True
                    break
                else:
                    break
            if on_saddle:
                continue
            counts[field] += 1
            n_esc += 1
            for j in range(l - 1):
                if tp[i, j] > max_gap:
                    max_gap = tp[i, j]
            for j in range(l):
                a = abs(w[i, j])
                if a < min_absw:
                    min_absw = a
    return n_esc, max_gap, min_absw, n_sim


# ---------------------------------------------------------------------------
# 2-D landscape: transformed Himmelblau surface with a cut valley.
# params layout: [ax, ay, bl, br, by, c0, c1, scale]
# ---------------------------------------------------------------------------

@njit(cache=True)
def f_2d(params, x, y):
    ax, ay, bl, br, by, c0, c1, scale = params[0], params[1], params[2], params[3], params[4], params[5], params[6], params[7]
    u0 = x - ax
    s = np.exp(c0 * (u0 - ax)) + 1.0
    u = u0 * s
    v = y * s
    a1 = u * u + v - 11.0
    a2 = u + v * v - 7.0
    val = a1 * a1 + a2 * a2
    if bl <= x <= br and abs(y - ay) < by:
        cut = c1 * abs(y - ay) ** 1.1
        if cut < val:
            val = cut
    return scale * val


@njit(cache=True)
def grad_2d(params, x, y):
    ax, ay, bl, br, by, c0, c1, scale = params[0], params[1], params[2], params[3], params[4], params[5], params[6], params[7]
    u0 = x - ax
    e = np.exp(c0 * (u0 - ax))
    s = e + 1.0
    u = u0 * s
    v = y * s
    a1 = u * u + v - 11.0
    a2 = u + v * v - 7.0
    if bl <= x <= br and abs(y - ay) < by:
        hphi = a1 * a1 + a2 * a2
        dy = y - ay
        cut = c1 * abs(dy) ** 1.1
        if cut <= hphi:
            if dy >= 0.0:
                gy = scale * c1 * 1.1 * dy ** 0.1
            else:
                gy = -scale * c1 * 1.1 * (-dy) ** 0.1
            return 0.0, gy
    hu = 4.0 * u * a1 + 2.0 * a2
    hv = 2.0 * a1 + 4.0 * v * a2
    ds = c0 * e
    du_dx = s + u0 * ds
    dv_dx = y * ds
    return scale * (hu * du_dx + hv * dv_dx), scale * hv * s


@njit(cache=True)
def run_r2_chunk(params, x, y, eta, b, R, zx, zy, att, vr, labels, stride, countdown, filled, max_take):
    """2-D clipped/projected recursion; labels recorded iterates by basin.

    ``att`` = [x1, y1, sx0, sx1, sy, x3, y3, x4, y4]: the point attractor of
    basin 1, the segment of basin 2, and the point attractors of basins 3, 4.
    Label 0 means farther than ``vr`` from every attractor.
    Returns ``(x, y, countdown, taken, filled, status)``.
    """
    n = zx.size
    if max_take < n:
        n = max_take
    vr2 = vr * vr
    for i in range(n):
        gx, gy = grad_2d(params, x, y)
        if not (np.isfinite(gx) and np.isfinite(gy)):
            return x, y, countdown, i, filled, -1
        ux = eta * (gx - zx[i])
        uy = eta * (gy - zy[i])
        nrm = np.sqrt(ux * ux + uy * uy)
        if nrm > b:
            f = b / nrm
            ux *= f
            uy *= f
        x = x - ux
        y = y - uy
        rad = np.sqrt(x * x + y * y)
        if rad > R:
            f = R / rad
            x *= f
            y *= f
        countdown -= 1
        if countdown == 0:
            countdown = stride
            lab = 0
            dx = x - att[0]
            dy = y - att[1]
            if dx * dx + dy * dy < vr2:
                lab = 1
            else:
                sx = x
                if sx < att[2]:
                    sx = att[2]
                elif sx > att[3]:
                    sx = att[3]
                dx = x - sx
                dy = y - att[4]
                if dx * dx + dy * dy < vr2:
                    lab = 2
                else:
                    dx = x - att[5]
                    dy = y - att[6]
                    if dx * dx + dy * dy < vr2:
                        lab = 3
                    else:
                        dx = x - att[7]
                        dy = y - att[8]
                        if dx * dx + dy * dy < vr2:
                            lab = 4
            labels[filled] = lab
            filled += 1
    return x, y, countdown, n, filled, 0


@njit(cache=True)
def flow_2d(params, x, y, step, gtol, max_iter, window, move_tol):
    """Deterministic gradient descent used for basin classification.

    Converges either by gradient norm or by positional stagnation over a
    window (the cut valley has a kink, so its gradient norm never vanishes).
    Returns ``(x, y, status)``: 0 converged, -1 iteration cap, -2 non-finite.
    """
    wx = x
    wy = y
    g2tol = gtol * gtol
    m2tol = move_tol * move_tol
    for i in range(max_iter):
        gx, gy = grad_2d(params, x, y)
        if not (np.isfinite(gx) and np.isfinite(gy)):
            return x, y, -2
        if gx * gx + gy * gy < g2tol:
            return x, y, 0
        x = x - step * gx
        y = y - step * gy
        if (i + 1) % window == 0:
            dx = x - wx
            dy = y - wy
            if dx * dx + dy * dy < m2tol:
                return x, y, 0
            wx = x
            wy = y
    return x, y, -1


def warmup():
    """Force-compile every kernel (call once before forking worker pools)."""
    p = np.zeros(1)
    p8 = np.array([1.5, -2.9, -5.5, -0.5, 2.0, 0.4, 12.0, 0.1])
    z = np.zeros(2)
    fprime_1d(KIND_BUILTIN_1D, p, 0.1)
    fprime_1d(KIND_POLY, np.array([0.0, 1.0]), 0.1)
    f_1d(KIND_BUILTIN_1D, p, 0.1)
    f_1d(KIND_POLY, np.array([0.0, 1.0]), 0.1)
    run_exit_chunk(KIND_BUILTIN_1D, p, -0.7, -1.3, 0.2, 1e-3, 0.5, 1.6, z, 2)
    counts = np.zeros(5, dtype=np.int64)
    run_occupancy_chunk(KIND_BUILTIN_1D, p, 0.3, 1e-3, 0.5, 1.6, z, np.array([-1.3, 0.2, 0.7]), counts, 10, 10, 2)
    out = np.zeros(2)
    trace_chunk(KIND_BUILTIN_1D, p, 0.3, 1e-3, 0.5, 1.6, z, 1, 1, out, 0, 2)
    fuzz_steps(KIND_BUILTIN_1D, p, z, z, 1e-3, 0.5, 1.6)
    rk4_flow(KIND_BUILTIN_1D, p, 0.3, 0.01, 1e-3)
    jump_ode_endpoint(KIND_BUILTIN_1D, p, -0.7, z, np.zeros(1), 0.5, 1.6, 1e-3)
    rates_chunk(KIND_BUILTIN_1D, p, -0.7, -1.3, 0.2, np.array([-1.3, 0.2, 0.7]), 0.6,
                0.5, 1.6, 1e-3, np.zeros((2, 2)), np.zeros((2, 1)), counts)
    f_2d(p8, 1.0, 1.0)
    grad_2d(p8, 1.0, 1.0)
    labels = np.zeros(4, dtype=np.int8)
    att = np.array([-0.802, 2.5697, -3.0379, -0.5, -2.9, 3.0, 1.0, 3.2151, -0.8843])
    run_r2_chunk(p8, 2.9, 1.0, 5e-4, 2.15, 4.2, z, z, att, 0.5, labels, 1, 1, 0, 2)
    flow_2d(p8, 2.9, 1.0, 0.01, 1e-6, 50, 10, 1e-4)
