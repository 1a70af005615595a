"""Compiled inner loops of the vine simulator.

Every rollout element is computed by the same scalar code path with no
shared state, so results do not depend on batch composition or thread
count. Parameters travel in a flat float array, indexed by the ``P_*``
constants below.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

P_WA, P_WB, P_WC, P_ALPHA, P_NDESC, P_GROW, P_LSEG, P_RVINE, P_MREF, P_EC, \
    P_ARM, P_PS, P_THMAX, P_LMIN, P_GSCALE, P_RTOL = range(16)
N_PARAMS = 16

N_SAMPLES = 5  # contact points per segment, at fractions 0.2 .. 1.0
K_MAX = 96  # contact rows kept in the exact Gauss-Newton solve

ST_OK, ST_NONFINITE, ST_CAPACITY, ST_OUT_OF_BOUNDS = 0, 1, 2, 3
STALL_WINDOW = 10  # steps over which a stalled vine is detected
STALL_FRACTION = 0.1  # of the nominal growth over that window


@njit(cache=True)
def _shape(g):
    N = math.sin(2 * g) + 2 * math.pi - 2 * g
    D = 4 * (math.sin(g) + (math.pi - g) * math.cos(g))
    Np = 2 * math.cos(2 * g) - 2
    Dp = -4 * (math.pi - g) * math.sin(g)
    return N / D, (Np * D - N * Dp) / (D * D)


@njit(cache=True)
def restoring(theta, M_ref, ec):
    """Signed restoring moment and its derivative w.r.t. theta."""
    a = abs(theta)
    sg = 1.0 if theta >= 0 else -1.0
    s = math.sin(0.5 * a)
    ds = 0.5 * math.cos(0.5 * a)
    if s < ec:
        h = 0.5 * s / ec
        dh = 0.5 / ec * ds
    else:
        u = min(2 * ec / s - 1.0, 1.0)
        g = math.acos(u)
        h, hp = _shape(g)
        if g < 1e-6:
            _, hp = _shape(1e-6)
            sin_g = math.sin(1e-6)
        else:
            sin_g = math.sin(g)
        dh = hp / sin_g * 2 * ec / (s * s) * ds
    return sg * M_ref * h, M_ref * dh


@njit(cache=True)
def _force_row(f, df, emax, r, e):
    em = emax[r]
    n = f.shape[1]
    if e <= 0.0:
        return f[r, 0], 0.0
    if e >= em:
        return 0.0, 0.0
    hstep = em / (n - 1)
    x = e / hstep
    j = int(x)
    if j > n - 2:
        j = n - 2
    t = x - j
    p0, p1 = f[r, j], f[r, j + 1]
    m0, m1 = df[r, j] * hstep, df[r, j + 1] * hstep
    t2 = t * t
    t3 = t2 * t
    val = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1
    der = ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * p1
           + (3 * t2 - 2 * t) * m1) / hstep
    return val, der


@njit(cache=True)
def force_eval(f, df, emax, i, w, e):
    v0, d0 = _force_row(f, df, emax, i, e)
    if w == 0.0:
        return v0, d0
    v1, d1 = _force_row(f, df, emax, i + 1, e)
    return (1 - w) * v0 + w * v1, (1 - w) * d0 + w * d1


@njit(cache=True)
def _sdf(px, py, R, circ, c0, c1, verts, voff, aabb, q0, q1):
    """Smallest signed distance among obstacles that can be within ``R`` of
    the point; returns (sd, nx, ny) with (nx, ny) the outward gradient.
    (inf, 0, 0) when nothing is in range."""
    best = np.inf
    bnx = 0.0
    bny = 0.0
    for c in range(c0, c1):
        dx = px - circ[c, 0]
        dy = py - circ[c, 1]
        d = math.sqrt(dx * dx + dy * dy)
        sd = d - circ[c, 2]
        if sd < best:
            best = sd
            if d > 0:
                bnx, bny = dx / d, dy / d
            else:
                bnx, bny = 1.0, 0.0
    for q in range(q0, q1):
        if (px < aabb[q, 0] - R or px > aabb[q, 2] + R or py < aabb[q, 1] - R
                or py > aabb[q, 3] + R):
            continue
        v0, v1 = voff[q], voff[q + 1]
        nv = v1 - v0
        inside = True
        dmin = np.inf
        gx = 0.0
        gy = 0.0
        emin_nx = 0.0
        emin_ny = 0.0
        for k in range(nv):
            ax, ay = verts[v0 + k, 0], verts[v0 + k, 1]
            kb = v0 + (k + 1) % nv
            ex, ey = verts[kb, 0] - ax, verts[kb, 1] - ay
            wx, wy = px - ax, py - ay
            if ex * wy - ey * wx < 0:
                inside = False
            L2 = ex * ex + ey * ey
            t = (wx * ex + wy * ey) / L2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            rx, ry = wx - t * ex, wy - t * ey
            d = math.sqrt(rx * rx + ry * ry)
            if d < dmin:
                dmin = d
                L = math.sqrt(L2)
                emin_nx, emin_ny = ey / L, -ex / L
                if d > 0:
                    gx, gy = rx / d, ry / d
                else:
                    gx, gy = emin_nx, emin_ny
        if inside:
            sd = -dmin
            gx, gy = emin_nx, emin_ny
        else:
            sd = dmin
        if sd < best:
            best = sd
            bnx, bny = gx, gy
    return best, bnx, bny


@njit(cache=True)
def _near_any(px, py, rad, circ, c0, c1, aabb, q0, q1):
    """Whether any obstacle comes within ``rad`` of the point."""
    for c in range(c0, c1):
        dx = px - circ[c, 0]
        dy = py - circ[c, 1]
        if math.sqrt(dx * dx + dy * dy) - circ[c, 2] < rad:
            return True
    for q in range(q0, q1):
        if not (px < aabb[q, 0] - rad or px > aabb[q, 2] + rad or py < aabb[q, 1] - rad
                or py > aabb[q, 3] + rad):
            return True
    return False


@njit(cache=True)
def forward(base, th, n, l_last, l_seg, Jx, Jy, ux, uy):
    """Joint positions ``J[0..n+1]`` and segment directions ``u[0..n]``."""
    Jx[0] = base[0]
    Jy[0] = base[1]
    h = base[2]
    for k in range(n + 1):
        if k > 0:
            h += th[k - 1]
        ux[k] = math.cos(h)
        uy[k] = math.sin(h)
        L = l_seg if k < n else l_last
        Jx[k + 1] = Jx[k] + L * ux[k]
        Jy[k + 1] = Jy[k] + L * uy[k]
    return h


@njit(cache=True)
def evaluate(th, n, l_last, l_t, base, jP, jside, jrow, jw, f, df, emax, prm,
             circ, c0, c1, verts, voff, aabb, q0, q1, want, grad, dmom, rows, pen_out,
             Jx, Jy, ux, uy):
    """Cost, and with ``want`` the gradient (into ``grad``), the diagonal
    moment/growth Jacobian (``dmom``) and the contact rows (``rows``).
    Returns (cost, n_contact_rows, n_contacts_total, max_penetration,
    moment_part, growth_part, contact_part)."""
    w_a, w_b, w_c = prm[P_WA], prm[P_WB], prm[P_WC]
    l_seg, R, M_ref = prm[P_LSEG], prm[P_RVINE], prm[P_MREF]
    ec, arm, p_s = prm[P_EC], prm[P_ARM], prm[P_PS]
    sa = math.sqrt(w_a) / M_ref
    sb = math.sqrt(w_b) / prm[P_GSCALE]
    sc = math.sqrt(w_c) / p_s
    nv = n + 1
    if want:
        for i in range(nv):
            grad[i] = 0.0
    c_mom = 0.0
    for i in range(n):
        M, dM = restoring(th[i], M_ref, ec)
        P = jP[i]
        if P > 0.0:
            s = jside[i]
            e = arm * s * th[i] / l_seg
            F, dF = force_eval(f, df, emax, jrow[i], jw[i], e)
            M -= s * P * F * arm
            dM -= P * dF * arm * arm / l_seg
        r = sa * M
        c_mom += r * r
        if want:
            dmom[i] = sa * dM
            grad[i] += 2 * r * sa * dM
    rg = sb * (l_last - l_t)
    c_grow = rg * rg
    if want:
        dmom[n] = sb
        grad[n] += 2 * rg * sb
    forward(base, th, n, l_last, l_seg, Jx, Jy, ux, uy)
    c_con = 0.0
    k_rows = 0
    n_tot = 0
    pmax = 0.0
    for k in range(nv):
        L = l_seg if k < n else l_last
        if not _near_any(Jx[k], Jy[k], R + L, circ, c0, c1, aabb, q0, q1):
            continue
        # every penetrating sample enters the cost and gradient; only the
        # deepest one per segment becomes a Gauss-Newton row
        best_pen = 0.0
        bx = by = bnx = bny = bfr = 0.0
        for q in range(N_SAMPLES):
            fr = (q + 1.0) / N_SAMPLES
            px = Jx[k] + fr * L * ux[k]
            py = Jy[k] + fr * L * uy[k]
            sd, nx, ny = _sdf(px, py, R, circ, c0, c1, verts, voff, aabb, q0, q1)
            pen = R - sd
            if pen <= 0.0:
                continue
            n_tot += 1
            if pen > pmax:
                pmax = pen
            r = sc * pen
            c_con += r * r
            if want:
                for i in range(min(k, nv)):
                    # joint i sits at J[i+1] and rotates everything beyond it
                    vx, vy = px - Jx[i + 1], py - Jy[i + 1]
                    grad[i] += 2 * r * sc * (-(nx * (-vy) + ny * vx))
                if k == n:
                    grad[n] += 2 * r * sc * (-(nx * fr * ux[k] + ny * fr * uy[k]))
                if pen > best_pen:
                    best_pen, bx, by, bnx, bny, bfr = pen, px, py, nx, ny, fr
        if not want or best_pen <= 0.0:
            continue
        slot = k_rows
        if k_rows == K_MAX:
            # replace the shallowest stored row if this one is deeper
            slot = 0
            for j in range(1, K_MAX):
                if pen_out[j] < pen_out[slot]:
                    slot = j
            if pen_out[slot] >= best_pen:
                continue
        else:
            k_rows += 1
        for i in range(nv):
            rows[slot, i] = 0.0
        for i in range(min(k, nv)):
            vx, vy = bx - Jx[i + 1], by - Jy[i + 1]
            rows[slot, i] = -sc * (bnx * (-vy) + bny * vx)
        if k == n:
            rows[slot, n] = -sc * (bnx * bfr * ux[k] + bny * bfr * uy[k])
        pen_out[slot] = best_pen
        rows[slot, nv] = sc * best_pen
    cost = c_mom + c_grow + c_con
    return cost, k_rows, n_tot, pmax, c_mom, c_grow, c_con


@njit(cache=True)
def _cholesky_solve(S, y, k):
    """In-place Cholesky of the leading k x k block of S; solves S x = y."""
    for j in range(k):
        s = S[j, j]
        for p in range(j):
            s -= S[j, p] * S[j, p]
        s = math.sqrt(s)
        S[j, j] = s
        for i in range(j + 1, k):
            t = S[i, j]
            for p in range(j):
                t -= S[i, p] * S[j, p]
            S[i, j] = t / s
    for i in range(k):
        t = y[i]
        for p in range(i):
            t -= S[i, p] * y[p]
        y[i] = t / S[i, i]
    for i in range(k - 1, -1, -1):
        t = y[i]
        for p in range(i + 1, k):
            t -= S[p, i] * y[p]
        y[i] = t / S[i, i]


@njit(cache=True)
def descend(th, n, l_last, l_t, base, jP, jside, jrow, jw, f, df, emax, prm,
            circ, c0, c1, verts, voff, aabb, q0, q1, hist):
    """Damped Gauss-Newton descent on the step cost, updating ``th`` in
    place. Returns the new ``l_last``; ``hist`` receives the cost after
    each update (entry 0 is the initial cost), padded with the final value.
    """
    nv = n + 1
    lam = 0.5 / prm[P_ALPHA]
    th_max = prm[P_THMAX]
    l_min = prm[P_LMIN]
    n_desc = int(prm[P_NDESC])
    grad = np.empty(nv)
    dmom = np.empty(nv)
    rows = np.empty((K_MAX, nv + 1))
    pen = np.empty(K_MAX)
    Jx = np.empty(nv + 1)
    Jy = np.empty(nv + 1)
    ux = np.empty(nv)
    uy = np.empty(nv)
    x_new = np.empty(nv)
    step = np.empty(nv)
    Dinv = np.empty(nv)
    S = np.empty((K_MAX, K_MAX))
    yv = np.empty(K_MAX)
    cost, k, _, _, _, _, _ = evaluate(th, n, l_last, l_t, base, jP, jside, jrow, jw, f, df,
                                      emax, prm, circ, c0, c1, verts, voff, aabb, q0, q1,
                                      True, grad, dmom, rows, pen, Jx, Jy, ux, uy)
    hist[0] = cost
    it = 0
    while it < n_desc:
        # b = -J^T r = -grad / 2, A = D + C^T C
        for i in range(nv):
            Dinv[i] = 1.0 / (dmom[i] * dmom[i] + lam)
            step[i] = -0.5 * grad[i] * Dinv[i]
        if k > 0:
            for a in range(k):
                t = 0.0
                for i in range(nv):
                    t += rows[a, i] * step[i]
                yv[a] = t
                for b in range(a + 1):
                    s = 0.0
                    for i in range(nv):
                        s += rows[a, i] * Dinv[i] * rows[b, i]
                    S[a, b] = s + (1.0 if a == b else 0.0)
            _cholesky_solve(S, yv, k)
            for i in range(nv):
                t = 0.0
                for a in range(k):
                    t += rows[a, i] * yv[a]
                step[i] -= Dinv[i] * t
        accepted = False
        tstep = 1.0
        c_new = cost
        for _ in range(40):
            for i in range(n):
                v = th[i] + tstep * step[i]
                x_new[i] = min(max(v, -th_max), th_max)
            x_new[n] = max(l_last + tstep * step[n], l_min)
            c_new, _, _, _, _, _, _ = evaluate(x_new, n, x_new[n], l_t, base, jP, jside, jrow,
                                               jw, f, df, emax, prm, circ, c0, c1, verts,
                                               voff, aabb, q0, q1, False, grad, dmom, rows,
                                               pen, Jx, Jy, ux, uy)
            if c_new <= cost:
                accepted = True
                break
            tstep *= 0.5
        if not accepted:
            break
        moved = 0.0
        for i in range(n):
            moved = max(moved, abs(x_new[i] - th[i]))
            th[i] = x_new[i]
        moved = max(moved, abs(x_new[n] - l_last))
        l_last = x_new[n]
        old = cost
        cost, k, _, _, _, _, _ = evaluate(th, n, l_last, l_t, base, jP, jside, jrow, jw, f, df,
                                          emax, prm, circ, c0, c1, verts, voff, aabb, q0, q1,
                                          True, grad, dmom, rows, pen, Jx, Jy, ux, uy)
        it += 1
        hist[it] = cost
        if moved < 1e-13 or old - cost <= prm[P_RTOL] * old:
            break
    for j in range(it + 1, hist.shape[0]):
        hist[j] = cost
    return l_last


@njit(cache=True)
def _rollout_one(b, base, th, n0, l0, jP, jside, jrow, jw, n_sim, f, df, emax, prm,
                 circ, c_off, verts, voff, aabb, q_off, goal, bounds, stop_flags,
                 th_out, n_out, l_out, tips, steps_done, status, reached):
    cap = th.shape[1]
    thb = th[b].copy()
    n = n0[b]
    l_last = l0[b]
    c0, c1 = c_off[b], c_off[b + 1]
    q0, q1 = q_off[b], q_off[b + 1]
    l_seg = prm[P_LSEG]
    hist = np.empty(int(prm[P_NDESC]) + 1)
    Jx = np.empty(cap + 2)
    Jy = np.empty(cap + 2)
    ux = np.empty(cap + 1)
    uy = np.empty(cap + 1)
    h = forward(base[b], thb, n, l_last, l_seg, Jx, Jy, ux, uy)
    tips[b, 0, 0] = Jx[n + 1]
    tips[b, 0, 1] = Jy[n + 1]
    tips[b, 0, 2] = h
    st = ST_OK
    done = 0
    hit = False
    gx, gy, gr = goal[b, 0], goal[b, 1], goal[b, 2]
    grown = np.empty(STALL_WINDOW)
    if math.hypot(Jx[n + 1] - gx, Jy[n + 1] - gy) <= gr:
        hit = True
    while done < n_sim[b] and not (hit and stop_flags[0]):
        l_t = l_last + prm[P_GROW]
        l_last = descend(thb, n, l_last, l_t, base[b], jP[b], jside[b], jrow[b], jw[b], f, df,
                         emax, prm, circ, c0, c1, verts, voff, aabb, q0, q1, hist)
        finite = math.isfinite(l_last)
        for i in range(n):
            if not math.isfinite(thb[i]):
                finite = False
        if not finite:
            st = ST_NONFINITE
            break
        while l_last > l_seg:
            if n + 1 >= cap:
                st = ST_CAPACITY
                break
            thb[n] = 0.0
            n += 1
            l_last -= l_seg
        if st != ST_OK:
            break
        done += 1
        h = forward(base[b], thb, n, l_last, l_seg, Jx, Jy, ux, uy)
        tx, ty = Jx[n + 1], Jy[n + 1]
        tips[b, done, 0] = tx
        tips[b, done, 1] = ty
        tips[b, done, 2] = h
        inb = bounds[b, 0] <= tx <= bounds[b, 2] and bounds[b, 1] <= ty <= bounds[b, 3]
        if inb and math.hypot(tx - gx, ty - gy) <= gr:
            hit = True
        if stop_flags[1] and not inb:
            st = ST_OUT_OF_BOUNDS
            break
        if stop_flags[2]:
            g = n * l_seg + l_last
            slot = done % STALL_WINDOW
            if done > STALL_WINDOW and g - grown[slot] < STALL_FRACTION * STALL_WINDOW * prm[P_GROW]:
                break
            grown[slot] = g
    for i in range(cap):
        th_out[b, i] = thb[i] if i < n else 0.0
    n_out[b] = n
    l_out[b] = l_last
    steps_done[b] = done
    status[b] = st
    reached[b] = hit
    for j in range(done + 1, tips.shape[1]):
        tips[b, j, 0] = np.nan
        tips[b, j, 1] = np.nan
        tips[b, j, 2] = np.nan


@njit(cache=True, parallel=True)
def rollout_kernel(base, th, n0, l0, jP, jside, jrow, jw, n_sim, f, df, emax, prm,
                   circ, c_off, verts, voff, aabb, q_off, goal, bounds, stop_flags,
                   th_out, n_out, l_out, tips, steps_done, status, reached):
    for b in prange(base.shape[0]):
        _rollout_one(b, base, th, n0, l0, jP, jside, jrow, jw, n_sim, f, df, emax, prm,
                     circ, c_off, verts, voff, aabb, q_off, goal, bounds, stop_flags,
                     th_out, n_out, l_out, tips, steps_done, status, reached)
