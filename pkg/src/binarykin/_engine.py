"""Compiled quadrature loops shared by the collision and linearized operators.

All routines work on one common velocity lattice.  A quadrature point is a
triple (v_i, v_j, omega_k); v' and v_*' are obtained from

    v'   = v_i + cb (u . omega) omega,   v_*' = v_j - ca (u . omega) omega,

with u = v_j - v_i, ca = 2 m_a / (m_a + m_b) and cb = 2 m_b / (m_a + m_b).
Angular weights are renormalized per (i, j) so that sum_k b_k = btot exactly.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# angular kernel families: b(c) = |c| or c^2 (c = cos theta)
B_ABS = 0
B_SQUARE = 1

# masks applied to the pre-collision pair in the split operators
MASK_ALL = 0
MASK_COMPACT = 1  # chi(|u|) 1{|v| + |v_*| <= m}
MASK_SMALL = 2    # complement of MASK_COMPACT


@njit(cache=True, inline="always")
def _bval(fam, c):
    c = abs(c)
    if fam == B_SQUARE:
        return c * c
    return c


@njit(cache=True, inline="always")
def chi_ramp(r, eps):
    """C^2 ramp: 0 below eps, 1 above 2 eps."""
    if r <= eps:
        return 0.0
    if r >= 2.0 * eps:
        return 1.0
    s = (r - eps) / eps
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


@njit(cache=True)
def pair_mask(mode, g, speed_i, speed_j, eps, mtrunc):
    if mode == MASK_ALL:
        return 1.0
    inner = chi_ramp(g, eps) if speed_i + speed_j <= mtrunc else 0.0
    if mode == MASK_COMPACT:
        return inner
    return 1.0 - inner


@njit(cache=True)
def stencil(px, py, pz, lo, h, n, idx, wt):
    """Trilinear weights of point p; returns 0 when p leaves the lattice box."""
    top = n - 1
    sx = (px - lo) / h
    sy = (py - lo) / h
    sz = (pz - lo) / h
    tol = 1e-9
    if sx < -tol or sy < -tol or sz < -tol or sx > top + tol or sy > top + tol or sz > top + tol:
        return 0
    ix = min(max(int(math.floor(sx)), 0), n - 2)
    iy = min(max(int(math.floor(sy)), 0), n - 2)
    iz = min(max(int(math.floor(sz)), 0), n - 2)
    tx = min(max(sx - ix, 0.0), 1.0)
    ty = min(max(sy - iy, 0.0), 1.0)
    tz = min(max(sz - iz, 0.0), 1.0)
    c = 0
    for a in range(2):
        wa = tx if a else 1.0 - tx
        for b in range(2):
            wb = ty if b else 1.0 - ty
            for d in range(2):
                wd = tz if d else 1.0 - tz
                idx[c] = ((ix + a) * n + (iy + b)) * n + (iz + d)
                wt[c] = wa * wb * wd
                c += 1
    return 8


@njit(cache=True)
def _angular(dirs, dwt, fam, ux, uy, uz, g, bk):
    s = 0.0
    for k in range(dirs.shape[0]):
        c = (dirs[k, 0] * ux + dirs[k, 1] * uy + dirs[k, 2] * uz) / g
        b = _bval(fam, c) * dwt[k]
        bk[k] = b
        s += b
    return s


@njit(cache=True, inline="always")
def corner(px, py, pz, lo, inv_h, n):
    """Base node and fractional offsets of p in its cell; base < 0 outside the box."""
    top = n - 1
    sx = (px - lo) * inv_h
    sy = (py - lo) * inv_h
    sz = (pz - lo) * inv_h
    tol = 1e-9
    if sx < -tol or sy < -tol or sz < -tol or sx > top + tol or sy > top + tol or sz > top + tol:
        return -1, 0.0, 0.0, 0.0
    ix = min(max(int(sx), 0), n - 2)
    iy = min(max(int(sy), 0), n - 2)
    iz = min(max(int(sz), 0), n - 2)
    tx = min(max(sx - ix, 0.0), 1.0)
    ty = min(max(sy - iy, 0.0), 1.0)
    tz = min(max(sz - iz, 0.0), 1.0)
    return (ix * n + iy) * n + iz, tx, ty, tz


@njit(cache=True, inline="always")
def trilinear(G, x, b, n, tx, ty, tz):
    n2 = n * n
    c00 = G[x, b] + tz * (G[x, b + 1] - G[x, b])
    c01 = G[x, b + n] + tz * (G[x, b + n + 1] - G[x, b + n])
    c10 = G[x, b + n2] + tz * (G[x, b + n2 + 1] - G[x, b + n2])
    c11 = G[x, b + n2 + n] + tz * (G[x, b + n2 + n + 1] - G[x, b + n2 + n])
    c0 = c00 + ty * (c01 - c00)
    c1 = c10 + ty * (c11 - c10)
    return c0 + tx * (c1 - c0)


@njit(cache=True, inline="always")
def clamped(G, x, px, py, pz, lo, inv_h, n):
    """Trilinear value of column x at p clamped into the box."""
    top = lo + (n - 1) / inv_h
    b, tx, ty, tz = corner(min(max(px, lo), top), min(max(py, lo), top), min(max(pz, lo), top), lo, inv_h, n)
    return trilinear(G, x, b, n, tx, ty, tz)


@njit(cache=True, inline="always")
def sample(G, x, px, py, pz, lo, inv_h, n, rel, m, half_norm):
    """Interpolated value of column x at p.

    With ``rel``, G holds F / mu and the value is mu(p) I[G](p); past the box
    the ratio at the boundary is kept.
    """
    if rel:
        mu = half_norm * half_norm * math.exp(-0.5 * m * (px * px + py * py + pz * pz))
        return mu * clamped(G, x, px, py, pz, lo, inv_h, n)
    b, tx, ty, tz = corner(px, py, pz, lo, inv_h, n)
    return trilinear(G, x, b, n, tx, ty, tz) if b >= 0 else 0.0


@njit(cache=True, parallel=True)
def gain_loss(rows, nodes, wv, lo, h, n, gamma, dirs, dwt, fam, btot, csing, ca, cb,
              Ga, Gb, rel, m_a, m_b, pre, La, Lb, gain, loss):
    """Gain and loss sums of one ordered species pair at the given output nodes.

    Interpolated factors: ``Ga`` at v' and ``Gb`` at v_*', both shaped (X, N)
    with X a batch (spatial) axis.  With ``rel`` the interpolant is taken
    relative to the Maxwellian: G = F / mu and F(p) = mu(p) I[G](p).  ``pre[j]``
    multiplies every term with v_* = v_j; ``La``/``Lb`` (X, N) are the node
    values entering the loss.  The coincident node j = i is replaced by the
    local correction ``csing``.
    """
    N = nodes.shape[0]
    K = dirs.shape[0]
    X = Ga.shape[0]
    inv_h = 1.0 / h
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    for r in prange(rows.shape[0]):
        i = rows[r]
        bk = np.empty(K)
        acc = np.zeros(X)
        lacc = np.zeros(X)
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[j] * g ** gamma * pre[j]
            if wgt == 0.0:
                continue
            for x in range(X):
                lacc[x] += wgt * Lb[x, j]
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            if s <= 0.0:
                continue
            fac = wgt / s
            for k in range(K):
                if bk[k] == 0.0:
                    continue
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                px, py, pz = vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz
                qx, qy, qz = nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy, nodes[j, 2] - ca * un * oz
                wk = fac * bk[k]
                if X == 1 or rel:
                    for x in range(X):
                        A = sample(Ga, x, px, py, pz, lo, inv_h, n, rel, m_a, ha)
                        B = sample(Gb, x, qx, qy, qz, lo, inv_h, n, rel, m_b, hb)
                        acc[x] += wk * A * B
                else:
                    b1, tx1, ty1, tz1 = corner(px, py, pz, lo, inv_h, n)
                    b2, tx2, ty2, tz2 = corner(qx, qy, qz, lo, inv_h, n)
                    if b1 < 0 or b2 < 0:
                        continue
                    for x in range(X):
                        acc[x] += wk * trilinear(Ga, x, b1, n, tx1, ty1, tz1) * trilinear(Gb, x, b2, n, tx2, ty2, tz2)
        for x in range(X):
            loc = csing * pre[i] * La[x, i] * Lb[x, i]
            gain[r, x] += btot * (acc[x] + loc)
            loss[r, x] += btot * (La[x, i] * lacc[x] + loc)


@njit(cache=True, parallel=True)
def gain_loss_single(rows, nodes, wv, lo, h, n, gamma, dirs, dwt, fam, btot, csing, ca, cb,
                     Ga, Gb, rel, m_a, m_b, pre, La, Lb, gain, loss):
    """Unbatched (X = 1) variant of :func:`gain_loss` with scalar accumulators."""
    N = nodes.shape[0]
    K = dirs.shape[0]
    inv_h = 1.0 / h
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    for r in prange(rows.shape[0]):
        i = rows[r]
        bk = np.empty(K)
        acc = 0.0
        lacc = 0.0
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[j] * g ** gamma * pre[j]
            lacc += wgt * Lb[0, j]
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            # energy identity: mu_a(v') mu_b(v_*') = mu_a(v) mu_b(v_*) for every omega
            pair = (ha * hb) ** 2 * math.exp(-0.5 * (m_a * (vx * vx + vy * vy + vz * vz)
                                                     + m_b * (nodes[j, 0] ** 2 + nodes[j, 1] ** 2 + nodes[j, 2] ** 2)))
            inner = 0.0
            for k in range(K):
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                px, py, pz = vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz
                qx, qy, qz = nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy, nodes[j, 2] - ca * un * oz
                if rel:
                    inner += bk[k] * pair * clamped(Ga, 0, px, py, pz, lo, inv_h, n) \
                        * clamped(Gb, 0, qx, qy, qz, lo, inv_h, n)
                else:
                    A = sample(Ga, 0, px, py, pz, lo, inv_h, n, False, m_a, ha)
                    B = sample(Gb, 0, qx, qy, qz, lo, inv_h, n, False, m_b, hb)
                    inner += bk[k] * A * B
            if s > 0.0:
                acc += wgt * inner / s
        loc = csing * pre[i] * La[0, i] * Lb[0, i]
        gain[r, 0] += btot * (acc + loc)
        loss[r, 0] += btot * (La[0, i] * lacc + loc)


@njit(cache=True)
def k2_rows(rows, nodes, speed, wv, lo, h, n, gamma, dirs, dwt, fam, btot, csing_all, csing_chi,
            ca, cb, m_a, m_b, sq_a, sq_b, off_a, off_b, mode, eps, mtrunc, out):
    """Strong-form K2 rows for row species a against partner species b.

    ``out[r]`` receives the coefficients of (f^A, f^B) for output node rows[r].
    """
    N = nodes.shape[0]
    K = dirs.shape[0]
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    bk = np.empty(K)
    idx = np.empty(8, np.int64)
    wt = np.empty(8)
    for r in range(rows.shape[0]):
        i = rows[r]
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        c_loc = _local_const(mode, csing_all, csing_chi, 2.0 * speed[i], mtrunc)
        out[r, off_b + i] -= btot * c_loc * sq_a[i] * sq_b[i]
        out[r, off_a + i] -= btot * c_loc * sq_b[i] * sq_b[i]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[j] * g ** gamma * pair_mask(mode, g, speed[i], speed[j], eps, mtrunc)
            if wgt == 0.0:
                continue
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            if s <= 0.0:
                continue
            fac = btot * wgt * sq_b[j] / s
            for k in range(K):
                if bk[k] == 0.0:
                    continue
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                px, py, pz = vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz
                qx, qy, qz = nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy, nodes[j, 2] - ca * un * oz
                wk = fac * bk[k]
                sqa_p = ha * math.exp(-0.25 * m_a * (px * px + py * py + pz * pz))
                sqb_q = hb * math.exp(-0.25 * m_b * (qx * qx + qy * qy + qz * qz))
                if stencil(qx, qy, qz, lo, h, n, idx, wt):
                    t = wk * sqa_p
                    for c in range(8):
                        out[r, off_b + idx[c]] -= t * wt[c]
                if stencil(px, py, pz, lo, h, n, idx, wt):
                    t = wk * sqb_q
                    for c in range(8):
                        out[r, off_a + idx[c]] -= t * wt[c]


@njit(cache=True, inline="always")
def _local_const(mode, c_all, c_chi, two_speed, mtrunc):
    if mode == MASK_ALL:
        return c_all
    inner = c_chi if two_speed <= mtrunc else 0.0
    if mode == MASK_COMPACT:
        return inner
    return c_all - inner


@njit(cache=True)
def k1_rows(rows, nodes, speed, wv, gamma, btot, csing_all, csing_chi, sq_a, sq_b, off_b,
            mode, eps, mtrunc, out):
    """Strong-form K1 rows: sqrt(mu_a)(v) sum_j B sqrt(mu_b)(v_j) f^b(v_j)."""
    N = nodes.shape[0]
    for r in range(rows.shape[0]):
        i = rows[r]
        c_loc = _local_const(mode, csing_all, csing_chi, 2.0 * speed[i], mtrunc)
        out[r, off_b + i] += btot * c_loc * sq_a[i] * sq_b[i]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - nodes[i, 0]
            uy = nodes[j, 1] - nodes[i, 1]
            uz = nodes[j, 2] - nodes[i, 2]
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[j] * g ** gamma * pair_mask(mode, g, speed[i], speed[j], eps, mtrunc)
            out[r, off_b + j] += btot * wgt * sq_a[i] * sq_b[j]


@njit(cache=True)
def galerkin_rows(rows, row_weight, nodes, wv, lo, h, n, gamma, dirs, dwt, fam, btot,
                  ca, cb, m_a, m_b, sq_a, sq_b, off_a, off_b, factor, upper):
    """Accumulate the weak form sum W D D^T into the upper triangle ``upper``.

    D is the coefficient vector of
    sqrt(mu_b)(v_*') f^a(v') + sqrt(mu_a)(v') f^b(v_*') - sqrt(mu_b)(v_*) f^a(v) - sqrt(mu_a)(v) f^b(v_*).
    """
    N = nodes.shape[0]
    K = dirs.shape[0]
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    bk = np.empty(K)
    idx = np.empty(8, np.int64)
    wt = np.empty(8)
    cols = np.empty(18, np.int64)
    vals = np.empty(18)
    for r in range(rows.shape[0]):
        i = rows[r]
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = factor * row_weight[r] * wv[i] * wv[j] * g ** gamma
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            if s <= 0.0:
                continue
            fac = btot * wgt / s
            for k in range(K):
                if bk[k] == 0.0:
                    continue
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                px, py, pz = vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz
                qx, qy, qz = nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy, nodes[j, 2] - ca * un * oz
                sqa_p = ha * math.exp(-0.25 * m_a * (px * px + py * py + pz * pz))
                sqb_q = hb * math.exp(-0.25 * m_b * (qx * qx + qy * qy + qz * qz))
                m = 0
                if stencil(px, py, pz, lo, h, n, idx, wt):
                    for c in range(8):
                        cols[m] = off_a + idx[c]
                        vals[m] = sqb_q * wt[c]
                        m += 1
                if stencil(qx, qy, qz, lo, h, n, idx, wt):
                    for c in range(8):
                        cols[m] = off_b + idx[c]
                        vals[m] = sqa_p * wt[c]
                        m += 1
                cols[m] = off_a + i
                vals[m] = -sq_b[j]
                m += 1
                cols[m] = off_b + j
                vals[m] = -sq_a[i]
                m += 1
                wk = fac * bk[k]
                for p in range(m):
                    cp = cols[p]
                    vp = wk * vals[p]
                    for q in range(m):
                        cq = cols[q]
                        if cp <= cq:
                            upper[cp, cq] += vp * vals[q]


@njit(cache=True)
def symmetrize_group(src, perms, nspec, nv, out):
    """out[g p, g q] += src[p, q] summed over the group elements g."""
    G = perms.shape[0]
    M = src.shape[0]
    gcol = np.empty(M, np.int64)
    for g in range(G):
        for s in range(nspec):
            for p in range(nv):
                gcol[s * nv + p] = s * nv + perms[g, p]
        for p in range(M):
            gp = gcol[p]
            for q in range(M):
                v = src[p, q]
                if v != 0.0:
                    out[gp, gcol[q]] += v


@njit(cache=True)
def expand_rows(src, row_species, row_nodes, perms, nspec, nv, out):
    """Fill every row of ``out`` from fundamental-domain rows using the group."""
    G = perms.shape[0]
    M = src.shape[1]
    gcol = np.empty(M, np.int64)
    for g in range(G):
        for s in range(nspec):
            for p in range(nv):
                gcol[s * nv + p] = s * nv + perms[g, p]
        for r in range(src.shape[0]):
            tr = row_species[r] * nv + perms[g, row_nodes[r]]
            for q in range(M):
                out[tr, gcol[q]] = src[r, q]


@njit(cache=True)
def weak_pairing(nodes, wv, gamma, dirs, dwt, fam, btot, ca, cb, m_a, m_b, Fa, Fb, out):
    """Weak-form sum of W F^a(v) F^b(v_*) [Psi(v') + Psi(v_*') - Psi(v) - Psi(v_*)].

    Psi are evaluated exactly at the post-collision velocities, so each bracket
    vanishes up to rounding.  ``out`` has length 6.
    """
    N = nodes.shape[0]
    K = dirs.shape[0]
    bk = np.empty(K)
    psi = np.empty(6)
    for i in range(N):
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[i] * wv[j] * g ** gamma * Fa[i] * Fb[j]
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            if s <= 0.0 or wgt == 0.0:
                continue
            fac = btot * wgt / s
            for k in range(K):
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                px, py, pz = vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz
                qx, qy, qz = nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy, nodes[j, 2] - ca * un * oz
                psi[0] = 0.0
                psi[1] = 0.0
                psi[2] = m_a * (px - vx) + m_b * (qx - nodes[j, 0])
                psi[3] = m_a * (py - vy) + m_b * (qy - nodes[j, 1])
                psi[4] = m_a * (pz - vz) + m_b * (qz - nodes[j, 2])
                psi[5] = (m_a * (px * px + py * py + pz * pz) + m_b * (qx * qx + qy * qy + qz * qz)
                          - m_a * (vx * vx + vy * vy + vz * vz)
                          - m_b * (nodes[j, 0] ** 2 + nodes[j, 1] ** 2 + nodes[j, 2] ** 2))
                wk = fac * bk[k]
                for c in range(6):
                    out[c] += wk * psi[c]


@njit(cache=True)
def weak_entropy(nodes, wv, lo, h, n, gamma, dirs, dwt, fam, btot, ca, cb, m_a, m_b,
                 Ga, Gb, rel, Fa, Fb):
    """Symmetrized entropy production of one ordered pair, -1/4 sum W (P' - P) log(P'/P).

Swapping the pair and exchanging pre/post collision states each halve the
strong form, hence 1/4 per ordered pair.
"""
    N = nodes.shape[0]
    K = dirs.shape[0]
    bk = np.empty(K)
    inv_h = 1.0 / h
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    total = 0.0
    for i in range(N):
        vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        for j in range(N):
            if j == i:
                continue
            ux = nodes[j, 0] - vx
            uy = nodes[j, 1] - vy
            uz = nodes[j, 2] - vz
            g = math.sqrt(ux * ux + uy * uy + uz * uz)
            wgt = wv[i] * wv[j] * g ** gamma
            s = _angular(dirs, dwt, fam, ux, uy, uz, g, bk)
            if s <= 0.0:
                continue
            fac = btot * wgt / s
            P = Fa[i] * Fb[j]
            for k in range(K):
                ox, oy, oz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
                un = ux * ox + uy * oy + uz * oz
                A = sample(Ga, 0, vx + cb * un * ox, vy + cb * un * oy, vz + cb * un * oz,
                           lo, inv_h, n, rel, m_a, ha)
                B = sample(Gb, 0, nodes[j, 0] - ca * un * ox, nodes[j, 1] - ca * un * oy,
                           nodes[j, 2] - ca * un * oz, lo, inv_h, n, rel, m_b, hb)
                Pp = A * B
                if Pp > 0.0 and P > 0.0:
                    total -= 0.25 * fac * bk[k] * (Pp - P) * math.log(Pp / P)
    return total


# ---------------------------------------------------------------------------
# Lattice-aligned directions.  When every omega is proportional to an integer
# vector e (axes, face and body diagonals), v' = v + cb h (e . dj) / |e|^2 e
# with dj the lattice offset of v_* from v.  Then F^a(v') depends on v and on
# one integer, and F^b(v_*') on v_* and the projection class e . i of v, so
# both interpolants are tabulated instead of being recomputed per triple.


@njit(cache=True, parallel=True)
def gain_lattice(rows, groups, group_start, group_sigma, offsets, sproj, evec, qnorm, span,
                 nodes, wv, lo, h, n, gam, ang, ca, cb, Ga, Gb, rel, m_a, m_b, pre, btot, gain):
    """Gain sums at ``rows`` for lattice-aligned directions.

    ``groups[k]`` lists positions r (into ``rows``) ordered by the projection
    class ``sproj[k, rows[r]]``; ``group_start``/``group_sigma`` delimit the
    classes.  ``gam[d]`` and ``ang[k, d]`` are tabulated over lattice
    differences d, the latter already normalized over directions.
    """
    N = nodes.shape[0]
    K = evec.shape[0]
    X = Ga.shape[0]
    inv_h = 1.0 / h
    ha = (m_a / (2.0 * math.pi)) ** 0.75
    hb = (m_b / (2.0 * math.pi)) ** 0.75
    side = 2 * n - 1
    c0 = n - 1
    T = span
    for k in range(K):
        ex, ey, ez = evec[k, 0], evec[k, 1], evec[k, 2]
        step = h / qnorm[k]
        ng = group_sigma.shape[1]
        for gi in prange(ng):
            lo_r = group_start[k, gi]
            hi_r = group_start[k, gi + 1]
            if hi_r <= lo_r:
                continue
            sig = group_sigma[k, gi]
            Btab = np.empty((X, N))
            for j in range(N):
                t = (sproj[k, j] - sig) * step * ca
                qx = nodes[j, 0] - t * ex
                qy = nodes[j, 1] - t * ey
                qz = nodes[j, 2] - t * ez
                for x in range(X):
                    Btab[x, j] = sample(Gb, x, qx, qy, qz, lo, inv_h, n, rel, m_b, hb)
            Atab = np.empty((X, 2 * T + 1))
            for pos in range(lo_r, hi_r):
                r = groups[k, pos]
                i = rows[r]
                vx, vy, vz = nodes[i, 0], nodes[i, 1], nodes[i, 2]
                for tt in range(2 * T + 1):
                    t = (tt - T) * step * cb
                    px = vx + t * ex
                    py = vy + t * ey
                    pz = vz + t * ez
                    for x in range(X):
                        Atab[x, tt] = sample(Ga, x, px, py, pz, lo, inv_h, n, rel, m_a, ha)
                ix, iy, iz = offsets[i, 0], offsets[i, 1], offsets[i, 2]
                for j in range(N):
                    if j == i:
                        continue
                    d = ((offsets[j, 0] - ix + c0) * side + (offsets[j, 1] - iy + c0)) * side + (offsets[j, 2] - iz + c0)
                    w = ang[k, d]
                    if w == 0.0:
                        continue
                    w *= btot * wv[j] * pre[j] * gam[d]
                    tt = sproj[k, j] - sig + T
                    for x in range(X):
                        gain[r, x] += w * Atab[x, tt] * Btab[x, j]


@njit(cache=True, parallel=True)
def loss_lattice(rows, offsets, n, wv, gam, pre, btot, csing, La, Lb, gain, loss):
    """Loss sums plus the coincident-node correction shared with the gain."""
    N = offsets.shape[0]
    X = La.shape[0]
    side = 2 * n - 1
    c0 = n - 1
    for r in prange(rows.shape[0]):
        i = rows[r]
        ix, iy, iz = offsets[i, 0], offsets[i, 1], offsets[i, 2]
        acc = np.zeros(X)
        for j in range(N):
            if j == i:
                continue
            d = ((offsets[j, 0] - ix + c0) * side + (offsets[j, 1] - iy + c0)) * side + (offsets[j, 2] - iz + c0)
            w = wv[j] * pre[j] * gam[d]
            for x in range(X):
                acc[x] += w * Lb[x, j]
        for x in range(X):
            loc = csing * pre[i] * La[x, i] * Lb[x, i]
            gain[r, x] += btot * loc
            loss[r, x] += btot * (La[x, i] * acc[x] + loc)
