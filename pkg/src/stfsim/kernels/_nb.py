"""numba versions of the hot kernels.

Signatures and reduction order mirror ``_np``. Per-particle loops use
``prange`` with disjoint writes, so results do not depend on thread count.
"""
import numpy as np
from numba import njit, prange

_PM = 2147483647


@njit(cache=True)
def _pm_hash(a, b, seed):
    h = (a * 1103515245 + b * 12345 + (seed % _PM) * 2654435761 + 1013904223) % _PM
    h = (h * 48271) % _PM
    h = (h * 48271) % _PM
    return h


@njit(cache=True)
def _jitter(i, j, seed, dim, out):
    # unit vector pointing from i to j
    a = min(i, j)
    b = max(i, j)
    h1 = _pm_hash(np.int64(a), np.int64(b), np.int64(seed))
    u1 = h1 / _PM
    if dim == 2:
        th = 2.0 * np.pi * u1
        out[0] = np.cos(th)
        out[1] = np.sin(th)
    else:
        u2 = ((h1 * 48271) % _PM) / _PM
        z = 2.0 * u1 - 1.0
        s = np.sqrt(max(0.0, 1.0 - z * z))
        ph = 2.0 * np.pi * u2
        out[0] = s * np.cos(ph)
        out[1] = s * np.sin(ph)
        out[2] = z
    if i > j:
        for c in range(dim):
            out[c] = -out[c]


@njit(cache=True)
def _cells(x, h):
    n, dim = x.shape
    lo = np.empty(dim)
    for a in range(dim):
        lo[a] = x[0, a]
        for i in range(1, n):
            if x[i, a] < lo[a]:
                lo[a] = x[i, a]
    cell = np.empty((n, dim), dtype=np.int64)
    ncell = np.zeros(dim, dtype=np.int64)
    for i in range(n):
        for a in range(dim):
            c = np.int64(np.floor((x[i, a] - lo[a]) / h))
            cell[i, a] = c
            if c + 1 > ncell[a]:
                ncell[a] = c + 1
    stride = np.ones(dim, dtype=np.int64)
    for a in range(dim - 2, -1, -1):
        stride[a] = stride[a + 1] * ncell[a + 1]
    key = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = np.int64(0)
        for a in range(dim):
            k += cell[i, a] * stride[a]
        key[i] = k
    return cell, ncell, stride, key


@njit(cache=True)
def _lower(a, k):
    lo = 0
    hi = a.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < k:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _cell_range(i, o, cell, ncell, stride, cstart, skey):
    # slot range of the o-th neighbouring cell of particle i (empty if outside)
    dim = cell.shape[1]
    t = o
    k = np.int64(0)
    for a in range(dim):
        nc = cell[i, a] + (t % 3) - 1
        t //= 3
        if nc < 0 or nc >= ncell[a]:
            return 0, 0
        k += nc * stride[a]
    if cstart.shape[0] > 0:
        return cstart[k], cstart[k + 1]
    lo = _lower(skey, k)
    hi = lo
    while hi < skey.shape[0] and skey[hi] == k:
        hi += 1
    return lo, hi


@njit(cache=True, parallel=True)
def neighbor_csr(x, h):
    n, dim = x.shape
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    cell, ncell, stride, key = _cells(x, h)
    total = np.int64(1)
    for a in range(dim):
        total *= ncell[a]
    if total <= max(8 * n, 1 << 22):
        # counting sort into a dense cell table
        cstart = np.zeros(total + 1, dtype=np.int64)
        for i in range(n):
            cstart[key[i] + 1] += 1
        for c in range(total):
            cstart[c + 1] += cstart[c]
        fill = cstart[:-1].copy()
        order = np.empty(n, dtype=np.int64)
        for i in range(n):
            order[fill[key[i]]] = i
            fill[key[i]] += 1
    else:
        cstart = np.zeros(0, dtype=np.int64)
        order = np.argsort(key, kind="mergesort")
    skey = key[order]
    xs = np.empty((n, dim))
    for s in range(n):
        for a in range(dim):
            xs[s, a] = x[order[s], a]
    noff = 3**dim
    cand = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        c = 0
        for o in range(noff):
            lo, hi = _cell_range(i, o, cell, ncell, stride, cstart, skey)
            c += hi - lo
        cand[i + 1] = cand[i] + c
    tmp = np.empty(cand[n], dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    h2 = h * h
    for i in prange(n):
        c = 0
        base = cand[i]
        for o in range(noff):
            lo, hi = _cell_range(i, o, cell, ncell, stride, cstart, skey)
            for idx in range(lo, hi):
                dx = xs[idx, 0] - x[i, 0]
                r2 = dx * dx
                for a in range(1, dim):
                    dx = xs[idx, a] - x[i, a]
                    r2 = r2 + dx * dx
                if r2 < h2:
                    j = order[idx]
                    if j != i:
                        tmp[base + c] = j
                        c += 1
        counts[i] = c
    offsets = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offsets[i + 1] = offsets[i] + counts[i]
    nbrs = np.empty(offsets[n], dtype=np.int64)
    for i in prange(n):
        seg = nbrs[offsets[i]:offsets[i + 1]]
        seg[:] = tmp[cand[i]:cand[i] + counts[i]]
        seg.sort()
    return offsets, nbrs


@njit(cache=True)
def _unit(x, i, j, rhat, seed):
    # fills rhat with (x_j - x_i)/r, returns r
    dim = x.shape[1]
    dx = x[j, 0] - x[i, 0]
    rhat[0] = dx
    r2 = dx * dx
    for a in range(1, dim):
        dx = x[j, a] - x[i, a]
        rhat[a] = dx
        r2 = r2 + dx * dx
    r = np.sqrt(r2)
    if r == 0.0:
        _jitter(i, j, seed, dim, rhat)
    else:
        for a in range(dim):
            rhat[a] = rhat[a] / r
    return r


@njit(cache=True, parallel=True)
def viscosity_delta(x, v, offsets, nbrs, h, dt, sigma, beta, seed):
    n, dim = x.shape
    out = np.zeros((n, dim))
    ncoinc = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        rhat = np.empty(dim)
        acc = np.zeros(dim)
        for e in range(offsets[i], offsets[i + 1]):
            j = nbrs[e]
            r = _unit(x, i, j, rhat, seed)
            if r == 0.0:
                ncoinc[i] += 1
            if not r < h:
                continue
            qk = 1.0 - r / h
            u = (v[i, 0] - v[j, 0]) * rhat[0]
            for a in range(1, dim):
                u = u + (v[i, a] - v[j, a]) * rhat[a]
            if u > 0.0:
                imp = dt * qk * (sigma * u + beta * u * u)
                m = -0.5 * imp
                for a in range(dim):
                    acc[a] += m * rhat[a]
        for a in range(dim):
            out[i, a] = acc[a]
    return out, ncoinc.sum()


@njit(cache=True, parallel=True)
def _densities(x, offsets, nbrs, h):
    n, dim = x.shape
    rho = np.zeros(n)
    rho_near = np.zeros(n)
    for i in prange(n):
        a1 = 0.0
        a2 = 0.0
        for e in range(offsets[i], offsets[i + 1]):
            j = nbrs[e]
            dx = x[j, 0] - x[i, 0]
            r2 = dx * dx
            for a in range(1, dim):
                dx = x[j, a] - x[i, a]
                r2 = r2 + dx * dx
            r = np.sqrt(r2)
            qk = 0.0
            if r < h:
                qk = 1.0 - r / h
            q2 = qk * qk
            a1 += q2
            a2 += q2 * qk
        rho[i] = a1
        rho_near[i] = a2
    return rho, rho_near


@njit(cache=True, parallel=True)
def _ddr_apply(x, offsets, nbrs, h, dt, press, press_near, seed):
    n, dim = x.shape
    out = np.zeros((n, dim))
    ncoinc = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        rhat = np.empty(dim)
        acc = np.zeros(dim)
        for e in range(offsets[i], offsets[i + 1]):
            j = nbrs[e]
            r = _unit(x, i, j, rhat, seed)
            if r == 0.0:
                ncoinc[i] += 1
            if not r < h:
                continue
            qk = 1.0 - r / h
            q2 = qk * qk
            dd = dt * dt * ((press[i] + press[j]) * qk + (press_near[i] + press_near[j]) * q2)
            m = -0.5 * dd
            for a in range(dim):
                acc[a] += m * rhat[a]
        for a in range(dim):
            out[i, a] = acc[a]
    return out, ncoinc.sum()


def ddr_delta(x, offsets, nbrs, h, dt, rho0, k_pressure, k_near, seed):
    rho, rho_near = _densities(x, offsets, nbrs, h)
    press = k_pressure * (rho - rho0)
    press_near = k_near * rho_near
    dx, ncoinc = _ddr_apply(x, offsets, nbrs, h, dt, press, press_near, seed)
    return dx, rho, rho_near, int(ncoinc)


@njit(cache=True, parallel=True)
def history_sums(buf, slots, w):
    # blocks of particles keep the reads contiguous; each (i, a) still sums
    # oldest to newest, same as the numpy path
    _, n, dim = buf.shape
    out = np.zeros((n, dim))
    nw = slots.shape[0]
    blk = 256
    nblk = (n + blk - 1) // blk
    for b in prange(nblk):
        lo = b * blk
        hi = min(n, lo + blk)
        for k in range(nw):
            wk = w[k]
            sl = slots[k]
            for i in range(lo, hi):
                for a in range(dim):
                    out[i, a] = out[i, a] + wk * buf[sl, i, a]
    return out


@njit(cache=True, parallel=True)
def _spring_delta(x, s_hist, si, sj, rest, k_min, k_hist_pref, dt, seed):
    ns = si.shape[0]
    dim = x.shape[1]
    delta = np.zeros((ns, dim))
    hist = np.zeros(ns)
    ncoinc = np.zeros(ns, dtype=np.int64)
    c = 0.5 * dt * dt
    for s in prange(ns):
        i = si[s]
        j = sj[s]
        rhat = np.empty(dim)
        # direction from j to i
        r = _unit(x, j, i, rhat, seed)
        if r == 0.0:
            ncoinc[s] = 1
        ds = s_hist[i, 0] - s_hist[j, 0]
        n2 = ds * ds
        for a in range(1, dim):
            ds = s_hist[i, a] - s_hist[j, a]
            n2 = n2 + ds * ds
        hh = k_hist_pref * np.sqrt(n2)
        hist[s] = hh
        kappa = hh + k_min
        m = -kappa * (r - rest[s]) * c
        for a in range(dim):
            delta[s, a] = m * rhat[a]
    return delta, hist, ncoinc.sum()


def spring_delta(x, s_hist, si, sj, rest, k_min, k_hist_pref, dt, seed):
    delta, hist, ncoinc = _spring_delta(x, s_hist, si, sj, rest, k_min, k_hist_pref, dt, seed)
    return delta, hist, int(ncoinc)


@njit(cache=True, parallel=True)
def spring_gather(owner_offsets, entry_spring, entry_sign, delta, hist, n):
    dim = delta.shape[1]
    dx = np.zeros((n, dim))
    avg = np.zeros(n)
    for i in prange(n):
        acc = np.zeros(dim)
        tot = 0.0
        for e in range(owner_offsets[i], owner_offsets[i + 1]):
            s = entry_spring[e]
            sg = entry_sign[e]
            for a in range(dim):
                acc[a] += sg * delta[s, a]
            tot += hist[s]
        cnt = owner_offsets[i + 1] - owner_offsets[i]
        for a in range(dim):
            dx[i, a] = acc[a]
        if cnt > 0:
            avg[i] = tot / cnt
    return dx, avg
