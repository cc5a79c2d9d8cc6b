"""Vectorised numpy versions of the hot kernels.

Every per-particle reduction goes through ``np.bincount`` over entries
sorted by (owner, partner), which accumulates sequentially in that order.
The numba kernels gather in the same order, so both paths agree bitwise on
non-degenerate input.
"""
import itertools

import numpy as np

_PM = 2147483647  # 2**31 - 1


def _pm_hash(a, b, seed):
    h = (a * 1103515245 + b * 12345 + (seed % _PM) * 2654435761 + 1013904223) % _PM
    h = (h * 48271) % _PM
    h = (h * 48271) % _PM
    return h


def jitter_dirs(a, b, seed, dim):
    """Deterministic unit vectors for coincident pairs, ``a < b``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    h1 = _pm_hash(a, b, seed)
    u1 = h1 / _PM
    out = np.empty(a.shape + (dim,))
    if dim == 2:
        th = 2.0 * np.pi * u1
        out[..., 0] = np.cos(th)
        out[..., 1] = np.sin(th)
    else:
        u2 = ((h1 * 48271) % _PM) / _PM
        z = 2.0 * u1 - 1.0
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        ph = 2.0 * np.pi * u2
        out[..., 0] = s * np.cos(ph)
        out[..., 1] = s * np.sin(ph)
        out[..., 2] = z
    return out


def _sqnorm(d):
    r2 = d[:, 0] * d[:, 0]
    for a in range(1, d.shape[1]):
        r2 = r2 + d[:, a] * d[:, a]
    return r2


def neighbor_csr(x, h):
    """All ordered neighbour pairs with ``r < h``; CSR sorted by (i, j)."""
    n, dim = x.shape
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    lo = x.min(axis=0)
    cell = np.floor((x - lo) / h).astype(np.int64)
    ncell = cell.max(axis=0) + 1
    stride = np.ones(dim, dtype=np.int64)
    for a in range(dim - 2, -1, -1):
        stride[a] = stride[a + 1] * ncell[a + 1]
    key = cell @ stride
    order = np.argsort(key, kind="stable")
    skey = key[order]
    idx = np.arange(n, dtype=np.int64)
    pi, pj = [], []
    for off in itertools.product((-1, 0, 1), repeat=dim):
        nc = cell + np.asarray(off, dtype=np.int64)
        ok = np.all((nc >= 0) & (nc < ncell), axis=1)
        nk = nc @ stride
        first = np.searchsorted(skey, nk, side="left")
        last = np.searchsorted(skey, nk, side="right")
        cnt = np.where(ok, last - first, 0)
        tot = int(cnt.sum())
        if tot == 0:
            continue
        ii = np.repeat(idx, cnt)
        base = np.repeat(np.cumsum(cnt) - cnt, cnt)
        pos = np.repeat(first, cnt) + (np.arange(tot) - base)
        pi.append(ii)
        pj.append(order[pos])
    i = np.concatenate(pi)
    j = np.concatenate(pj)
    keep = i != j
    i, j = i[keep], j[keep]
    r2 = _sqnorm(x[j] - x[i])
    keep = r2 < h * h
    i, j = i[keep], j[keep]
    srt = np.lexsort((j, i))
    i, j = i[srt], j[srt]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(i, minlength=n), out=offsets[1:])
    return offsets, j


def _pair_geometry(x, offsets, nbrs, seed):
    n, dim = x.shape
    i = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
    j = nbrs
    d = x[j] - x[i]
    r = np.sqrt(_sqnorm(d))
    coinc = r == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rhat = d / r[:, None]
    if coinc.any():
        ci, cj = i[coinc], j[coinc]
        u = jitter_dirs(np.minimum(ci, cj), np.maximum(ci, cj), seed, dim)
        u[ci > cj] *= -1.0
        rhat[coinc] = u
    return i, j, r, rhat, int(coinc.sum())


def _gather(i, contrib, n):
    out = np.empty((n, contrib.shape[1]))
    for a in range(contrib.shape[1]):
        out[:, a] = np.bincount(i, weights=contrib[:, a], minlength=n)
    return out


def viscosity_delta(x, v, offsets, nbrs, h, dt, sigma, beta, seed):
    n, dim = x.shape
    i, j, r, rhat, ncoinc = _pair_geometry(x, offsets, nbrs, seed)
    qk = 1.0 - r / h
    dv = v[i] - v[j]
    u = dv[:, 0] * rhat[:, 0]
    for a in range(1, dim):
        u = u + dv[:, a] * rhat[:, a]
    act = (u > 0.0) & (r < h)
    imp = dt * qk * (sigma * u + beta * u * u)
    m = np.where(act, -0.5 * imp, 0.0)
    return _gather(i, m[:, None] * rhat, n), ncoinc


def ddr_delta(x, offsets, nbrs, h, dt, rho0, k_pressure, k_near, seed):
    n, dim = x.shape
    i, j, r, rhat, ncoinc = _pair_geometry(x, offsets, nbrs, seed)
    act = r < h
    qk = np.where(act, 1.0 - r / h, 0.0)
    q2 = qk * qk
    rho = np.bincount(i, weights=q2, minlength=n)
    rho_near = np.bincount(i, weights=q2 * qk, minlength=n)
    press = k_pressure * (rho - rho0)
    press_near = k_near * rho_near
    dd = dt * dt * ((press[i] + press[j]) * qk + (press_near[i] + press_near[j]) * q2)
    m = np.where(act, -0.5 * dd, 0.0)
    return _gather(i, m[:, None] * rhat, n), rho, rho_near, ncoinc


def history_sums(buf, slots, w):
    s = np.zeros(buf.shape[1:])
    for slot, wk in zip(slots, w):
        s = s + wk * buf[slot]
    return s


def spring_delta(x, s_hist, si, sj, rest, k_min, k_hist_pref, dt, seed):
    """Per-spring displacement of endpoint ``i`` and history stiffness."""
    dim = x.shape[1]
    d = x[si] - x[sj]
    r = np.sqrt(_sqnorm(d))
    coinc = r == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rhat = d / r[:, None]
    if coinc.any():
        rhat[coinc] = -jitter_dirs(si[coinc], sj[coinc], seed, dim)
    ds = s_hist[si] - s_hist[sj]
    hist = k_hist_pref * np.sqrt(_sqnorm(ds))
    kappa = hist + k_min
    m = -kappa * (r - rest) * (0.5 * dt * dt)
    return m[:, None] * rhat, hist, int(coinc.sum())


def spring_gather(owner_offsets, entry_spring, entry_sign, delta, hist, n):
    owner = np.repeat(np.arange(n, dtype=np.int64), np.diff(owner_offsets))
    contrib = entry_sign[:, None] * delta[entry_spring]
    dx = _gather(owner, contrib, n)
    cnt = np.diff(owner_offsets)
    tot = np.bincount(owner, weights=hist[entry_spring], minlength=n)
    avg = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
    return dx, avg
