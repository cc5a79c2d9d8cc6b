"""All-pairs reference implementations used by the tests.

Every per-particle sum runs over partners in ascending index order with a
running (sequential) accumulation, the order the library kernels promise.
"""
import numpy as np

from stfsim.kernels import jitter_dirs


def all_pairs(x, h):
    n = x.shape[0]
    d = x[None, :, :] - x[:, None, :]
    r2 = d[..., 0] * d[..., 0]
    for a in range(1, x.shape[1]):
        r2 = r2 + d[..., a] * d[..., a]
    mask = r2 < h * h
    np.fill_diagonal(mask, False)
    return [np.flatnonzero(mask[i]) for i in range(n)]


def _seq_sum(rows):
    # running sum down the rows, column by column
    if len(rows) == 0:
        return np.zeros(rows.shape[1])
    return np.cumsum(rows, axis=0)[-1]


def _dirs(x, i, js, seed):
    d = x[js] - x[i]
    r2 = d[:, 0] * d[:, 0]
    for a in range(1, x.shape[1]):
        r2 = r2 + d[:, a] * d[:, a]
    r = np.sqrt(r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = d / r[:, None]
    for k in np.flatnonzero(r == 0.0):
        j = js[k]
        e = jitter_dirs(np.array([min(i, j)]), np.array([max(i, j)]), seed, x.shape[1])[0]
        u[k] = e if i < j else -e
    return r, u


def viscosity(x, v, h, dt, sigma, beta, seed=0):
    nb = all_pairs(x, h)
    out = np.zeros_like(v)
    for i, js in enumerate(nb):
        r, u = _dirs(x, i, js, seed)
        # explicit component order, matching a left-to-right dot product
        rel = (v[i, 0] - v[js, 0]) * u[:, 0]
        for a in range(1, x.shape[1]):
            rel = rel + (v[i, a] - v[js, a]) * u[:, a]
        qk = 1.0 - r / h
        imp = dt * qk * (sigma * rel + beta * rel * rel)
        m = np.where(rel > 0.0, -0.5 * imp, 0.0)
        out[i] = _seq_sum(m[:, None] * u)
    return v + out


def ddr(x, h, dt, rho0, k, k_near, seed=0):
    nb = all_pairs(x, h)
    n = x.shape[0]
    rho = np.zeros(n)
    rho_near = np.zeros(n)
    geo = []
    for i, js in enumerate(nb):
        r, u = _dirs(x, i, js, seed)
        qk = 1.0 - r / h
        q2 = qk * qk
        rho[i] = _seq_sum(q2[:, None])[0] if len(js) else 0.0
        rho_near[i] = _seq_sum((q2 * qk)[:, None])[0] if len(js) else 0.0
        geo.append((js, qk, u))
    p = k * (rho - rho0)
    pn = k_near * rho_near
    dx = np.zeros_like(x)
    for i, (js, qk, u) in enumerate(geo):
        dd = dt * dt * ((p[i] + p[js]) * qk + (pn[i] + pn[js]) * (qk * qk))
        dx[i] = _seq_sum((-0.5 * dd)[:, None] * u)
    return dx, rho, rho_near
