"""NumPy implementation of the upwind convection kernel.

Mirrors ``_kernels.pyx`` operation for operation so both backends agree to
round-off.  Work is done in slabs along the first axis to bound the size of
temporaries on large grids.
"""
from __future__ import annotations

import numpy as np

_SLAB = 16


def _minmod3(a, b, c):
    pos = (a > 0) & (b > 0) & (c > 0)
    neg = (a < 0) & (b < 0) & (c < 0)
    out = np.zeros_like(a)
    out[pos] = np.minimum(np.minimum(a, b), c)[pos]
    out[neg] = np.maximum(np.maximum(a, b), c)[neg]
    return out


def _view(arr, axis, start, stop):
    idx = [slice(2, -2)] * 3
    idx[axis] = slice(start, stop)
    return arr[tuple(idx)]


def _block(rp, cp, mp, np_, h, chi):
    """Convection term on the core of a block padded by two cells."""
    acc = None
    gmax = np.zeros(3)
    core_m = mp[2:-2, 2:-2, 2:-2]
    for a in range(3):
        own = _view(rp, a, 1, -1)
        up = np.where(_view(np_, a, 2, None), _view(rp, a, 2, None), own)
        dn = np.where(_view(np_, a, 0, -2), _view(rp, a, 0, -2), own)
        s = _minmod3(2.0 * (up - own) / h, (up - dn) / (2.0 * h), 2.0 * (own - dn) / h)
        s0 = s[_inner(a, 1, -1)]
        sp_ = s[_inner(a, 2, None)]
        sm = s[_inner(a, 0, -2)]
        r0 = _view(rp, a, 2, -2)
        rpl = _view(rp, a, 3, -1)
        rmi = _view(rp, a, 1, -3)
        c0 = _view(cp, a, 2, -2)
        cpl = _view(cp, a, 3, -1)
        cmi = _view(cp, a, 1, -3)
        ge = (cpl - c0) / h
        gw = (c0 - cmi) / h
        rho_e = np.where(ge > 0, r0 + 0.5 * h * s0, rpl - 0.5 * h * sp_)
        rho_w = np.where(gw > 0, rmi + 0.5 * h * sm, r0 - 0.5 * h * s0)
        term = rho_e * ge - rho_w * gw
        acc = term if acc is None else acc + term
        if core_m.any():
            gmax[a] = max(np.abs(ge[core_m]).max(), np.abs(gw[core_m]).max())
    g = np.where(core_m, chi * acc / h, 0.0)
    return g, gmax


def _inner(axis, start, stop):
    # slopes are stored without the outer padding layer along ``axis`` only
    idx = [slice(None)] * 3
    idx[axis] = slice(start, stop)
    return tuple(idx)


def convection(rho, c, mplus, nplus, h, chi):
    """Return (g, max|grad c| per axis over faces of M+ cells)."""
    n = rho.shape[0]
    rp = np.pad(np.asarray(rho, dtype=float), 2)
    cp = np.pad(np.asarray(c, dtype=float), 2)
    mp = np.pad(np.asarray(mplus, dtype=bool), 2)
    npp = np.pad(np.asarray(nplus, dtype=bool), 2)
    g = np.zeros(rho.shape)
    gmax = np.zeros(3)
    for i0 in range(0, n, _SLAB):
        i1 = min(n, i0 + _SLAB)
        gb, mb = _block(rp[i0:i1 + 4], cp[i0:i1 + 4], mp[i0:i1 + 4], npp[i0:i1 + 4], h, chi)
        g[i0:i1] = gb
        np.maximum(gmax, mb, out=gmax)
    return g, gmax
