"""Error norms and scalar diagnostics of a run."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .mesh import GridSpec

__all__ = [
    "TimeSeriesRecord",
    "restrict_to",
    "error_inf",
    "error_rel_timeseries",
    "error_time",
    "max_density",
    "second_moment",
    "free_energy",
    "mass",
    "blow_up_check",
    "observed_rates",
    "BLOW_UP_JUMP",
]

BLOW_UP_JUMP = 1000.0


@dataclass
class TimeSeriesRecord:
    step: int
    t: float
    dt: float
    max_rho: float
    second_moment: float
    free_energy: float
    bep_residual: float
    clamp: float


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _nesting(coarse: GridSpec, fine: GridSpec, tol: float = 1e-9):
    """(ratio, offsets) if every coarse cell is a union of fine cells, else None."""
    k = coarse.h / fine.h
    if abs(k - round(k)) > tol * k or round(k) < 1:
        return None
    k = int(round(k))
    offs = []
    for a in range(3):
        o = (coarse.cube_min[a] - fine.cube_min[a]) / fine.h
        if abs(o - round(o)) > 1e-7:
            return None
        offs.append(int(round(o)))
    return k, offs


def restrict_to(coarse: GridSpec, flat: np.ndarray, fine: GridSpec, u_fine: np.ndarray,
                valid: np.ndarray) -> np.ndarray:
    """Reference values of a fine-grid field on the coarse cells ``flat``.

    When the grids nest, each coarse cell gets the mean of the valid fine
    cells it contains (a conservative restriction of cell averages);
    otherwise the fine field is interpolated trilinearly at the coarse
    centres.
    """
    flat = np.asarray(flat)
    nest = _nesting(coarse, fine)
    if nest is None:
        axes = tuple(fine.axis(a) for a in range(3))
        interp = RegularGridInterpolator(axes, np.where(valid, u_fine, 0.0), bounds_error=False,
                                         fill_value=None)
        return interp(coarse.coords_of(flat))
    k, offs = nest
    jkl = np.unravel_index(flat, coarse.shape)
    sub = np.arange(k)
    idx = [offs[a] + jkl[a][:, None] * k + sub[None, :] for a in range(3)]
    inside = [(i >= 0) & (i < fine.n) for i in idx]
    ci = [np.clip(i, 0, fine.n - 1) for i in idx]
    I = ci[0][:, :, None, None]
    J = ci[1][:, None, :, None]
    K = ci[2][:, None, None, :]
    ok = (inside[0][:, :, None, None] & inside[1][:, None, :, None] & inside[2][:, None, None, :])
    ok = ok & valid[I, J, K]
    vals = np.where(ok, u_fine[I, J, K], 0.0)
    cnt = ok.sum(axis=(1, 2, 3))
    if np.any(cnt == 0):
        raise ValueError("reference grid does not cover every coarse cell")
    return vals.sum(axis=(1, 2, 3)) / cnt


def error_inf(u_h: np.ndarray, grid_h: GridSpec, mask: np.ndarray, u_ref: np.ndarray,
              grid_ref: GridSpec, ref_valid: np.ndarray) -> float:
    """max over the M+ cells of |u_h - reference|."""
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        raise ValueError("empty comparison mask")
    if grid_h == grid_ref:
        ref = np.asarray(u_ref).reshape(-1)[flat]
    else:
        ref = restrict_to(grid_h, flat, grid_ref, u_ref, ref_valid)
    return float(np.max(np.abs(np.asarray(u_h).reshape(-1)[flat] - ref)))


def error_rel_timeseries(series_h, series_ref, dt: float) -> float:
    """Relative discrete L2-in-time error of the max-density history."""
    a = np.asarray(series_h, dtype=float)
    b = np.asarray(series_ref, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"series lengths differ: {a.shape} vs {b.shape}")
    num = np.sqrt(np.sum((a - b) ** 2) * dt)
    den = np.sqrt(np.sum(b ** 2) * dt)
    return float(num / den)


def error_time(u: np.ndarray, u_ref: np.ndarray, mask: np.ndarray) -> float:
    """max-norm difference on M+ between runs on the same mesh."""
    u = np.asarray(u)
    u_ref = np.asarray(u_ref)
    if u.shape != u_ref.shape or u.shape != np.shape(mask):
        raise ValueError("fields live on different meshes")
    return float(np.max(np.abs(u - u_ref)[mask]))


def max_density(rho, masks) -> float:
    rho, masks = _as_list(rho), _as_list(masks)
    vals = []
    for r, m in zip(rho, masks):
        if not np.any(m):
            raise ValueError("maximum over an empty set")
        vals.append(np.max(np.abs(r[m])))
    return float(max(vals))


def second_moment(rho, grids, masks) -> float:
    total = 0.0
    for r, g, m in zip(_as_list(rho), _as_list(grids), _as_list(masks)):
        x, y, z = g.axes()
        r2 = x ** 2 + y ** 2 + z ** 2
        total += g.h ** 3 * float(np.sum((r2 * r)[m]))
    return total


def mass(rho, grids, masks) -> float:
    return float(sum(g.h ** 3 * np.sum(r[m]) for r, g, m in
                     zip(_as_list(rho), _as_list(grids), _as_list(masks))))


def _free_energy_one(rho, c, h, mask):
    r = rho[mask]
    if np.any(r < 0):
        raise ValueError("free energy needs a non-negative density")
    rlogr = np.zeros_like(r)
    pos = r > 0
    rlogr[pos] = r[pos] * np.log(r[pos])
    cp = np.pad(c, 1)
    grad2 = ((cp[2:, 1:-1, 1:-1] - cp[:-2, 1:-1, 1:-1]) ** 2
             + (cp[1:-1, 2:, 1:-1] - cp[1:-1, :-2, 1:-1]) ** 2
             + (cp[1:-1, 1:-1, 2:] - cp[1:-1, 1:-1, :-2]) ** 2)
    cm = c[mask]
    dens = rlogr - r * cm + 0.5 * cm ** 2 + grad2[mask] / (8.0 * h ** 2)
    return h ** 3 * float(np.sum(dens))


def free_energy(rho, c, grids, masks) -> float:
    """Discrete free energy summed over (sub)domains, with 0 ln 0 = 0."""
    return float(sum(_free_energy_one(r, cc, g.h, m) for r, cc, g, m in
                     zip(_as_list(rho), _as_list(c), _as_list(grids), _as_list(masks))))


def blow_up_check(max_now: float, max_prev: float, threshold: float = BLOW_UP_JUMP) -> bool:
    """True once the max density jumps by at least ``threshold`` in one step."""
    return bool(max_now - max_prev >= threshold)


def observed_rates(errors, factor: float = 2.0) -> np.ndarray:
    """log_factor of successive error ratios."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(factor)
