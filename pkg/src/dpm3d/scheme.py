"""Finite-volume pieces of the IMEX scheme: limited reconstruction,
upwind convection, right-hand sides and the positivity time-step bound.

Neighbour values that fall outside N+ (or outside the cube) are replaced by
the value of the cell itself, which only matters for slopes at gamma_ex
cells and gives them a zero one-sided difference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "ModelParams",
    "FaceReconstruction",
    "minmod",
    "limited_slopes",
    "convection_term",
    "assemble_rhs",
    "cfl_dt",
    "cfl_from_gradients",
]


@dataclass(frozen=True)
class ModelParams:
    chi: float
    alpha: float = 1.0
    gamma_c: float = 1.0
    gamma_rho: float = 1.0

    def __post_init__(self):
        if not self.chi > 0:
            raise ValueError(f"chi must be positive, got {self.chi}")
        if (self.alpha, self.gamma_c, self.gamma_rho) != (1.0, 1.0, 1.0):
            raise ValueError("only alpha = gamma_c = gamma_rho = 1 is supported")


def minmod(*xs: float) -> float:
    if not xs:
        raise ValueError("minmod needs at least one argument")
    if all(x > 0 for x in xs):
        return min(xs)
    if all(x < 0 for x in xs):
        return max(xs)
    return 0.0


@dataclass
class FaceReconstruction:
    """Limited slopes (3, n, n, n) and the six one-sided face values per cell.

    Only entries on ``points`` are meaningful.
    """

    slopes: np.ndarray
    west: np.ndarray
    east: np.ndarray
    south: np.ndarray
    north: np.ndarray
    down: np.ndarray
    up: np.ndarray
    points: np.ndarray

    def faces(self):
        return (self.west, self.east, self.south, self.north, self.down, self.up)


def _shift(a, axis, off, fill):
    """``out[p] = a[p + off*e_axis]`` with ``fill`` where that leaves the cube."""
    out = np.empty_like(a) if fill is None else np.full_like(a, fill)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if off > 0:
        src[axis], dst[axis] = slice(off, None), slice(None, -off)
    else:
        src[axis], dst[axis] = slice(None, off), slice(-off, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _neighbour(rho, nplus, axis, off):
    val = _shift(rho, axis, off, 0.0)
    ok = _shift(nplus, axis, off, False)
    return np.where(ok, val, rho)


def limited_slopes(rho: np.ndarray, h: float, nplus: np.ndarray,
                   points: np.ndarray | None = None) -> FaceReconstruction:
    rho = np.asarray(rho, dtype=float)
    if points is None:
        points = nplus
    slopes = np.empty((3,) + rho.shape)
    for a in range(3):
        up = _neighbour(rho, nplus, a, 1)
        dn = _neighbour(rho, nplus, a, -1)
        d1 = 2.0 * (up - rho) / h
        d2 = (up - dn) / (2.0 * h)
        d3 = 2.0 * (rho - dn) / h
        s = np.zeros_like(rho)
        pos = (d1 > 0) & (d2 > 0) & (d3 > 0)
        neg = (d1 < 0) & (d2 < 0) & (d3 < 0)
        s[pos] = np.minimum(np.minimum(d1, d2), d3)[pos]
        s[neg] = np.maximum(np.maximum(d1, d2), d3)[neg]
        slopes[a] = s
    half = 0.5 * h
    return FaceReconstruction(
        slopes=slopes,
        west=rho - half * slopes[0], east=rho + half * slopes[0],
        south=rho - half * slopes[1], north=rho + half * slopes[1],
        down=rho - half * slopes[2], up=rho + half * slopes[2],
        points=np.asarray(points, dtype=bool),
    )


def convection_term(rho: np.ndarray, c: np.ndarray, params: ModelParams, h: float,
                    mplus: np.ndarray, nplus: np.ndarray, return_gradients: bool = False):
    """Upwind, limited discretisation of div(chi rho grad c) on M+ (zero elsewhere).

    With ``return_gradients`` the per-axis maximum of |grad c| over the faces
    of M+ cells is returned as well, which is what :func:`cfl_from_gradients`
    needs.
    """
    g, gmax = kernels.convection(rho, c, mplus, nplus, float(h), float(params.chi))
    if return_gradients:
        return g, gmax
    return g


def assemble_rhs(rho, c, g, dt: float, params: ModelParams | None = None):
    """IMEX right-hand sides (f_rho, f_c) for the implicit diffusion solves."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    f_rho = rho - dt * g
    f_c = (1.0 - dt) * c + dt * rho
    return f_rho, f_c


def cfl_from_gradients(gmax, chi: float, h: float) -> float:
    gmax = np.asarray(gmax, dtype=float)
    nz = gmax > 0
    if not nz.any():
        return float("inf")
    return float(np.min(h / (6.0 * chi * gmax[nz])))


def cfl_dt(c: np.ndarray, params: ModelParams, h: float, mplus: np.ndarray) -> float:
    """Largest step keeping the convection update non-negative (inf if unconstrained)."""
    c = np.asarray(c, dtype=float)
    gmax = np.zeros(3)
    for a in range(3):
        ge = (_shift(c, a, 1, 0.0) - c) / h
        gw = (c - _shift(c, a, -1, 0.0)) / h
        if mplus.any():
            gmax[a] = max(np.abs(ge[mplus]).max(), np.abs(gw[mplus]).max())
    return cfl_from_gradients(gmax, params.chi, h)
