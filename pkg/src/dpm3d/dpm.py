"""Difference potentials: particular solutions, potentials, boundary equations
with projections, spectral extension and the generalized Green's formula.

A subdomain carries one grid and a density support ``D = N+ n N-``.  The
support is covered by one or more *pieces*, each attached to a surface
(the outer sphere or an interface sphere) and to a block of spectral
unknowns.  Where two pieces overlap the density used for the potential is
the average of the two candidate values, while each candidate still gives
its own row in the least-squares system.  The single-domain method is the
special case of one subdomain with one piece.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .mesh import BoundaryGeometry, GridSpec, PointClassification
from .poisson import SolverPlan, apply_operator, get_plan, solve_ap

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryDensity",
    "SpectralCoefficients",
    "UnknownBlock",
    "DensityPiece",
    "Subdomain",
    "BepSystem",
    "particular_solution",
    "difference_potential",
    "trace",
    "zonal_basis",
    "zonal_table",
    "extension_column",
    "extension_matrix",
    "assemble_bep",
    "solve_bep",
    "reconstruct_density",
    "greens_formula",
    "projection_matrix",
    "CONDITION_FLAG",
    "green_update",
    "UpdateInfo",
    "bep_rhs",
]

CONDITION_FLAG = 1e12
TERM_NAMES = ("value", "first normal derivative", "second normal derivative")


# ---------------------------------------------------------------------------
# single-grid building blocks
# ---------------------------------------------------------------------------

@dataclass
class BoundaryDensity:
    """Values over a set of grid points given by sorted flat indices."""

    flat: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.flat.shape:
            raise ValueError("density length does not match its support")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density must be finite")

    def to_grid(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        out.flat[self.flat] = self.values
        return out


def particular_solution(plan: SolverPlan, f: np.ndarray, cls: PointClassification) -> np.ndarray:
    """AP solution with right-hand side ``f`` on M+ and zero on M-.

    Returned on the whole grid; only N+ entries are meaningful.
    """
    return solve_ap(plan, np.where(cls.mplus, f, 0.0))


def difference_potential(plan: SolverPlan, v, cls: PointClassification) -> np.ndarray:
    """Potential of a density: AP solution with right-hand side L[v] on M-, 0 on M+.

    ``v`` is either a :class:`BoundaryDensity` or a grid array supported on
    the density set.
    """
    grid = v.to_grid(cls.grid.shape) if isinstance(v, BoundaryDensity) else np.asarray(v, dtype=float)
    lv = apply_operator(grid, plan.h, plan.dt)
    lv[cls.mplus] = 0.0
    return solve_ap(plan, lv)


def trace(u: np.ndarray, flat: np.ndarray) -> np.ndarray:
    """Restriction of a grid function to the points ``flat`` (canonical order)."""
    return np.asarray(u).reshape(-1)[flat]


def zonal_table(nmax: int, theta) -> np.ndarray:
    """Legendre values P_nu(cos theta) for nu = 0..nmax, shape (nmax+1, len(theta))."""
    if nmax < 0:
        raise ValueError("degree must be non-negative")
    x = np.cos(np.atleast_1d(np.asarray(theta, dtype=float)))
    out = np.empty((nmax + 1, x.size))
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def zonal_basis(nu: int, theta):
    """Zonal harmonic P_nu(cos theta)."""
    val = zonal_table(nu, theta)[nu]
    return float(val[0]) if np.ndim(theta) == 0 else val


def extension_column(geom: BoundaryGeometry, nu: int, term: int) -> np.ndarray:
    """Value of one extension basis function at each point of ``geom``."""
    if term not in (0, 1, 2):
        raise ValueError(f"extension term must be 0, 1 or 2, got {term}")
    phi = zonal_table(nu, geom.theta)[nu]
    if term == 0:
        return phi
    if term == 1:
        return geom.d * phi
    return 0.5 * geom.d ** 2 * phi


# ---------------------------------------------------------------------------
# spectral unknowns and density pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnknownBlock:
    """Spectral Cauchy data on one surface: ``harmonics`` zonal modes per term."""

    name: str
    harmonics: int
    terms: tuple[int, ...]

    def __post_init__(self):
        if self.harmonics < 1:
            raise ValueError("need at least one harmonic")
        if not self.terms or any(t not in (0, 1, 2) for t in self.terms):
            raise ValueError(f"invalid extension terms {self.terms}")

    @property
    def size(self) -> int:
        return len(self.terms) * self.harmonics


def extension_matrix(geom: BoundaryGeometry, block: UnknownBlock) -> np.ndarray:
    """Matrix (points, block.size) of extension columns, term-major then degree."""
    phi = zonal_table(block.harmonics - 1, geom.theta)
    cols = []
    for t in block.terms:
        if t == 0:
            cols.append(phi)
        elif t == 1:
            cols.append(phi * geom.d)
        else:
            cols.append(phi * (0.5 * geom.d ** 2))
    return np.concatenate(cols, axis=0).T.copy()


@dataclass
class SpectralCoefficients:
    """Coefficient vectors per unknown block, each of shape (terms, harmonics)."""

    blocks: dict

    @classmethod
    def from_vector(cls, layout, w: np.ndarray) -> "SpectralCoefficients":
        out, pos = {}, 0
        for b in layout:
            out[b.name] = w[pos:pos + b.size].reshape(len(b.terms), b.harmonics).copy()
            pos += b.size
        return cls(out)

    def vector(self, layout) -> np.ndarray:
        return np.concatenate([self.blocks[b.name].reshape(-1) for b in layout])


@dataclass
class DensityPiece:
    """Part of the density support attached to one surface and one unknown block."""

    name: str
    flat: np.ndarray
    geom: BoundaryGeometry
    block: str


@dataclass
class Subdomain:
    """One grid with its classification and the pieces covering its density set."""

    name: str
    grid: GridSpec
    cls: PointClassification
    pieces: list
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        support = self.cls.indices("gamma")
        covered = np.zeros(support.size, dtype=int)
        for p in self.pieces:
            pos = np.searchsorted(support, p.flat)
            if np.any(pos >= support.size) or np.any(support[np.minimum(pos, support.size - 1)] != p.flat):
                raise ValueError(f"piece {p.name} is not contained in the density set")
            covered[pos] += 1
        if np.any(covered == 0):
            raise ValueError(f"{int(np.sum(covered == 0))} density points not covered by any piece")
        self.support = support
        self.weights = 1.0 / covered
        self.nplus_flat = self.cls.indices("nplus")
        self.mplus_flat = self.cls.indices("mplus")

    @property
    def h(self) -> float:
        return self.grid.h

    def piece_positions(self, piece: DensityPiece) -> np.ndarray:
        return np.searchsorted(self.support, piece.flat)

    def row_mask(self, piece: DensityPiece) -> np.ndarray:
        """Which points of a piece carry an equation (those in M+)."""
        return self.cls.mplus.reshape(-1)[piece.flat]

    def overlap_count(self) -> int:
        return int(np.sum(self.weights < 1.0))


# ---------------------------------------------------------------------------
# boundary equations
# ---------------------------------------------------------------------------

@dataclass
class _SubdomainBlock:
    sub: Subdomain
    plan: SolverPlan
    effective: np.ndarray          # (|D|, K) effective density per unknown
    rows: list                     # per piece: (flat of row points, row slice in B)
    potentials: np.ndarray | None  # (K, |N+|) cached potentials on N+, or None
    active: np.ndarray             # unknown indices that touch this subdomain


@dataclass
class BepSystem:
    """Least-squares system for the spectral unknowns of all subdomains.

    The same matrix serves every field advanced with the same ``dt``.
    """

    layout: tuple
    dt: float
    matrix: np.ndarray
    parts: list
    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    rank: int
    condition: float
    svd: tuple | None = None

    @property
    def shape(self):
        return self.matrix.shape


def _batched_potentials(plan: SolverPlan, sub: Subdomain, dens: np.ndarray, budget: float) -> np.ndarray:
    """Potentials of several densities (columns of ``dens``), restricted to N+."""
    n3 = sub.grid.size
    k = dens.shape[1]
    batch = max(1, int(budget // (3 * 8 * n3)))
    out = np.empty((k, sub.nplus_flat.size))
    for s in range(0, k, batch):
        e = min(k, s + batch)
        q = np.zeros((e - s, n3))
        q[:, sub.support] = dens[:, s:e].T
        q = q.reshape((e - s,) + sub.grid.shape)
        for i in range(e - s):
            lv = apply_operator(q[i], plan.h, plan.dt)
            lv[sub.cls.mplus] = 0.0
            q[i] = lv
        v = solve_ap(plan, q)
        out[s:e] = v.reshape(e - s, -1)[:, sub.nplus_flat]
    return out


def assemble_bep(subdomains, layout, dt: float, *, cache_budget: float = 1.0e9,
                 work_budget: float = 4.0e8) -> BepSystem:
    """Build and factorize the reduced boundary equations for all subdomains.

    Column ``k`` of the matrix is ``Tr(I - P) e_k`` where ``e_k`` is the
    extension of the k-th spectral basis function, restricted to the rows of
    every piece (piece points in M+).  Potentials on N+ are kept when they
    fit in ``cache_budget`` bytes so that the Green's formula needs no
    extra transform solves.
    """
    layout = tuple(layout)
    offsets, pos = {}, 0
    for b in layout:
        offsets[b.name] = pos
        pos += b.size
    ncols = pos
    blocks = {b.name: b for b in layout}

    parts, row_blocks = [], []
    nrows = 0
    total_cache = 0.0
    for sub in subdomains:
        plan = get_plan(sub.grid.n, sub.grid.h, dt)
        eff = np.zeros((sub.support.size, ncols))
        ext = []
        for p in sub.pieces:
            b = blocks[p.block]
            e = extension_matrix(p.geom, b)
            ext.append(e)
            ip = sub.piece_positions(p)
            sl = slice(offsets[b.name], offsets[b.name] + b.size)
            eff[ip, sl] += sub.weights[ip, None] * e
        active = np.flatnonzero(np.any(eff != 0.0, axis=0))
        pots = _batched_potentials(plan, sub, eff[:, active], work_budget)
        np_pos = {}
        rows = []
        for p, e in zip(sub.pieces, ext):
            rmask = sub.row_mask(p)
            rflat = p.flat[rmask]
            ipos = np.searchsorted(sub.nplus_flat, rflat)
            b = blocks[p.block]
            blk = np.zeros((rflat.size, ncols))
            blk[:, offsets[b.name]:offsets[b.name] + b.size] = e[rmask]
            blk[:, active] -= pots[:, ipos].T
            rows.append((p.name, rflat, slice(nrows, nrows + rflat.size)))
            row_blocks.append(blk)
            nrows += rflat.size
            np_pos[p.name] = ipos
        nbytes = pots.nbytes
        keep = total_cache + nbytes <= cache_budget
        if keep:
            total_cache += nbytes
        parts.append(_SubdomainBlock(sub=sub, plan=plan, effective=eff, rows=rows,
                                     potentials=pots if keep else None, active=active))
    mat = np.vstack(row_blocks)
    if mat.shape[0] <= mat.shape[1]:
        raise ValueError(f"boundary equations are not over-determined: {mat.shape}")
    q, r, perm = scipy.linalg.qr(mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(mat.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    cond = float(diag[0] / diag[-1]) if diag.size and diag[-1] > 0 else float("inf")
    svd = None
    if rank < ncols:
        u, s, vt = scipy.linalg.svd(mat, full_matrices=False)
        keep = s > s[0] * max(mat.shape) * np.finfo(float).eps
        rank = int(np.sum(keep))
        svd = (u[:, keep], s[keep], vt[keep])
        log.info("rank-deficient boundary equations (%d of %d); using minimum-norm solutions",
                 rank, ncols)
    if cond > CONDITION_FLAG:
        log.info("boundary equations ill-conditioned: estimate %.3e", cond)
    return BepSystem(layout=layout, dt=float(dt), matrix=mat, parts=parts, q=q, r=r,
                     perm=perm, rank=rank, condition=cond, svd=svd)


def bep_rhs(system: BepSystem, particular: list) -> np.ndarray:
    """Stack the traces of the particular solutions on the row points."""
    out = np.empty(system.matrix.shape[0])
    for part, gf in zip(system.parts, particular):
        flat = gf.reshape(-1)
        for _, rflat, sl in part.rows:
            out[sl] = flat[rflat]
    return out


def solve_bep(system: BepSystem, rhs: np.ndarray):
    """Least-squares coefficients (one column per right-hand side) and relative residual."""
    rhs = np.asarray(rhs, dtype=float)
    single = rhs.ndim == 1
    b = rhs[:, None] if single else rhs
    if b.shape[0] != system.matrix.shape[0]:
        raise ValueError("right-hand side length does not match the number of equations")
    if system.svd is None:
        y = system.q.T @ b
        z = scipy.linalg.solve_triangular(system.r, y)
        w = np.empty_like(z)
        w[system.perm] = z
    else:
        u, s, vt = system.svd
        w = vt.T @ ((u.T @ b) / s[:, None])
    res = system.matrix @ w - b
    scale = np.max(np.abs(b), axis=0)
    rel = np.where(scale > 0, np.max(np.abs(res), axis=0) / np.where(scale > 0, scale, 1.0),
                   np.max(np.abs(res), axis=0))
    if single:
        return w[:, 0], float(rel[0])
    return w, rel


def reconstruct_density(coeffs: SpectralCoefficients, geom: BoundaryGeometry,
                        block: UnknownBlock) -> np.ndarray:
    """Extension of the spectral data of one block to the points of ``geom``."""
    return extension_matrix(geom, block) @ coeffs.blocks[block.name].reshape(-1)


def greens_formula(plan: SolverPlan, u_gamma, f: np.ndarray, cls: PointClassification) -> np.ndarray:
    """u = P(u_gamma) + G f, evaluated with one transform solve."""
    grid = (u_gamma.to_grid(cls.grid.shape) if isinstance(u_gamma, BoundaryDensity)
            else np.asarray(u_gamma, dtype=float))
    q = apply_operator(grid, plan.h, plan.dt)
    q[cls.mplus] = np.asarray(f)[cls.mplus] if np.ndim(f) else f
    return solve_ap(plan, q)


# ---------------------------------------------------------------------------
# full projection operator (small grids only, used by the oracles)
# ---------------------------------------------------------------------------

def projection_matrix(plan: SolverPlan, cls: PointClassification) -> np.ndarray:
    """Dense matrix of Tr_gamma P_gamma on the full density space (|gamma| x |gamma|)."""
    g = cls.indices("gamma")
    if g.size > 4000:
        raise ValueError("projection matrix only built for small grids")
    n3 = cls.grid.size
    out = np.empty((g.size, g.size))
    for s in range(0, g.size, 64):
        e = min(g.size, s + 64)
        q = np.zeros((e - s, n3))
        q[np.arange(e - s), g[s:e]] = 1.0
        q = q.reshape((e - s,) + cls.grid.shape)
        for i in range(e - s):
            lv = apply_operator(q[i], plan.h, plan.dt)
            lv[cls.mplus] = 0.0
            q[i] = lv
        v = solve_ap(plan, q).reshape(e - s, -1)
        out[:, s:e] = v[:, g].T
    return out


# ---------------------------------------------------------------------------
# one implicit update of several fields through the boundary equations
# ---------------------------------------------------------------------------

@dataclass
class UpdateInfo:
    residual: float
    clamp: float
    coefficients: np.ndarray


def green_update(system: BepSystem, sources: list, clamp: bool = True):
    """Advance fields whose M+ right-hand sides are given per subdomain.

    ``sources[s]`` has shape (nfields, n, n, n) on the grid of subdomain
    ``s``.  Returns the new fields (zero outside N+) and an
    :class:`UpdateInfo` with the worst residual and clamp magnitude.
    With ``clamp`` set, negative effective densities are set to zero before
    the Green's formula and negative reconstructed values on N+ afterwards;
    the largest magnitude removed is reported.
    """
    gfs = []
    for part, f in zip(system.parts, sources):
        f = np.asarray(f, dtype=float)
        q = np.where(part.sub.cls.mplus, f, 0.0)
        gfs.append(solve_ap(part.plan, q))
    nf = sources[0].shape[0]
    rhs = np.stack([bep_rhs(system, [g[j] for g in gfs]) for j in range(nf)], axis=1)
    w, rel = solve_bep(system, rhs)
    out, clamp_mag = [], 0.0
    for part, gf in zip(system.parts, gfs):
        sub = part.sub
        fields = np.zeros_like(gf)
        corrections = []
        for j in range(nf):
            v = part.effective @ w[:, j]
            vc = np.maximum(v, 0.0) if clamp else v
            if clamp and v.size:
                clamp_mag = max(clamp_mag, float(-v.min()) if v.min() < 0 else 0.0)
            if part.potentials is not None:
                u = gf[j].reshape(-1)[sub.nplus_flat] + w[part.active, j] @ part.potentials
                delta = vc - v
                if np.any(delta != 0.0):
                    corrections.append((j, delta))
            else:
                corrections.append((j, vc))
                u = gf[j].reshape(-1)[sub.nplus_flat]
            fields[j].reshape(-1)[sub.nplus_flat] = u
        if corrections:
            dens = np.stack([d for _, d in corrections], axis=1)
            pots = _batched_potentials(part.plan, sub, dens, 4.0e8)
            for (j, _), p in zip(corrections, pots):
                fields[j].reshape(-1)[sub.nplus_flat] += p
        if clamp:
            # the least-squares residual can leave small negative values where
            # the field is nearly zero; they are removed and reported
            vals = fields.reshape(nf, -1)[:, sub.nplus_flat]
            low = float(-vals.min()) if vals.size and vals.min() < 0 else 0.0
            clamp_mag = max(clamp_mag, low)
            if low > 0:
                fields.reshape(nf, -1)[:, sub.nplus_flat] = np.maximum(vals, 0.0)
        out.append(fields)
    return out, UpdateInfo(residual=float(np.max(rel)), clamp=clamp_mag, coefficients=w)
