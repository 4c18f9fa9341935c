"""Cartesian auxiliary grids, point-set classification and sphere geometry.

Cell centres of an ``N x N x N`` grid are addressed by zero-based array
indices ``(j, k, l)``; flattening in C order gives the canonical
lexicographic ordering used for every vector over a point set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "Sphere",
    "Region",
    "PointClassification",
    "BoundaryGeometry",
    "build_grid",
    "classify_points",
    "boundary_projection",
    "project_points",
    "case2_boundary_split",
    "dilate7",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform cubic grid embedding a ball of radius ``radius``.

    The cube is ``center +- (radius + 2h)`` with ``h = 2 radius / (n - 4)``,
    so that two layers of cells surround the ball on every side.
    """

    radius: float
    n: int
    h: float
    center: tuple[float, float, float]
    cube_min: tuple[float, float, float]
    cube_max: tuple[float, float, float]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n ** 3

    def axis(self, i: int) -> np.ndarray:
        """Cell-centre coordinates along axis ``i``."""
        return self.cube_min[i] + (np.arange(self.n) + 0.5) * self.h

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays of shape (n,1,1), (1,n,1), (1,1,n)."""
        x = self.axis(0)[:, None, None]
        y = self.axis(1)[None, :, None]
        z = self.axis(2)[None, None, :]
        return x, y, z

    def coords_of(self, flat: np.ndarray) -> np.ndarray:
        """Coordinates (m, 3) of the cell centres with the given flat indices."""
        j, k, l = np.unravel_index(np.asarray(flat), self.shape)
        return np.stack([self.axis(0)[j], self.axis(1)[k], self.axis(2)[l]], axis=-1)


def build_grid(r: float, n: int, center=(0.0, 0.0, 0.0)) -> GridSpec:
    if n < 8:
        raise ValueError(f"need at least 8 cells per axis, got {n}")
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    h = 2.0 * r / (n - 4)
    c = tuple(float(v) for v in center)
    half = r + 2.0 * h
    return GridSpec(
        radius=float(r),
        n=int(n),
        h=h,
        center=c,
        cube_min=tuple(v - half for v in c),
        cube_max=tuple(v + half for v in c),
    )


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    closed: bool = False

    def distance2(self, x, y, z):
        cx, cy, cz = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2

    def contains(self, x, y, z):
        d2 = self.distance2(x, y, z)
        r2 = self.radius ** 2
        return d2 <= r2 if self.closed else d2 < r2


@dataclass(frozen=True)
class Region:
    """Intersection of ``inside`` balls minus the union of ``outside`` balls."""

    inside: tuple[Sphere, ...]
    outside: tuple[Sphere, ...] = ()

    def contains(self, x, y, z):
        mask = self.inside[0].contains(x, y, z)
        for s in self.inside[1:]:
            mask = mask & s.contains(x, y, z)
        for s in self.outside:
            mask = mask & ~s.contains(x, y, z)
        return mask


def dilate7(mask: np.ndarray) -> np.ndarray:
    """Union of 7-point stencils centred on ``mask`` (clipped to the cube)."""
    out = mask.copy()
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[:, :, 1:] |= mask[:, :, :-1]
    out[:, :, :-1] |= mask[:, :, 1:]
    return out


@dataclass
class PointClassification:
    """Point sets of one grid with respect to one region.

    All masks have the grid shape.  Ghost centres (one layer outside the
    cube) never belong to N+ because the region is at least 1.5h away from
    the cube faces, so they are not represented explicitly.
    """

    grid: GridSpec
    mplus: np.ndarray
    nplus: np.ndarray
    nminus: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def mminus(self) -> np.ndarray:
        return ~self.mplus

    @property
    def gamma(self) -> np.ndarray:
        if "gamma" not in self._cache:
            self._cache["gamma"] = self.nplus & self.nminus
        return self._cache["gamma"]

    @property
    def gamma_in(self) -> np.ndarray:
        return self.gamma & self.mplus

    @property
    def gamma_ex(self) -> np.ndarray:
        return self.gamma & ~self.mplus

    def indices(self, name: str) -> np.ndarray:
        """Flat indices of a named set in canonical (lexicographic) order."""
        key = "idx_" + name
        if key not in self._cache:
            self._cache[key] = np.flatnonzero(getattr(self, name))
        return self._cache[key]


def classify_points(grid: GridSpec, region) -> PointClassification:
    x, y, z = grid.axes()
    mplus = np.broadcast_to(region.contains(x, y, z), grid.shape).copy()
    nplus = dilate7(mplus)
    nminus = dilate7(~mplus)
    return PointClassification(grid=grid, mplus=mplus, nplus=nplus, nminus=nminus)


@dataclass
class BoundaryGeometry:
    """Projection data of grid points onto a sphere.

    ``d`` is the signed distance along the outward normal (positive outside
    the ball), ``theta``/``phi`` are the polar/azimuthal angles of the
    projection about the sphere centre.
    """

    projection: np.ndarray
    d: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    normal: np.ndarray

    def __len__(self) -> int:
        return len(self.d)

    def subset(self, mask) -> "BoundaryGeometry":
        return BoundaryGeometry(self.projection[mask], self.d[mask], self.theta[mask],
                                self.phi[mask], self.normal[mask])


def project_points(points: np.ndarray, sphere: Sphere) -> BoundaryGeometry:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = pts - np.asarray(sphere.center)
    dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    if np.any(dist == 0.0):
        raise ValueError("cannot project the sphere centre onto the sphere")
    n = rel / dist[:, None]
    proj = np.asarray(sphere.center) + sphere.radius * n
    theta = np.arccos(np.clip(n[:, 2], -1.0, 1.0))
    phi = np.arctan2(n[:, 1], n[:, 0])
    return BoundaryGeometry(projection=proj, d=dist - sphere.radius, theta=theta, phi=phi, normal=n)


def boundary_projection(point, sphere: Sphere):
    """Orthogonal projection of a single point; returns (proj, d, theta, phi, n)."""
    g = project_points(np.asarray(point, dtype=float)[None, :], sphere)
    return g.projection[0], float(g.d[0]), float(g.theta[0]), float(g.phi[0]), g.normal[0]


def case2_boundary_split(geom: BoundaryGeometry, theta_star: float, eps: float):
    """Masks of the cap part [0, theta*+eps] and the remainder [theta*-eps, pi]."""
    if not 0.0 < theta_star < np.pi:
        raise ValueError("theta_star must lie strictly between 0 and pi")
    first = geom.theta <= theta_star + eps
    second = geom.theta >= theta_star - eps
    return first, second
