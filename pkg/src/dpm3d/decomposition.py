"""Geometry of the single-domain method and the two-subdomain splittings.

Case 1 cuts a concentric ball out of the sphere; Case 2 cuts a cap around
the north pole, so the interface meets the outer boundary along a circle.
Both produce :class:`~dpm3d.dpm.Subdomain` objects that the generic boundary
equation machinery consumes; interface coefficients form a single unknown
block shared by the two subdomains.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dpm import DensityPiece, Subdomain, UnknownBlock
from .mesh import Region, Sphere, build_grid, case2_boundary_split, classify_points, project_points

log = logging.getLogger(__name__)

__all__ = [
    "SubdomainSetup",
    "setup_single",
    "setup_case1",
    "setup_case2",
    "effective_density",
    "case2_angles",
]

ORIGIN = (0.0, 0.0, 0.0)


@dataclass
class SubdomainSetup:
    """Subdomains plus the layout of the spectral unknowns they share."""

    case: str
    subdomains: list
    layout: tuple
    outer: Sphere
    interface: Sphere | None = None
    theta_star: float | None = None
    eps: dict = field(default_factory=dict)
    uncovered: int = 0

    @property
    def h_min(self) -> float:
        return min(s.grid.h for s in self.subdomains)

    @property
    def ncols(self) -> int:
        return sum(b.size for b in self.layout)


def effective_density(u_first: np.ndarray, u_second: np.ndarray, in_first: np.ndarray,
                      in_second: np.ndarray) -> np.ndarray:
    """Combine two candidate densities on a common support.

    ``in_first``/``in_second`` flag which candidate exists at each point;
    where both exist the mean is taken, elsewhere the unique candidate.
    """
    in_first = np.asarray(in_first, dtype=bool)
    in_second = np.asarray(in_second, dtype=bool)
    if np.any(~(in_first | in_second)):
        raise ValueError("every point needs at least one candidate value")
    out = np.where(in_first, u_first, u_second).astype(float)
    both = in_first & in_second
    out[both] = 0.5 * (np.asarray(u_first)[both] + np.asarray(u_second)[both])
    return out


def _discrete_boundary(grid, sphere: Sphere) -> np.ndarray:
    """gamma of the full ball bounded by ``sphere`` on ``grid`` (flat mask)."""
    return classify_points(grid, Region((sphere,))).gamma.reshape(-1)


def _make_pieces(grid, cls, candidates):
    """Split the density set among surfaces.

    ``candidates`` is a list of (name, sphere, block, flat mask or None,
    window function or None).  Points claimed by no candidate are given to
    the nearest surface.
    """
    support = cls.indices("gamma")
    pts = grid.coords_of(support)
    claims = []
    for name, sphere, block, mask, window in candidates:
        sel = np.ones(support.size, dtype=bool) if mask is None else mask[support].copy()
        if window is not None and np.any(sel):
            sel[sel] = window(project_points(pts[sel], sphere))
        claims.append((name, sphere, block, sel))
    claimed = np.zeros(support.size, dtype=bool)
    for c in claims:
        claimed |= c[3]
    uncovered = int(np.sum(~claimed))
    if uncovered:
        dist = np.stack([np.abs(np.linalg.norm(pts - np.asarray(c[1].center), axis=1) - c[1].radius)
                         for c in claims])
        nearest = np.argmin(dist, axis=0)
        for i, c in enumerate(claims):
            c[3][~claimed & (nearest == i)] = True
        log.info("%d density points assigned to the nearest surface", uncovered)
    pieces = []
    for name, sphere, block, sel in claims:
        if np.any(sel):
            pieces.append(DensityPiece(name=name, flat=support[sel],
                                       geom=project_points(pts[sel], sphere), block=block))
    return pieces, uncovered


def _boundary_block(harmonics: int, beta: int) -> UnknownBlock:
    if beta not in (0, 1):
        raise ValueError("boundary extension order must be 0 or 1")
    return UnknownBlock("boundary", harmonics, (0, 2) if beta == 1 else (0,))


def setup_single(n: int, harmonics: int = 1, beta: int = 1, r: float = 0.5) -> SubdomainSetup:
    outer = Sphere(ORIGIN, r)
    grid = build_grid(r, n)
    cls = classify_points(grid, Region((outer,)))
    block = _boundary_block(harmonics, beta)
    pieces, _ = _make_pieces(grid, cls, [("gamma", outer, block.name, None, None)])
    sub = Subdomain("omega", grid, cls, pieces)
    return SubdomainSetup(case="sd", subdomains=[sub], layout=(block,), outer=outer)


def setup_case1(n1: int, n2: int, harmonics: int = 1, beta: int = 1,
                interface_harmonics: int = 20, r: float = 0.5, r1: float = 0.25) -> SubdomainSetup:
    """Concentric split: inner ball of radius ``r1`` and the surrounding shell."""
    if not 0 < r1 < r:
        raise ValueError("need 0 < r1 < r")
    outer = Sphere(ORIGIN, r)
    inner = Sphere(ORIGIN, r1, closed=True)
    bblock = _boundary_block(harmonics, beta)
    zblock = UnknownBlock("interface", interface_harmonics, (0, 1, 2))

    g1 = build_grid(r1, n1)
    c1 = classify_points(g1, Region((inner,)))
    p1, u1 = _make_pieces(g1, c1, [("zeta1", inner, zblock.name, None, None)])

    g2 = build_grid(r, n2)
    c2 = classify_points(g2, Region((outer,), outside=(inner,)))
    p2, u2 = _make_pieces(g2, c2, [
        ("gamma", outer, bblock.name, _discrete_boundary(g2, outer), None),
        ("zeta2", inner, zblock.name, _discrete_boundary(g2, inner), None),
    ])
    subs = [Subdomain("omega1", g1, c1, p1), Subdomain("omega2", g2, c2, p2)]
    return SubdomainSetup(case="case1", subdomains=subs, layout=(bblock, zblock), outer=outer,
                          interface=inner, uncovered=u1 + u2)


def case2_angles(r: float, r1: float, pole_height: float):
    """Polar angle of the circle where the cap sphere meets the outer sphere,
    measured about the origin (theta*) and about the pole (psi*)."""
    z = (r ** 2 - r1 ** 2 + pole_height ** 2) / (2.0 * pole_height)
    theta_star = float(np.arccos(z / r))
    psi_star = float(np.arccos((z - pole_height) / r1))
    return theta_star, psi_star


def setup_case2(n1: int, n2: int, harmonics: int = 150, beta: int = 0,
                interface_harmonics: int = 20, r: float = 0.5, r1: float = 0.25,
                pole=(0.0, 0.0, 0.5), eps_cells: float = 2.0) -> SubdomainSetup:
    """Cap split around ``pole``: Omega1 = Omega n ball(pole, r1), Omega2 the rest.

    The outer boundary is split by the polar angle of the projection with a
    band of ``eps_cells`` grid spacings (as an angle on each sphere) around
    the circle where the two spheres meet.
    """
    if not 0 < r1 < r:
        raise ValueError("need 0 < r1 < r")
    pole = tuple(float(v) for v in pole)
    if pole[0] != 0.0 or pole[1] != 0.0 or pole[2] <= 0.0:
        raise ValueError("the cap must be centred on the positive z axis")
    outer = Sphere(ORIGIN, r)
    cap = Sphere(pole, r1, closed=True)
    theta_star, psi_star = case2_angles(r, r1, pole[2])
    bblock = _boundary_block(harmonics, beta)
    zblock = UnknownBlock("interface", interface_harmonics, (0, 1, 2))

    subs, total_unc, eps = [], 0, {}
    specs = [
        ("omega1", build_grid(r1, n1, center=pole), Region((outer, cap)), 0),
        ("omega2", build_grid(r, n2), Region((outer,), outside=(cap,)), 1),
    ]
    for name, grid, region, side in specs:
        cls = classify_points(grid, region)
        eg = eps_cells * grid.h / r
        ez = eps_cells * grid.h / r1
        eps[name] = (eg, ez)

        def gwin(geom, side=side, eg=eg):
            return case2_boundary_split(geom, theta_star, eg)[side]

        def zwin(geom, ez=ez):
            return geom.theta >= psi_star - ez

        tag = name[-1]
        pieces, unc = _make_pieces(grid, cls, [
            ("gamma" + tag, outer, bblock.name, _discrete_boundary(grid, outer), gwin),
            ("zeta" + tag, cap, zblock.name, _discrete_boundary(grid, cap), zwin),
        ])
        total_unc += unc
        subs.append(Subdomain(name, grid, cls, pieces))
    return SubdomainSetup(case="case2", subdomains=subs, layout=(bblock, zblock), outer=outer,
                          interface=cap, theta_star=theta_star, eps=eps, uncovered=total_unc)
