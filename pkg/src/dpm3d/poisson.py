"""Fast direct solver for the auxiliary problem (I - dt*Lap_h) v = q.

The cube carries homogeneous Dirichlet ghost values, so the 7-point
operator is diagonalised by the type-I discrete sine transform along each
axis.  A dense factorisation is kept alongside as a test oracle.
"""
from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import fft

__all__ = [
    "SolverPlan",
    "make_plan",
    "get_plan",
    "solve_ap",
    "apply_operator",
    "dense_oracle_solve",
    "set_workers",
    "get_workers",
]

_WORKERS: int | None = None


def set_workers(n: int | None) -> None:
    """Thread count handed to the FFT backend (``None`` restores the default)."""
    global _WORKERS
    _WORKERS = None if n is None else max(1, int(n))


def get_workers() -> int:
    if _WORKERS is not None:
        return _WORKERS
    env = os.environ.get("DPM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SolverPlan:
    n: int
    h: float
    dt: float
    eigenvalues: np.ndarray
    inv_symbol: np.ndarray

    def matches(self, n: int, h: float, dt: float) -> bool:
        return self.n == n and self.h == h and self.dt == dt


def make_plan(n: int, h: float, dt: float) -> SolverPlan:
    if n < 4 or not h > 0 or not dt > 0:
        raise ValueError(f"invalid plan parameters n={n}, h={h}, dt={dt}")
    m = np.arange(1, n + 1)
    lam = (2.0 / h ** 2) * (1.0 - np.cos(m * np.pi / (n + 1)))
    lam.setflags(write=False)
    symbol = 1.0 + dt * (lam[:, None, None] + lam[None, :, None] + lam[None, None, :])
    inv = 1.0 / symbol
    inv.setflags(write=False)
    return SolverPlan(n=n, h=float(h), dt=float(dt), eigenvalues=lam, inv_symbol=inv)


_PLAN_CACHE: OrderedDict = OrderedDict()
_PLAN_CACHE_SIZE = 4


def get_plan(n: int, h: float, dt: float) -> SolverPlan:
    """LRU-cached :func:`make_plan` (capacity 4)."""
    key = (int(n), float(h), float(dt))
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        plan = make_plan(*key)
        _PLAN_CACHE[key] = plan
        while len(_PLAN_CACHE) > _PLAN_CACHE_SIZE:
            _PLAN_CACHE.popitem(last=False)
    else:
        _PLAN_CACHE.move_to_end(key)
    return plan


def solve_ap(plan: SolverPlan, q: np.ndarray) -> np.ndarray:
    """Solve the auxiliary problem for one field or a stack of fields.

    ``q`` has shape ``(n, n, n)`` or ``(k, n, n, n)``; the result has the same
    shape and holds the interior values (the ghost layer is identically zero).
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-3:] != (plan.n,) * 3:
        raise ValueError(f"field shape {q.shape} does not match plan size {plan.n}")
    axes = (-3, -2, -1)
    w = get_workers()
    qh = fft.dstn(q, type=1, axes=axes, workers=w)
    qh *= plan.inv_symbol
    return fft.idstn(qh, type=1, axes=axes, workers=w, overwrite_x=True)


def apply_operator(v: np.ndarray, h: float, dt: float) -> np.ndarray:
    """(I - dt*Lap_h) v on the interior with zero ghost values."""
    v = np.asarray(v, dtype=float)
    lap = -6.0 * v
    lap[1:] += v[:-1]
    lap[:-1] += v[1:]
    lap[:, 1:] += v[:, :-1]
    lap[:, :-1] += v[:, 1:]
    lap[:, :, 1:] += v[:, :, :-1]
    lap[:, :, :-1] += v[:, :, 1:]
    return v - (dt / h ** 2) * lap


def operator_matrix(n: int, h: float, dt: float) -> sp.csr_matrix:
    """Sparse matrix of (I - dt*Lap_h) on n^3 unknowns in canonical order."""
    one = sp.identity(n, format="csr")
    d1 = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr")
    lap = (sp.kron(sp.kron(d1, one), one) + sp.kron(sp.kron(one, d1), one)
           + sp.kron(sp.kron(one, one), d1)) / h ** 2
    return (sp.identity(n ** 3, format="csr") - dt * lap).tocsr()


def dense_oracle_solve(n: int, h: float, dt: float, q: np.ndarray) -> np.ndarray:
    if n > 16:
        raise ValueError("dense oracle limited to n <= 16")
    a = operator_matrix(n, h, dt).toarray()
    v = scipy.linalg.solve(a, np.asarray(q, dtype=float).ravel(), assume_a="sym")
    return v.reshape((n, n, n))
