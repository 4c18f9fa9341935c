import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpm3d import kernels
from dpm3d.scheme import (ModelParams, assemble_rhs, cfl_dt, cfl_from_gradients, convection_term,
                          limited_slopes, minmod)

from conftest import ball_classification


def test_minmod_examples():
    assert minmod(2, 1.5, 1) == 1
    assert minmod(-2, 1, 3) == 0
    assert minmod(-1, -2, -3) == -1
    assert minmod(0.0, 1.0) == 0
    with pytest.raises(ValueError):
        minmod()


def test_model_params():
    with pytest.raises(ValueError):
        ModelParams(chi=0.0)
    with pytest.raises(ValueError):
        ModelParams(chi=1.0, alpha=0.5)


def test_slopes_constant_field():
    _, cls = ball_classification(12)
    rec = limited_slopes(np.full(cls.mplus.shape, 3.0), 0.1, cls.nplus)
    assert not rec.slopes.any()
    for f in rec.faces():
        assert np.all(f == 3.0)


def test_slopes_linear_field():
    n, h = 10, 0.1
    nplus = np.ones((n, n, n), dtype=bool)
    rho = np.broadcast_to((np.arange(n) * h)[:, None, None], (n, n, n)).copy()
    rec = limited_slopes(rho, h, nplus)
    inner = (slice(1, -1),) * 3
    np.testing.assert_allclose(rec.slopes[0][inner], 1.0, rtol=1e-12)
    np.testing.assert_allclose((rec.east - rec.west)[inner], h, rtol=1e-12)


def test_slopes_spike():
    n = 9
    rho = np.zeros((n, n, n))
    rho[4, 4, 4] = 1.0
    rec = limited_slopes(rho, 0.1, np.ones_like(rho, dtype=bool))
    assert np.all(rec.slopes[:, 4, 4, 4] == 0.0)
    for f in rec.faces():
        assert f[4, 4, 4] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_reconstruction_positive_and_conservative(seed):
    _, cls = ball_classification(12)
    rho = np.random.default_rng(seed).random(cls.mplus.shape) * cls.nplus
    rec = limited_slopes(rho, 1 / 16, cls.nplus)
    for f in rec.faces():
        assert f[cls.nplus].min() >= 0.0
    mean = sum(rec.faces()) / 6.0
    np.testing.assert_allclose(mean[cls.nplus], rho[cls.nplus], rtol=1e-14, atol=1e-15)


def _brute_convection(rho, c, mplus, nplus, h, chi):
    """Cell-by-cell transcription of the upwind limited flux difference."""
    n = rho.shape[0]
    g = np.zeros_like(rho)

    def val(p, own):
        if all(0 <= v < n for v in p) and nplus[p]:
            return rho[p]
        return own

    def slope(p, e):
        own = rho[p]
        up = val(tuple(a + b for a, b in zip(p, e)), own)
        dn = val(tuple(a - b for a, b in zip(p, e)), own)
        return minmod(2 * (up - own) / h, (up - dn) / (2 * h), 2 * (own - dn) / h)

    for p in zip(*np.nonzero(mplus)):
        total = 0.0
        for e in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
            pe = tuple(a + b for a, b in zip(p, e))
            pw = tuple(a - b for a, b in zip(p, e))
            ge = (c[pe] - c[p]) / h
            gw = (c[p] - c[pw]) / h
            re = rho[p] + h / 2 * slope(p, e) if ge > 0 else rho[pe] - h / 2 * slope(pe, e)
            rw = rho[pw] + h / 2 * slope(pw, e) if gw > 0 else rho[p] - h / 2 * slope(p, e)
            total += re * ge - rw * gw
        g[p] = chi * total / h
    return g


@pytest.mark.parametrize("backend", ["compiled", "python"])
def test_convection_matches_brute_force(rng, backend):
    mod = kernels.compiled_backend if backend == "compiled" else kernels.python_backend
    if mod is None:
        pytest.skip("compiled kernel not built")
    g, cls = ball_classification(8)
    rho = rng.random(cls.mplus.shape) * cls.nplus
    c = rng.random(cls.mplus.shape) * cls.nplus
    out, _ = mod.convection(rho, c, cls.mplus, cls.nplus, g.h, 1.7)
    np.testing.assert_allclose(out, _brute_convection(rho, c, cls.mplus, cls.nplus, g.h, 1.7),
                               rtol=1e-12, atol=1e-12)


def test_backends_bitwise_identical(rng):
    if kernels.compiled_backend is None:
        pytest.skip("compiled kernel not built")
    g, cls = ball_classification(30)
    rho, c = rng.random((2,) + cls.mplus.shape)
    a = kernels.compiled_backend.convection(rho, c, cls.mplus, cls.nplus, g.h, 1.0)
    b = kernels.python_backend.convection(rho, c, cls.mplus, cls.nplus, g.h, 1.0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_convection_constant_c_is_zero(rng):
    g, cls = ball_classification(14)
    rho = rng.random(cls.mplus.shape)
    out = convection_term(rho, np.full(rho.shape, 2.5), ModelParams(1.0), g.h, cls.mplus, cls.nplus)
    assert not out.any()


def test_convection_quadratic_c():
    g, cls = ball_classification(14)
    x, _, _ = g.axes()
    c = np.broadcast_to(x ** 2, g.shape).copy()
    out = convection_term(np.full(g.shape, 3.0), c, ModelParams(1.5), g.h, cls.mplus, cls.nplus)
    np.testing.assert_allclose(out[cls.mplus], 2 * 1.5 * 3.0, rtol=1e-12)


def test_upwind_branch_switch():
    n, h = 9, 0.1
    full = np.ones((n, n, n), dtype=bool)
    mplus = np.zeros_like(full)
    mplus[4, 4, 4] = True
    rho = np.zeros((n, n, n))
    rho[4, 4, 4], rho[5, 4, 4] = 3.0, 2.0
    c = np.zeros((n, n, n))
    c[5, 4, 4] = 1.0  # positive east gradient: inside value
    up, _ = kernels.convection(rho, c, mplus, full, h, 1.0)
    c[5, 4, 4] = -1.0  # negative: outside value
    down, _ = kernels.convection(rho, c, mplus, full, h, 1.0)
    # inside: local maximum, zero slope, face value 3
    assert math.isclose(up[4, 4, 4], 3.0 * (1.0 / h) / h)
    # outside: slope of cell 5 is max(2*(0-2)/h, (0-3)/(2h), 2*(2-3)/h) = -15
    assert math.isclose(down[4, 4, 4], (2.0 + 0.5 * h * 15.0) * (-1.0 / h) / h)


def test_assemble_rhs_examples():
    f_rho, f_c = assemble_rhs(2.0, 4.0, 1.0, 0.5)
    assert (f_rho, f_c) == (1.5, 3.0)
    r = np.array([1.0, 2.0])
    assert np.array_equal(assemble_rhs(r, r * 3, 0.0, 0.1)[0], r)
    assert np.array_equal(assemble_rhs(r, r * 3, 0.0, 1.0)[1], r)
    with pytest.raises(ValueError):
        assemble_rhs(r, r, r, 0.0)


def test_cfl_examples():
    assert math.isclose(cfl_from_gradients([10, 10, 10], 1.0, 0.1), 0.1 / 60)
    assert cfl_from_gradients([0, 0, 0], 1.0, 0.1) == math.inf
    g, cls = ball_classification(14)
    assert cfl_dt(np.full(g.shape, 1.0), ModelParams(1.0), g.h, cls.mplus) == math.inf
    x, _, _ = g.axes()
    c = np.broadcast_to(5 * x, g.shape).copy()
    assert math.isclose(cfl_dt(c, ModelParams(1.0), g.h, cls.mplus), g.h / 30, rel_tol=1e-9)


def test_kernel_gradients_match_cfl(rng):
    g, cls = ball_classification(16)
    c = rng.random(g.shape)
    _, gm = convection_term(np.ones(g.shape), c, ModelParams(2.0), g.h, cls.mplus, cls.nplus,
                            return_gradients=True)
    assert math.isclose(cfl_from_gradients(gm, 2.0, g.h), cfl_dt(c, ModelParams(2.0), g.h, cls.mplus))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 5.0))
def test_positivity_of_explicit_update(seed, chi):
    """Under the CFL bound the explicit part rho - dt*g is non-negative on M+."""
    r = np.random.default_rng(seed)
    g, cls = ball_classification(12)
    rho = r.random(g.shape) * cls.nplus
    c = r.random(g.shape) * 10 * cls.nplus
    params = ModelParams(chi)
    dt = cfl_dt(c, params, g.h, cls.mplus)
    f_rho, _ = assemble_rhs(rho, c, convection_term(rho, c, params, g.h, cls.mplus, cls.nplus), dt)
    assert f_rho[cls.mplus].min() >= -1e-12 * rho.max()
