"""Boundary-layer parametrix: oracles, order counting, strip masses."""

import numpy as np
import pytest

from bicharlab.charts import DiskChart
from bicharlab.modes import stokes_disk_mode
from bicharlab.parametrix import (
    CollarField,
    ParametrixODEError,
    PolyStep,
    _forcing,
    _solve_correction,
    apply_parametrix,
    band_mass,
    build_parametrix,
    collar_poisson,
    dtn,
    extension_error,
    poisson_extend,
)
from bicharlab.polar import PolarGrid


def ring(n):
    return 2.0 * np.pi * np.arange(n) / n


# -- cutoff ramp -------------------------------------------------------------


def test_poly_step_values_and_smoothness():
    st = PolyStep(0.125, 0.25)
    assert st(0.1) == 0.0 and st(0.125) == 0.0
    assert st(0.25) == 1.0 and st(0.4) == 1.0
    t = np.linspace(0.1, 0.3, 301)
    vals = st(t)
    assert (np.diff(vals) >= -1e-15).all()
    # closed-form derivatives against central differences inside the ramp
    tt = np.linspace(0.13, 0.24, 57)
    eps = 1e-6
    d1_fd = (st(tt + eps) - st(tt - eps)) / (2 * eps)
    d2_fd = (st.d1(tt + eps) - st.d1(tt - eps)) / (2 * eps)
    assert np.abs(st.d1(tt) - d1_fd).max() < 1e-6
    assert np.abs(st.d2(tt) - d2_fd).max() < 1e-5
    # C^1 across the ends
    assert abs(st.d1(0.125 + 1e-9)) < 1e-5 and abs(st.d1(0.25 - 1e-9)) < 1e-5


# -- harmonic extension and boundary derivative ------------------------------


def test_poisson_extend_single_modes():
    grid = PolarGrid(48, 64)
    for m in (0, 1, 5, -7):
        q0 = np.exp(1j * m * ring(64))
        u = poisson_extend(q0, grid)
        want = grid.r[:, None] ** abs(m) * np.exp(1j * m * grid.theta)[None, :]
        assert np.abs(u - want).max() < 1e-12


def test_poisson_extend_is_harmonic():
    rng = np.random.default_rng(7)
    grid = PolarGrid(64, 64)
    c = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    th = ring(64)
    q0 = sum(c[i] * np.exp(1j * (i - 8) * th) for i in range(17))
    u = poisson_extend(q0, grid)
    res = grid.laplacian(u)
    assert grid.norm(res) < 1e-6 * grid.norm(u)
    assert np.abs(u[0, :] - q0).max() < 1e-10


def test_dtn_multiplier_and_trivials():
    n = 64
    th = ring(n)
    for m in (1, 4, 9):
        q0 = np.exp(1j * m * th)
        assert np.abs(dtn(q0) - m * q0).max() < 1e-11
    assert np.abs(dtn(np.ones(n))).max() == 0.0


def test_dtn_against_radial_derivative():
    # independent route: spectral d/dr of the harmonic extension at r = 1
    rng = np.random.default_rng(3)
    grid = PolarGrid(64, 64)
    th = ring(64)
    q0 = np.zeros(64, dtype=complex)
    for m in range(-10, 11):
        a = rng.standard_normal() + 1j * rng.standard_normal()
        q0 += a * np.exp(1j * m * th)
    u = poisson_extend(q0, grid)
    normal_deriv = grid.dr(u)[0, :]
    assert np.abs(normal_deriv - dtn(q0)).max() < 1e-8 * np.abs(dtn(q0)).max()


def test_dtn_symmetry_and_positivity():
    rng = np.random.default_rng(11)
    n = 48
    w = 2.0 * np.pi / n
    for _ in range(20):
        p = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lhs = w * np.vdot(q, dtn(p))
        rhs = w * np.vdot(dtn(q), p)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))
        quad = w * np.vdot(q, dtn(q))
        assert quad.real > -1e-12
        assert abs(quad.imag) < 1e-10 * max(1.0, quad.real)


# -- layer symbols -----------------------------------------------------------


def test_leading_symbol_closed_form():
    sym = build_parametrix(order=0)
    rng = np.random.default_rng(5)
    y = rng.uniform(0.0, 0.3, 40)
    xi = rng.uniform(-2.0, 2.0, 40)
    h = 0.05
    lam = np.abs(xi) / (1.0 - y)
    want = np.exp(-y * lam / h) * sym.step(lam)
    assert np.abs(sym.a0(y, xi, h) - want).max() < 1e-14


def test_symbol_boundary_values():
    sym = build_parametrix(order=1)
    xi = np.array([0.3, 0.7, 1.4, -1.0])
    h = 1.0 / 24
    a0 = sym.a0(np.zeros(4), xi, h)
    assert np.abs(a0 - sym.step(np.abs(xi))).max() < 1e-14
    a1 = sym.a1(np.array([0.0]), xi, h)
    assert np.abs(a1).max() < 1e-13


def test_correction_vanishes_below_cutoff():
    sym = build_parametrix(order=1)
    # lam(y) stays under delta0/2 throughout the collar for this frequency
    vals = sym.a1(np.linspace(0.0, 0.3, 31), np.array([0.05]), 1.0 / 32)
    assert np.abs(vals).max() == 0.0


def test_correction_solves_depth_ode():
    chart = DiskChart()
    st = PolyStep(0.125, 0.25)
    h = 1.0 / 32
    xi = np.array([1.0])
    ys, corr, corr_v = _solve_correction(chart, st, xi, h, 0.3, 2000)
    dt = ys[1] - ys[0]
    # stored derivative agrees with a high-order difference of the values
    mid_fd = (corr[:-4] - 8 * corr[1:-3] + 8 * corr[3:-1] - corr[4:]) / (12 * dt)
    assert np.abs(mid_fd - corr_v[2:-2]).max() < 1e-6 * np.abs(corr_v).max()
    # the ODE itself: h^2 A'' - lam^2 A = F at interior nodes
    second = (corr_v[2:] - corr_v[:-2]) / (2 * dt)
    lam = chart.lam_jet(ys[1:-1, None], np.abs(xi)[None, :])[0]
    F = np.stack([_forcing(chart, st, y, xi, h) for y in ys[1:-1]])
    resid = h * h * second - lam**2 * corr[1:-1] - F
    assert np.abs(resid).max() < 2e-2 * np.abs(F).max()


def test_build_validation():
    with pytest.raises(ValueError):
        build_parametrix(order=2)
    with pytest.raises(ValueError):
        build_parametrix(delta0=0.0)
    with pytest.raises(ValueError):
        build_parametrix(eps0=1.2)

    class NoJet:
        pass

    with pytest.raises(TypeError):
        build_parametrix(chart=NoJet())


def test_ode_failure_names_frequency():
    class HostileChart:
        def lam_jet(self, y, xip):
            return DiskChart().lam_jet(y, xip)

        def curvature_h(self, y):
            return 1e308

    sym = build_parametrix(chart=HostileChart(), order=1)
    with pytest.raises(ParametrixODEError, match=r"diverged.*xi'\) = \(any, \[1\."):
        sym.a1(np.array([0.1]), np.array([1.0]), 1.0 / 32)


# -- quantized extension vs the exact one ------------------------------------


def test_extension_error_leading_order():
    sym = build_parametrix(order=0)
    e32 = extension_error(sym, 32)
    e64 = extension_error(sym, 64)
    # measured 0.0180 and 0.0093: C h with C near 0.6
    assert e32 < 1.0 / 32
    assert e64 < 1.0 / 64 * 1.0
    assert 1.4 < e32 / e64 < 2.6


def test_extension_error_first_order_improves():
    s0 = build_parametrix(order=0)
    s1 = build_parametrix(order=1)
    for m in (32, 64):
        e0 = extension_error(s0, m)
        e1 = extension_error(s1, m)
        assert e1 < 0.1 * e0
        # quadratic in h: measured 0.149 / m^2
        assert e1 * m * m < 0.5


def test_extension_error_h_ladder():
    sym = build_parametrix(order=0)
    errs = [extension_error(sym, m) for m in (32, 64, 128)]
    for e, m in zip(errs, (32, 64, 128)):
        assert 0.1 < e * m < 2.0
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(1.4 < r < 2.6 for r in ratios)


def test_low_modes_annihilated_exactly():
    sym = build_parametrix(order=0)
    h = 1.0 / 32
    n = 128
    th = ring(n)
    low = np.exp(3j * th)  # h * 3 < delta0 / 2
    out = apply_parametrix(sym, low, h)
    assert np.abs(out.values).max() == 0.0
    mixed = low + np.exp(40j * th)
    got = apply_parametrix(sym, mixed, h)
    alone = apply_parametrix(sym, np.exp(40j * th), h)
    assert np.abs(got.values - alone.values).max() < 1e-12


def test_multimode_extension_accuracy():
    rng = np.random.default_rng(23)
    sym = build_parametrix(order=0)
    h = 1.0 / 40
    n = 256
    th = ring(n)
    q0 = np.zeros(n, dtype=complex)
    for m in range(20, 61):
        q0 += (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(1j * m * th)
    got = apply_parametrix(sym, q0, h)
    ref = collar_poisson(sym, q0, h)
    diff = CollarField(got.y, got.weights, got.theta, got.values - ref.values)
    assert diff.norm() / ref.norm() < 0.05


def test_collar_norm_measure():
    y = np.array([0.1, 0.2])
    w = np.array([0.15, 0.15])
    theta = ring(16)
    f = CollarField(y, w, theta, np.ones((2, 16), dtype=complex))
    assert abs(f.norm() - np.sqrt(0.3 * 2 * np.pi)) < 1e-12


# -- strip masses ------------------------------------------------------------


def test_band_mass_against_closed_form():
    grid = PolarGrid(96, 128)
    m, h = 32, 1.0 / 32
    field = grid.r[:, None] ** m * np.exp(1j * m * grid.theta)[None, :]
    got = band_mass(field, grid, 0.0, h)
    want = 2.0 * np.pi * (1.0 - 0.7 ** (2 * m + 1)) / (2 * m + 1)
    assert abs(got - want) < 1e-9 * want


def test_band_mass_pressure_layer():
    md = stokes_disk_mode(32, 1)
    h = md.h
    total = band_mass(md.pressure, md.grid, 0.0, h)
    deep = band_mass(md.pressure, md.grid, 5.0 * h, h)
    c = 2.0 * 32 * h
    assert deep <= (np.exp(-5.0 * c) + h) * total
    y0s = np.array([0.0, 2 * h, 4 * h, 6 * h])
    masses = [band_mass(md.pressure, md.grid, y0, h) for y0 in y0s]
    slope = np.polyfit(y0s, np.log(masses), 1)[0]
    assert abs(slope + c / h) < 0.2 * c / h


def test_band_mass_fixed_across_radial_index():
    vals = [band_mass(md.pressure, md.grid, 0.0, md.h)
            for md in (stokes_disk_mode(8, k) for k in range(1, 6))]
    assert max(vals) / min(vals) < 1.02


def test_band_mass_input_validation():
    grid = PolarGrid(24, 32)
    f = np.ones((24, 32), dtype=complex)
    with pytest.raises(ValueError):
        band_mass(f, grid, 0.5, 0.05, eps0=0.3)
