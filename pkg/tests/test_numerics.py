"""Quadrature, special-function, and RNG-stream building blocks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from skewdiff.numerics import (PanelGrid, QuadConfig, QuadratureError,
                               RngStream, beta_product_bound,
                               gauss_legendre_panel, gaussian_kernel,
                               gaussian_kernel_dz, mittag_leffler,
                               panelized_nodes, quad_space,
                               quad_time_singular)


def test_gaussian_kernel_matches_normal_pdf():
    z = np.linspace(-6.0, 6.0, 41)
    for C in (0.03, 1.0, 7.5):
        ref = stats.norm.pdf(z, scale=math.sqrt(C))
        got = gaussian_kernel(C, z)
        assert np.max(np.abs(got - ref)) < 1e-15
    assert gaussian_kernel(2.0, 0.5) == pytest.approx(
        stats.norm.pdf(0.5, scale=math.sqrt(2.0)), rel=1e-14)


def test_gaussian_kernel_rejects_bad_variance():
    with pytest.raises(ValueError):
        gaussian_kernel(0.0, 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel(-1.0, 1.0)


def test_gaussian_kernel_dz_matches_finite_differences():
    z = np.array([-2.3, -0.7, 0.0, 0.4, 1.9])
    d = 1e-5
    for C in (0.5, 2.0):
        for order in (1, 2, 3, 4):
            lower = lambda u: gaussian_kernel_dz(C, u, order - 1)
            fd = (lower(z + d) - lower(z - d)) / (2.0 * d)
            got = gaussian_kernel_dz(C, z, order)
            assert np.max(np.abs(got - fd)) < 1e-5
    with pytest.raises(ValueError):
        gaussian_kernel_dz(1.0, 0.0, 5)


def test_mittag_leffler_closed_forms():
    for z in (-2.0, -0.3, 0.0, 0.7, 3.0):
        assert mittag_leffler(1.0, 1.0, z) == pytest.approx(
            math.exp(z), rel=1e-11)
        if z != 0.0:
            assert mittag_leffler(1.0, 2.0, z) == pytest.approx(
                math.expm1(z) / z, rel=1e-11)
    for z in (0.2, 1.5, 4.0):
        assert mittag_leffler(2.0, 1.0, z) == pytest.approx(
            math.cosh(math.sqrt(z)), rel=1e-11)
    # E_{1/2,1}(z) = exp(z^2) erfc(-z)
    for z in (-1.2, 0.4, 2.0):
        ref = math.exp(z * z) * special.erfc(-z)
        assert mittag_leffler(0.5, 1.0, z) == pytest.approx(ref, rel=1e-10)


def test_mittag_leffler_domain_checks():
    with pytest.raises(ValueError):
        mittag_leffler(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        mittag_leffler(1.0, -1.0, 0.5)
    with pytest.raises(ValueError):
        mittag_leffler(1.0, 1.0, 51.0)


def test_beta_product_bound_matches_direct_product():
    def direct(r, eta, C, dt):
        val = C ** (r + 1) * dt ** (0.5 * r * eta)
        for i in range(1, r + 1):
            val *= (math.gamma(1.0 + 0.5 * (i - 1) * eta)
                    * math.gamma(0.5 * eta)
                    / math.gamma(1.0 + 0.5 * i * eta))
        return val

    for r in (0, 1, 2, 5):
        for eta in (0.5, 1.0):
            got = beta_product_bound(r, eta, 1.3, 0.25)
            assert got == pytest.approx(direct(r, eta, 1.3, 0.25),
                                        rel=1e-12)
    assert beta_product_bound(0, 1.0, 2.0, 0.1) == 2.0
    assert beta_product_bound(3, 1.0, 0.0, 0.1) == 0.0
    with pytest.raises(ValueError):
        beta_product_bound(-1, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        beta_product_bound(2, 1.5, 1.0, 0.1)


def test_gauss_legendre_panel_polynomial_exactness():
    z, w = gauss_legendre_panel(1.0, 3.0, 8)
    # degree 15 = 2n - 1 is integrated exactly
    got = float(w @ z ** 15)
    ref = (3.0 ** 16 - 1.0) / 16.0
    assert got == pytest.approx(ref, rel=1e-13)
    with pytest.raises(ValueError):
        gauss_legendre_panel(1.0, 1.0, 8)


def test_panelized_nodes_split_alignment():
    z, w = panelized_nodes(-1.0, 2.0, 12, split_points=(0.0,))
    assert np.sum(w) == pytest.approx(3.0, rel=1e-14)
    # |x| is polynomial on each side of the split, so exact
    assert float(w @ np.abs(z)) == pytest.approx(2.5, rel=1e-13)
    # no node straddles the split
    assert np.all(z != 0.0)


def test_quad_space_unit_mass_and_failure():
    cfg = QuadConfig()
    got = quad_space(lambda z: gaussian_kernel(1.0, z), 0.0, 1.0, cfg)
    assert got == pytest.approx(1.0, abs=1e-10)
    # a spike narrower than the node spacing leaves a visible doubling gap
    tight = QuadConfig(space_nodes=8, abs_tol=1e-12, rel_tol=1e-12)
    with pytest.raises(QuadratureError) as err:
        quad_space(lambda z: gaussian_kernel(1e-2, z - 0.37), 0.0, 1.0,
                   tight)
    assert err.value.error is not None and err.value.error > 0.0


def test_quad_time_singular_power_laws():
    cfg = QuadConfig()
    s, t = 0.2, 1.7
    got = quad_time_singular(lambda u: (t - u) ** -0.5, s, t, 0.5, cfg)
    assert got == pytest.approx(2.0 * math.sqrt(t - s), rel=1e-12)
    got = quad_time_singular(lambda u: (t - u) ** -0.3 * np.cos(u), s, t,
                             0.3, cfg)
    ref, _ = integrate.quad(lambda u: (t - u) ** -0.3 * math.cos(u), s, t)
    assert got == pytest.approx(ref, rel=1e-9)
    with pytest.raises(ValueError):
        quad_time_singular(lambda u: u, 0.0, 1.0, 1.0, cfg)


def test_panel_grid_interpolation():
    grid = PanelGrid(-2.0, 3.0, 16, split_points=(0.0,))
    vals = np.cos(grid.nodes)
    xq = np.array([-1.7, -0.2, 0.0, 0.9, 2.6])
    got = grid.interpolate(vals, xq)
    assert np.max(np.abs(got - np.cos(xq))) < 1e-10
    # node queries reproduce tabulated values exactly
    assert grid.interpolate(vals, grid.nodes[3:5]) == pytest.approx(
        vals[3:5], abs=0.0)
    # queries outside the domain evaluate to zero
    assert grid.interpolate(vals, np.array([-5.0, 8.0])) == pytest.approx(
        [0.0, 0.0], abs=0.0)


def test_quad_config_validation():
    with pytest.raises(ValueError):
        QuadConfig(space_nodes=1)
    with pytest.raises(ValueError):
        QuadConfig(singular_exponent=1.0)
    with pytest.raises(ValueError):
        QuadConfig(abs_tol=0.0)


def test_rng_stream_is_keyed_and_reproducible():
    a1 = RngStream(7, 3).generator().standard_normal(8)
    a2 = RngStream(7, 3).generator().standard_normal(8)
    b = RngStream(7, 4).generator().standard_normal(8)
    c = RngStream(8, 3).generator().standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
    # generator() hands out a fresh generator each call
    g = RngStream(1, 1)
    assert np.array_equal(g.generator().standard_normal(4),
                          g.generator().standard_normal(4))
