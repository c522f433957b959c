"""Closed-form skew transition family: densities, CDF, sampler, local time."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from skewdiff.kernels import (DriftedSkewParam, FrozenParam,
                              drifted_skew_cdf, drifted_skew_density,
                              frozen_density, frozen_density_dx,
                              local_time_mean, sample_skew_step,
                              skew_bm_density, skew_bm_density_dx)
from skewdiff.numerics import RngStream, gaussian_kernel, panelized_nodes


def _mass(f, half=40.0, n=400):
    z, w = panelized_nodes(-half, half, n, split_points=(0.0,))
    return float(w @ f(z)), z, w


def test_skew_bm_density_reduces_to_gaussian_at_half():
    y = np.linspace(-4.0, 4.0, 17)
    for x in (-0.7, 0.0, 1.2):
        got = skew_bm_density(0.5, 0.8, x, y)
        assert np.max(np.abs(got - gaussian_kernel(0.8, y - x))) < 1e-15


def test_skew_bm_density_normalizes_and_jumps_at_origin():
    for alpha in (0.1, 0.5, 0.9):
        for x in (-1.0, 0.0, 1.0):
            mass, _, _ = _mass(lambda z: skew_bm_density(alpha, 1.3, x, z))
            assert mass == pytest.approx(1.0, abs=1e-12)
            p_plus = skew_bm_density(alpha, 1.3, x, 0.0, y_side="+")
            p_minus = skew_bm_density(alpha, 1.3, x, 0.0, y_side="-")
            assert p_plus / p_minus == pytest.approx(alpha / (1.0 - alpha),
                                                     rel=1e-12)


def test_skew_bm_density_reflecting_limit():
    # alpha = 1 reflects at the origin: no mass below, doubled above
    y = np.linspace(0.01, 5.0, 21)
    got = skew_bm_density(1.0, 0.6, 0.0, y)
    assert np.allclose(got, 2.0 * gaussian_kernel(0.6, y), rtol=1e-14)
    assert np.all(skew_bm_density(1.0, 0.6, 0.4, -y) == 0.0)


def test_skew_bm_density_dx_matches_finite_differences():
    y = np.array([-1.5, -0.2, 0.3, 2.0])
    d = 1e-6
    for alpha, x in ((0.7, 0.8), (0.3, -1.1)):
        for order in (1, 2):
            lower = (lambda u: skew_bm_density(alpha, 0.9, u, y)) \
                if order == 1 else \
                (lambda u: skew_bm_density_dx(1, alpha, 0.9, u, y))
            fd = (lower(x + d) - lower(x - d)) / (2.0 * d)
            got = skew_bm_density_dx(order, alpha, 0.9, x, y)
            assert np.max(np.abs(got - fd)) < 1e-6
    with pytest.raises(ValueError):
        skew_bm_density_dx(1, 0.7, 0.9, 0.0, y)


def test_frozen_density_scales_variance():
    p = FrozenParam(a_z=1.69, alpha=0.6)
    y = np.linspace(-3.0, 3.0, 13)
    got = frozen_density(p, 0.5, 0.2, y)
    ref = skew_bm_density(0.6, 1.69 * 0.5, 0.2, y)
    assert np.array_equal(got, ref)
    got_dx = frozen_density_dx(1, p, 0.5, 0.2, y)
    ref_dx = skew_bm_density_dx(1, 0.6, 1.69 * 0.5, 0.2, y)
    assert np.array_equal(got_dx, ref_dx)
    with pytest.raises(ValueError):
        FrozenParam(a_z=0.0, alpha=0.5)


def test_drifted_skew_density_exact_special_cases():
    y = np.linspace(-4.5, 4.5, 19)
    # alpha = 1/2 is a drifted Brownian motion
    p = DriftedSkewParam(alpha=0.5, mu=0.7, t=1.3, x0=-0.4)
    ref = gaussian_kernel(1.3, y + 0.4 - 0.7 * 1.3)
    assert np.max(np.abs(drifted_skew_density(p, y) - ref)) < 1e-15
    # mu = 0 is driftless skew BM
    p = DriftedSkewParam(alpha=0.8, mu=0.0, t=0.6, x0=0.9)
    ref = skew_bm_density(0.8, 0.6, 0.9, y)
    assert np.max(np.abs(drifted_skew_density(p, y) - ref)) < 1e-15


def test_drifted_skew_density_normalization_lattice():
    for alpha in (0.1, 0.5, 0.9):
        for t in (0.01, 0.5, 2.0):
            for x in (-1.0, 0.0, 1.0):
                for mu in (-0.8, 0.3):
                    p = DriftedSkewParam(alpha=alpha, mu=mu, t=t, x0=x)
                    half = 12.0 * math.sqrt(t) + abs(x) + abs(mu) * t + 1.0
                    mass, _, _ = _mass(
                        lambda z: drifted_skew_density(p, z), half=half)
                    assert mass == pytest.approx(1.0, abs=1e-9), \
                        (alpha, t, x, mu)


def test_drifted_skew_density_mirror_symmetry():
    y = np.linspace(-3.0, 3.0, 16)  # spacing 0.4, no point at the interface
    p = DriftedSkewParam(alpha=0.7, mu=0.4, t=0.9, x0=0.6)
    q = DriftedSkewParam(alpha=0.3, mu=-0.4, t=0.9, x0=-0.6)
    assert np.max(np.abs(drifted_skew_density(p, y)
                         - drifted_skew_density(q, -y))) < 1e-14
    # mirroring swaps the one-sided limits at the interface
    assert drifted_skew_density(p, 0.0, y_side="+") == pytest.approx(
        drifted_skew_density(q, 0.0, y_side="-"), rel=1e-14)


def test_drifted_skew_density_interface_jump():
    for alpha in (0.25, 0.7):
        for x0 in (-0.9, 0.0, 0.6):
            p = DriftedSkewParam(alpha=alpha, mu=0.5, t=0.7, x0=x0)
            ratio = drifted_skew_density(p, 0.0, y_side="+") \
                / drifted_skew_density(p, 0.0, y_side="-")
            assert ratio == pytest.approx(alpha / (1.0 - alpha),
                                          rel=1e-12)


def test_drifted_skew_density_chapman_kolmogorov():
    p_full = DriftedSkewParam(alpha=0.7, mu=0.3, t=1.0, x0=0.25)
    z, w = panelized_nodes(-12.0, 12.0, 500, split_points=(0.0,))
    mid = drifted_skew_density(
        DriftedSkewParam(alpha=0.7, mu=0.3, t=0.5, x0=0.25), z)
    for y in (-1.1, -0.3, 0.2, 0.8, 2.0):
        second = np.array([drifted_skew_density(
            DriftedSkewParam(alpha=0.7, mu=0.3, t=0.5, x0=float(zz)), y)
            for zz in z])
        composed = float(w @ (mid * second))
        direct = drifted_skew_density(p_full, y)
        assert composed == pytest.approx(direct, abs=1e-6)


def test_drifted_skew_cdf_consistency():
    p = DriftedSkewParam(alpha=0.35, mu=-0.6, t=0.8, x0=0.5)
    ys = np.array([-2.0, -0.4, 0.0, 0.3, 1.7])
    d = 1e-6
    fd = (drifted_skew_cdf(p, ys + d) - drifted_skew_cdf(p, ys - d)) \
        / (2.0 * d)
    dens = drifted_skew_density(p, ys)
    # at the interface the symmetric difference sees the average side
    avg = 0.5 * (drifted_skew_density(p, 0.0, y_side="+")
                 + drifted_skew_density(p, 0.0, y_side="-"))
    dens[ys == 0.0] = avg
    assert np.max(np.abs(fd - dens)) < 1e-5
    assert drifted_skew_cdf(p, -40.0) == pytest.approx(0.0, abs=1e-12)
    assert drifted_skew_cdf(p, 40.0) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(drifted_skew_cdf(p, np.linspace(-6, 6, 200)))
                  >= 0.0)


def test_sample_skew_step_matches_cdf():
    p = DriftedSkewParam(alpha=0.7, mu=0.4, t=0.5, x0=0.1)
    draws = sample_skew_step(RngStream(21, 0), p, n=200_000)
    ks = stats.kstest(draws, lambda y: drifted_skew_cdf(p, y))
    assert ks.statistic < 0.004, ks
    # sign split starting at the interface, driftless: P(Y > 0) = alpha
    p0 = DriftedSkewParam(alpha=0.3, mu=0.0, t=0.7, x0=0.0)
    draws0 = sample_skew_step(RngStream(22, 0), p0, n=200_000)
    frac = float(np.mean(draws0 > 0.0))
    assert abs(frac - 0.3) < 3.0 * math.sqrt(0.3 * 0.7 / 200_000)


def test_sample_skew_step_reproducible():
    p = DriftedSkewParam(alpha=0.6, mu=-0.2, t=0.3, x0=-0.8)
    a = sample_skew_step(RngStream(5, 9), p, n=64)
    b = sample_skew_step(RngStream(5, 9), p, n=64)
    assert np.array_equal(a, b)


def test_local_time_mean_closed_form_and_quadrature():
    for a_val in (0.49, 1.0, 2.56):
        for s in (0.2, 1.0, 3.0):
            ref = math.sqrt(2.0 * a_val * s / math.pi)
            assert local_time_mean(a_val, 0.5, s, 0.0) == pytest.approx(
                ref, rel=1e-15)
    # off the interface: a * int_0^s g_{a u}(x) du, skewness drops out
    a_val, s, x = 1.3, 0.9, 0.6
    ref, _ = integrate.quad(
        lambda u: a_val * gaussian_kernel(a_val * u, x), 0.0, s)
    for alpha in (0.3, 0.7):
        assert local_time_mean(a_val, alpha, s, x) == pytest.approx(
            ref, rel=1e-9)
    with pytest.raises(ValueError):
        local_time_mean(-1.0, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        local_time_mean(1.0, 0.5, 0.0, 0.0)
