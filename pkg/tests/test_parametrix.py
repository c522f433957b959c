"""Continuous-time density expansion: kernel, series, envelope fits."""

from __future__ import annotations

import math

import numpy as np
import pytest

from skewdiff.kernels import (DriftedSkewParam, FrozenParam,
                              drifted_skew_density, frozen_density,
                              skew_bm_density)
from skewdiff.model import make_model
from skewdiff.numerics import QuadConfig, gaussian_kernel
from skewdiff.parametrix import (ContinuousSeries, SeriesConfig,
                                 convolve, density_series,
                                 fit_gaussian_envelope, gaussian_bound_fit,
                                 kernel_H, proxy_density,
                                 time_lipschitz_check)

Y6 = np.array([-1.0, -0.2, 0.15, 0.6, 1.3, 2.5])
CFG6 = SeriesConfig(order=6, time_slices=48, nodes_per_side=24)


def test_series_config_validation():
    with pytest.raises(ValueError):
        SeriesConfig(order=-1)
    with pytest.raises(ValueError):
        SeriesConfig(time_slices=0)
    with pytest.raises(ValueError):
        SeriesConfig(nodes_per_side=0)


def test_proxy_density_freezes_at_terminal_point():
    coeffs = make_model("hoelder-bump", alpha=0.6)
    s, t, x = 0.2, 0.8, 0.4
    for y in (-1.7, -0.3, 0.5, 1.4):
        ref = frozen_density(
            FrozenParam(a_z=float(coeffs.a(y)), alpha=0.6), t - s, x, y)
        assert proxy_density(coeffs, s, t, x, y) == pytest.approx(
            ref, rel=1e-15)


def test_kernel_H_vanishes_for_skew_bm():
    coeffs = make_model("skew-bm", alpha=0.7)
    for (x, y) in ((-0.8, 0.3), (0.5, 0.5), (1.2, -2.0)):
        assert abs(kernel_H(coeffs, 0.1, 0.6, x, y)) < 1e-13


def test_kernel_H_constant_coefficient_closed_form():
    # constant sigma leaves only the drift part: b (y-x)/(a tau) g_{a tau}
    coeffs = make_model("constant", alpha=0.5, drift=0.3, sigma=1.2)
    for (s, t, x, y) in ((0.2, 0.8, 0.4, 1.1), (0.0, 0.3, -1.0, 0.6)):
        tau = t - s
        ref = 0.3 * (y - x) / (1.44 * tau) * gaussian_kernel(1.44 * tau,
                                                             y - x)
        assert kernel_H(coeffs, s, t, x, y) == pytest.approx(ref,
                                                             rel=1e-12)


def test_series_constant_coefficients_match_gaussian():
    coeffs = make_model("constant", alpha=0.5, drift=0.3, sigma=1.2)
    res = density_series(coeffs, CFG6, 1.0, 0.3, Y6)
    exact = gaussian_kernel(1.44, Y6 - 0.6)
    assert np.max(np.abs(res.values - exact)) < 1e-4
    ev = ContinuousSeries(coeffs, 1.0, 0.3, Y6, CFG6)
    assert ev.normalization() == pytest.approx(1.0, abs=1e-4)


def test_series_skew_bm_collapses_at_order_zero():
    coeffs = make_model("skew-bm", alpha=0.7)
    cfg = SeriesConfig(order=3, time_slices=32, nodes_per_side=16)
    res = density_series(coeffs, cfg, 0.5, 0.25, Y6)
    exact = skew_bm_density(0.7, 0.5, 0.25, Y6)
    assert np.max(np.abs(res.terms[0] - exact)) < 1e-12
    assert np.max(np.abs(res.terms[1:])) < 1e-12
    assert np.max(np.abs(res.values - exact)) < 1e-12


def test_series_skew_with_drift_matches_closed_form():
    coeffs = make_model("constant", alpha=0.7, drift=0.3, sigma=1.0)
    res = density_series(coeffs, CFG6, 1.0, 0.3, Y6)
    exact = drifted_skew_density(
        DriftedSkewParam(alpha=0.7, mu=0.3, t=1.0, x0=0.3), Y6)
    assert np.max(np.abs(res.values - exact)) < 1e-4
    # starting exactly at the interface
    res0 = density_series(coeffs, CFG6, 1.0, 0.0, Y6)
    exact0 = drifted_skew_density(
        DriftedSkewParam(alpha=0.7, mu=0.3, t=1.0, x0=0.0), Y6)
    assert np.max(np.abs(res0.values - exact0)) < 1e-4


def test_series_terms_decay_geometrically_on_bump():
    coeffs = make_model("hoelder-bump")
    cfg = SeriesConfig(order=4, time_slices=48, nodes_per_side=24)
    ev = ContinuousSeries(coeffs, 1.0, 0.25, Y6, cfg)
    norms = ev.term_norms()
    for r in range(1, len(norms) - 1):
        assert norms[r + 1] < 0.5 * norms[r], norms


def test_series_normalization_on_bump():
    coeffs = make_model("hoelder-bump", alpha=0.6)
    cfg = SeriesConfig(order=4, time_slices=48, nodes_per_side=24)
    for eta in (0.5, 1.0):
        ev = ContinuousSeries(make_model("hoelder-bump", alpha=0.6,
                                         eta=eta),
                              1.0, 0.3, np.array([0.5]), cfg)
        assert ev.normalization() == pytest.approx(1.0, abs=5e-3)
    assert coeffs.eta == 1.0


def test_convolve_time_space_closed_form():
    # unit-inflated variances keep both factors resolvable at the time
    # endpoints; their z integral has variance (1+u-s) + (1+t-u), which
    # is u-independent, so the time integral is immediate
    def f(s, u, x, z):
        return gaussian_kernel(1.0 + u - s, np.asarray(z) - x)

    def g(u, t, z, y):
        return gaussian_kernel(1.0 + t - u, y - np.asarray(z))

    s, t, x, y = 0.1, 0.9, -0.2, 0.7
    got = convolve(f, g, s, t, x, y, singular_exponent=0.0)
    ref = (t - s) * gaussian_kernel(2.0 + t - s, y - x)
    assert got == pytest.approx(ref, rel=1e-8)

    # a (t-u)^(-1/2) weight on the second factor integrates to
    # 2 sqrt(t-s) times the same Gaussian
    def g_sing(u, t_, z, y_):
        return gaussian_kernel(1.0 + t_ - u, y_ - np.asarray(z)) \
            / np.sqrt(t_ - u)

    got = convolve(f, g_sing, s, t, x, y, singular_exponent=0.5)
    ref = 2.0 * math.sqrt(t - s) * gaussian_kernel(2.0 + t - s, y - x)
    assert got == pytest.approx(ref, rel=1e-8)
    with pytest.raises(ValueError):
        convolve(f, g, 0.5, 0.5, x, y)


def test_fit_gaussian_envelope_recovers_exact_profile():
    taus = np.full(41, 0.7)
    dxs = np.linspace(-4.0, 4.0, 41)
    values = 0.7 * gaussian_kernel(2.5 * taus, dxs)
    c_grid = np.arange(1.1, 5.01, 0.1)
    up = fit_gaussian_envelope(taus, dxs, values, "upper", c_grid=c_grid)
    lo = fit_gaussian_envelope(taus, dxs, values, "lower", c_grid=c_grid)
    # upper family C g_{c tau} contains the profile, so the fit is exact
    assert up.fitted_c == pytest.approx(2.5, abs=1e-12)
    assert up.fitted_C == pytest.approx(0.7, rel=1e-9)
    # the lower family decays faster than any data with variance > tau,
    # so the minimal constant sits at the smallest admissible c, pinned
    # by the ratio at dx = 0: C = sqrt(2.5 c) / 0.7
    assert lo.fitted_c == pytest.approx(1.1, abs=1e-12)
    assert lo.fitted_C == pytest.approx(math.sqrt(2.5 * 1.1) / 0.7,
                                        rel=1e-9)
    assert up.max_violation <= 0.0 and lo.max_violation <= 0.0
    assert up.side == "upper" and lo.side == "lower"
    # certificates actually bracket the data
    env_up = up.fitted_C * gaussian_kernel(up.fitted_c * taus, dxs)
    env_lo = gaussian_kernel(taus / lo.fitted_c, dxs) / lo.fitted_C
    assert np.all(values <= env_up + 1e-15)
    assert np.all(env_lo <= values + 1e-15)


def test_gaussian_bound_fit_on_exact_skew_density():
    lattice = [(t, x, y) for t in (0.05, 0.1, 0.5)
               for x in (-2.0, -0.5, 0.5, 2.0)
               for y in (-2.0, -0.5, 0.5, 2.0)]

    def evaluator(t, x, y):
        return skew_bm_density(0.7, t, x, y)

    for side in ("upper", "lower"):
        cert = gaussian_bound_fit(evaluator, lattice, side)
        assert cert.max_violation <= 0.0
        assert math.isfinite(cert.fitted_C) and cert.fitted_C > 0.0
        assert cert.n_points == len(lattice)


def test_time_lipschitz_check_requires_valid_window():
    coeffs = make_model("constant")
    with pytest.raises(ValueError):
        time_lipschitz_check(coeffs, None, 1.0, 1.5, [(0.0, 0.5)])
    with pytest.raises(ValueError):
        time_lipschitz_check(coeffs, None, 1.0, 0.5, np.zeros((0, 2)))


def test_time_lipschitz_check_finite_on_constant_model():
    coeffs = make_model("constant", alpha=0.5, drift=0.3, sigma=1.2)
    cfg = SeriesConfig(order=4, time_slices=32, nodes_per_side=16)
    lattice = [(x, y) for x in (-1.0, 0.5) for y in (-1.5, 0.2, 1.8)]
    ratio = time_lipschitz_check(coeffs, cfg, 1.0, 0.25, lattice)
    assert math.isfinite(ratio) and ratio > 0.0


def test_density_series_tail_bound_is_reported():
    coeffs = make_model("hoelder-bump")
    cfg = SeriesConfig(order=3, time_slices=24, nodes_per_side=12)
    res = density_series(coeffs, cfg, 0.5, 0.0, np.array([0.3, 1.1]))
    assert res.tail_bound.shape == res.values.shape
    assert np.all(np.nan_to_num(res.tail_bound) >= 0.0)
    assert res.order == 3
