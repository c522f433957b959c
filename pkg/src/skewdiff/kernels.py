"""Exact transition kernels of skew Brownian motion.

Closed forms for the driftless skew Brownian density (the frozen kernel of
the parametrix machinery), its spatial derivatives, the density and
distribution function with a constant drift, exact step samplers, and the
expected symmetric local time at the origin.

Conventions: the skewness parameter alpha in (0, 1] is the probability that
an excursion from the origin is positive; densities at y = 0 follow the
y >= 0 branch unless a side flag requests the left limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .numerics import (NumericFailure, QuadConfig, SQRT_2PI,
                       gaussian_kernel, gaussian_kernel_dz,
                       quad_time_singular)


@dataclass(frozen=True)
class FrozenParam:
    """Diffusion coefficient frozen at one point: variance rate and skew."""

    a_z: float
    alpha: float

    def __post_init__(self):
        if self.a_z <= 0.0:
            raise ValueError("frozen variance rate must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class DriftedSkewParam:
    """Skew Brownian motion with unit diffusion, constant drift mu."""

    alpha: float
    mu: float
    t: float
    x0: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.t <= 0.0:
            raise ValueError("elapsed time must be positive")


def _apply_side(y, y_side):
    """Return the effective sign mask for the y >= 0 branch."""
    y = np.asarray(y, dtype=float)
    pos = y >= 0.0
    if y_side is not None:
        if y_side not in ("+", "-"):
            raise ValueError("y_side must be '+' or '-'")
        at_zero = y == 0.0
        if y_side == "-":
            pos = pos & ~at_zero
        else:
            pos = pos | at_zero
    return pos


def skew_bm_density(alpha, var, x, y, y_side=None):
    """Transition density of driftless skew BM after accumulated variance var.

    Two-sided closed form: starting from x >= 0 the density is
    g(y-x) + (2a-1) g(y+x) on y >= 0 and 2(1-a) g(y-x) on y < 0, with the
    mirrored expression for x < 0.  x, y and var broadcast against each
    other; y_side picks the one-sided limit at y = 0.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("accumulated variance must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = _apply_side(y, y_side)
    g_diff = gaussian_kernel(var, y - x)
    g_sum = gaussian_kernel(var, y + x)
    skew = 2.0 * alpha - 1.0
    from_pos = np.where(pos, g_diff + skew * g_sum,
                        2.0 * (1.0 - alpha) * g_diff)
    from_neg = np.where(pos, 2.0 * alpha * g_diff,
                        g_diff - skew * g_sum)
    out = np.where(x >= 0.0, from_pos, from_neg)
    if out.ndim == 0:
        return float(out)
    return out


def skew_bm_density_dx(order, alpha, var, x, y):
    """order-th derivative in the starting point of skew_bm_density.

    Defined for x != 0 when alpha != 1/2 (the derivative jumps across the
    origin); orders 1..4 are supported through Gaussian-Hermite factors.
    x, y and var broadcast against each other.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError("derivative order must be one of 1..4")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("accumulated variance must be positive")
    x = np.asarray(x, dtype=float)
    if alpha != 0.5 and np.any(x == 0.0):
        raise ValueError("starting-point derivative undefined at x = 0 "
                         "for alpha != 1/2")
    y = np.asarray(y, dtype=float)
    pos = y >= 0.0
    sgn = (-1.0) ** order
    d_diff = sgn * gaussian_kernel_dz(var, y - x, order)
    d_sum = gaussian_kernel_dz(var, y + x, order)
    skew = 2.0 * alpha - 1.0
    from_pos = np.where(pos, d_diff + skew * d_sum,
                        2.0 * (1.0 - alpha) * d_diff)
    from_neg = np.where(pos, 2.0 * alpha * d_diff,
                        d_diff - skew * d_sum)
    out = np.where(x >= 0.0, from_pos, from_neg)
    if out.ndim == 0:
        return float(out)
    return out


def frozen_density(p: FrozenParam, t, x, y, y_side=None):
    """Density of the process with coefficients frozen at one point."""
    if t <= 0.0:
        raise ValueError("elapsed time must be positive")
    return skew_bm_density(p.alpha, p.a_z * t, x, y, y_side=y_side)


def frozen_density_dx(order, p: FrozenParam, t, x, y):
    """Starting-point derivative of frozen_density (orders 1..4)."""
    if t <= 0.0:
        raise ValueError("elapsed time must be positive")
    return skew_bm_density_dx(order, p.alpha, p.a_z * t, x, y)


def _exp_normal_sf(E, z):
    """exp(E) * P(N(0,1) > z), computed without overflowing exp(E).

    The scaled-complement form is only stable for z >= 0 (erfcx blows up
    on the far negative side); there the survival factor is order one and
    the plain product is used instead.
    """
    E = np.asarray(E, dtype=float)
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        scaled = 0.5 * special.erfcx(z / math.sqrt(2.0)) \
            * np.exp(E - 0.5 * z * z)
        plain = np.exp(E) * special.ndtr(-z)
    return np.where(z >= 0.0, scaled, plain)


def _drift_terms(p: DriftedSkewParam):
    beta = p.mu * (2.0 * p.alpha - 1.0)
    k_pos = 2.0 * p.alpha * p.mu
    k_neg = 2.0 * (1.0 - p.alpha) * p.mu
    c0 = -k_neg * (p.x0 + 0.5 * k_pos * p.t)
    return beta, k_pos, k_neg, c0


def drifted_skew_density(p: DriftedSkewParam, y, y_side=None):
    """Exact density of skew BM with constant drift, unit diffusion.

    For a start x0 >= 0 the density splits along the sign of y:

        y >= 0:  g_t(y-x0-mu t) + (2a-1) [e^(-2 mu x0) g_t(y+x0-mu t)
                  - k+ e^(c0+k+ y) SF((y+x0+beta t)/sqrt(t))]
        y <  0:  2(1-a) g_t(y-x0-mu t)
                  - (2a-1) k- e^(c0+k- y) SF((x0+beta t-y)/sqrt(t))

    with beta = mu(2a-1), k+ = 2 a mu, k- = 2(1-a) mu,
    c0 = -k-(x0 + k+ t/2) and SF the standard normal survival function.
    Starts x0 < 0 are handled by the mirror symmetry (a, mu, x0, y) ->
    (1-a, -mu, -x0, -y).
    """
    y = np.asarray(y, dtype=float)
    if p.x0 < 0.0:
        mirrored = DriftedSkewParam(alpha=1.0 - p.alpha, mu=-p.mu,
                                    t=p.t, x0=-p.x0)
        # The default at y = 0 is the right limit; after mirroring that
        # becomes the left limit of the reflected parameters.
        flip = "-" if y_side in (None, "+") else "+"
        out = drifted_skew_density(mirrored, -y, y_side=flip)
        return out
    t = p.t
    beta, k_pos, k_neg, c0 = _drift_terms(p)
    sqt = math.sqrt(t)
    skew = 2.0 * p.alpha - 1.0
    pos = _apply_side(y, y_side)
    g_main = gaussian_kernel(t, y - p.x0 - p.mu * t)
    # Image term via exp(-2 mu x0) g_t(y+x0-mu t) = g_main exp(-2 x0 y/t);
    # the rewritten exponent is <= 0 wherever the term is used.
    with np.errstate(over="ignore", under="ignore"):
        img_ratio = np.exp(-2.0 * p.x0 * y / t)
    sf_pos = _exp_normal_sf(c0 + k_pos * y, (y + p.x0 + beta * t) / sqt)
    sf_neg = _exp_normal_sf(c0 + k_neg * y, (p.x0 + beta * t - y) / sqt)
    # Each term is bounded on the branch that uses it; zero it on the
    # other branch, where it may have overflowed.
    g_img = g_main * np.where(pos, img_ratio, 0.0)
    sf_pos = np.where(pos, sf_pos, 0.0)
    sf_neg = np.where(pos, 0.0, sf_neg)
    dens_pos = g_main + skew * (g_img - k_pos * sf_pos)
    dens_neg = 2.0 * (1.0 - p.alpha) * g_main - skew * k_neg * sf_neg
    out = np.where(pos, dens_pos, dens_neg)
    if out.ndim == 0:
        return float(out)
    return out


def drifted_skew_cdf(p: DriftedSkewParam, y):
    """Distribution function matching drifted_skew_density.

    Closed form for x0 >= 0:
        F(y) = Phi((y-x0-mu t)/sqrt(t))
               - (2a-1) e^(c0 + k y) SF((x0 + beta t + |y|)/sqrt(t))
    with k = k+ for y >= 0 and k- for y < 0; mirrored for x0 < 0.
    """
    y = np.asarray(y, dtype=float)
    if p.x0 < 0.0:
        mirrored = DriftedSkewParam(alpha=1.0 - p.alpha, mu=-p.mu,
                                    t=p.t, x0=-p.x0)
        out = 1.0 - drifted_skew_cdf(mirrored, -y)
        if np.ndim(out) == 0:
            return float(out)
        return out
    t = p.t
    beta, k_pos, k_neg, c0 = _drift_terms(p)
    sqt = math.sqrt(t)
    skew = 2.0 * p.alpha - 1.0
    k = np.where(y >= 0.0, k_pos, k_neg)
    main = special.ndtr((y - p.x0 - p.mu * t) / sqt)
    tail = _exp_normal_sf(c0 + k * y, (p.x0 + beta * t + np.abs(y)) / sqt)
    out = main - skew * tail
    out = np.clip(out, 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def _as_generator(stream_or_rng):
    if isinstance(stream_or_rng, np.random.Generator):
        return stream_or_rng
    return stream_or_rng.generator()


def _driftless_from_draws(alpha, x0, sqt, Z, U):
    """Exact driftless skew step from pre-drawn variates.

    Decomposition: with probability 1 - exp(-2 z0 G) conditional on the
    endpoint the bridge from |x0|/sqt avoids the origin and the endpoint
    keeps the starting side; otherwise the endpoint magnitude is a unit
    normal conditioned beyond z0 = |x0|/sqt and the sign is positive with
    probability alpha.  Z is one standard normal and U three uniforms per
    sample; the fixed layout keeps generator consumption independent of
    the branch each sample takes.
    """
    x0 = np.asarray(x0, dtype=float)
    side = np.where(x0 >= 0.0, 1.0, -1.0)
    z0 = np.abs(x0) / sqt
    G = z0 + Z
    with np.errstate(over="ignore"):
        no_hit = (G > 0.0) & (U[:, 0] <= -np.expm1(-2.0 * z0 * G))
    sf0 = special.ndtr(-z0)
    q = np.clip(U[:, 1] * sf0, 1e-310, 1.0)
    mag = -special.ndtri(q) - z0
    mag = np.maximum(mag, 0.0)
    sign = np.where(U[:, 2] <= alpha, 1.0, -1.0)
    return np.where(no_hit, side * G, sign * mag) * sqt


def _sample_driftless(rng, alpha, x0, sqt, n):
    """Exact step of driftless skew BM from (vector) start x0, scale sqt."""
    return _driftless_from_draws(alpha, x0, sqt, rng.standard_normal(n),
                                 rng.random((n, 3)))


def _mirror_args(alpha, mu, x0, y):
    """Fold starts x0 < 0 onto x0 >= 0 via the mirror symmetry."""
    neg = x0 < 0.0
    sgn = np.where(neg, -1.0, 1.0)
    a_eff = np.where(neg, 1.0 - alpha, alpha)
    return neg, a_eff, sgn * mu, sgn * x0, sgn * y


def _drifted_cdf_vec(alpha, mu, x0, t, y):
    """Closed-form CDF, vectorized over per-sample (mu, x0, y)."""
    sqt = math.sqrt(t)
    neg, a, m, x, yy = _mirror_args(alpha, mu, x0, y)
    beta = m * (2.0 * a - 1.0)
    k_pos = 2.0 * a * m
    k_neg = 2.0 * (1.0 - a) * m
    c0 = -k_neg * (x + 0.5 * k_pos * t)
    k = np.where(yy >= 0.0, k_pos, k_neg)
    main = special.ndtr((yy - x - m * t) / sqt)
    tail = _exp_normal_sf(c0 + k * yy, (x + beta * t + np.abs(yy)) / sqt)
    val = main - (2.0 * a - 1.0) * tail
    val = np.where(neg, 1.0 - val, val)
    return np.clip(val, 0.0, 1.0)


def _drifted_pdf_vec(alpha, mu, x0, t, y):
    """Closed-form density, vectorized over per-sample (mu, x0, y)."""
    sqt = math.sqrt(t)
    _, a, m, x, yy = _mirror_args(alpha, mu, x0, y)
    beta = m * (2.0 * a - 1.0)
    k_pos = 2.0 * a * m
    k_neg = 2.0 * (1.0 - a) * m
    c0 = -k_neg * (x + 0.5 * k_pos * t)
    skew = 2.0 * a - 1.0
    pos = yy >= 0.0
    g_main = gaussian_kernel(t, yy - x - m * t)
    # Image term via exp(-2 m x) g_t(yy+x-m t) = g_main exp(-2 x yy/t);
    # the rewritten exponent is <= 0 wherever the term is used.
    with np.errstate(over="ignore", under="ignore"):
        img_ratio = np.exp(-2.0 * x * yy / t)
    sf_pos = _exp_normal_sf(c0 + k_pos * yy, (yy + x + beta * t) / sqt)
    sf_neg = _exp_normal_sf(c0 + k_neg * yy, (x + beta * t - yy) / sqt)
    # Each term is bounded on the branch that uses it; zero it on the
    # other branch, where it may have overflowed.
    g_img = g_main * np.where(pos, img_ratio, 0.0)
    sf_pos = np.where(pos, sf_pos, 0.0)
    sf_neg = np.where(pos, 0.0, sf_neg)
    dens_pos = g_main + skew * (g_img - k_pos * sf_pos)
    dens_neg = 2.0 * (1.0 - a) * g_main - skew * k_neg * sf_neg
    return np.where(pos, dens_pos, dens_neg)


def _drifted_from_uniform(alpha, mu, x0, t, u, max_expand=80):
    """Exact drifted skew step by inverting the closed-form CDF at u.

    Monotone bracketing around the drifted mean followed by bisection and a
    Newton polish against the closed-form density.
    """
    mu = np.asarray(mu, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    sqt = math.sqrt(t)

    center = x0 + mu * t
    width = np.full(n, 8.0 * sqt)
    lo = center - width
    hi = center + width
    for _ in range(max_expand):
        bad_lo = _drifted_cdf_vec(alpha, mu, x0, t, lo) > u
        bad_hi = _drifted_cdf_vec(alpha, mu, x0, t, hi) < u
        if not (np.any(bad_lo) or np.any(bad_hi)):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
    else:
        raise NumericFailure(
            "drifted skew sampler failed to bracket the inverse CDF "
            f"(t={t}, |mu| up to {float(np.max(np.abs(mu))):.3g})")
    for _ in range(55):
        mid = 0.5 * (lo + hi)
        below = _drifted_cdf_vec(alpha, mu, x0, t, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = 0.5 * (lo + hi)
    # Newton polish; keep the bisection value where the density is tiny.
    for _ in range(3):
        pdf = _drifted_pdf_vec(alpha, mu, x0, t, y)
        resid = _drifted_cdf_vec(alpha, mu, x0, t, y) - u
        step = np.where(pdf > 1e-12, resid / np.maximum(pdf, 1e-12), 0.0)
        y = np.clip(y - step, lo, hi)
    return y


def _sample_drifted(rng, alpha, mu, x0, t, max_expand=80):
    """Exact step with drift via inversion of the closed-form CDF."""
    x0 = np.asarray(x0, dtype=float)
    return _drifted_from_uniform(alpha, mu, x0, t, rng.random(x0.size),
                                 max_expand=max_expand)


def sample_skew_step(stream, p: DriftedSkewParam, n=None):
    """Draw exact samples of the drifted skew step; float for n=None.

    alpha = 1/2 reduces to a drifted Gaussian; mu = 0 uses the two-sided
    closed-form construction; the general case inverts the closed-form
    distribution function.
    """
    rng = _as_generator(stream)
    size = 1 if n is None else int(n)
    sqt = math.sqrt(p.t)
    if p.alpha == 0.5:
        out = p.x0 + p.mu * p.t + sqt * rng.standard_normal(size)
    elif p.mu == 0.0:
        out = _sample_driftless(rng, p.alpha, np.full(size, p.x0), sqt, size)
    else:
        out = _sample_drifted(rng, p.alpha, np.full(size, p.mu),
                              np.full(size, p.x0), p.t)
    if n is None:
        return float(out[0])
    return out


def local_time_mean(a_val, alpha, s, x, cfg: QuadConfig | None = None):
    """Expected symmetric local time at 0 of the frozen process by time s.

    Equals a * integral_0^s g_{a u}(x) du; the skewness drops out because
    the symmetric boundary average of the two one-sided densities at the
    origin is skew-free.  x = 0 has the closed form sqrt(2 a s / pi).
    """
    if a_val <= 0.0 or s <= 0.0:
        raise ValueError("need a_val > 0 and s > 0")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if x == 0.0:
        return math.sqrt(2.0 * a_val * s / math.pi)
    cfg = cfg or QuadConfig()
    # Flip so the u -> 0 concentration sits at the upper endpoint.
    def integrand(u):
        return a_val * gaussian_kernel(a_val * (s - u), x)

    return quad_time_singular(integrand, 0.0, s, 0.5, cfg)
