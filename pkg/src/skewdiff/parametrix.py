"""Parametrix series for the transition density of a skew diffusion.

The density is expanded around a proxy process whose coefficients are
frozen at the terminal point, so the proxy density is an exact skew
Brownian kernel.  Successive terms are time-space convolutions of the
previous term with a smoothing kernel H built from the first two spatial
derivatives of the proxy; the series is evaluated on a cosine-graded time
mesh with product integration against the endpoint singularity, and the
truncation tail is controlled by a Beta-product majorant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import skew_bm_density, skew_bm_density_dx
from .model import Coefficients
from .numerics import (NumericFailure, PanelGrid, QuadConfig, _leggauss,
                       beta_product_bound, gaussian_kernel,
                       gaussian_kernel_dz, quad_space, quad_time_singular)

__all__ = [
    "SeriesConfig", "SeriesResult", "BoundCertificate", "proxy_density",
    "kernel_H", "convolve", "ContinuousSeries", "density_series",
    "fit_gaussian_envelope", "gaussian_bound_fit", "time_lipschitz_check",
]


@dataclass(frozen=True)
class SeriesConfig:
    """Resolution knobs for the series evaluator.

    order is the highest retained term r (the expansion keeps r = 0..order).
    nodes_per_side counts Gauss-Legendre nodes per panel of each spatial
    slice; max_slice_nodes caps the automatic refinement driven by the
    local diffusion scale.  A kernel factor narrower than narrow_factor
    node spacings switches the convolution to adapted nodes with panel
    interpolation of the tabulated term.
    """

    order: int = 4
    time_slices: int = 48
    nodes_per_side: int = 24
    max_slice_nodes: int = 220
    radius: float = 8.0
    narrow_factor: float = 3.2
    drift_bound: float | None = None
    tail_bound_enabled: bool = True
    tail_C: float = 1.0
    tail_c: float = 3.0
    quad: QuadConfig = field(default_factory=QuadConfig)
    table_guard: float = 1e12

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.time_slices < 4:
            raise ValueError("need at least four time slices")
        if self.nodes_per_side < 4:
            raise ValueError("need at least four nodes per side")
        if self.radius <= 0 or self.narrow_factor <= 0:
            raise ValueError("radius and narrow_factor must be positive")


@dataclass(frozen=True)
class SeriesResult:
    """Truncated series values with per-order terms and a tail majorant.

    tail_warning flags targets whose tail majorant exceeds the quadrature
    tolerance relative to the evaluated value (NaN majorants never warn).
    """

    values: np.ndarray
    terms: np.ndarray
    tail_bound: np.ndarray
    order: int
    tail_warning: bool = False


@dataclass(frozen=True)
class BoundCertificate:
    """Fitted two-sided Gaussian comparison over a point lattice.

    side 'upper' certifies value <= C g_{c tau}(dx); side 'lower' certifies
    value >= C^{-1} g_{tau/c}(dx) over the points with positive value
    (n_excluded counts the rest).  max_violation <= 0 means the certificate
    holds on every lattice point.
    """

    side: str
    fitted_C: float
    fitted_c: float
    max_violation: float
    n_points: int
    n_excluded: int


def proxy_density(coeffs: Coefficients, s, t, x, y, y_side=None):
    """Terminal-frozen proxy density over the window (s, t)."""
    tau = t - s
    if tau <= 0.0:
        raise ValueError("need t > s")
    y = np.asarray(y, dtype=float)
    a_y = np.asarray(coeffs.a(y), dtype=float)
    return skew_bm_density(coeffs.alpha, a_y * tau, x, y, y_side=y_side)


def _origin_dx(order, alpha, var, y, side):
    """One-sided starting-point derivative of the skew kernel at x = 0."""
    d = gaussian_kernel_dz(var, np.asarray(y, dtype=float), order)
    sgn = (-1.0) ** order
    skew = 2.0 * alpha - 1.0
    pos = np.asarray(y, dtype=float) >= 0.0
    if side == "+":
        return np.where(pos, (sgn + skew) * d, 2.0 * (1.0 - alpha) * sgn * d)
    if side == "-":
        return np.where(pos, 2.0 * alpha * sgn * d, (sgn - skew) * d)
    raise ValueError("side must be '+' or '-'")


def kernel_H(coeffs: Coefficients, s, t, x, y, x_side=None):
    """Smoothing kernel of the expansion, frozen at the terminal point.

    H(s,t,x,y) = b(x) d_x ptilde + (a(x) - a(y))/2 d_xx ptilde.  x and y
    broadcast.  When alpha != 1/2 the derivatives jump at x = 0, so a
    scalar x = 0 is a domain error unless x_side requests the one-sided
    value ('+', '-') or the excursion-weighted average ('avg',
    alpha*(right) + (1-alpha)*(left)), which is the v -> 0 limit of the
    kernel integrated against the proxy started at 0.
    """
    tau = t - s
    if tau <= 0.0:
        raise ValueError("need t > s")
    if x_side not in (None, "+", "-", "avg"):
        raise ValueError("x_side must be one of None, '+', '-', 'avg'")
    x_arr = np.asarray(x, dtype=float)
    y_arr = np.asarray(y, dtype=float)
    a_y = np.asarray(coeffs.a(y_arr), dtype=float)
    var = a_y * tau
    alpha = coeffs.alpha
    if x_arr.ndim == 0 and float(x_arr) == 0.0 and alpha != 0.5:
        if x_side is None:
            raise ValueError("kernel undefined at x = 0 for alpha != 1/2; "
                             "pass x_side")
        if x_side == "avg":
            d1 = alpha * _origin_dx(1, alpha, var, y_arr, "+") \
                + (1.0 - alpha) * _origin_dx(1, alpha, var, y_arr, "-")
            d2 = alpha * _origin_dx(2, alpha, var, y_arr, "+") \
                + (1.0 - alpha) * _origin_dx(2, alpha, var, y_arr, "-")
        else:
            d1 = _origin_dx(1, alpha, var, y_arr, x_side)
            d2 = _origin_dx(2, alpha, var, y_arr, x_side)
    else:
        d1 = skew_bm_density_dx(1, alpha, var, x_arr, y_arr)
        d2 = skew_bm_density_dx(2, alpha, var, x_arr, y_arr)
    b_x = np.asarray(coeffs.drift(x_arr), dtype=float)
    a_x = np.asarray(coeffs.a(x_arr), dtype=float)
    out = b_x * d1 + 0.5 * (a_x - a_y) * d2
    if out.ndim == 0:
        return float(out)
    return out


def convolve(f, g, s, t, x, y, quad: QuadConfig | None = None,
             singular_exponent: float | None = None,
             center_scale=None):
    """Time-space convolution (f * g)(s,t,x,y).

    Integrates u over (s,t) against an endpoint singularity of the given
    exponent (defaults to the quad config) and z over the real line with a
    split at the origin.  center_scale(u) may supply a (center, scale)
    pair for the spatial window; the default follows the straight bridge
    from x to y with a sqrt(t - s) scale.  Intended for cross-checks and
    small compositions; the series evaluator uses dedicated tables.
    """
    if t <= s:
        raise ValueError("need t > s")
    quad = quad or QuadConfig()
    p = quad.singular_exponent if singular_exponent is None \
        else singular_exponent
    span = t - s

    def default_cs(u):
        lam = (u - s) / span
        return x + lam * (y - x), math.sqrt(span) + 0.125 * abs(y - x)

    cs = center_scale or default_cs

    def inner_one(u):
        center, scale = cs(u)

        def integrand(z):
            return np.asarray(f(s, u, x, z), dtype=float) \
                * np.asarray(g(u, t, z, y), dtype=float)

        return quad_space(integrand, center, scale, quad)

    def inner(u):
        # the time rule hands over its whole node vector at once
        return np.array([inner_one(float(ui)) for ui in np.atleast_1d(u)])

    return quad_time_singular(inner, s, t, p, quad)


def _product_moments(tau_a, tau_b, p):
    """Exact integrals of tau^(q-p) between tau_b and tau_a for q = 0,1,2."""
    q1 = 1.0 - p
    m1 = (tau_a ** q1 - tau_b ** q1) / q1
    m2 = (tau_a ** (q1 + 1.0) - tau_b ** (q1 + 1.0)) / (q1 + 1.0)
    m3 = (tau_a ** (q1 + 2.0) - tau_b ** (q1 + 2.0)) / (q1 + 2.0)
    return m1, m2, m3


def _product_integral(S, v, p):
    """integral_0^{v_J} Shat(v) (v_J - v)^(-p) dv by product integration.

    S holds samples of the regularized integrand at v[0..J-1]; Shat is the
    piecewise interpolant (quadratic through neighbouring samples, lower
    order when fewer are available) and the last interval extrapolates the
    final polynomial piece, since S at v_J itself is not available.
    """
    J = len(S)
    v_end = v[J]
    out = 0.0
    if J == 1:
        m1, _, _ = _product_moments(v_end - v[0], 0.0, p)
        return S[0] * m1
    for k in range(J):
        A, B = v[k], v[k + 1]
        tau_a, tau_b = v_end - A, v_end - B
        m1, m2, m3 = _product_moments(tau_a, tau_b, p)
        # Moments of (v - A)^q, assembled from the tau moments to avoid
        # cancellation between large absolute coordinates.
        M0 = m1
        M1 = tau_a * m1 - m2
        M2 = tau_a * tau_a * m1 - 2.0 * tau_a * m2 + m3
        if J == 2:
            i0, i1 = 0, 1
            w0, w1 = v[i0] - A, v[i1] - A
            out = out + (S[i0] * (M1 - w1 * M0) / (w0 - w1)
                         + S[i1] * (M1 - w0 * M0) / (w1 - w0))
            continue
        t0 = min(max(k - 1, 0), J - 3)
        idx = (t0, t0 + 1, t0 + 2)
        w = [v[i] - A for i in idx]
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            num = M2 - (w[b] + w[c]) * M1 + w[b] * w[c] * M0
            den = (w[a] - w[b]) * (w[a] - w[c])
            out = out + S[idx[a]] * (num / den)
    return out


class ContinuousSeries:
    """Tabulated series terms for one starting point and terminal time.

    Builds per-slice spatial tables of every retained term on a
    cosine-graded time mesh; requested target points ride along as
    zero-weight columns of the final slice, so term values at the targets
    and the normalization of the truncated series come from one pass.
    """

    def __init__(self, coeffs: Coefficients, t, x, targets, cfg=None):
        if t <= 0.0:
            raise ValueError("terminal time must be positive")
        self.coeffs = coeffs
        self.cfg = cfg or SeriesConfig()
        self.t = float(t)
        self.x = float(x)
        self.targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if self.targets.ndim != 1 or not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be a finite 1-d array")
        # The spatially integrated kernel stays bounded near the endpoint
        # when a is Lipschitz (the drift part only looks singular in sup
        # norm), so no endpoint weight is used for eta = 1; rougher a
        # leaves a genuine tau^(eta/2 - 1) singularity.
        self.p_sing = 0.0 if coeffs.eta == 1.0 else 1.0 - 0.5 * coeffs.eta
        M = self.cfg.time_slices
        self.v = 0.5 * self.t * (1.0 - np.cos(np.pi * np.arange(M + 1) / M))
        self._B = self.cfg.drift_bound if self.cfg.drift_bound is not None \
            else coeffs.L_bound
        self._build_grids()
        self._op_cache: dict[tuple[int, int], np.ndarray] = {}
        est = sum(self._nodes(m).size * self._nodes(jm).size
                  for jm in range(2, M + 1) for m in range(1, jm))
        self._cache_kernels = est <= 2.0e7
        self.tables = [self._level0()]
        for r in range(self.cfg.order):
            self.tables.append(self._advance(self.tables[r], r))

    # -- construction ---------------------------------------------------

    def _build_grids(self):
        cfg = self.cfg
        coeffs = self.coeffs
        lam = coeffs.lambda_ell
        self.grids: list[PanelGrid | None] = [None]
        self._spacing = [math.inf]
        self._a_lo_slice = [0.0]
        for m in range(1, cfg.time_slices + 1):
            vm = self.v[m]
            half = cfg.radius * math.sqrt(lam * vm) + self._B * vm
            probe = np.linspace(self.x - half, self.x + half, 65)
            a_probe = np.asarray(coeffs.a(probe), dtype=float)
            a_hi = float(np.max(a_probe))
            a_lo = float(np.min(a_probe))
            if a_lo <= 0.0:
                raise NumericFailure("diffusion coefficient vanished on a "
                                     "series slice")
            half = cfg.radius * math.sqrt(a_hi * vm) + self._B * vm
            lo, hi = self.x - half, self.x + half
            feature = 0.30 * math.sqrt(a_lo * vm)
            n_total = int(np.clip(math.ceil((hi - lo) / feature),
                                  2 * cfg.nodes_per_side,
                                  cfg.max_slice_nodes))
            cuts = tuple(p for p in sorted({0.0, *coeffs.kinks})
                         if lo < p < hi)
            n_panels = len(cuts) + 1
            grid = PanelGrid(lo, hi, max(4, math.ceil(n_total / n_panels)),
                             split_points=cuts)
            self.grids.append(grid)
            self._spacing.append((hi - lo) / grid.nodes.size)
            self._a_lo_slice.append(a_lo)

    def _nodes(self, m):
        grid = self.grids[m]
        if m == self.cfg.time_slices:
            return np.concatenate([grid.nodes, self.targets])
        return grid.nodes

    def _level0(self):
        table = [None]
        for m in range(1, self.cfg.time_slices + 1):
            z = self._nodes(m)
            a_z = np.asarray(self.coeffs.a(z), dtype=float)
            table.append(skew_bm_density(self.coeffs.alpha, a_z * self.v[m],
                                         self.x, z))
        return table

    def _wide_operator(self, m, jm):
        z = self.grids[m].nodes
        zp = self._nodes(jm)
        block = kernel_H(self.coeffs, self.v[m], self.v[jm],
                         z[:, None], zp[None, :])
        return block.T * self.grids[m].weights[None, :]

    def _narrow_operator(self, m, jm):
        """Adapted-node transfer when the kernel is below slice resolution.

        Evaluation nodes are centred on each destination point with the
        local kernel width; windows straddling the origin are split there.
        The slice table enters through its interpolation matrix, so the
        result is again a linear map from source-node values.
        """
        cfg = self.cfg
        coeffs = self.coeffs
        tau = self.v[jm] - self.v[m]
        zp = self._nodes(jm)
        a_zp = np.asarray(coeffs.a(zp), dtype=float)
        half = cfg.radius * np.sqrt(a_zp * tau) + self._B * tau
        xg, wg = _leggauss(32)
        e = zp[:, None] + half[:, None] * xg[None, :]
        wts = half[:, None] * wg[None, :]
        crossing = (zp - half < 0.0) & (zp + half > 0.0)
        if np.any(crossing):
            xh, wh = _leggauss(16)
            u = 0.5 * (xh + 1.0)
            lo = (zp - half)[crossing, None]
            hi = (zp + half)[crossing, None]
            e[crossing] = np.hstack([lo * (1.0 - u), hi * u])
            wts[crossing] = 0.5 * np.hstack([-lo * wh, hi * wh])
        Hm = kernel_H(coeffs, self.v[m], self.v[jm], e, zp[:, None])
        P = self.grids[m].interp_matrix(e.ravel())
        P = P.reshape(e.shape + (self.grids[m].nodes.size,))
        return np.einsum("lj,ljk->lk", wts * Hm, P)

    def _operator(self, m, jm):
        """Linear map from the slice-m table to the convolution at slice jm."""
        key = (m, jm)
        cached = self._op_cache.get(key)
        if cached is not None:
            return cached
        tau = self.v[jm] - self.v[m]
        width = math.sqrt(self._a_lo_slice[jm] * tau)
        if width >= self.cfg.narrow_factor * self._spacing[m]:
            op = self._wide_operator(m, jm)
        else:
            op = self._narrow_operator(m, jm)
        if self._cache_kernels:
            self._op_cache[key] = op
        return op

    def _advance(self, prev, r):
        cfg = self.cfg
        M = cfg.time_slices
        p = self.p_sing
        out = [None]
        for jm in range(1, M + 1):
            zp = self._nodes(jm)
            S = np.zeros((jm, zp.size))
            if r == 0:
                S[0] = kernel_H(self.coeffs, 0.0, self.v[jm], self.x, zp,
                                x_side="avg") * self.v[jm] ** p
            for m in range(1, jm):
                tau = self.v[jm] - self.v[m]
                S[m] = (self._operator(m, jm) @ prev[m]) * tau ** p
            table = _product_integral(S, self.v[:jm + 1], p)
            if np.max(np.abs(table)) > cfg.table_guard:
                raise NumericFailure("series table left the trusted range; "
                                     "refine the mesh or lower the order")
            out.append(table)
        return out

    # -- outputs ---------------------------------------------------------

    @property
    def terms(self):
        """Per-order term values at the targets, shape (order+1, n)."""
        n = self.targets.size
        M = self.cfg.time_slices
        return np.array([tab[M][-n:] for tab in self.tables])

    def values(self, order=None):
        order = self.cfg.order if order is None else int(order)
        if not 0 <= order <= self.cfg.order:
            raise ValueError("order exceeds the tabulated depth")
        return self.terms[:order + 1].sum(axis=0)

    def normalization(self, order=None):
        """Integral of the truncated series over the final slice."""
        order = self.cfg.order if order is None else int(order)
        M = self.cfg.time_slices
        w = self.grids[M].weights
        n_nodes = w.size
        total = 0.0
        for tab in self.tables[:order + 1]:
            total += float(w @ tab[M][:n_nodes])
        return total

    def term_norms(self):
        """L1 norm of each tabulated term over the final slice."""
        M = self.cfg.time_slices
        w = self.grids[M].weights
        n_nodes = w.size
        return np.array([float(w @ np.abs(tab[M][:n_nodes]))
                         for tab in self.tables])


def _tail_bound(coeffs, cfg, t, dx):
    if not cfg.tail_bound_enabled:
        return np.full(np.shape(dx), np.nan)
    total = np.zeros(np.shape(dx))
    envelope = gaussian_kernel(cfg.tail_c * t, dx)
    for r in range(cfg.order + 1, cfg.order + 400):
        coef = beta_product_bound(r, coeffs.eta, cfg.tail_C, t)
        total = total + coef * envelope
        if coef * np.max(envelope) < 1e-18 * max(np.max(total), 1e-300):
            break
    return total


def density_series(coeffs: Coefficients, cfg: SeriesConfig | None,
                   t, x, y) -> SeriesResult:
    """Evaluate the truncated series at targets y with a tail majorant."""
    cfg = cfg or SeriesConfig()
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    ev = ContinuousSeries(coeffs, t, x, y_arr, cfg)
    terms = ev.terms
    values = terms.sum(axis=0)
    tail = _tail_bound(coeffs, cfg, t, y_arr - x)
    tol = cfg.quad.abs_tol + cfg.quad.rel_tol * np.abs(values)
    warn = bool(np.any(np.nan_to_num(tail) > tol))
    return SeriesResult(values=values, terms=terms, tail_bound=tail,
                        order=cfg.order, tail_warning=warn)


def _lattice_arrays(lattice):
    arr = np.asarray(lattice, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("lattice must be an array of (t, x, y) triples")
    if arr.shape[0] == 0:
        raise ValueError("lattice must be non-empty")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def fit_gaussian_envelope(taus, dxs, values, side, c_grid=None,
                          headroom=1e-12) -> BoundCertificate:
    """Fit the tightest Gaussian comparison over precomputed evaluations.

    For side 'upper' the certificate is values <= C g_{c tau}(dx) with the
    constant pair chosen to minimise C over the c grid; for side 'lower'
    it is values >= C^{-1} g_{tau/c}(dx), fitted over the points with
    strictly positive value.  max_violation is re-evaluated after fitting,
    so <= 0 certifies the bound on the whole lattice.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    taus = np.asarray(taus, dtype=float).ravel()
    dxs = np.asarray(dxs, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (taus.shape == dxs.shape == values.shape):
        raise ValueError("taus, dxs and values must share a shape")
    if np.any(taus <= 0.0):
        raise ValueError("tau values must be positive")
    if c_grid is None:
        c_grid = np.arange(1.05, 8.0001, 0.05)
    n_points = values.size
    if side == "upper":
        best = (math.inf, math.nan)
        for c in c_grid:
            need = float(np.max(values / gaussian_kernel(c * taus, dxs)))
            if need < best[0]:
                best = (need, float(c))
        C = max(best[0], 1e-300) * (1.0 + headroom)
        viol = float(np.max(values - C * gaussian_kernel(best[1] * taus,
                                                         dxs)))
        return BoundCertificate("upper", C, best[1], viol, n_points, 0)
    mask = values > 0.0
    n_excl = int(np.count_nonzero(~mask))
    if not np.any(mask):
        raise NumericFailure("no positive values to fit a lower bound")
    best = (math.inf, math.nan)
    for c in c_grid:
        need = float(np.max(gaussian_kernel(taus[mask] / c, dxs[mask])
                            / values[mask]))
        if need < best[0]:
            best = (need, float(c))
    C = max(best[0], 1e-300) * (1.0 + headroom)
    viol = float(np.max(gaussian_kernel(taus[mask] / best[1], dxs[mask]) / C
                        - values[mask]))
    return BoundCertificate("lower", C, best[1], viol, n_points, n_excl)


def gaussian_bound_fit(evaluator, lattice, side, c_grid=None,
                       headroom=1e-12) -> BoundCertificate:
    """Fit a two-sided Gaussian comparison for a density evaluator.

    lattice is a sequence of (t, x, y) triples; evaluator(t, x, y) returns
    the density value.  See fit_gaussian_envelope for the certificate
    semantics (that variant accepts precomputed values).
    """
    taus, xs, ys = _lattice_arrays(lattice)
    values = np.array([float(evaluator(t_, x_, y_))
                       for t_, x_, y_ in zip(taus, xs, ys)])
    return fit_gaussian_envelope(taus, ys - xs, values, side, c_grid=c_grid,
                                 headroom=headroom)


def time_lipschitz_check(coeffs: Coefficients, cfg: SeriesConfig | None,
                         t, s, lattice):
    """Empirical short-time Lipschitz ratio of the density in its time slot.

    Evaluates max over the (x, y) lattice of
    |p(0,t+s,x,y) - p(0,t,x,y)| * t / (s * g_{c t}(y-x)) with c fitted as
    the tightest upper Gaussian envelope of p(0,t,x,.).
    """
    if not 0.0 < s <= t:
        raise ValueError("need 0 < s <= t")
    cfg = cfg or SeriesConfig()
    pts = np.asarray(lattice, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ValueError("lattice must be a non-empty array of (x, y) pairs")
    ratio = 0.0
    for x0 in np.unique(pts[:, 0]):
        ys = pts[pts[:, 0] == x0, 1]
        p_t = ContinuousSeries(coeffs, t, x0, ys, cfg).values()
        p_ts = ContinuousSeries(coeffs, t + s, x0, ys, cfg).values()
        cert = fit_gaussian_envelope(np.full(ys.size, t), ys - x0, p_t,
                                     "upper")
        local = np.max(np.abs(p_ts - p_t) * t
                       / (s * gaussian_kernel(cert.fitted_c * t, ys - x0)))
        ratio = max(ratio, float(local))
    return ratio
