"""Euler-type scheme for the skew diffusion.

Each step freezes drift and diffusion at the current state and draws the
next state exactly from the resulting drifted skew Brownian law, so the
one-step transition density is available in closed form.  On top of the
simulator this module provides the exact small-chain density, a discrete
smoothing kernel comparing a scheme step with a terminally frozen step,
the discrete time-space convolution, and two series evaluators for the
scheme density: a finite expansion driven by the discrete kernel and a
truncated hybrid expansion driven by the continuous kernel.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import (_drifted_from_uniform, _drifted_pdf_vec,
                      _driftless_from_draws, skew_bm_density)
from .model import Coefficients, TimeGrid
from .numerics import (NumericFailure, QuadConfig, QuadratureError,
                       RngStream, beta_product_bound, gaussian_kernel,
                       panelized_nodes, quad_space)
from .parametrix import kernel_H

__all__ = [
    "PathSample", "DiscreteSeriesConfig", "SchemeSeriesResult",
    "MCDensityResult", "simulate_path", "mc_terminal_samples",
    "one_step_density", "chain_density", "discrete_kernel_HN",
    "discrete_convolve", "DiscreteSeries", "scheme_density_series",
    "mc_density_estimate",
]

_BLOCK = 4096


@dataclass(frozen=True)
class PathSample:
    """States of one scheme path at the grid times."""

    grid: TimeGrid
    states: np.ndarray
    stream_id: int


def _step_states(coeffs: Coefficients, h, y, rng):
    """Advance a vector of states by one exact scheme step.

    The variate layout per step is fixed (one standard normal plus three
    uniforms per sample unless alpha = 1/2, which needs the normal only),
    so generator consumption never depends on the current states or on
    which sampling branch each entry takes.
    """
    y = np.asarray(y, dtype=float)
    sig = np.asarray(coeffs.sigma(y), dtype=float)
    b = np.asarray(coeffs.drift(y), dtype=float)
    sqh = math.sqrt(h)
    if coeffs.alpha == 0.5:
        return y + b * h + sig * sqh * rng.standard_normal(y.size)
    Z = rng.standard_normal(y.size)
    U = rng.random((y.size, 3))
    start = y / sig
    mu = b / sig
    out = np.empty(y.size)
    still = mu == 0.0
    if np.any(still):
        out[still] = _driftless_from_draws(coeffs.alpha, start[still], sqh,
                                           Z[still], U[still])
    moving = ~still
    if np.any(moving):
        out[moving] = _drifted_from_uniform(coeffs.alpha, mu[moving],
                                            start[moving], h, U[moving, 0])
    return sig * out


def simulate_path(coeffs: Coefficients, grid: TimeGrid, stream: RngStream,
                  x0) -> PathSample:
    """Simulate one scheme path, exact in law at every grid time."""
    rng = stream.generator()
    states = np.empty(grid.N + 1)
    states[0] = float(x0)
    y = np.array([float(x0)])
    for k in range(grid.N):
        try:
            y = _step_states(coeffs, grid.h, y, rng)
        except NumericFailure as exc:
            raise NumericFailure(f"sampling failed at step {k}: {exc}") \
                from exc
        states[k + 1] = y[0]
    return PathSample(grid=grid, states=states, stream_id=stream.stream_id)


def _block_sizes(n_paths):
    full, rem = divmod(int(n_paths), _BLOCK)
    return [_BLOCK] * full + ([rem] if rem else [])


def mc_terminal_samples(coeffs: Coefficients, grid: TimeGrid, x0, n_paths,
                        seed, threads=None):
    """Terminal states of n_paths scheme paths, reproducible from the seed.

    Paths run in fixed-size blocks with one counter-based stream per block
    and are concatenated in block order, so the output depends only on
    (coeffs, grid, x0, n_paths, seed) and never on the worker count.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    sizes = _block_sizes(n_paths)

    def run_block(b):
        rng = RngStream(seed, b).generator()
        y = np.full(sizes[b], float(x0))
        for k in range(grid.N):
            try:
                y = _step_states(coeffs, grid.h, y, rng)
            except NumericFailure as exc:
                raise NumericFailure(
                    f"sampling failed in block {b} at step {k}: {exc}") \
                    from exc
        return y

    workers = threads if threads else (os.cpu_count() or 1)
    if workers <= 1 or len(sizes) == 1:
        parts = [run_block(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_block, range(len(sizes))))
    return np.concatenate(parts)


def one_step_density(coeffs: Coefficients, h, yk, yk1, y_side=None):
    """Transition density of a single scheme step from yk to yk1.

    The step is a drifted skew Brownian increment in units of sigma(yk):
    the unit-diffusion closed form is evaluated at yk1/sigma(yk) from
    start yk/sigma(yk) with drift b(yk)/sigma(yk) and divided by
    sigma(yk).  yk and yk1 broadcast; y_side picks the one-sided limit at
    yk1 = 0.
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    yk = np.asarray(yk, dtype=float)
    yk1 = np.asarray(yk1, dtype=float)
    sig = np.asarray(coeffs.sigma(yk), dtype=float)
    mu = np.asarray(coeffs.drift(yk), dtype=float) / sig
    if y_side is not None:
        if y_side not in ("+", "-"):
            raise ValueError("y_side must be '+' or '-'")
        if y_side == "-":
            # Densities are two-sided at 0; nudge exact zeros onto the
            # negative branch without perturbing the Gaussian arguments.
            yk1 = np.where(yk1 == 0.0, -1e-300, yk1)
    out = _drifted_pdf_vec(coeffs.alpha, mu, yk / sig, float(h),
                           yk1 / sig) / sig
    if out.ndim == 0:
        return float(out)
    return out


def _envelope_nodes(coeffs: Coefficients, tau, x, quad: QuadConfig,
                    n_per_panel, drift_bound=None):
    """Quadrature nodes covering the diffusive envelope after time tau."""
    B = drift_bound if drift_bound is not None else coeffs.L_bound
    half = quad.space_truncation_radius * \
        math.sqrt(coeffs.lambda_ell * tau) + B * tau
    probe = np.linspace(x - half, x + half, 65)
    a_hi = float(np.max(np.asarray(coeffs.a(probe), dtype=float)))
    half = quad.space_truncation_radius * math.sqrt(a_hi * tau) + B * tau
    return panelized_nodes(x - half, x + half, n_per_panel,
                           split_points=tuple(sorted({0.0, *coeffs.kinks})))


def chain_density(coeffs: Coefficients, grid: TimeGrid, j, i, x, y,
                  quad: QuadConfig | None = None):
    """Scheme density at t_i from (t_j, x) by brute-force step chaining.

    Direct quadrature over the intermediate states; the cost grows
    exponentially with the gap, so at most three steps are accepted.  This
    is the ground-truth oracle for the series evaluators.
    """
    if not 0 <= j < i <= grid.N:
        raise ValueError("need 0 <= j < i <= N")
    steps = i - j
    if steps > 3:
        raise ValueError("chain density supports gaps of at most 3 steps")
    quad = quad or QuadConfig()
    h = grid.h
    if steps == 1:
        return float(one_step_density(coeffs, h, x, y))

    def value(n_per_panel):
        z, w = _envelope_nodes(coeffs, h, x, quad, n_per_panel)
        f = w * one_step_density(coeffs, h, x, z)
        if steps == 2:
            return float(f @ one_step_density(coeffs, h, z, y))
        z2, w2 = _envelope_nodes(coeffs, 2.0 * h, x, quad, n_per_panel)
        g = (f @ one_step_density(coeffs, h, z[:, None], z2[None, :])) * w2
        return float(g @ one_step_density(coeffs, h, z2, y))

    coarse = value(quad.space_nodes)
    fine = value(2 * quad.space_nodes)
    err = abs(fine - coarse)
    if err > quad.abs_tol + quad.rel_tol * abs(fine):
        raise QuadratureError(
            f"chain quadrature did not converge (gap {err:.3e})",
            estimate=fine, error=err)
    return fine


def discrete_kernel_HN(coeffs: Coefficients, grid: TimeGrid, j, jp, x, xp,
                       quad: QuadConfig | None = None):
    """Discrete smoothing kernel between grid times t_j < t_jp.

    Compares one scheme step against one step frozen at the terminal
    point.  For adjacent times this is h^{-1}(p_N - ptilde) evaluated over
    one step.  For wider gaps the frozen-step branch collapses through the
    Chapman-Kolmogorov identity (a frozen step has constant sigma, so
    chaining frozen kernels is exact), leaving a single quadrature of the
    scheme one-step density against the frozen kernel over the remaining
    window, minus the frozen kernel over the full window, all divided by
    the step size.
    """
    if not 0 <= j < jp <= grid.N:
        raise ValueError("need 0 <= j < jp <= N")
    quad = quad or QuadConfig()
    h = grid.h
    tau = (jp - j) * h
    x = float(x)
    xp = float(xp)
    a_xp = float(coeffs.a(xp))
    p_full = skew_bm_density(coeffs.alpha, a_xp * tau, x, xp)
    if jp == j + 1:
        return float((one_step_density(coeffs, h, x, xp) - p_full) / h)

    def integrand(z):
        return np.asarray(one_step_density(coeffs, h, x, z)) * \
            skew_bm_density(coeffs.alpha, a_xp * (tau - h), z, xp)

    scale = math.sqrt(float(coeffs.a(x)) * h) + abs(float(coeffs.drift(x))) * h
    inner = quad_space(integrand, x, scale, quad,
                       split_points=tuple(sorted({0.0, *coeffs.kinks})))
    return float((inner - p_full) / h)


def discrete_convolve(f, g, grid: TimeGrid, j, jp, x, xp,
                      quad: QuadConfig | None = None,
                      f_dirac_at_start=True, g_dirac_at_end=False,
                      space_scale=1.5):
    """Grid time-space convolution sum_i h * int f(j,i,x,z) g(i,jp,z,xp) dz.

    f and g are called with grid indices, f(j, i, x, z) vectorized in z.
    The empty-sum convention returns 0 when j >= jp.  f_dirac_at_start
    means f at coincident times is the Dirac mass at its start, which
    turns the i = j summand into h * g(j, jp, x, xp); g_dirac_at_end means
    g is the identity kernel, so the convolution reproduces f over the
    whole window.  The inner integral runs over the elapsed-time envelope
    around x, space_scale standard deviations per unit of sqrt(elapsed);
    node doubling inside quad_space validates the resolution.
    """
    if j >= jp:
        return 0.0
    if g_dirac_at_end:
        return float(f(j, jp, x, xp))
    quad = quad or QuadConfig()
    h = grid.h
    total = h * float(g(j, jp, x, xp)) if f_dirac_at_start else 0.0
    for i in range(j + 1, jp):
        tau = (i - j) * h

        def integrand(z, i=i):
            return np.asarray(f(j, i, x, z), dtype=float) * \
                np.asarray(g(i, jp, z, xp), dtype=float)

        total += h * quad_space(integrand, x, space_scale * math.sqrt(tau),
                                quad)
    return float(total)


@dataclass(frozen=True)
class DiscreteSeriesConfig:
    """Resolution knobs for the scheme-density series evaluators.

    kind 'full_discrete' runs the finite expansion driven by the discrete
    kernel; its order defaults to the full depth jp - j, at which the
    expansion is exact.  kind 'hybrid' runs the truncated expansion driven
    by the continuous kernel and reports a Beta-product tail majorant.
    The spatial grid is shared by all time slices and sized so that
    panel_factor * sqrt(a_lo * h) long panels resolve the one-step kernel.
    """

    kind: str = "full_discrete"
    order: int | None = None
    radius: float = 8.0
    panel_factor: float = 4.0
    panel_nodes: int = 16
    max_nodes: int = 1200
    drift_bound: float | None = None
    tail_bound_enabled: bool = True
    tail_C: float = 1.0
    tail_c: float = 3.0
    quad: QuadConfig = field(default_factory=QuadConfig)
    table_guard: float = 1e12

    def __post_init__(self):
        if self.kind not in ("full_discrete", "hybrid"):
            raise ValueError("kind must be 'full_discrete' or 'hybrid'")
        if self.order is not None and self.order < 0:
            raise ValueError("order must be >= 0")
        if self.radius <= 0.0 or self.panel_factor <= 0.0:
            raise ValueError("radius and panel_factor must be positive")
        if self.panel_nodes < 4:
            raise ValueError("need at least four nodes per panel")


@dataclass(frozen=True)
class SchemeSeriesResult:
    """Scheme-density series values with per-order terms and tail info."""

    values: np.ndarray
    terms: np.ndarray
    tail_bound: np.ndarray
    order: int
    kind: str


def _uniform_split_nodes(lo, hi, panel, n_per, cap, extra=()):
    """Uniform quadrature panels over [lo, hi], node cap applied.

    The origin and any extra cut points override nearby uniform edges so
    piecewise-defined integrands stay panel-aligned.
    """
    n_panels = max(1, math.ceil((hi - lo) / panel))
    if n_panels * n_per > cap:
        n_panels = max(1, cap // n_per)
    edges = np.linspace(lo, hi, n_panels + 1)
    cuts = [float(e) for e in edges[1:-1]]
    tol = 1e-9 * (hi - lo)
    for p in sorted({0.0, *extra}):
        if lo < p < hi:
            cuts = [e for e in cuts if abs(e - p) > tol] + [p]
    return panelized_nodes(lo, hi, n_per, split_points=sorted(cuts))


class DiscreteSeries:
    """Dynamic-programming evaluator of the scheme-density expansion.

    All grid slices share one spatial quadrature grid fine enough for the
    one-step kernel, so the transfer matrix between two slices depends
    only on their index gap; time homogeneity of the scheme then needs a
    single kernel matrix per gap.  Target points ride along as extra
    columns of every kernel matrix and are read off the final slice.
    """

    def __init__(self, coeffs: Coefficients, grid: TimeGrid, j, jp, x,
                 targets, cfg: DiscreteSeriesConfig | None = None):
        self.coeffs = coeffs
        self.grid = grid
        self.cfg = cfg or DiscreteSeriesConfig()
        self.j, self.jp = int(j), int(jp)
        if not 0 <= self.j < self.jp <= grid.N:
            raise ValueError("need 0 <= j < jp <= N")
        self.x = float(x)
        self.targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if self.targets.ndim != 1 or not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be a finite 1-d array")
        if np.any(self.targets == 0.0):
            raise ValueError("evaluation points must avoid 0")
        depth = self.jp - self.j
        cfg = self.cfg
        if cfg.kind == "full_discrete":
            self.order = depth if cfg.order is None else min(cfg.order, depth)
        else:
            self.order = 4 if cfg.order is None else cfg.order
        self._B = cfg.drift_bound if cfg.drift_bound is not None \
            else coeffs.L_bound
        self._build_grid()
        self._A = None
        h = grid.h
        self._kernels = [self._kernel_matrix(d) for d in range(1, depth)]
        self._dirac = np.array([self._start_row(d)
                                for d in range(1, depth + 1)])
        self.tables = [self._level0()]
        for r in range(self.order):
            self.tables.append(self._advance(self.tables[r], r))

    # -- construction ---------------------------------------------------

    def _build_grid(self):
        cfg, coeffs = self.cfg, self.coeffs
        h = self.grid.h
        window = (self.jp - self.j) * h
        half = cfg.radius * math.sqrt(coeffs.lambda_ell * window) + \
            self._B * window
        probe = np.linspace(self.x - half, self.x + half, 129)
        a_probe = np.asarray(coeffs.a(probe), dtype=float)
        a_hi = float(np.max(a_probe))
        a_lo = float(np.min(a_probe))
        if a_lo <= 0.0:
            raise NumericFailure("diffusion coefficient vanished on the "
                                 "series window")
        half = cfg.radius * math.sqrt(a_hi * window) + self._B * window
        panel = cfg.panel_factor * math.sqrt(a_lo * h)
        self.nodes, self.weights = _uniform_split_nodes(
            self.x - half, self.x + half, panel, cfg.panel_nodes,
            cfg.max_nodes, extra=coeffs.kinks)
        margin = cfg.radius * math.sqrt(a_hi * h) + self._B * h
        self._wx, self._ww = _uniform_split_nodes(
            self.x - half - margin, self.x + half + margin, panel,
            cfg.panel_nodes, cfg.max_nodes + 4 * cfg.panel_nodes,
            extra=coeffs.kinks)
        self.all_tgt = np.concatenate([self.nodes, self.targets])
        self._a_tgt = np.asarray(coeffs.a(self.all_tgt), dtype=float)

    def _one_step_matrix(self, src):
        """Scheme one-step density from src points to the inner w grid."""
        return np.asarray(one_step_density(
            self.coeffs, self.grid.h, np.asarray(src)[:, None],
            self._wx[None, :]), dtype=float)

    def _kernel_matrix(self, d):
        """Kernel between slices with index gap d, grid nodes to columns."""
        h = self.grid.h
        src = self.nodes
        if self.cfg.kind == "hybrid":
            return kernel_H(self.coeffs, 0.0, d * h, src[:, None],
                            self.all_tgt[None, :])
        p_full = skew_bm_density(self.coeffs.alpha,
                                 self._a_tgt[None, :] * (d * h),
                                 src[:, None], self.all_tgt[None, :])
        if d == 1:
            one = np.asarray(one_step_density(
                self.coeffs, h, src[:, None], self.all_tgt[None, :]),
                dtype=float)
            return (one - p_full) / h
        if self._A is None:
            self._A = self._one_step_matrix(src) * self._ww[None, :]
        bridge = skew_bm_density(self.coeffs.alpha,
                                 self._a_tgt[None, :] * ((d - 1) * h),
                                 self._wx[:, None], self.all_tgt[None, :])
        return (self._A @ bridge - p_full) / h

    def _start_row(self, d):
        """Kernel from the series start point over an index gap d."""
        h = self.grid.h
        if self.cfg.kind == "hybrid":
            side = "avg" if self.x == 0.0 else None
            return np.asarray(kernel_H(self.coeffs, 0.0, d * h, self.x,
                                       self.all_tgt, x_side=side),
                              dtype=float)
        p_full = skew_bm_density(self.coeffs.alpha, self._a_tgt * (d * h),
                                 self.x, self.all_tgt)
        if d == 1:
            one = np.asarray(one_step_density(self.coeffs, h, self.x,
                                              self.all_tgt), dtype=float)
            return (one - p_full) / h
        row = self._one_step_matrix([self.x])[0] * self._ww
        bridge = skew_bm_density(self.coeffs.alpha,
                                 self._a_tgt[None, :] * ((d - 1) * h),
                                 self._wx[:, None], self.all_tgt[None, :])
        return (row @ bridge - p_full) / h

    # -- evaluation -----------------------------------------------------

    def _level0(self):
        depth = self.jp - self.j
        h = self.grid.h
        tab = [None]
        for m in range(1, depth + 1):
            tab.append(skew_bm_density(self.coeffs.alpha,
                                       self._a_tgt * (m * h), self.x,
                                       self.all_tgt))
        return tab

    def _advance(self, prev, r):
        depth = self.jp - self.j
        h = self.grid.h
        n = self.nodes.size
        acc = np.zeros((depth + 1, self.all_tgt.size))
        if r == 0:
            acc[1:] += self._dirac
        if depth > 1:
            V = np.array([prev[m][:n] * self.weights
                          for m in range(1, depth)])
            for d in range(1, depth):
                acc[1 + d:depth + 1] += V[:depth - d] @ self._kernels[d - 1]
        out = [None] + [h * acc[m] for m in range(1, depth + 1)]
        peak = max(float(np.max(np.abs(row))) for row in out[1:])
        if not math.isfinite(peak) or peak > self.cfg.table_guard:
            raise NumericFailure(
                f"series table overflow at order {r + 1} (peak {peak:.3e})")
        return out

    @property
    def terms(self):
        """Per-order term values at the targets, shape (order+1, n)."""
        n = self.targets.size
        depth = self.jp - self.j
        return np.array([tab[depth][-n:] for tab in self.tables])

    def values(self, order=None):
        order = self.order if order is None else int(order)
        if not 0 <= order <= self.order:
            raise ValueError("order exceeds the tabulated depth")
        return self.terms[:order + 1].sum(axis=0)

    def values_at_gap(self, gap, order=None):
        """Series values at the targets over a smaller index gap.

        Time homogeneity makes slice g of the tables the expansion of the
        density over g steps, so intermediate windows are read off the
        same build.  Terms above the gap vanish identically, hence the
        full kind is exact here whenever its order reaches the gap.
        """
        gap = int(gap)
        if not 1 <= gap <= self.jp - self.j:
            raise ValueError("gap must lie in 1..jp-j")
        order = self.order if order is None else int(order)
        if not 0 <= order <= self.order:
            raise ValueError("order exceeds the tabulated depth")
        n = self.targets.size
        return np.array([tab[gap][-n:]
                         for tab in self.tables[:order + 1]]).sum(axis=0)

    def normalization(self, order=None):
        """Integral of the truncated series over the shared grid."""
        order = self.order if order is None else int(order)
        depth = self.jp - self.j
        n = self.nodes.size
        total = 0.0
        for tab in self.tables[:order + 1]:
            total += float(self.weights @ tab[depth][:n])
        return total

    def term_norms(self):
        """L1 norm of each tabulated term over the final slice."""
        depth = self.jp - self.j
        n = self.nodes.size
        return np.array([float(self.weights @ np.abs(tab[depth][:n]))
                         for tab in self.tables])


def _discrete_tail(coeffs, cfg, window, dx):
    if not cfg.tail_bound_enabled:
        return np.full(np.shape(dx), np.nan)
    total = np.zeros(np.shape(dx))
    envelope = gaussian_kernel(cfg.tail_c * window, dx)
    start = (cfg.order if cfg.order is not None else 4) + 1
    for r in range(start, start + 400):
        coef = beta_product_bound(r, coeffs.eta, cfg.tail_C, window)
        total = total + coef * envelope
        if coef * np.max(envelope) < 1e-18 * max(np.max(total), 1e-300):
            break
    return total


def scheme_density_series(coeffs: Coefficients, grid: TimeGrid,
                          cfg: DiscreteSeriesConfig | None, j, jp, x,
                          xp) -> SchemeSeriesResult:
    """Evaluate the scheme-density expansion at targets xp.

    The full_discrete kind at its default (full) order is exact up to
    quadrature, so its reported tail is zero; truncated runs and the
    hybrid kind carry the Beta-product majorant over the window.
    """
    cfg = cfg or DiscreteSeriesConfig()
    xp_arr = np.atleast_1d(np.asarray(xp, dtype=float))
    ev = DiscreteSeries(coeffs, grid, j, jp, x, xp_arr, cfg)
    terms = ev.terms
    values = terms.sum(axis=0)
    depth = jp - j
    if cfg.kind == "full_discrete" and ev.order == depth:
        tail = np.zeros(xp_arr.shape)
    else:
        tail = _discrete_tail(coeffs, cfg, depth * grid.h,
                              xp_arr - float(x))
    return SchemeSeriesResult(values=values, terms=terms, tail_bound=tail,
                              order=ev.order, kind=cfg.kind)


@dataclass(frozen=True)
class MCDensityResult:
    """Kernel density estimate of the terminal scheme state."""

    eval_points: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    bandwidth: float
    n_paths: int
    seed: int


def mc_density_estimate(coeffs: Coefficients, grid: TimeGrid, x0, n_paths,
                        bandwidth, eval_points, seed=0,
                        threads=None) -> MCDensityResult:
    """Gaussian-kernel density estimate of X^N_T with standard errors.

    bandwidth = None picks the normal-reference rule 1.06 s n^(-1/5).
    The estimate is a fixed-order reduction over the simulated sample, so
    it inherits the thread-count independence of mc_terminal_samples.
    """
    if n_paths < 10_000:
        raise ValueError("need at least 10^4 paths for a density estimate")
    pts = np.atleast_1d(np.asarray(eval_points, dtype=float))
    samples = mc_terminal_samples(coeffs, grid, x0, n_paths, seed,
                                  threads=threads)
    if bandwidth is None:
        bandwidth = 1.06 * float(np.std(samples)) * n_paths ** (-0.2)
    bw2 = float(bandwidth) ** 2
    s1 = np.zeros(pts.size)
    s2 = np.zeros(pts.size)
    for start in range(0, samples.size, 65536):
        chunk = samples[start:start + 65536]
        K = gaussian_kernel(bw2, pts[None, :] - chunk[:, None])
        s1 += K.sum(axis=0)
        s2 += (K * K).sum(axis=0)
    mean = s1 / n_paths
    var = np.maximum(s2 / n_paths - mean * mean, 0.0)
    se = np.sqrt(var / n_paths)
    return MCDensityResult(eval_points=pts, values=mean, std_errors=se,
                           bandwidth=float(bandwidth), n_paths=int(n_paths),
                           seed=int(seed))
