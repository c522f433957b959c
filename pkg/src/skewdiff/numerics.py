"""Shared numeric primitives.

Gaussian kernels and their derivatives, the Mittag-Leffler function, the
Beta-product majorant used to bound iterated smoothing kernels, fixed-node
Gauss-Legendre quadrature (plain and endpoint-singular), and counter-based
random streams for reproducible Monte Carlo.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Saturation threshold for series evaluation in log space.
_LOG_HUGE = 700.0


class QuadratureError(RuntimeError):
    """Quadrature did not converge under node doubling.

    Carries the best available estimate and the observed refinement gap so
    callers can decide whether to retry with a larger budget.
    """

    def __init__(self, message: str, estimate: float | None = None,
                 error: float | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NumericFailure(RuntimeError):
    """A numeric routine left its supported regime (bracketing, overflow)."""


@dataclass(frozen=True)
class QuadConfig:
    """Budget and tolerances for the fixed-node quadrature routines.

    space_truncation_radius is measured in units of the caller-supplied
    scale (typically one Gaussian standard deviation).
    """

    space_truncation_radius: float = 8.0
    space_nodes: int = 64
    time_nodes: int = 64
    singular_exponent: float = 0.5
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.space_truncation_radius <= 0:
            raise ValueError("space_truncation_radius must be positive")
        if self.space_nodes < 2 or self.time_nodes < 2:
            raise ValueError("need at least two quadrature nodes")
        if not 0.0 <= self.singular_exponent < 1.0:
            raise ValueError("singular_exponent must lie in [0, 1)")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


def gaussian_kernel(C, z):
    """Centered Gaussian density with variance C evaluated at z."""
    C = np.asarray(C, dtype=float)
    if np.any(C <= 0.0):
        raise ValueError("gaussian_kernel needs a positive variance")
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z / C) / (SQRT_2PI * np.sqrt(C))
    if out.ndim == 0:
        return float(out)
    return out


# Probabilists' Hermite polynomials; index = derivative order.
_HERMITE = (
    lambda u: np.ones_like(u),
    lambda u: u,
    lambda u: u * u - 1.0,
    lambda u: u * (u * u - 3.0),
    lambda u: u * u * (u * u - 6.0) + 3.0,
)


def gaussian_kernel_dz(C, z, order):
    """order-th derivative of gaussian_kernel with respect to z (order <= 4)."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError("derivative order must be one of 0..4")
    C = np.asarray(C, dtype=float)
    if np.any(C <= 0.0):
        raise ValueError("gaussian_kernel_dz needs a positive variance")
    z = np.asarray(z, dtype=float)
    u = z / np.sqrt(C)
    out = (-1.0) ** order * C ** (-order / 2.0) * _HERMITE[order](u) \
        * gaussian_kernel(C, z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def mittag_leffler(a, b, z, rel_tol=1e-12, abs_tol=1e-300, max_terms=100000):
    """Two-parameter Mittag-Leffler function E_{a,b}(z) by direct summation.

    Terms are evaluated in log space against log-Gamma so large arguments do
    not overflow term-by-term.  Summation stops once a term falls below
    rel_tol * |partial sum| + abs_tol.  Arguments are restricted to
    |z| <= 50; a saturating value (inf) is returned with a warning if the
    partial sum leaves the double range.
    """
    if a <= 0.0 or b <= 0.0:
        raise ValueError("mittag_leffler requires a > 0 and b > 0")
    if abs(z) > 50.0:
        raise ValueError("mittag_leffler argument restricted to |z| <= 50")
    if z == 0.0:
        return 1.0 / math.gamma(b)
    log_az = math.log(abs(z))
    sgn_z = 1.0 if z > 0 else -1.0
    total = 0.0
    sgn = 1.0
    for n in range(max_terms):
        log_term = n * log_az - special.gammaln(a * n + b)
        if log_term > _LOG_HUGE:
            warnings.warn("mittag_leffler saturated; returning inf",
                          RuntimeWarning, stacklevel=2)
            return math.inf
        term = sgn * math.exp(log_term)
        total += term
        if abs(total) > 1e308:
            warnings.warn("mittag_leffler saturated; returning inf",
                          RuntimeWarning, stacklevel=2)
            return math.inf
        if abs(term) < rel_tol * abs(total) + abs_tol:
            return total
        sgn *= sgn_z
    raise NumericFailure("mittag_leffler did not converge "
                         f"(a={a}, b={b}, z={z})")


def beta_product_bound(r, eta, C, dt):
    """Majorant C^(r+1) dt^(r eta/2) prod_{i=1..r} B(1+(i-1)eta/2, eta/2).

    This is the constant in front of the Gaussian envelope for the order-r
    term of the smoothing-kernel series; the Gaussian factor itself is left
    to the caller.  r = 0 yields C.
    """
    if not isinstance(r, (int, np.integer)) or r < 0:
        raise ValueError("order r must be a nonnegative integer")
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if C < 0.0:
        raise ValueError("C must be nonnegative")
    if C == 0.0:
        return 0.0
    log_val = (r + 1) * math.log(C) + 0.5 * r * eta * math.log(dt)
    for i in range(1, r + 1):
        log_val += special.betaln(1.0 + 0.5 * (i - 1) * eta, 0.5 * eta)
    return math.exp(log_val)


@lru_cache(maxsize=128)
def _leggauss(n: int):
    x, w = special.roots_legendre(n)
    return x, w


def gauss_legendre_panel(lo, hi, n):
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    if not hi > lo:
        raise ValueError("empty quadrature panel")
    x, w = _leggauss(int(n))
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid + half * x, half * w


def panelized_nodes(lo, hi, n_per_panel, split_points=()):
    """Nodes/weights on [lo, hi] cut at the interior split points."""
    cuts = sorted(p for p in split_points if lo < p < hi)
    edges = [lo, *cuts, hi]
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre_panel(a, b, n_per_panel)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def quad_space(f, center, scale, cfg: QuadConfig, split_points=(0.0,)):
    """Integrate f over [center - R*scale, center + R*scale].

    R is cfg.space_truncation_radius.  The domain is cut at the interior
    split points (by default at the origin, where the integrands of this
    package jump).  A single node-doubling pass supplies the error
    estimate; non-convergence raises QuadratureError with the refined
    estimate attached.
    """
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    lo = center - cfg.space_truncation_radius * scale
    hi = center + cfg.space_truncation_radius * scale

    def run(n):
        x, w = panelized_nodes(lo, hi, n, split_points)
        return float(np.sum(w * np.asarray(f(x), dtype=float)))

    coarse = run(cfg.space_nodes)
    fine = run(2 * cfg.space_nodes)
    err = abs(fine - coarse)
    if err > cfg.abs_tol + cfg.rel_tol * abs(fine):
        raise QuadratureError(
            f"space quadrature did not converge (gap {err:.3e})",
            estimate=fine, error=err)
    return fine


def quad_time_singular(f, s, t, exponent, cfg: QuadConfig):
    """Integrate f over [s, t] when f carries a (t-u)^(-exponent) factor.

    The power-law substitution u = t - v^(1/(1-exponent)) regularizes the
    upper endpoint; Gauss-Legendre is applied in the transformed variable.
    exponent must lie in [0, 1).  Callers with a singularity at the lower
    endpoint should flip the integrand first.
    """
    if not 0.0 <= exponent < 1.0:
        raise ValueError("singular exponent must lie in [0, 1)")
    if not t > s:
        raise ValueError("need t > s")
    q = 1.0 - exponent
    V = (t - s) ** q

    def run(n):
        v, w = gauss_legendre_panel(0.0, V, n)
        u = t - v ** (1.0 / q)
        jac = v ** (1.0 / q - 1.0) / q
        return float(np.sum(w * jac * np.asarray(f(u), dtype=float)))

    coarse = run(cfg.time_nodes)
    fine = run(2 * cfg.time_nodes)
    err = abs(fine - coarse)
    if err > cfg.abs_tol + cfg.rel_tol * abs(fine):
        raise QuadratureError(
            f"time quadrature did not converge (gap {err:.3e})",
            estimate=fine, error=err)
    return fine


class PanelGrid:
    """Quadrature nodes on [lo, hi] cut at split points, with interpolation.

    Wraps per-panel Gauss-Legendre nodes; a function tabulated on the nodes
    can be re-evaluated anywhere through the panel-wise barycentric
    interpolant (interp_matrix gives the linear map).  Queries outside
    [lo, hi] evaluate to 0, matching the Gaussian decay of the tabulated
    functions of this package.  Barycentric weights are computed lazily in
    panel-normalized coordinates to keep them in floating range.
    """

    def __init__(self, lo, hi, n_per_panel, split_points=(0.0,)):
        if not hi > lo:
            raise ValueError("empty panel grid")
        cuts = sorted(p for p in split_points if lo < p < hi)
        self.edges = [lo, *cuts, hi]
        self.panels = []
        xs, ws = [], []
        for a, b in zip(self.edges[:-1], self.edges[1:]):
            x, w = gauss_legendre_panel(a, b, n_per_panel)
            self.panels.append((a, b, x))
            xs.append(x)
            ws.append(w)
        self.nodes = np.concatenate(xs)
        self.weights = np.concatenate(ws)
        self._sizes = [p[2].size for p in self.panels]
        self._bary = None

    @property
    def lo(self):
        return self.edges[0]

    @property
    def hi(self):
        return self.edges[-1]

    def _bary_weights(self):
        if self._bary is None:
            self._bary = []
            for a, b, x in self.panels:
                u = (2.0 * x - (a + b)) / (b - a)
                D = u[:, None] - u[None, :]
                np.fill_diagonal(D, 1.0)
                self._bary.append(1.0 / np.prod(D, axis=1))
        return self._bary

    def interp_matrix(self, xq):
        """Dense matrix mapping tabulated node values to values at xq.

        Rows for queries outside [lo, hi] are zero; queries that coincide
        with a node reproduce it exactly.
        """
        xq = np.asarray(xq, dtype=float).ravel()
        out = np.zeros((xq.size, self.nodes.size))
        bary = self._bary_weights()
        off = 0
        assigned = np.zeros(xq.size, dtype=bool)
        for (a, b, x), bw, sz in zip(self.panels, bary, self._sizes):
            mask = (xq >= a) & (xq <= b) & ~assigned
            if np.any(mask):
                assigned |= mask
                u = (2.0 * x - (a + b)) / (b - a)
                uq = (2.0 * xq[mask] - (a + b)) / (b - a)
                d = uq[:, None] - u[None, :]
                hit = d == 0.0
                d[hit] = 1.0
                terms = bw / d
                rows = terms / np.sum(terms, axis=1)[:, None]
                hit_rows = hit.any(axis=1)
                if np.any(hit_rows):
                    rows[hit_rows] = hit[hit_rows].astype(float)
                out[np.nonzero(mask)[0], off:off + sz] = rows
            off += sz
        return out

    def interpolate(self, values, xq):
        """Evaluate the panel-wise interpolant of tabulated values at xq."""
        values = np.asarray(values, dtype=float)
        xq = np.asarray(xq, dtype=float)
        flat = self.interp_matrix(xq.ravel()) @ values
        return flat.reshape(xq.shape)


_UINT64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Every stream is a pure function of its key, so per-path streams give
    Monte Carlo results that do not depend on how work is scheduled.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _UINT64_MASK,
                        self.stream_id & _UINT64_MASK], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
