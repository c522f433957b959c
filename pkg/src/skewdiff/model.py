"""Problem data: coefficient pairs, uniform time grids, assumption checks.

The dynamics handled by this package are one-dimensional SDEs with bounded
measurable drift, uniformly elliptic Hoelder diffusion coefficient and a
symmetric local-time term at the origin weighted by 2*alpha - 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Coefficients:
    """Drift b, diffusion sigma, skewness alpha and regularity metadata.

    eta is the declared Hoelder exponent of a = sigma^2, L_bound a common
    bound for sup|b| and the Hoelder constant of a, lambda_ell an
    ellipticity constant with 1/lambda_ell <= a < lambda_ell.  The callables
    must accept numpy arrays.  kinks lists abscissas where the coefficients
    are not smooth, so quadratures can place panel edges there.
    """

    drift: Callable
    sigma: Callable
    alpha: float
    eta: float = 1.0
    L_bound: float = 1.0
    lambda_ell: float = 2.0
    name: str = "custom"
    kinks: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.L_bound <= 0.0:
            raise ValueError("L_bound must be positive")
        if self.lambda_ell <= 1.0:
            raise ValueError("lambda_ell must exceed 1")

    def a(self, x):
        s = self.sigma(x)
        return s * s


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*T/N on [0, T].

    Times are always computed as i*T/N, never by cumulative addition, so
    t_N == T exactly and spacing does not drift.
    """

    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError("horizon T must be positive")
        if self.N < 1:
            raise ValueError("need at least one step")

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * (self.T / self.N)

    def t(self, i) -> float:
        if not 0 <= i <= self.N:
            raise ValueError(f"grid index {i} outside 0..{self.N}")
        return i * self.T / self.N

    def phi(self, s: float) -> float:
        """Largest grid time t_i <= s; s must lie in [0, T]."""
        if not 0.0 <= s <= self.T:
            raise ValueError(f"time {s} outside [0, {self.T}]")
        i = int(math.floor(s * self.N / self.T))
        i = min(max(i, 0), self.N)
        # Guard against floating error in the floor argument.
        while i > 0 and i * self.T / self.N > s:
            i -= 1
        while i < self.N and (i + 1) * self.T / self.N <= s:
            i += 1
        return i * self.T / self.N


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    observed: float
    bound: float
    witness: tuple


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    conditions: dict

    def summary_lines(self):
        lines = []
        for name, c in self.conditions.items():
            status = "ok" if c.passed else "VIOLATED"
            lines.append(
                f"{name}: {status} (observed {c.observed:.6g}, "
                f"bound {c.bound:.6g}, witness {c.witness})")
        return lines


def validate_assumptions(coeffs: Coefficients, probe_points,
                         pair_budget: int = 20000,
                         seed: int = 0) -> ValidationReport:
    """Sample-based check of boundedness, Hoelder regularity, ellipticity.

    Advisory only: a passing report is evidence, not proof, and a failing
    one pinpoints the worst witnesses.  Never raises on violation.
    """
    x = np.asarray(probe_points, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two probe points")
    b = np.asarray(coeffs.drift(x), dtype=float)
    sig = np.asarray(coeffs.sigma(x), dtype=float)
    a = sig * sig

    conditions = {}

    i_b = int(np.argmax(np.abs(b)))
    conditions["drift_bounded"] = ConditionReport(
        passed=bool(np.abs(b[i_b]) < coeffs.L_bound),
        observed=float(np.abs(b[i_b])), bound=coeffs.L_bound,
        witness=(float(x[i_b]),))

    n = x.size
    n_pairs = n * (n - 1) // 2
    if n_pairs <= pair_budget:
        ii, jj = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, size=pair_budget)
        jj = rng.integers(0, n, size=pair_budget)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
    gaps = np.abs(x[ii] - x[jj])
    quot = np.abs(a[ii] - a[jj]) / gaps ** coeffs.eta
    i_q = int(np.argmax(quot))
    conditions["a_hoelder"] = ConditionReport(
        passed=bool(quot[i_q] <= coeffs.L_bound * (1.0 + 1e-12)),
        observed=float(quot[i_q]), bound=coeffs.L_bound,
        witness=(float(x[ii[i_q]]), float(x[jj[i_q]])))

    i_lo = int(np.argmin(a))
    i_hi = int(np.argmax(a))
    lo_ok = a[i_lo] >= 1.0 / coeffs.lambda_ell
    hi_ok = a[i_hi] < coeffs.lambda_ell
    i_worst = i_hi if not hi_ok else i_lo
    conditions["ellipticity"] = ConditionReport(
        passed=bool(lo_ok and hi_ok),
        observed=float(a[i_worst]),
        bound=coeffs.lambda_ell,
        witness=(float(x[i_worst]),))

    i_s = int(np.argmin(sig))
    conditions["sigma_positive"] = ConditionReport(
        passed=bool(sig[i_s] > 0.0), observed=float(sig[i_s]), bound=0.0,
        witness=(float(x[i_s]),))

    return ValidationReport(
        passed=all(c.passed for c in conditions.values()),
        conditions=conditions)


def _const_fn(v):
    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(v))
        return out if out.ndim else float(out)
    return f


def _make_constant(alpha=0.5, drift=0.3, sigma=1.2):
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    a = sigma * sigma
    lam = max(a, 1.0 / a) * 1.15
    return Coefficients(
        drift=_const_fn(drift), sigma=_const_fn(sigma), alpha=alpha,
        eta=1.0, L_bound=abs(drift) + 1.0, lambda_ell=max(lam, 1.05),
        name="constant")


def _make_skew_bm(alpha=0.7):
    return Coefficients(
        drift=_const_fn(0.0), sigma=_const_fn(1.0), alpha=alpha,
        eta=1.0, L_bound=1.0, lambda_ell=1.5, name="skew-bm")


def _make_affine_truncated(alpha=0.5, drift_slope=0.25):
    def sig(x):
        x = np.asarray(x, dtype=float)
        out = np.sqrt(1.0 + np.minimum(1.0, np.abs(x)))
        return out if out.ndim else float(out)

    def b(x):
        x = np.asarray(x, dtype=float)
        out = drift_slope * np.clip(x, -1.0, 1.0)
        return out if out.ndim else float(out)

    return Coefficients(
        drift=b, sigma=sig, alpha=alpha, eta=1.0,
        L_bound=1.0 + abs(drift_slope) + 0.05, lambda_ell=3.0,
        name="affine-truncated", kinks=(-1.0, 0.0, 1.0))


def _make_hoelder_bump(alpha=0.5, eta=1.0, amp=1.0, base=1.0, center=0.0):
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    if base <= 0 or amp < 0:
        raise ValueError("need base > 0 and amp >= 0")

    def sig(x):
        x = np.asarray(x, dtype=float)
        out = np.sqrt(base + amp * np.minimum(1.0, np.abs(x - center) ** eta))
        return out if out.ndim else float(out)

    lam = max(base + amp, 1.0 / base) * 1.15
    return Coefficients(
        drift=_const_fn(0.0), sigma=sig, alpha=alpha, eta=eta,
        L_bound=amp + 0.2, lambda_ell=max(lam, 1.05), name="hoelder-bump",
        kinks=(center - 1.0, center, center + 1.0))


def _make_sine_breaker(alpha=0.5):
    # Deliberately misdeclared ellipticity constant, used to exercise the
    # failure path of validate_assumptions.
    def sig(x):
        x = np.asarray(x, dtype=float)
        out = np.sqrt(2.0 + 0.5 * np.sin(x))
        return out if out.ndim else float(out)

    return Coefficients(
        drift=_const_fn(0.0), sigma=sig, alpha=alpha, eta=1.0,
        L_bound=1.0, lambda_ell=1.2, name="sine-breaker")


MODEL_BUILDERS = {
    "constant": _make_constant,
    "skew-bm": _make_skew_bm,
    "affine-truncated": _make_affine_truncated,
    "hoelder-bump": _make_hoelder_bump,
    "sine-breaker": _make_sine_breaker,
}


def make_model(name: str, **params) -> Coefficients:
    """Build a catalog model by name; unknown names raise ValueError."""
    try:
        builder = MODEL_BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_BUILDERS))
        raise ValueError(f"unknown model '{name}' (known: {known})") from None
    return builder(**params)
