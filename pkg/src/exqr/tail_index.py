"""Tail-index and heterogeneity estimation from regression-quantile spacings.

The basic statistic is the ratio of spacings

    rho_hat(x, xdot, l) = x'(b(m l tau) - b(l tau)) / xdot'(b(m tau) - b(tau))

with ``b = beta_hat``.  At ``x = xdot = Xbar`` it estimates ``l^{-xi}``, which
gives the Pickands-type estimator ``xi_hat = -ln(rho_hat) / ln(l)``; at
``l = 1`` and ``xdot = Xbar`` it estimates the heterogeneity index ``x'c``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, SpacingDegenerateError
from .intermediate import check_regime, design_moments
from .qr_core import Dataset, QuantileProcess, fit_process

DEFAULT_L = 2.0
DEFAULT_M = 2.0


def default_tau(T: int) -> float:
    """``tau`` with ``tau*T = T^0.7``."""
    return T ** 0.7 / T


def tail_levels(tau: float, l: float = DEFAULT_L, m: float = DEFAULT_M) -> list[float]:
    """Sorted distinct levels among ``tau, m tau, l tau, m l tau``."""
    if l <= 0 or m <= 1:
        raise DomainError("need l > 0 and m > 1")
    raw = [tau, m * tau, l * tau, m * l * tau]
    if min(raw) <= 0 or max(raw) >= 1:
        raise DomainError(f"levels {raw} must lie in (0, 1)")
    out: list[float] = []
    for v in sorted(raw):
        if not out or not math.isclose(v, out[-1], rel_tol=1e-12):
            out.append(v)
    return out


def _spacing(fits: QuantileProcess, lo: float, hi: float) -> np.ndarray:
    return fits.beta(hi) - fits.beta(lo)


def spacing_ratio(fits: QuantileProcess, tau: float, x, xdot, l: float = DEFAULT_L, m: float = DEFAULT_M):
    """``rho_hat``; ``x`` may be one point or an (n, d) array of points."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    den = float(xdot @ _spacing(fits, tau, m * tau))
    if den == 0.0:
        raise SpacingDegenerateError("zero denominator spacing", {"denominator": den})
    num = x @ _spacing(fits, l * tau, m * l * tau)
    return num / den


def _four_spacings(fits, tau, l, m) -> dict:
    xb = fits.xbar
    return {
        "tau": float(xb @ fits.beta(tau)),
        "m*tau": float(xb @ fits.beta(m * tau)),
        "l*tau": float(xb @ fits.beta(l * tau)),
        "m*l*tau": float(xb @ fits.beta(m * l * tau)),
    }


def pickands_xi(fits: QuantileProcess, tau: float, l: float = DEFAULT_L, m: float = DEFAULT_M) -> float:
    """``-ln(rho_hat(Xbar, Xbar, l)) / ln(l)``."""
    if l <= 0 or l == 1:
        raise DomainError("l must be positive and different from 1")
    xb = fits.xbar
    den = float(xb @ _spacing(fits, tau, m * tau))
    num = float(xb @ _spacing(fits, l * tau, m * l * tau))
    if den <= 0 or num <= 0:
        raise SpacingDegenerateError(
            f"nonpositive spacing ratio ({num:.6g} / {den:.6g}); quantile crossing at tau*T = {tau * fits.T:.3g}",
            _four_spacings(fits, tau, l, m),
        )
    return -math.log(num / den) / math.log(l)


def heterogeneity_estimate(fits: QuantileProcess, tau: float, x, m: float = DEFAULT_M):
    """``rho_hat(x, Xbar, 1)``, an estimate of ``x'c``; affine in ``x``."""
    return spacing_ratio(fits, tau, x, fits.xbar, 1.0, m)


def pickands_variance(xi: float, pi: float = 1.0) -> float:
    """``pi * xi^2 (2^{2xi+1} + 1) / (2 (2^xi - 1) ln 2)^2``, extended continuously to ``xi = 0``."""
    if pi <= 0:
        raise DomainError("pi must be positive")
    ln2 = math.log(2.0)
    r = 1.0 / ln2 if xi == 0.0 else xi / math.expm1(xi * ln2)
    return pi * (2.0 ** (2.0 * xi + 1.0) + 1.0) * r * r / (4.0 * ln2 * ln2)


def _g(v: float, xi: float) -> float:
    # population spacing shape: (1 - v^{-xi}) / xi, ln v at xi = 0
    lv = math.log(v)
    return lv if xi == 0.0 else -math.expm1(-xi * lv) / xi


def spacing_xi_variance(xi: float, pi: float = 1.0, l: float = DEFAULT_L, m: float = DEFAULT_M) -> float:
    """Asymptotic variance of ``sqrt(tau T)(xi_hat - xi)`` for general ``l, m``.

    Delta method on the joint normal law of the four regression quantiles;
    coincides with ``pickands_variance`` at ``l = m = 2``.
    """
    if pi <= 0 or l <= 0 or l == 1 or m <= 1:
        raise DomainError("need pi > 0, l > 0, l != 1, m > 1")
    gm = _g(m, xi)
    lx = l ** (-xi)
    coef: dict[float, float] = {}
    for v, a in ((m * l, 1.0 / (lx * gm)), (l, -1.0 / (lx * gm)), (m, -1.0 / gm), (1.0, 1.0 / gm)):
        key = next((k for k in coef if math.isclose(k, v, rel_tol=1e-12)), v)
        coef[key] = coef.get(key, 0.0) + a
    levels = list(coef)
    a = np.array([coef[v] for v in levels])
    # cov of W(u), W(v): pi u^{-xi} v^{-xi} / max(u, v)
    C = np.array([[u ** (-xi) * v ** (-xi) / max(u, v) for v in levels] for u in levels])
    return pi * float(a @ C @ a) / math.log(l) ** 2


def spacing_ratio_limit(l: float, m: float, xi: float) -> float:
    """Limit of ``x'(beta(l tau) - beta(tau)) / x'(beta(m tau) - beta(tau))``."""
    if l <= 0 or m <= 0 or m == 1:
        raise DomainError("need l > 0, m > 0, m != 1")
    if xi == 0.0:
        return math.log(l) / math.log(m)
    return math.expm1(-xi * math.log(l)) / math.expm1(-xi * math.log(m))


def pi_hat(fits: QuantileProcess, X, tau: float, m: float = DEFAULT_M) -> float:
    """Plug-in ``mu' Q_H^{-1} Q_X Q_H^{-1} mu`` with ``H = c_hat`` and ``mu = Xbar``."""
    Q_X, Q_H = design_moments(X, lambda Z: heterogeneity_estimate(fits, tau, Z, m))
    v = np.linalg.solve(Q_H, fits.xbar)
    return float(v @ Q_X @ v)


@dataclass(frozen=True)
class SpacingEstimates:
    tau: float
    l: float
    m: float
    rho_hat: float
    xi_hat: float
    se_xi: float
    pi_hat: float
    coverage: float
    ci: tuple[float, float]
    c_points: np.ndarray = field(repr=False)
    c_values: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "xi_hat": self.xi_hat,
            "se_xi": self.se_xi,
            "ci": list(self.ci),
            "l": self.l,
            "m": self.m,
            "tau": self.tau,
            "pi_hat": self.pi_hat,
            "c_hat": [
                {"x": [float(v) for v in x], "c_hat": float(c)} for x, c in zip(self.c_points, self.c_values)
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def estimate_tail(
    data: Dataset,
    tau: float | None = None,
    l: float = DEFAULT_L,
    m: float = DEFAULT_M,
    points=None,
    coverage: float = 0.95,
) -> SpacingEstimates:
    """Tail index, its standard error and ``c_hat`` at ``points``.

    ``points`` are design points including the intercept; default ``Xbar``.
    """
    tau = default_tau(data.T) if tau is None else float(tau)
    if not 0.0 < coverage < 1.0:
        raise DomainError("coverage must lie in (0, 1)")
    check_regime(tau, data.T)
    fits = fit_process(data, tail_levels(tau, l, m))
    xi = pickands_xi(fits, tau, l, m)
    rho = float(spacing_ratio(fits, tau, fits.xbar, fits.xbar, l, m))
    p = pi_hat(fits, data.X, tau, m)
    se = math.sqrt(spacing_xi_variance(xi, p, l, m) / (tau * data.T))
    z = float(stats.norm.ppf(0.5 + coverage / 2.0))
    pts = np.atleast_2d(fits.xbar if points is None else np.asarray(points, dtype=float))
    if pts.shape[1] != data.d:
        raise DomainError(f"points must have {data.d} columns")
    cvals = np.asarray(heterogeneity_estimate(fits, tau, pts, m), dtype=float)
    return SpacingEstimates(
        tau=tau, l=float(l), m=float(m), rho_hat=rho, xi_hat=xi, se_xi=se, pi_hat=p,
        coverage=coverage, ci=(xi - z * se, xi + z * se), c_points=pts, c_values=cvals,
    )
