"""Intermediate-order inference for regression quantiles.

When ``tau -> 0`` with ``tau*T -> inf`` the normalized estimator

    Z_T = a_T (beta_hat(tau) - beta(tau)),
    a_T = sqrt(tau T) / mu'(beta(m tau) - beta(tau)),

is asymptotically ``N(0, Omega0)`` with the sandwich

    Omega0 = Q_H^{-1} Q_X Q_H^{-1} * xi^2 / (m^{-xi} - 1)^2,

``Q_X = E XX'`` and ``Q_H = E[XX' / H(X)]``.  Estimates at levels ``l_i tau``
and ``l_j tau`` have cross covariance ``Omega0 * min(l_i, l_j) / sqrt(l_i l_j)``.

Everything here is coordinate-covariant, so raw (uncentered) designs can be
used directly; ``H`` is then any function of the design point.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError, MomentError, SpacingDegenerateError
from .qr_core import Dataset, QuantileProcess, fit_process

DEFAULT_M = 2.0
TAU_T_FLOOR = 30.0


class RegimeWarning(UserWarning):
    """``tau * T`` is below the floor where the normal approximation is credible."""


@dataclass(frozen=True)
class IntermediateSpec:
    tau: float
    T: int
    m: float = DEFAULT_M
    levels_l: tuple[float, ...] = (1.0,)
    floor: float = TAU_T_FLOOR

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DomainError("tau must lie in (0, 1)")
        if self.m <= 1.0:
            raise DomainError("m must exceed 1")
        if not self.levels_l or min(self.levels_l) <= 0:
            raise DomainError("level multipliers must be positive")
        if self.tau * self.m * max(self.levels_l) >= 1.0:
            raise DomainError("m * l * tau must stay below 1")
        check_regime(self.tau * min(self.levels_l), self.T, self.floor)


def check_regime(tau: float, T: int, floor: float = TAU_T_FLOOR) -> bool:
    """Warn (``RegimeWarning``) and return False when ``tau*T < floor``."""
    if tau * T < floor:
        warnings.warn(
            f"tau*T = {tau * T:.3g} is below {floor:g}; normal approximation may be poor",
            RegimeWarning,
            stacklevel=2,
        )
        return False
    return True


def variance_factor(xi: float, m: float) -> float:
    """``xi^2 / (m^{-xi} - 1)^2``, equal to ``(ln m)^{-2}`` at ``xi = 0``."""
    if m <= 1.0:
        raise DomainError("m must exceed 1")
    lm = math.log(m)
    if xi == 0.0:
        return lm ** -2
    return (xi / math.expm1(-xi * lm)) ** 2


def normalization_ratio_limit(l: float, xi: float) -> float:
    """Limit of ``a_T / a_T(l)``, namely ``l^{-xi} / sqrt(l)``."""
    if l <= 0:
        raise DomainError("l must be positive")
    return l ** (-xi) / math.sqrt(l)


def cross_cov_factor(l_i: float, l_j: float) -> float:
    """``min(l_i, l_j) / sqrt(l_i l_j)``."""
    if l_i <= 0 or l_j <= 0:
        raise DomainError("level multipliers must be positive")
    return min(l_i, l_j) / math.sqrt(l_i * l_j)


def _require_pd(name: str, A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MomentError(f"{name} must be square")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
        raise MomentError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise MomentError(f"{name} is not positive definite") from exc
    return A


@dataclass(frozen=True)
class VarianceModel:
    Q_X: np.ndarray
    Q_H: np.ndarray
    xi: float
    m: float
    Omega0: np.ndarray

    def cross_covariance(self, l_i: float, l_j: float) -> np.ndarray:
        return self.Omega0 * cross_cov_factor(l_i, l_j)

    def joint_covariance(self, levels_l) -> np.ndarray:
        """Covariance of the stacked vector ``(Z_T(l_1), ..., Z_T(l_n))``."""
        levels_l = list(levels_l)
        F = np.array([[cross_cov_factor(a, b) for b in levels_l] for a in levels_l])
        return np.kron(F, self.Omega0)


def design_moments(X, H: Callable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(Q_X, Q_H)``; ``H`` maps an (n, d) array to n positive values.

    ``H = None`` is the homogeneous case ``H = 1``.
    """
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    Q_X = X.T @ X / T
    if H is None:
        return Q_X, Q_X.copy()
    h = np.asarray(H(X), dtype=float).reshape(-1)
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise MomentError("H(x) must be positive on the design")
    Q_H = (X / h[:, None]).T @ X / T
    return Q_X, Q_H


def omega0(Q_X, Q_H, xi: float, m: float = DEFAULT_M) -> VarianceModel:
    """Sandwich variance ``Q_H^{-1} Q_X Q_H^{-1}`` times ``variance_factor``."""
    Q_X = _require_pd("Q_X", Q_X)
    Q_H = _require_pd("Q_H", Q_H)
    Hinv = np.linalg.inv(Q_H)
    Om = Hinv @ Q_X @ Hinv * variance_factor(xi, m)
    Om = 0.5 * (Om + Om.T)
    return VarianceModel(Q_X=Q_X, Q_H=Q_H, xi=float(xi), m=float(m), Omega0=Om)


def oracle_scaling(beta: Callable, mu, tau: float, T: int, l: float = 1.0, m: float = DEFAULT_M) -> float:
    """``a_T(l) = sqrt(tau l T) / mu'(beta(m l tau) - beta(l tau))`` from the true ``beta(.)``."""
    mu = np.asarray(mu, dtype=float)
    den = float(mu @ (np.asarray(beta(m * l * tau)) - np.asarray(beta(l * tau))))
    if den <= 0:
        raise SpacingDegenerateError("population spacing is not positive", {"spacing": den})
    return math.sqrt(tau * l * T) / den


def feasible_scaling(fits: QuantileProcess, tau: float, l: float = 1.0, m: float = DEFAULT_M, T: int | None = None) -> float:
    """``sqrt(tau l T) / Xbar'(beta_hat(m l tau) - beta_hat(l tau))``."""
    T = fits.T if T is None else int(T)
    den = float(fits.xbar @ (fits.beta(m * l * tau) - fits.beta(l * tau)))
    if den <= 0:
        raise SpacingDegenerateError(
            f"spacing Xbar'(beta({m * l * tau:g}) - beta({l * tau:g})) = {den:.6g} is not positive",
            {"spacing": den},
        )
    return math.sqrt(tau * l * T) / den


@dataclass(frozen=True)
class Oracle:
    """Known tail parameters.

    ``beta`` is the true coefficient function; ``c`` gives ``H(x) = x'c``
    (raw coordinates), ``None`` meaning ``H = 1``.
    """

    xi: float
    beta: Callable
    c: np.ndarray | None = None
    mu: np.ndarray | None = None


FEASIBLE = "feasible"


@dataclass(frozen=True)
class ConfidenceIntervals:
    tau: float
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_T: float
    mode: str
    variance: VarianceModel

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["coefficient", "level", "estimate", "lower", "upper", "a_T", "mode"])
            for j in range(self.estimate.size):
                w.writerow(
                    [j + 1, repr(self.tau), repr(float(self.estimate[j])), repr(float(self.lower[j])),
                     repr(float(self.upper[j])), repr(self.a_T), self.mode]
                )


def intermediate_ci(
    data: Dataset,
    tau: float,
    m: float = DEFAULT_M,
    coverage: float = 0.95,
    mode: Oracle | str = FEASIBLE,
) -> ConfidenceIntervals:
    """Normal-approximation intervals ``beta_hat_j ± z sqrt(Omega0_jj) / a_T``.

    In feasible mode ``xi`` and ``H`` are replaced by the spacing estimates
    (Pickands-type ``xi`` with ``l = 2`` and ``H = c_hat``) and ``a_T`` by the
    feasible scaling.
    """
    from . import tail_index

    if not 0.0 <= coverage < 1.0:
        raise DomainError("coverage must lie in [0, 1)")
    check_regime(tau, data.T)
    z = float(stats.norm.ppf(0.5 + coverage / 2.0))
    if isinstance(mode, Oracle):
        H = None if mode.c is None else (lambda X, c=np.asarray(mode.c, dtype=float): X @ c)
        Q_X, Q_H = design_moments(data.X, H)
        vm = omega0(Q_X, Q_H, mode.xi, m)
        mu = data.xbar if mode.mu is None else np.asarray(mode.mu, dtype=float)
        a_T = oracle_scaling(mode.beta, mu, tau, data.T, 1.0, m)
        est = fit_process(data, [tau]).beta(tau)
        label = "oracle"
    elif mode == FEASIBLE:
        l = 2.0
        fits = fit_process(data, tail_index.tail_levels(tau, l, m))
        xi_hat = tail_index.pickands_xi(fits, tau, l, m)
        Q_X, Q_H = design_moments(data.X, lambda X: tail_index.heterogeneity_estimate(fits, tau, X, m))
        vm = omega0(Q_X, Q_H, xi_hat, m)
        a_T = feasible_scaling(fits, tau, 1.0, m)
        est = fits.beta(tau)
        label = FEASIBLE
    else:
        raise DomainError(f"unknown mode {mode!r}")
    half = z * np.sqrt(np.diag(vm.Omega0)) / a_T
    return ConfidenceIntervals(tau, est, est - half, est + half, a_T, label, vm)
