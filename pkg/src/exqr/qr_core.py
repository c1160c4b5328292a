"""Exact finite-sample quantile regression.

Regression quantiles are computed at a vertex of the check-loss linear
program, together with the gradient certificate that proves optimality.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _solver
from .errors import DesignError, DomainError, ExqrError, UnboundedFrontierError

CERT_TOL = _solver.CERT_TOL


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {tau}")
    return tau


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` and design ``X`` whose first column is the intercept."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != y.shape[0]:
            raise DesignError(f"y has {y.shape[0]} rows but X has {X.shape[0]}")
        T, d = X.shape
        if d < 1 or T < d:
            raise DesignError(f"need T >= d >= 1, got T={T}, d={d}")
        if not np.all(X[:, 0] == 1.0):
            raise DesignError("first column of X must be identically 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DesignError("data contain non-finite values")
        if np.linalg.matrix_rank(X) < d:
            raise DesignError("X is rank deficient")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @classmethod
    def from_covariates(cls, y, covariates=None) -> Dataset:
        """Build a dataset, prepending the intercept column to ``covariates``."""
        y = np.asarray(y, dtype=float).reshape(-1)
        if covariates is None:
            return cls(y, np.ones((y.size, 1)))
        Z = np.asarray(covariates, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        return cls(y, np.column_stack([np.ones(y.size), Z]))

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def xbar(self) -> np.ndarray:
        return self.X.mean(axis=0)


@dataclass(frozen=True)
class QuantileFit:
    tau: float
    beta_hat: np.ndarray
    basis: tuple[int, ...]
    residuals: np.ndarray
    certificate: np.ndarray
    unique: bool

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "beta_hat": [float(v) for v in self.beta_hat],
            "basis": list(self.basis),
            "certificate": [float(v) for v in self.certificate],
            "unique": self.unique,
        }


def check_loss(u, tau: float):
    """Check loss ``(tau - 1(u <= 0)) * u``; vectorized over ``u``."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = (tau - (u <= 0.0)) * u
    return float(out) if out.ndim == 0 else out


def objective(data: Dataset, tau: float, beta) -> float:
    """Check-loss sum at ``beta``."""
    return float(np.sum(check_loss(data.y - data.X @ np.asarray(beta, dtype=float), tau)))


def fit(data: Dataset, tau: float) -> QuantileFit:
    """Regression quantile at level ``tau`` as an exact LP vertex.

    When the minimizer is not unique the lexicographically smallest
    certified basis is returned and ``unique`` is False.
    """
    tau = _check_tau(tau)
    X, y = data.X, data.y
    q = tau * X.sum(axis=0)
    sol = _solver.solve(X, y, q, start_level=tau)
    return QuantileFit(
        tau=tau,
        beta_hat=sol.beta,
        basis=sol.basis,
        residuals=sol.residuals,
        certificate=sol.certificate,
        unique=sol.unique,
    )


def optimality_certificate(data: Dataset, fit: QuantileFit) -> np.ndarray:
    """``(tau sum X_t - sum 1(Y_t < X_t'b) X_t)' X(h)^{-1}``.

    Components are ordered like ``fit.basis``.  The vector lies in
    ``[0, 1]^d`` iff ``fit.beta_hat`` is optimal; strictly inside iff the
    optimum is unique.
    """
    X, y = data.X, data.y
    q = fit.tau * X.sum(axis=0)
    return _solver.gradient_certificate(X, y, q, np.ones(len(y)), fit.beta_hat, fit.basis)


@dataclass(frozen=True)
class QuantileProcess(Sequence):
    """Fits over an ascending grid of levels, plus the design mean."""

    fits: tuple[QuantileFit, ...]
    xbar: np.ndarray
    T: int
    _levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_levels", np.array([f.tau for f in self.fits]))

    def __getitem__(self, i):
        return self.fits[i]

    def __len__(self):
        return len(self.fits)

    @property
    def levels(self) -> np.ndarray:
        return self._levels.copy()

    def at(self, level: float) -> QuantileFit:
        hit = np.flatnonzero(np.isclose(self._levels, level, rtol=1e-12, atol=0.0))
        if hit.size == 0:
            raise KeyError(f"level {level} was not fitted")
        return self.fits[int(hit[0])]

    def beta(self, level: float) -> np.ndarray:
        return self.at(level).beta_hat


def fit_process(data: Dataset, taus) -> QuantileProcess:
    """Independent fits over a strictly ascending grid of levels."""
    taus = [float(t) for t in taus]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise DomainError("levels must be strictly ascending")
    fits = []
    for t in taus:
        try:
            fits.append(fit(data, t))
        except ExqrError as exc:
            raise type(exc)(f"at level {t}: {exc}") from exc
    return QuantileProcess(tuple(fits), data.xbar, data.T)


def frontier_fit(data: Dataset) -> np.ndarray:
    """Maximize ``xbar'b`` subject to ``y_t >= X_t'b`` for every row.

    Solved as an exact-penalty version of the vertex problem: the constraint
    violations get weight ``W`` which is doubled until the solution is
    feasible, at which point the certificate supplies nonnegative
    multipliers and the vertex is optimal for the constrained program.
    """
    X, y = data.X, data.y
    T = data.T
    q = X.mean(axis=0)
    tol = _solver._res_tol(y)
    W = 2.0 / T
    for _ in range(64):
        w = np.full(T, W)
        sol = _solver.solve(X, y, q, w, start_level=0.0)
        if np.all(sol.residuals >= -tol):
            return sol.beta
        W *= 2.0
    raise UnboundedFrontierError("frontier program has no finite maximizer")


def univariate_order_index(tau: float, T: int) -> int | None:
    """1-based order-statistic index solving the univariate problem, or None at integer tau*T."""
    k = tau * T
    if math.isclose(k, round(k), rel_tol=0.0, abs_tol=1e-9):
        return None
    return int(math.ceil(k))
