"""Simulation of the extreme-order limit law.

A realization holds the first ``M`` points of the limit Poisson process,

    J_i = ln(G_i) + X_i'c          (type 1)
    J_i = -G_i^(-xi) * X_i'c       (type 2)
    J_i =  G_i^(-xi) * X_i'c       (type 3)

with ``G_i`` cumulative sums of unit exponentials and ``X_i`` i.i.d. centered
design points.  The limit variable is the argmin of
``-k z_1 + sum_i (X_i'z - J_i)^+``, found with the same vertex solver as the
finite-sample fit.  Truncation at ``M`` points is certified after the fact:
every unseen point has ``J`` above a computable bound, and if that bound
exceeds ``max_x x'z`` over the support, the unseen points are inactive in a
neighbourhood of ``z`` and convexity makes ``z`` the exact argmin.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _solver, rng as rngmod
from .errors import (
    DegenerateBasisError,
    DomainError,
    ExqrError,
    InfeasibleConstraintsError,
    TruncationError,
    UnboundedError,
)
from .tails import HeterogeneityProfile, TailModel, TailType, eta, k_function, mean_measure_inverse

# design(rng, n) -> (n, d) centered design points with a leading column of ones
DesignSampler = Callable[[np.random.Generator, int], np.ndarray]

MAX_DOUBLINGS = 4
STABILITY_TOL = 1e-9


def default_truncation(k: float) -> int:
    return max(500, math.ceil(50 * k))


@dataclass(frozen=True)
class PoissonRealization:
    gammas: np.ndarray
    xs: np.ndarray
    js: np.ndarray
    tail_type: TailType
    xi: float
    profile: HeterogeneityProfile

    @property
    def M(self) -> int:
        return self.gammas.size

    @property
    def d(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class LimitSample:
    k: float
    z: np.ndarray
    z_centered: np.ndarray
    certificate: np.ndarray
    unique: bool
    M_used: int
    basis: tuple[int, ...]
    constrained: bool = False


def univariate_design(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.ones((n, 1))


def _points(gammas, xs, profile, xi):
    xc = xs @ profile.c
    tt = profile.tail_type
    if tt is TailType.TYPE1:
        return np.log(gammas) + xc
    if tt is TailType.TYPE2:
        return -(gammas ** (-xi)) * xc
    return gammas ** (-xi) * xc


def points_via_mean_measure(gammas, xs, profile: HeterogeneityProfile, xi: float) -> np.ndarray:
    """The same points built as ``h^{-1}(G_i / K(X_i))``."""
    K = k_function(xs, profile, xi)
    return mean_measure_inverse(gammas / K, profile.tail_type, xi)


def sample_points(
    model: TailModel,
    profile: HeterogeneityProfile,
    design: DesignSampler,
    M: int,
    seed: int,
    key: tuple = (),
) -> PoissonRealization:
    """First ``M`` limit points from the stream ``(seed, *key)``.

    Gammas and design points come from separate substreams, so the
    realization for ``2M`` extends the one for ``M``.
    """
    if M < 1:
        raise DomainError("M must be positive")
    if profile.tail_type is not model.tail_type:
        raise DomainError("profile and model disagree on the tail type")
    g = rngmod.substream(seed, *key, rngmod.LIMIT_GAMMA)
    gammas = np.cumsum(g.standard_exponential(M))
    xs = np.asarray(design(rngmod.substream(seed, *key, rngmod.LIMIT_DESIGN), M), dtype=float)
    if xs.shape != (M, profile.d):
        raise DomainError(f"design sampler returned shape {xs.shape}, expected {(M, profile.d)}")
    js = _points(gammas, xs, profile, model.xi)
    return PoissonRealization(gammas, xs, js, model.tail_type, model.xi, profile)


def limit_objective(z, r: PoissonRealization, k: float) -> float:
    """``-k mu'z + sum_i (X_i'z - J_i)^+`` over the retained points."""
    z = np.asarray(z, dtype=float)
    return float(-k * z[0] + np.sum(np.maximum(r.xs @ z - r.js, 0.0)))


def gradient_condition(z_h, r: PoissonRealization, k: float, tol: float = _solver.PIVOT_TOL):
    """Gradient certificate at a vertex ``z_h`` and its uniqueness flag.

    The basis is read off from the points lying on ``x'z_h = J``.
    """
    z_h = np.asarray(z_h, dtype=float)
    resid = r.js - r.xs @ z_h
    scale = tol * max(1.0, float(np.max(np.abs(r.js))))
    on = np.flatnonzero(np.abs(resid) <= scale)
    if on.size < r.d:
        raise DegenerateBasisError("z_h does not sit on d limit points")
    basis = tuple(int(i) for i in on[: r.d])
    if on.size > r.d:
        # degenerate vertex: first independent subset in index order
        from itertools import combinations

        for cand in combinations(on.tolist(), r.d):
            if abs(np.linalg.det(r.xs[list(cand)])) > 1e-12:
                basis = cand
                break
    q = np.zeros(r.d)
    q[0] = k
    zeta = _solver.gradient_certificate(r.xs, r.js, q, np.ones(r.M), z_h, basis)
    unique = bool(np.all((zeta > _solver.CERT_TOL) & (zeta < 1.0 - _solver.CERT_TOL)))
    return zeta, unique


def _constraint_points(r: PoissonRealization) -> np.ndarray:
    sv = r.profile.support_vertices
    return r.xs if sv is None else sv


def truncation_certified(z, r: PoissonRealization) -> bool:
    """True if no point beyond the retained ``M`` can be active near ``z``."""
    V = _constraint_points(r)
    xc = V @ r.profile.c
    gM = r.gammas[-1]
    if r.tail_type is TailType.TYPE1:
        jmin = math.log(gM) + float(xc.min())
    elif r.tail_type is TailType.TYPE2:
        jmin = -(gM ** (-r.xi)) * float(xc.max())
    else:
        jmin = gM ** (-r.xi) * float(xc.min())
    top = float(np.max(V @ z))
    return jmin > top + _solver.PIVOT_TOL * (1.0 + abs(top))


def solve_limit(r: PoissonRealization, k: float, *, certify: bool = True) -> LimitSample:
    """Argmin of the truncated limit objective.

    With ``certify`` (the default) the unseen-point bound must hold at the
    solution, otherwise ``TruncationError`` is raised; an unbounded
    truncated objective raises it as well.
    """
    if k <= 0:
        raise DomainError("k must be positive")
    d = r.d
    q = np.zeros(d)
    q[0] = k
    try:
        sol = _solver.solve(r.xs, r.js, q, start_level=min(k / r.M, 1.0))
    except UnboundedError as exc:
        raise TruncationError(f"truncated objective unbounded with M={r.M}") from exc
    constrained = False
    if r.tail_type is TailType.TYPE2:
        V = _constraint_points(r)
        if np.max(V @ sol.beta) > _solver.PIVOT_TOL:
            sol = _solve_constrained(r, q, V, k)
            constrained = True
    if certify and not truncation_certified(sol.beta, r):
        raise TruncationError(f"retained points do not certify the argmin at M={r.M}")
    z = sol.beta
    return LimitSample(
        k=float(k),
        z=z,
        z_centered=z - eta(k, r.profile, r.xi),
        certificate=sol.certificate,
        unique=sol.unique,
        M_used=r.M,
        basis=sol.basis,
        constrained=constrained,
    )


def _solve_constrained(r, q, V, k):
    # exact penalty: constraint rows x'z <= 0 with weight W, doubled until feasible
    X = np.vstack([r.xs, V])
    y = np.concatenate([r.js, np.zeros(len(V))])
    W = 10.0 * (k + 1.0)
    for _ in range(60):
        w = np.concatenate([np.ones(r.M), np.full(len(V), W)])
        sol = _solver.solve(X, y, q, w, start_level=min(k / r.M, 1.0))
        if np.max(V @ sol.beta) <= _solver.PIVOT_TOL:
            return sol
        W *= 2.0
    raise InfeasibleConstraintsError("type-2 constraint set could not be enforced")


def draw_limit(
    k: float,
    model: TailModel,
    profile: HeterogeneityProfile,
    design: DesignSampler,
    seed: int,
    key: tuple = (),
    M: int | None = None,
    adaptive: bool = True,
) -> LimitSample:
    """One draw of the limit variable.

    With ``adaptive`` a solution is accepted when the unseen-point bound
    certifies it, or when doubling ``M`` leaves it unchanged to within
    ``STABILITY_TOL``.  The second route matters for type-2 tails with
    d > 1: there the support constraint is enforced by infinitely many points
    piling up at ``J = 0`` and the bound can never hold exactly.  Without
    ``adaptive`` the argmin over the first ``M`` points is returned as is.
    """
    M = default_truncation(k) if M is None else int(M)
    if not adaptive:
        return solve_limit(sample_points(model, profile, design, M, seed, key), k, certify=False)
    prev = None
    for _ in range(MAX_DOUBLINGS + 1):
        r = sample_points(model, profile, design, M, seed, key)
        try:
            s = solve_limit(r, k, certify=False)
        except TruncationError:
            prev = None
        else:
            if truncation_certified(s.z, r):
                return s
            if prev is not None and np.all(np.abs(s.z - prev.z) <= STABILITY_TOL * (1.0 + np.abs(s.z))):
                return prev
            prev = s
        M *= 2
    raise TruncationError(f"truncation not certified after {MAX_DOUBLINGS} doublings (M={M // 2})")


@dataclass(frozen=True)
class LimitDistribution:
    """Replicated draws; row ``i`` belongs to replication ``i``."""

    k: float
    z: np.ndarray
    z_centered: np.ndarray
    unique: np.ndarray
    M_used: np.ndarray
    certificates: np.ndarray

    @property
    def R(self) -> int:
        return self.z.shape[0]

    def quantiles(self, probs) -> np.ndarray:
        return np.quantile(self.z, probs, axis=0)

    def write_csv(self, path) -> None:
        d = self.z.shape[1]
        header = (
            ["rep", "k"]
            + [f"z{j + 1}" for j in range(d)]
            + [f"zc{j + 1}" for j in range(d)]
            + ["unique", "M_used"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.R):
                w.writerow(
                    [i, repr(self.k)]
                    + [repr(float(v)) for v in self.z[i]]
                    + [repr(float(v)) for v in self.z_centered[i]]
                    + [int(self.unique[i]), int(self.M_used[i])]
                )


def sample_limit_distribution(
    k: float,
    model: TailModel,
    profile: HeterogeneityProfile,
    design: DesignSampler,
    R: int,
    seed: int,
    *,
    M: int | None = None,
    workers: int = 1,
    key: tuple = (),
    adaptive: bool = True,
) -> LimitDistribution:
    """``R`` independent draws of the limit variable.

    Replication ``i`` uses the stream ``(seed, *key, i)``; output does not
    depend on ``workers``.
    """
    if R < 1:
        raise DomainError("R must be at least 1")

    def one(i):
        try:
            return draw_limit(k, model, profile, design, seed, (*key, i), M, adaptive)
        except ExqrError as exc:
            raise type(exc)(f"replication {i}: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(one, range(R)))
    else:
        draws = [one(i) for i in range(R)]
    return LimitDistribution(
        k=float(k),
        z=np.array([s.z for s in draws]),
        z_centered=np.array([s.z_centered for s in draws]),
        unique=np.array([s.unique for s in draws]),
        M_used=np.array([s.M_used for s in draws]),
        certificates=np.array([s.certificate for s in draws]),
    )
