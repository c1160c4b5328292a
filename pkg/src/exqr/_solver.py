"""Exact vertex solver for weighted check-loss problems.

Both the finite-sample regression quantile and the Poisson limit objective are
instances of

    minimize   -q'b + sum_i w_i * (X_i'b - y_i)^+

over b in R^d.  For a regression quantile ``q = tau * sum_i X_i`` and ``w = 1``
(the check-loss sum differs from this by the constant ``tau * sum_i y_i``);
for the limit problem ``q = k * e_1``.  The solver walks between bases
``h`` (d row indices with zero residual), doing an exact line search along
the edge that leaves one basis row.  The gradient certificate

    zeta = (q - sum_{i: y_i < X_i'b} w_i X_i)' X(h)^{-1}

lies in ``[0, w_h]`` componentwise at optimal bases when only the basis rows
have zero residual.  At vertices with further zero residuals optimality is
checked on the full subdifferential instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateBasisError, DesignError, ExqrError, UnboundedError

PIVOT_TOL = 1e-9
CERT_TOL = 1e-8
EXPLORE_LIMIT = 5000


@dataclass(frozen=True)
class VertexSolution:
    beta: np.ndarray
    basis: tuple[int, ...]
    certificate: np.ndarray  # zeta / w[basis], aligned with ``basis``
    residuals: np.ndarray
    objective: float
    unique: bool
    iterations: int


def penalty_objective(X, y, q, w, beta) -> float:
    excess = X @ beta - y
    return float(-q @ beta + np.sum(w * np.maximum(excess, 0.0)))


def _res_tol(y: np.ndarray) -> float:
    return PIVOT_TOL * max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)


def _basis_inverse(X: np.ndarray, basis) -> np.ndarray:
    B = X[list(basis)]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(f"singular basis {tuple(basis)}") from exc
    if not np.all(np.isfinite(Binv)) or np.linalg.cond(B) > 1e13:
        raise DegenerateBasisError(f"singular basis {tuple(basis)}")
    return Binv


def vertex_point(X, y, basis) -> np.ndarray:
    """Solve ``X(h) b = y(h)``."""
    rows = list(basis)
    try:
        return np.linalg.solve(X[rows], y[rows])
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(f"singular basis {tuple(basis)}") from exc


def gradient_certificate(X, y, q, w, beta, basis, res_tol=None) -> np.ndarray:
    """Raw certificate ``zeta`` (not divided by the basis weights)."""
    if res_tol is None:
        res_tol = _res_tol(y)
    r = y - X @ beta
    r[list(basis)] = 0.0
    neg = r < -res_tol
    g = q - (w[neg, None] * X[neg]).sum(axis=0)
    return g @ _basis_inverse(X, basis)


def initial_basis(X: np.ndarray, y: np.ndarray, level: float) -> list[int]:
    """Pick d independent rows close to a rough ``level``-quantile fit.

    The rough fit is least squares shifted by the ``level`` quantile of its
    residuals; rows are taken by increasing absolute residual.
    """
    T, d = X.shape
    beta_ls, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta_ls
    level = min(max(level, 0.0), 1.0)
    r = r - np.quantile(r, level, method="inverted_cdf")
    order = np.argsort(np.abs(r), kind="stable")
    chosen: list[int] = []
    Q = np.zeros((d, 0))
    for i in order:
        x = X[i]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = x - Q @ (Q.T @ x)
        nv = np.linalg.norm(v)
        if nv > 1e-8 * nx:
            chosen.append(int(i))
            Q = np.column_stack([Q, v / nv])
            if len(chosen) == d:
                return chosen
    raise DesignError("design matrix is rank deficient")


def _breakpoints(X, r, w, basis, delta, res_tol):
    """Nonbasic rows whose activity flips along ``b + t*delta``, t >= 0."""
    a = X @ delta
    a_tol = PIVOT_TOL * max(1.0, float(np.max(np.abs(a))))
    nonbasic = np.ones(len(r), dtype=bool)
    nonbasic[list(basis)] = False
    up = nonbasic & (r >= -res_tol) & (a > a_tol)
    down = nonbasic & (r < -res_tol) & (a < -a_tol)
    idx = np.flatnonzero(up | down)
    t = np.where(up[idx], np.maximum(r[idx], 0.0), r[idx]) / a[idx]
    incr = w[idx] * np.abs(a[idx])
    order = np.lexsort((idx, t))
    return idx[order], t[order], incr[order]


def solve(
    X: np.ndarray,
    y: np.ndarray,
    q: np.ndarray,
    w: np.ndarray | None = None,
    *,
    start_level: float = 0.5,
    basis0=None,
    max_iter: int | None = None,
) -> VertexSolution:
    """Minimize ``-q'b + sum w_i (X_i'b - y_i)^+`` at a vertex.

    Parameters
    ----------
    X : (n, d) array
    y : (n,) array
    q : (d,) array
    w : (n,) array of positive weights, default all ones
    start_level : float
        Quantile level used by the starting-basis heuristic.
    basis0 : sequence of int, optional
        Starting basis; overrides the heuristic.

    Raises
    ------
    UnboundedError
        If the objective decreases without bound along some edge.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    n, d = X.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if n < d:
        raise DesignError("fewer rows than columns")
    res_tol = _res_tol(y)
    basis = list(basis0) if basis0 is not None else initial_basis(X, y, start_level)
    if max_iter is None:
        max_iter = 50 * n + 1000

    bland = False
    seen_degenerate: set[tuple[int, ...]] = set()
    it = 0
    while True:
        Binv = _basis_inverse(X, basis)
        beta = Binv @ y[basis]
        r = y - X @ beta
        r[basis] = 0.0
        neg = r < -res_tol
        g = q - (w[neg, None] * X[neg]).sum(axis=0)
        zeta = g @ Binv
        wb = w[basis]
        viol = np.maximum(-zeta, zeta - wb)
        bad = np.flatnonzero(viol > PIVOT_TOL)
        if bad.size == 0:
            break
        zero = np.flatnonzero(np.abs(r) <= res_tol)
        if zero.size > d and _subgradient_optimal(X, w, g, zero):
            break
        it += 1
        if it > max_iter:
            raise ExqrError("pivoting failed to terminate")
        if bland:
            j = int(bad[np.argmin(np.asarray(basis)[bad])])
        else:
            j = int(bad[np.argmax(viol[bad])])
        if zeta[j] < 0:
            s, slope = -1.0, zeta[j]
        else:
            s, slope = 1.0, wb[j] - zeta[j]
        delta = s * Binv[:, j]
        idx, t, incr = _breakpoints(X, r, w, basis, delta, res_tol)
        cum = slope + np.cumsum(incr)
        hit = np.flatnonzero(cum >= -PIVOT_TOL)
        if hit.size == 0:
            raise UnboundedError("objective unbounded below along an edge")
        k = int(hit[0])
        entering = int(idx[k])
        degenerate = t[k] <= 0.0
        basis[j] = entering
        key = tuple(sorted(basis))
        if degenerate:
            if key in seen_degenerate:
                bland = True
            seen_degenerate.add(key)
        else:
            seen_degenerate.clear()
            bland = False

    basis_sorted = tuple(sorted(basis))
    sol = _finish(X, y, q, w, basis_sorted, res_tol, it)
    if not sol.unique:
        best = _smallest_optimal_basis(X, y, q, w, basis_sorted, sol.objective, res_tol)
        if best != basis_sorted:
            sol = _finish(X, y, q, w, best, res_tol, it)
    return sol


def _subgradient_optimal(X, w, g, zero) -> bool:
    """Is ``g = sum_{i in zero} lam_i w_i X_i`` for some ``lam`` in ``[0, 1]``?"""
    A = (w[zero, None] * X[zero]).T
    res = linprog(np.zeros(zero.size), A_eq=A, b_eq=g, bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        return False
    scale = max(1.0, float(np.max(np.abs(g))))
    return bool(np.max(np.abs(A @ res.x - g)) <= CERT_TOL * scale)


def _finish(X, y, q, w, basis, res_tol, iterations) -> VertexSolution:
    beta = vertex_point(X, y, basis)
    r = y - X @ beta
    r[list(basis)] = 0.0
    zeta = gradient_certificate(X, y, q, w, beta, basis, res_tol)
    cert = zeta / w[list(basis)]
    unique = bool(np.all((cert > CERT_TOL) & (cert < 1.0 - CERT_TOL)))
    return VertexSolution(
        beta=beta,
        basis=basis,
        certificate=cert,
        residuals=r,
        objective=penalty_objective(X, y, q, w, beta),
        unique=unique,
        iterations=iterations,
    )


def _certified(zeta, wb) -> bool:
    return bool(np.all((zeta >= -PIVOT_TOL) & (zeta <= wb + PIVOT_TOL)))


def _smallest_optimal_basis(X, y, q, w, basis0, obj0, res_tol) -> tuple[int, ...]:
    """Lexicographically smallest certified basis on the optimal face.

    Breadth-first walk over bases reachable from ``basis0`` by flat edges
    and by zero-length swaps at degenerate vertices.
    """
    obj_tol = PIVOT_TOL * max(1.0, abs(obj0))
    d = X.shape[1]
    seen = {basis0}
    queue = [basis0]
    certified = [basis0]
    while queue and len(seen) < EXPLORE_LIMIT:
        h = queue.pop(0)
        try:
            Binv = _basis_inverse(X, h)
        except DegenerateBasisError:
            continue
        hl = list(h)
        beta = Binv @ y[hl]
        r = y - X @ beta
        r[hl] = 0.0
        neg = r < -res_tol
        zeta = (q - (w[neg, None] * X[neg]).sum(axis=0)) @ Binv
        nonbasic_zero = np.flatnonzero(np.abs(r) <= res_tol)
        nonbasic_zero = nonbasic_zero[~np.isin(nonbasic_zero, hl)]
        neighbours: list[tuple[int, ...]] = []
        for j in range(d):
            col = Binv[:, j]
            # zero-length swaps at a degenerate vertex
            if nonbasic_zero.size:
                a = X[nonbasic_zero] @ col
                for i in nonbasic_zero[np.abs(a) > PIVOT_TOL]:
                    neighbours.append(tuple(sorted(hl[:j] + [int(i)] + hl[j + 1:])))
            for s in (-1.0, 1.0):
                slope = zeta[j] if s < 0 else w[h[j]] - zeta[j]
                if slope > PIVOT_TOL:
                    continue
                idx, t, _ = _breakpoints(X, r, w, h, s * col, res_tol)
                if idx.size == 0:
                    continue
                tied = idx[t <= t[0] * (1 + 1e-12) + 1e-300]
                for i in tied:
                    neighbours.append(tuple(sorted(hl[:j] + [int(i)] + hl[j + 1:])))
        for h2 in neighbours:
            if h2 in seen:
                continue
            seen.add(h2)
            try:
                b2 = vertex_point(X, y, h2)
                _basis_inverse(X, h2)
            except DegenerateBasisError:
                continue
            if penalty_objective(X, y, q, w, b2) > obj0 + obj_tol:
                continue
            queue.append(h2)
            z2 = gradient_certificate(X, y, q, w, b2, h2, res_tol)
            if _certified(z2, w[list(h2)]):
                certified.append(h2)
    return min(certified)
