"""Tail-model catalogue, heterogeneity profiles and extreme-order constants.

All models describe the *lower* tail of a base error ``u``.  Design points
passed to the profile functions are in centered coordinates, i.e. the design
mean is ``e_1 = (1, 0, ..., 0)``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import CrossingViolationError, DomainError


class TailType(enum.IntEnum):
    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3


def tail_type_for(xi: float) -> TailType:
    if xi > 0:
        return TailType.TYPE2
    if xi < 0:
        return TailType.TYPE3
    return TailType.TYPE1


@dataclass(frozen=True)
class TailModel:
    """Closed-form base distribution with a lower tail of known type.

    ``quantile``, ``cdf`` and ``pdf`` are vectorized callables.  ``auxiliary``
    is the type-1 scale function ``a(z)``; it is ``None`` for types 2 and 3.
    """

    name: str
    tail_type: TailType
    xi: float
    quantile: Callable = field(repr=False)
    cdf: Callable = field(repr=False)
    pdf: Callable = field(repr=False)
    auxiliary: Callable | None = field(default=None, repr=False)
    endpoint: float = -math.inf
    scale: float = 1.0

    def __post_init__(self):
        tt = TailType(self.tail_type)
        object.__setattr__(self, "tail_type", tt)
        if tt is TailType.TYPE1:
            ok = self.xi == 0 and self.auxiliary is not None
        elif tt is TailType.TYPE2:
            ok = self.xi > 0 and self.endpoint == -math.inf
        else:
            ok = self.xi < 0 and self.endpoint == 0.0
        if not ok:
            raise DomainError(f"inconsistent tail model {self.name}: type {int(tt)}, xi={self.xi}")

    def scaled(self, s: float) -> TailModel:
        """Law of ``s * u`` for ``s > 0`` (same tail type and index)."""
        if s <= 0:
            raise DomainError("scale must be positive")
        if s == 1.0:
            return self
        q, F, f, a = self.quantile, self.cdf, self.pdf, self.auxiliary
        return TailModel(
            name=self.name,
            tail_type=self.tail_type,
            xi=self.xi,
            quantile=lambda p: s * q(p),
            cdf=lambda z: F(np.asarray(z) / s),
            pdf=lambda z: f(np.asarray(z) / s) / s,
            auxiliary=None if a is None else (lambda z: s * a(np.asarray(z) / s)),
            endpoint=self.endpoint * s if np.isfinite(self.endpoint) else self.endpoint,
            scale=self.scale * s,
        )

    def to_dict(self) -> dict:
        d = {"name": self.name, "xi": self.xi}
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d


def _numeric_auxiliary(cdf: Callable, endpoint: float) -> Callable:
    """``a(z) = int_{s_u}^z F(v) dv / F(z)`` by adaptive quadrature."""

    def a(z):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        for i, zi in np.ndenumerate(z):
            val, _ = integrate.quad(cdf, endpoint, zi, epsrel=1e-8, epsabs=0.0, limit=200)
            out[i] = val / cdf(zi)
        return float(out) if out.ndim == 0 else out

    return a


def _reflected_exponential() -> TailModel:
    # U = -E: F(z) = e^z on z <= 0
    return TailModel(
        name="ReflectedExponential",
        tail_type=TailType.TYPE1,
        xi=0.0,
        quantile=lambda p: np.log(p),
        cdf=lambda z: np.exp(np.minimum(z, 0.0)),
        pdf=lambda z: np.where(np.asarray(z) <= 0, np.exp(np.minimum(z, 0.0)), 0.0),
        auxiliary=lambda z: np.ones_like(np.asarray(z, dtype=float)),
    )


def _cauchy() -> TailModel:
    return TailModel(
        name="Cauchy",
        tail_type=TailType.TYPE2,
        xi=1.0,
        quantile=lambda p: np.tan(np.pi * (np.asarray(p) - 0.5)),
        cdf=lambda z: 0.5 + np.arctan(z) / np.pi,
        pdf=lambda z: 1.0 / (np.pi * (1.0 + np.asarray(z) ** 2)),
    )


def _pareto_min(xi: float) -> TailModel:
    # F(z) = (-z)^(-1/xi) for z <= -1
    return TailModel(
        name="ParetoMin",
        tail_type=TailType.TYPE2,
        xi=xi,
        quantile=lambda p: -np.asarray(p, dtype=float) ** (-xi),
        cdf=lambda z: np.minimum(np.abs(np.minimum(z, -1.0)) ** (-1.0 / xi), 1.0),
        pdf=lambda z: np.where(
            np.asarray(z) <= -1.0, (1.0 / xi) * np.abs(np.minimum(z, -1.0)) ** (-1.0 / xi - 1.0), 0.0
        ),
    )


def _power(xi: float, name: str) -> TailModel:
    # F(z) = z^(-1/xi) on [0, 1]; xi = -1 is the uniform law
    return TailModel(
        name=name,
        tail_type=TailType.TYPE3,
        xi=xi,
        quantile=lambda p: np.asarray(p, dtype=float) ** (-xi),
        cdf=lambda z: np.clip(z, 0.0, 1.0) ** (-1.0 / xi),
        pdf=lambda z: np.where(
            (np.asarray(z) >= 0) & (np.asarray(z) <= 1),
            (-1.0 / xi) * np.clip(z, 1e-300, 1.0) ** (-1.0 / xi - 1.0),
            0.0,
        ),
        endpoint=0.0,
    )


def _gumbel_min() -> TailModel:
    # F(z) = 1 - exp(-e^z); type 1 with a(z) -> 1 only asymptotically
    cdf = lambda z: -np.expm1(-np.exp(z))  # noqa: E731
    return TailModel(
        name="CustomXi",
        tail_type=TailType.TYPE1,
        xi=0.0,
        quantile=lambda p: np.log(-np.log1p(-np.asarray(p, dtype=float))),
        cdf=cdf,
        pdf=lambda z: np.exp(np.asarray(z) - np.exp(z)),
        auxiliary=_numeric_auxiliary(cdf, -np.inf),
    )


MODEL_NAMES = ("ReflectedExponential", "Cauchy", "ParetoMin", "Uniform", "CustomXi")


def make_model(name: str, xi: float | None = None, scale: float = 1.0) -> TailModel:
    """Catalogue model by name.

    ``ParetoMin`` needs ``xi > 0`` (default 1).  ``CustomXi`` dispatches on the
    sign of ``xi``: a Pareto lower tail for ``xi > 0``, the power law
    ``F(z) = z^(-1/xi)`` on ``[0, 1]`` for ``xi < 0`` and the Gumbel-minimum
    law, whose ``a(z)`` is computed by quadrature, for ``xi = 0``.
    """
    if name == "ReflectedExponential":
        if xi not in (None, 0, 0.0):
            raise DomainError("ReflectedExponential has xi = 0")
        model = _reflected_exponential()
    elif name == "Cauchy":
        if xi not in (None, 1, 1.0):
            raise DomainError("Cauchy has xi = 1")
        model = _cauchy()
    elif name == "ParetoMin":
        xi = 1.0 if xi is None else float(xi)
        if xi <= 0:
            raise DomainError("ParetoMin needs xi > 0")
        model = _pareto_min(xi)
    elif name == "Uniform":
        if xi not in (None, -1, -1.0):
            raise DomainError("Uniform has xi = -1")
        model = _power(-1.0, "Uniform")
    elif name == "CustomXi":
        if xi is None:
            raise DomainError("CustomXi needs xi")
        xi = float(xi)
        if xi > 0:
            model = dataclasses.replace(_pareto_min(xi), name="CustomXi")
        elif xi < 0:
            model = _power(xi, "CustomXi")
        else:
            model = _gumbel_min()
    else:
        raise DomainError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    return model.scaled(scale)


def normalization_constants(model: TailModel, T: int) -> tuple[float, float]:
    """Canonical ``(a_T, b_T)`` for extreme-order normalization."""
    if T < 2:
        raise DomainError("T must be at least 2")
    z = float(model.quantile(1.0 / T))
    if model.tail_type is TailType.TYPE1:
        return 1.0 / float(model.auxiliary(z)), z
    if model.tail_type is TailType.TYPE2:
        return -1.0 / z, 0.0
    return 1.0 / z, 0.0


@dataclass(frozen=True)
class HeterogeneityProfile:
    """Heterogeneity index ``c`` in centered coordinates.

    ``support_vertices`` are centered design points whose convex hull is the
    design support; they are used for the crossing check and for type-2
    constraints in the limit problem.
    """

    c: np.ndarray
    tail_type: TailType
    support_vertices: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        tt = TailType(self.tail_type)
        target = 0.0 if tt is TailType.TYPE1 else 1.0
        if abs(c[0] - target) > 1e-12:
            raise DomainError(f"mu_X'c must equal {target} for type {int(tt)} tails, got {c[0]}")
        sv = self.support_vertices
        if sv is not None:
            sv = np.atleast_2d(np.asarray(sv, dtype=float))
            if sv.shape[1] != c.size:
                raise DomainError("support vertices have the wrong dimension")
            if tt is not TailType.TYPE1 and np.any(sv @ c <= 0):
                raise CrossingViolationError("x'c <= 0 at a support vertex")
            sv.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "tail_type", tt)
        object.__setattr__(self, "support_vertices", sv)

    @classmethod
    def homogeneous(cls, d: int, tail_type, support_vertices=None) -> HeterogeneityProfile:
        c = np.zeros(d)
        if TailType(tail_type) is not TailType.TYPE1:
            c[0] = 1.0
        return cls(c, tail_type, support_vertices)

    @property
    def d(self) -> int:
        return self.c.size

    @property
    def is_homogeneous(self) -> bool:
        ref = np.zeros(self.d)
        if self.tail_type is not TailType.TYPE1:
            ref[0] = 1.0
        return bool(np.array_equal(self.c, ref))

    def check_support(self, points) -> None:
        """Raise if ``x'c <= 0`` at any of ``points`` (types 2/3)."""
        if self.tail_type is TailType.TYPE1:
            return
        if np.any(np.atleast_2d(points) @ self.c <= 0):
            raise CrossingViolationError("x'c <= 0 on the design support")


def k_function(x, profile: HeterogeneityProfile, xi: float):
    """Tail-level function ``K(x)``: ``exp(-x'c)`` or ``(x'c)^(1/xi)``."""
    xc = np.asarray(x, dtype=float) @ profile.c
    if profile.tail_type is TailType.TYPE1:
        return np.exp(-xc)
    if np.any(xc <= 0):
        raise CrossingViolationError("x'c must be positive for type 2/3 tails")
    return xc ** (1.0 / xi)


def eta(k: float, profile: HeterogeneityProfile, xi: float) -> np.ndarray:
    """Centering vector ``eta(k)`` of the extreme-order limit."""
    if k <= 0:
        raise DomainError("k must be positive")
    c = profile.c
    if profile.tail_type is TailType.TYPE1:
        out = c.copy()
        out[0] += math.log(k)
        return out
    if profile.tail_type is TailType.TYPE2:
        return -(k ** (-xi)) * c
    return k ** (-xi) * c


def mean_measure(u, tail_type: TailType, xi: float):
    """``h(u)``: expected number of homogeneous limit points at or below ``u``."""
    u = np.asarray(u, dtype=float)
    if tail_type is TailType.TYPE1:
        return np.exp(u)
    if tail_type is TailType.TYPE2:
        return (-u) ** (-1.0 / xi)
    return u ** (-1.0 / xi)


def mean_measure_inverse(v, tail_type: TailType, xi: float):
    v = np.asarray(v, dtype=float)
    if tail_type is TailType.TYPE1:
        return np.log(v)
    if tail_type is TailType.TYPE2:
        return -(v ** (-xi))
    return v ** (-xi)


def tail_ratio(model: TailModel, tau: float, v: float) -> float:
    """``F(v F^{-1}(tau)) / tau`` (types 2/3) or ``F(F^{-1}(tau) + v a(F^{-1}(tau))) / tau`` (type 1)."""
    z = float(model.quantile(tau))
    if model.tail_type is TailType.TYPE1:
        return float(model.cdf(z + v * float(model.auxiliary(z)))) / tau
    return float(model.cdf(v * z)) / tau


def tail_ratio_limit(model: TailModel, v: float) -> float:
    if model.tail_type is TailType.TYPE1:
        return math.exp(v)
    return v ** (-1.0 / model.xi)
