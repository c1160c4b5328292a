"""Data generation and the Monte Carlo QQ experiment.

The experiment compares the sampling distribution of ``beta_hat(tau)`` over
``R`` simulated datasets with three approximations: the extreme-order limit
(Poisson argmin rescaled by ``a_T``), the central normal approximation and,
optionally, the intermediate-order normal approximation.  All limit formulas
are evaluated in centered coordinates and mapped back to the raw design.

Replication ``i`` draws its dataset from the stream ``(seed, DATA, i)`` and
its limit variable from ``(seed, EXTREME, i, ...)``, so results do not depend
on the number of worker threads.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .errors import ConfigError, DomainError, ExqrError, GeneratorError, UnsupportedModelError
from .extreme_limit import DesignSampler, sample_limit_distribution
from .intermediate import omega0
from .qr_core import Dataset, fit
from .tails import HeterogeneityProfile, TailModel, TailType, make_model, normalization_constants

KINDS = ("LocationShift", "LocationScale", "QuantileShift")
APPROXIMATIONS = ("finite_sample", "extreme", "central", "intermediate")
DEFAULT_APPROXIMATIONS = ("finite_sample", "extreme", "central")
DEFAULT_GRID = tuple(round(p / 100, 2) for p in range(1, 100))
DEFAULT_R = 2000
MOMENT_DRAWS = 200_000


# --------------------------------------------------------------------------
# covariates


@dataclass(frozen=True)
class CovariateModel:
    """Law of the non-intercept covariates.

    ``Beta33`` and ``UniformCube`` draw i.i.d. coordinates; ``Discrete``
    draws rows of ``points`` with equal probability.
    """

    kind: str
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("Beta33", "UniformCube", "Discrete"):
            raise DomainError(f"unknown covariate model {self.kind!r}")
        if self.kind == "Discrete":
            if self.points is None or len(self.points) == 0:
                raise DomainError("Discrete covariates need at least one point")
            pts = np.asarray(self.points, dtype=float)
            pts = pts.reshape(len(pts), -1)
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)

    def _check_dim(self, p: int):
        if self.kind == "Discrete" and self.points.shape[1] != p:
            raise DomainError(f"Discrete points have {self.points.shape[1]} columns, need {p}")

    def sample(self, rng: np.random.Generator, n: int, p: int) -> np.ndarray:
        self._check_dim(p)
        if self.kind == "Beta33":
            # Gamma(3) as a sum of three unit exponentials
            e = rng.standard_exponential((n, p, 6))
            g1 = e[..., :3].sum(axis=-1)
            g2 = e[..., 3:].sum(axis=-1)
            return g1 / (g1 + g2)
        if self.kind == "UniformCube":
            return rng.random((n, p))
        return self.points[rng.integers(len(self.points), size=n)]

    def mean(self, p: int) -> np.ndarray:
        self._check_dim(p)
        if self.kind == "Discrete":
            return self.points.mean(axis=0)
        return np.full(p, 0.5)

    def design_second_moment(self, d: int) -> np.ndarray:
        """Analytic ``E XX'`` for ``X = (1, W)``."""
        p = d - 1
        self._check_dim(p)
        if self.kind == "Discrete":
            X = np.column_stack([np.ones(len(self.points)), self.points])
            return X.T @ X / len(X)
        var = 1.0 / 28.0 if self.kind == "Beta33" else 1.0 / 12.0
        mu = np.concatenate([[1.0], np.full(p, 0.5)])
        Q = np.outer(mu, mu)
        Q[1:, 1:] += var * np.eye(p)
        return Q

    def support_vertices(self, p: int) -> np.ndarray:
        """Raw covariate points whose hull contains the support."""
        self._check_dim(p)
        if self.kind == "Discrete":
            return self.points.copy()
        return np.array(list(itertools.product((0.0, 1.0), repeat=p))).reshape(-1, p)

    def to_json(self):
        if self.kind == "Discrete":
            return {"Discrete": self.points.tolist()}
        return self.kind

    @classmethod
    def from_json(cls, obj) -> CovariateModel:
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict) and set(obj) == {"Discrete"}:
            return cls("Discrete", obj["Discrete"])
        raise ConfigError(f"malformed covariate_model {obj!r}")


# --------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GeneratorSpec:
    """Stochastic model for ``(Y, X)``.

    ``LocationShift``: ``Y = X'beta + U``.  ``LocationScale``:
    ``Y = X'beta + (X'sigma) V``.  ``QuantileShift``: ``Y = X'beta_fn(e)``
    with ``e`` uniform, where ``beta_fn`` maps an array of levels to an array
    of coefficient rows.  ``error_model=None`` means no noise.
    """

    kind: str
    beta: np.ndarray
    error_model: TailModel | None
    covariate_model: CovariateModel
    T: int
    d: int
    sigma: np.ndarray | None = None
    beta_fn: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown generator kind {self.kind!r}")
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.size != self.d:
            raise DomainError(f"beta has {beta.size} entries, d = {self.d}")
        if self.T < self.d or self.d < 1:
            raise DomainError("need T >= d >= 1")
        object.__setattr__(self, "beta", beta)
        self.covariate_model._check_dim(self.d - 1)
        if self.kind == "LocationScale":
            if self.sigma is None or self.error_model is None:
                raise DomainError("LocationScale needs sigma and an error model")
            sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
            if sigma.size != self.d:
                raise DomainError("sigma has the wrong length")
            object.__setattr__(self, "sigma", sigma)
            if np.any(self.raw_vertices() @ sigma <= 0):
                raise GeneratorError("x'sigma <= 0 on the design support")
        if self.kind == "QuantileShift" and self.beta_fn is None:
            raise DomainError("QuantileShift needs beta_fn")

    @property
    def mu_w(self) -> np.ndarray:
        return self.covariate_model.mean(self.d - 1)

    def raw_vertices(self) -> np.ndarray:
        V = self.covariate_model.support_vertices(self.d - 1)
        return np.column_stack([np.ones(len(V)), V])

    def true_beta(self, tau: float) -> np.ndarray:
        """Conditional quantile coefficients ``beta(tau)``."""
        if self.kind == "QuantileShift":
            return np.asarray(self.beta_fn(np.asarray([tau])), dtype=float).reshape(-1)
        if self.error_model is None:
            return self.beta.copy()
        q = float(self.error_model.quantile(tau))
        if self.kind == "LocationScale":
            return self.beta + self.sigma * q
        out = self.beta.copy()
        out[0] += q
        return out


def generate(spec: GeneratorSpec, rng: np.random.Generator) -> Dataset:
    W = spec.covariate_model.sample(rng, spec.T, spec.d - 1)
    X = np.column_stack([np.ones(spec.T), W])
    u = rng.random(spec.T)
    if spec.kind == "QuantileShift":
        B = np.asarray(spec.beta_fn(u), dtype=float).reshape(spec.T, spec.d)
        return Dataset(np.sum(X * B, axis=1), X)
    noise = np.zeros(spec.T) if spec.error_model is None else np.asarray(spec.error_model.quantile(u), float)
    if spec.kind == "LocationScale":
        s = X @ spec.sigma
        if np.any(s <= 0):
            raise GeneratorError("x'sigma <= 0 at a generated design point")
        noise = s * noise
    return Dataset(X @ spec.beta + noise, X)


def to_centered(b_raw, mu_w) -> np.ndarray:
    """Coefficients for the design ``(1, W - mu_w)``."""
    b = np.array(b_raw, dtype=float)
    b[..., 0] += b[..., 1:] @ mu_w
    return b


def to_raw(b_centered, mu_w) -> np.ndarray:
    b = np.array(b_centered, dtype=float)
    b[..., 0] -= b[..., 1:] @ mu_w
    return b


# --------------------------------------------------------------------------
# approximations


@dataclass(frozen=True)
class ExtremeSetup:
    """Ingredients of the extreme approximation with parameters at their true values.

    ``beta_hat ~ beta_r + b_T e_1 + to_raw(Z) / a_T`` with ``Z`` the limit
    variable in centered coordinates.
    """

    k: float
    model: TailModel
    profile: HeterogeneityProfile
    design: DesignSampler = field(repr=False)
    a_T: float
    b_T: float
    beta_r: np.ndarray
    mu_w: np.ndarray

    def to_beta(self, z_centered_coords) -> np.ndarray:
        out = to_raw(np.asarray(z_centered_coords) / self.a_T, self.mu_w)
        out[..., 0] += self.b_T
        return out + self.beta_r

    def normalize(self, beta_hat) -> np.ndarray:
        """``a_T (beta_hat - beta_r - b_T e_1)`` in centered coordinates."""
        b = np.array(beta_hat, dtype=float) - self.beta_r
        b[..., 0] -= self.b_T
        return self.a_T * to_centered(b, self.mu_w)


def extreme_setup(spec: GeneratorSpec, tau: float) -> ExtremeSetup:
    if spec.kind == "QuantileShift" or spec.error_model is None:
        raise UnsupportedModelError("extreme approximation needs a location-shift or location-scale model")
    mu_w = spec.mu_w
    d = spec.d
    sv = spec.raw_vertices()
    sv[:, 1:] -= mu_w
    model = spec.error_model
    if spec.kind == "LocationShift":
        profile = HeterogeneityProfile.homogeneous(d, model.tail_type, sv)
    else:
        if model.tail_type is TailType.TYPE1:
            raise UnsupportedModelError("location-scale extreme approximation needs xi != 0")
        sig = to_centered(spec.sigma, mu_w)
        s0 = float(sig[0])
        if s0 <= 0:
            raise GeneratorError("mu'sigma must be positive")
        profile = HeterogeneityProfile(sig / s0, model.tail_type, sv)
        model = model.scaled(s0)
    a_T, b_T = normalization_constants(model, spec.T)
    cov = spec.covariate_model
    p = d - 1

    def design(rng, n):
        return np.column_stack([np.ones(n), cov.sample(rng, n, p) - mu_w])

    return ExtremeSetup(
        k=tau * spec.T, model=model, profile=profile, design=design,
        a_T=a_T, b_T=b_T, beta_r=spec.beta.copy(), mu_w=mu_w,
    )


@dataclass(frozen=True)
class CentralApprox:
    """``sqrt(T)(beta_hat(tau) - beta(tau)) ~ N(0, cov)``."""

    tau: float
    beta_tau: np.ndarray
    cov: np.ndarray
    T: int

    def quantiles(self, probs) -> np.ndarray:
        z = stats.norm.ppf(np.asarray(probs, dtype=float))
        sd = np.sqrt(np.diag(self.cov) / self.T)
        return self.beta_tau[None, :] + z[:, None] * sd[None, :]


def central_approx(spec: GeneratorSpec, tau: float) -> CentralApprox:
    """``tau(1 - tau) / f_U(F_U^{-1}(tau))^2 (E XX')^{-1}`` for location-shift models."""
    if spec.kind != "LocationShift":
        raise UnsupportedModelError("central approximation is implemented for location-shift models")
    Qinv = np.linalg.inv(spec.covariate_model.design_second_moment(spec.d))
    if spec.error_model is None:
        cov = np.zeros((spec.d, spec.d))
    else:
        f = float(spec.error_model.pdf(spec.error_model.quantile(tau)))
        if not f > 0:
            raise UnsupportedModelError("error density vanishes at the quantile")
        cov = tau * (1.0 - tau) / f**2 * Qinv
    return CentralApprox(tau, spec.true_beta(tau), cov, spec.T)


@dataclass(frozen=True)
class IntermediateApprox:
    """``beta_hat(tau) ~ beta(tau) + N(0, Omega0) / a_T`` with true parameters."""

    tau: float
    beta_tau: np.ndarray
    Omega0: np.ndarray
    a_T: float

    def quantiles(self, probs) -> np.ndarray:
        z = stats.norm.ppf(np.asarray(probs, dtype=float))
        sd = np.sqrt(np.diag(self.Omega0)) / self.a_T
        return self.beta_tau[None, :] + z[:, None] * sd[None, :]


def intermediate_approx(spec: GeneratorSpec, tau: float, m: float = 2.0, seed: int = 0) -> IntermediateApprox:
    if spec.kind == "QuantileShift":
        raise UnsupportedModelError("intermediate approximation needs a location model")
    d = spec.d
    Q_X = spec.covariate_model.design_second_moment(d)
    mu = np.concatenate([[1.0], spec.mu_w])
    if spec.error_model is None:
        return IntermediateApprox(tau, spec.true_beta(tau), np.zeros((d, d)), math.inf)
    if spec.kind == "LocationShift" or spec.error_model.tail_type is TailType.TYPE1:
        Q_H = Q_X
    else:
        # Q_H = E[XX' / H(X)], H(x) = x'sigma / mu'sigma, by Monte Carlo
        c = spec.sigma / float(mu @ spec.sigma)
        W = spec.covariate_model.sample(rngmod.substream(seed, rngmod.MOMENTS), MOMENT_DRAWS, d - 1)
        X = np.column_stack([np.ones(len(W)), W])
        Q_H = (X / (X @ c)[:, None]).T @ X / len(X)
    vm = omega0(Q_X, Q_H, spec.error_model.xi, m)
    den = float(mu @ (spec.true_beta(m * tau) - spec.true_beta(tau)))
    a_T = math.sqrt(tau * spec.T) / den
    return IntermediateApprox(tau, spec.true_beta(tau), vm.Omega0, a_T)


# --------------------------------------------------------------------------
# experiment


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorSpec
    tau: float
    R: int = DEFAULT_R
    seed: int = 0
    approximations: tuple[str, ...] = DEFAULT_APPROXIMATIONS
    quantile_grid: tuple[float, ...] = DEFAULT_GRID
    output_path: str | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        bad = set(self.approximations) - set(APPROXIMATIONS)
        if bad:
            raise ConfigError(f"unknown approximations {sorted(bad)}")
        g = np.asarray(self.quantile_grid, dtype=float)
        if g.size == 0 or np.any(g <= 0) or np.any(g >= 1) or np.any(np.diff(g) <= 0):
            raise ConfigError("quantile_grid must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "approximations", tuple(self.approximations))
        object.__setattr__(self, "quantile_grid", tuple(float(v) for v in g))

    @property
    def k(self) -> float:
        return self.tau * self.generator.T

    def to_json(self) -> dict:
        g = self.generator
        if g.kind == "QuantileShift":
            raise ConfigError("QuantileShift generators cannot be serialized")
        return {
            "generator": {
                "kind": g.kind,
                "beta": g.beta.tolist(),
                "sigma": None if g.sigma is None else g.sigma.tolist(),
                "error_model": None if g.error_model is None else g.error_model.to_dict(),
                "covariate_model": g.covariate_model.to_json(),
                "T": g.T,
                "d": g.d,
            },
            "tau": self.tau,
            "k": self.k,
            "R": self.R,
            "seed": self.seed,
            "approximations": list(self.approximations),
            "quantile_grid": list(self.quantile_grid),
            "output_path": self.output_path,
        }

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentConfig:
        return _config_from_json(obj)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return _config_from_json(obj)


_GEN_KEYS = {"kind", "beta", "sigma", "error_model", "covariate_model", "T", "d"}
_CFG_KEYS = {"generator", "tau", "k", "R", "seed", "approximations", "quantile_grid", "output_path"}


def _strict(obj, allowed: set, required: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _config_from_json(obj) -> ExperimentConfig:
    _strict(obj, _CFG_KEYS, {"generator"}, "config")
    g = obj["generator"]
    _strict(g, _GEN_KEYS, {"kind", "beta", "error_model", "covariate_model", "T", "d"}, "generator")
    try:
        em = g["error_model"]
        if em is None:
            model = None
        else:
            _strict(em, {"name", "xi", "scale"}, {"name"}, "error_model")
            model = make_model(em["name"], em.get("xi"), float(em.get("scale", 1.0)))
        if g["kind"] == "QuantileShift":
            raise ConfigError("QuantileShift needs a coefficient function and is available only through the API")
        spec = GeneratorSpec(
            kind=g["kind"],
            beta=np.asarray(g["beta"], dtype=float),
            error_model=model,
            covariate_model=CovariateModel.from_json(g["covariate_model"]),
            T=int(g["T"]),
            d=int(g["d"]),
            sigma=None if g.get("sigma") is None else np.asarray(g["sigma"], dtype=float),
        )
        T = spec.T
        tau, k = obj.get("tau"), obj.get("k")
        if tau is None and k is None:
            raise ConfigError("config needs tau or k")
        tau = float(k) / T if tau is None else float(tau)
        if k is not None and not math.isclose(float(k), tau * T, rel_tol=1e-9):
            raise ConfigError(f"k = {k} disagrees with tau*T = {tau * T}")
        return ExperimentConfig(
            generator=spec,
            tau=tau,
            R=int(obj.get("R", DEFAULT_R)),
            seed=int(obj.get("seed", 0)),
            approximations=tuple(obj.get("approximations", DEFAULT_APPROXIMATIONS)),
            quantile_grid=tuple(obj.get("quantile_grid", DEFAULT_GRID)),
            output_path=obj.get("output_path"),
        )
    except ExqrError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _map(fn, n: int, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def finite_sample_draws(spec: GeneratorSpec, tau: float, R: int, seed: int, workers: int = 1) -> np.ndarray:
    """``beta_hat(tau)`` for ``R`` simulated datasets, row ``i`` from replication ``i``."""

    def one(i):
        try:
            return fit(generate(spec, rngmod.substream(seed, rngmod.DATA, i)), tau).beta_hat
        except ExqrError as exc:
            raise type(exc)(f"replication {i}: {exc}") from exc

    return np.array(_map(one, R, workers))


def extreme_draws(
    spec: GeneratorSpec, tau: float, R: int, seed: int, workers: int = 1, certified: bool = False
) -> np.ndarray:
    """Extreme-approximation draws of ``beta_hat(tau)`` in raw coordinates.

    By default each draw is the argmin over the first
    ``default_truncation(k)`` limit points, with type-2 constraints imposed
    at the sampled design points.  ``certified=True`` instead returns the
    certified limit variable, with type-2 constraints at the vertices of the
    design support.  For type-2 designs whose density vanishes at the
    support vertices the two differ at moderate ``T``; see the README.
    """
    setup = extreme_setup(spec, tau)
    profile = setup.profile
    if not certified:
        profile = HeterogeneityProfile(profile.c, profile.tail_type, None)
    dist = sample_limit_distribution(
        setup.k, setup.model, profile, setup.design, R, seed,
        workers=workers, key=(rngmod.EXTREME,), adaptive=certified,
    )
    return setup.to_beta(dist.z)


@dataclass(frozen=True)
class QQTable:
    probs: np.ndarray
    columns: dict  # name -> (len(probs), d) array

    @property
    def d(self) -> int:
        return next(iter(self.columns.values())).shape[1]

    def column(self, name: str, coef: int) -> np.ndarray:
        """Quantiles of coefficient ``coef`` (1-based)."""
        return self.columns[name][:, coef - 1]

    def deviation(self, name: str, coef: int, lo: float = 0.05, hi: float = 0.95) -> float:
        """Mean absolute distance to the finite-sample quantiles over ``[lo, hi]``."""
        sel = (self.probs >= lo - 1e-12) & (self.probs <= hi + 1e-12)
        a = self.column(name, coef)[sel]
        b = self.column("finite_sample", coef)[sel]
        return float(np.mean(np.abs(a - b)))

    def write_csv(self, path) -> None:
        extra = ["intermediate"] if "intermediate" in self.columns else []
        names = ["finite_sample", "extreme", "central"] + extra
        nan = np.full((self.probs.size, self.d), np.nan)
        cols = [self.columns.get(n, nan) for n in names]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["coef", "prob"] + names)
            for j in range(self.d):
                for i, p in enumerate(self.probs):
                    w.writerow([j + 1, repr(float(p))] + [repr(float(c[i, j])) for c in cols])


def run_qq_experiment(config: ExperimentConfig, workers: int = 1, certified_limit: bool = False) -> QQTable:
    spec, tau, R, seed = config.generator, config.tau, config.R, config.seed
    probs = np.asarray(config.quantile_grid)
    cols: dict = {}
    for name in config.approximations:
        if name == "finite_sample":
            draws = finite_sample_draws(spec, tau, R, seed, workers)
            cols[name] = np.quantile(draws, probs, axis=0)
        elif name == "extreme":
            if spec.error_model is None:
                cols[name] = np.tile(spec.true_beta(tau), (probs.size, 1))
            else:
                cols[name] = np.quantile(
                    extreme_draws(spec, tau, R, seed, workers, certified_limit), probs, axis=0
                )
        elif name == "central":
            cols[name] = central_approx(spec, tau).quantiles(probs)
        else:
            cols[name] = intermediate_approx(spec, tau, seed=seed).quantiles(probs)
    if "finite_sample" not in cols:
        raise ConfigError("approximations must include finite_sample")
    return QQTable(probs, cols)


def cauchy_qq_config(R: int = DEFAULT_R, seed: int = 0) -> ExperimentConfig:
    """Five regressors, Beta(3,3) covariates, Cauchy errors, T = 500, tau = 0.025."""
    spec = GeneratorSpec(
        kind="LocationShift",
        beta=np.ones(5),
        error_model=make_model("Cauchy"),
        covariate_model=CovariateModel("Beta33"),
        T=500,
        d=5,
    )
    return ExperimentConfig(spec, tau=0.025, R=R, seed=seed)


# --------------------------------------------------------------------------
# dataset CSV


def write_dataset(path, data: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j}" for j in range(1, data.d)])
        for y, x in zip(data.y, data.X):
            w.writerow([repr(float(y))] + [repr(float(v)) for v in x[1:]])


def read_dataset(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    expected = ["y"] + [f"x{j}" for j in range(1, len(header))]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if body.ndim != 2 or body.shape[0] == 0 or body.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged or empty data")
    return Dataset.from_covariates(body[:, 0], body[:, 1:] if body.shape[1] > 1 else None)
