from __future__ import annotations

import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from exqr.errors import DomainError, TruncationError
from exqr.extreme_limit import (
    PoissonRealization,
    draw_limit,
    gradient_condition,
    limit_objective,
    points_via_mean_measure,
    sample_limit_distribution,
    sample_points,
    solve_limit,
    truncation_certified,
    univariate_design,
)
from exqr.tails import HeterogeneityProfile, TailType, eta, make_model
from oracles import brute_force_limit


def uniform_design(d, half=0.5):
    def design(rng, n):
        return np.column_stack([np.ones(n), rng.uniform(-half, half, size=(n, d - 1))])

    return design


def cube_vertices(d, half=0.5):
    V = np.array(list(itertools.product((-half, half), repeat=d - 1))).reshape(-1, d - 1)
    return np.column_stack([np.ones(len(V)), V])


def toy_realization(js, xs=None, tail_type=TailType.TYPE3, xi=-1.0):
    js = np.asarray(js, dtype=float)
    xs = np.ones((js.size, 1)) if xs is None else np.asarray(xs, dtype=float)
    prof = HeterogeneityProfile.homogeneous(xs.shape[1], tail_type)
    return PoissonRealization(np.arange(1.0, js.size + 1), xs, js, tail_type, xi, prof)


class TestSamplePoints:
    def test_type3_unit_xi(self):
        m = make_model("Uniform")
        r = sample_points(m, HeterogeneityProfile.homogeneous(1, m.tail_type), univariate_design, 50, 3)
        np.testing.assert_allclose(r.js, r.gammas, rtol=1e-15)
        assert np.all(np.diff(r.gammas) > 0)

    def test_type2_increasing_to_zero(self):
        m = make_model("Cauchy")
        r = sample_points(m, HeterogeneityProfile.homogeneous(1, m.tail_type), univariate_design, 200, 4)
        np.testing.assert_allclose(r.js, -1.0 / r.gammas)
        assert np.all(np.diff(r.js) > 0) and np.all(r.js < 0)

    def test_type1_mean_measure(self):
        # E #{J <= u} = e^u for J = ln Gamma
        m = make_model("ReflectedExponential")
        prof = HeterogeneityProfile.homogeneous(1, m.tail_type)
        u = 1.5
        counts = [np.sum(sample_points(m, prof, univariate_design, 60, 11, (i,)).js <= u) for i in range(4000)]
        se = math.sqrt(math.exp(u) / 4000)
        assert abs(np.mean(counts) - math.exp(u)) < 4 * se

    @pytest.mark.parametrize(
        "name, xi, c",
        [
            ("ReflectedExponential", None, [0.0, 0.7]),
            ("Cauchy", None, [1.0, 0.6]),
            ("ParetoMin", 0.4, [1.0, -0.8]),
            ("Uniform", None, [1.0, 0.9]),
            ("CustomXi", -0.3, [1.0, 0.2]),
        ],
    )
    def test_two_constructions_agree(self, name, xi, c):
        m = make_model(name, xi)
        prof = HeterogeneityProfile(np.array(c), m.tail_type)
        r = sample_points(m, prof, uniform_design(2), 500, 8)
        alt = points_via_mean_measure(r.gammas, r.xs, prof, m.xi)
        np.testing.assert_allclose(alt, r.js, rtol=1e-12, atol=1e-12)

    def test_prefix_consistent(self):
        m = make_model("Cauchy")
        prof = HeterogeneityProfile.homogeneous(3, m.tail_type)
        a = sample_points(m, prof, uniform_design(3), 100, 5, (2,))
        b = sample_points(m, prof, uniform_design(3), 200, 5, (2,))
        np.testing.assert_array_equal(a.gammas, b.gammas[:100])
        np.testing.assert_array_equal(a.xs, b.xs[:100])
        np.testing.assert_array_equal(a.js, b.js[:100])

    def test_tail_type_mismatch(self):
        m = make_model("Cauchy")
        with pytest.raises(DomainError):
            sample_points(m, HeterogeneityProfile.homogeneous(1, TailType.TYPE3), univariate_design, 5, 0)


class TestObjective:
    def test_arithmetic(self):
        r = toy_realization([-2.0, -1.0], tail_type=TailType.TYPE2, xi=1.0)
        assert limit_objective([-1.5], r, 1.0) == pytest.approx(2.0)

    def test_zero(self):
        r = toy_realization([-2.0, -1.0], tail_type=TailType.TYPE2, xi=1.0)
        assert limit_objective([0.0], r, 3.0) == pytest.approx(3.0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_midpoint_convexity(self, seed):
        m = make_model("ReflectedExponential")
        prof = HeterogeneityProfile(np.array([0.0, 0.5, -0.2]), m.tail_type)
        r = sample_points(m, prof, uniform_design(3), 80, seed)
        rng = np.random.default_rng(seed)
        z1, z2 = rng.normal(size=3) * 3, rng.normal(size=3) * 3
        mid = limit_objective((z1 + z2) / 2, r, 2.0)
        assert mid <= (limit_objective(z1, r, 2.0) + limit_objective(z2, r, 2.0)) / 2 + 1e-9


class TestSolveLimit:
    def test_smallest_point(self):
        r = toy_realization([0.3, 1.1, 2.0, 2.4])
        s = solve_limit(r, 0.5)
        assert s.z[0] == 0.3 and s.unique
        assert s.certificate[0] == pytest.approx(0.5)

    def test_second_point(self):
        r = toy_realization([0.3, 1.1, 2.0, 2.4])
        s = solve_limit(r, 1.5)
        assert s.z[0] == 1.1

    def test_d2_toy_brute_force(self):
        xs = np.array([[1.0, -0.4], [1.0, 0.1], [1.0, 0.45]])
        js = np.array([0.2, 0.5, 0.9])
        r = toy_realization(js, xs)
        s = solve_limit(r, 0.7, certify=False)
        assert limit_objective(s.z, r, 0.7) == pytest.approx(brute_force_limit(xs, js, 0.7), abs=1e-12)

    @pytest.mark.parametrize("seed", range(30))
    def test_random_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        m = make_model(["ReflectedExponential", "Uniform"][seed % 2])
        c = np.zeros(d)
        c[0] = 0.0 if m.tail_type is TailType.TYPE1 else 1.0
        prof = HeterogeneityProfile(c, m.tail_type)
        r = sample_points(m, prof, uniform_design(d), 14, seed)
        k = float(rng.uniform(0.3, 4.0))
        s = solve_limit(r, k, certify=False)
        assert limit_objective(s.z, r, k) == pytest.approx(brute_force_limit(r.xs, r.js, k), abs=1e-9)
        # vertex property
        np.testing.assert_allclose(r.xs[list(s.basis)] @ s.z, r.js[list(s.basis)], atol=1e-12)
        assert np.all(s.certificate >= -1e-8) and np.all(s.certificate <= 1 + 1e-8)

    def test_centering_identity(self):
        m = make_model("ParetoMin", 0.5)
        prof = HeterogeneityProfile.homogeneous(2, m.tail_type, cube_vertices(2))
        s = draw_limit(3.3, m, prof, uniform_design(2), 9)
        np.testing.assert_array_equal(s.z_centered + eta(3.3, prof, 0.5), s.z)

    def test_unbounded_truncation(self):
        r = toy_realization([0.3, 1.1, 2.0])
        with pytest.raises(TruncationError):
            solve_limit(r, 3.5)

    def test_uncertified_raises(self):
        # type 3 with xi = -1 has J = Gamma; the argmin sits at the last retained point
        r = toy_realization([1.0, 2.0, 3.0])
        with pytest.raises(TruncationError):
            solve_limit(r, 2.5)

    def test_domain(self):
        with pytest.raises(DomainError):
            solve_limit(toy_realization([1.0]), 0.0)


class TestGradientCondition:
    def test_unique_interior(self):
        r = toy_realization([0.3, 1.1, 2.0])
        zeta, unique = gradient_condition([0.3], r, 0.5)
        assert zeta[0] == pytest.approx(0.5) and unique

    def test_not_optimal(self):
        r = toy_realization([0.3, 1.1, 2.0])
        zeta, unique = gradient_condition([1.1], r, 0.5)
        assert zeta[0] == pytest.approx(-0.5) and not unique

    def test_integer_k_boundary(self):
        r = toy_realization([0.3, 1.1, 2.0, 3.0])
        zeta, unique = gradient_condition([1.1], r, 2.0)
        assert zeta[0] == pytest.approx(1.0) and not unique

    def test_matches_solver_certificate(self):
        m = make_model("Uniform")
        prof = HeterogeneityProfile(np.array([1.0, 0.4]), m.tail_type)
        r = sample_points(m, prof, uniform_design(2), 500, 21)
        s = solve_limit(r, 2.7)
        zeta, unique = gradient_condition(s.z, r, 2.7)
        order = np.argsort(s.basis)
        np.testing.assert_allclose(np.sort(zeta), np.sort(s.certificate[order]), atol=1e-10)
        assert unique == s.unique


class TestTruncation:
    @pytest.mark.parametrize("name, xi", [("ReflectedExponential", None), ("Uniform", None), ("Cauchy", None)])
    def test_default_draws_certified(self, name, xi):
        m = make_model(name, xi)
        d = 3
        c = np.zeros(d)
        if m.tail_type is not TailType.TYPE1:
            c[0] = 1.0
        prof = HeterogeneityProfile(c, m.tail_type, cube_vertices(d))
        for i in range(20):
            s = draw_limit(2.0, m, prof, uniform_design(d), 17, (i,))
            assert s.M_used >= 500
            if m.tail_type is not TailType.TYPE2:
                r = sample_points(m, prof, uniform_design(d), s.M_used, 17, (i,))
                assert truncation_certified(s.z, r)

    def test_type2_support_constraint(self):
        m = make_model("Cauchy")
        V = cube_vertices(3)
        prof = HeterogeneityProfile.homogeneous(3, m.tail_type, V)
        for i in range(15):
            s = draw_limit(5.0, m, prof, uniform_design(3), 2, (i,))
            assert np.max(V @ s.z) <= 1e-9
            bigger = draw_limit(5.0, m, prof, uniform_design(3), 2, (i,), M=4 * s.M_used)
            np.testing.assert_allclose(bigger.z, s.z, rtol=1e-9, atol=1e-12)

    def test_fixed_truncation(self):
        m = make_model("Cauchy")
        prof = HeterogeneityProfile.homogeneous(3, m.tail_type)
        s = draw_limit(5.0, m, prof, uniform_design(3), 2, (0,), M=300, adaptive=False)
        assert s.M_used == 300


class TestDistribution:
    def test_univariate_type3_exponential(self):
        m = make_model("Uniform")
        dist = sample_limit_distribution(
            0.5, m, HeterogeneityProfile.homogeneous(1, m.tail_type), univariate_design, 3000, 1
        )
        assert stats.kstest(dist.z[:, 0], "expon").statistic < 0.03

    def test_univariate_order_statistic_law(self):
        # k = 2.5: argmin is the third point, Gamma_3 ~ Gamma(3)
        m = make_model("Uniform")
        dist = sample_limit_distribution(
            2.5, m, HeterogeneityProfile.homogeneous(1, m.tail_type), univariate_design, 3000, 2
        )
        assert stats.kstest(dist.z[:, 0], stats.gamma(3).cdf).statistic < 0.03

    def test_workers_deterministic(self):
        m = make_model("ReflectedExponential")
        prof = HeterogeneityProfile(np.array([0.0, 0.3]), m.tail_type, cube_vertices(2))
        a = sample_limit_distribution(1.7, m, prof, uniform_design(2), 40, 5, workers=1)
        b = sample_limit_distribution(1.7, m, prof, uniform_design(2), 40, 5, workers=4)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.M_used, b.M_used)

    def test_replication_keyed(self):
        m = make_model("Uniform")
        prof = HeterogeneityProfile.homogeneous(1, m.tail_type)
        dist = sample_limit_distribution(0.5, m, prof, univariate_design, 10, 5)
        single = draw_limit(0.5, m, prof, univariate_design, 5, (7,))
        np.testing.assert_array_equal(dist.z[7], single.z)

    def test_csv(self, tmp_path):
        m = make_model("Cauchy")
        prof = HeterogeneityProfile.homogeneous(1, m.tail_type)
        dist = sample_limit_distribution(0.5, m, prof, univariate_design, 5, 5)
        path = tmp_path / "z.csv"
        dist.write_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["rep", "k", "z1", "zc1", "unique", "M_used"]
        assert len(rows) == 6
        assert float(rows[3][2]) == dist.z[2, 0]
        assert float(rows[3][3]) == dist.z_centered[2, 0]

    def test_r_domain(self):
        m = make_model("Uniform")
        with pytest.raises(DomainError):
            sample_limit_distribution(0.5, m, HeterogeneityProfile.homogeneous(1, m.tail_type), univariate_design, 0, 1)
