"""
Tests for simplex vectors, allocation, problems, the example registry and the
alpha strategy registry.
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import uniform_technique
from mis_balance import model
from mis_balance.errors import (
    BudgetTooSmall,
    CoverageError,
    InvalidSimplex,
    NonPositiveValue,
    NotNormalized,
    UnknownExample,
    UnknownStrategy,
    ValidationError,
)
from mis_balance.model import (
    AlphaStrategy,
    Allocation,
    Problem,
    SimplexVector,
    Technique,
    allocate,
    builtin_strategies,
    example_problem,
    get_strategy,
    published_cost_profiles,
    register_strategy,
)
from mis_balance.quadrature import Interval, integrate


class TestSimplexVector:

    def test_uniform(self):
        assert SimplexVector.uniform(4).coeffs == (0.25,) * 4

    def test_normalize_sums_to_one(self):
        alpha = SimplexVector.normalize([1.0, 6.24, 3.28])
        assert math.fsum(alpha) == pytest.approx(1.0, abs=1e-15)
        assert alpha[1] / alpha[0] == pytest.approx(6.24)

    @pytest.mark.parametrize("coeffs", [(), (0.5, 0.6), (1.0, 0.0), (1.5, -0.5), (math.nan, 1.0)])
    def test_invalid(self, coeffs):
        with pytest.raises(InvalidSimplex):
            SimplexVector(coeffs)

    def test_normalize_rejects_nonpositive(self):
        with pytest.raises(InvalidSimplex):
            SimplexVector.normalize([1.0, 0.0])

    def test_sequence_protocol(self):
        alpha = SimplexVector((0.2, 0.3, 0.5))
        assert len(alpha) == 3
        assert list(alpha) == [0.2, 0.3, 0.5]
        assert alpha[2] == 0.5
        np.testing.assert_array_equal(alpha.as_array(), [0.2, 0.3, 0.5])


class TestAllocate:

    def test_exact_multiple(self):
        assert allocate(SimplexVector((0.2, 0.5, 0.3)), 10).counts == (2, 5, 3)

    def test_ties_go_to_lower_index(self):
        assert allocate(SimplexVector.uniform(3), 10).counts == (4, 3, 3)

    def test_floor_of_one(self):
        counts = allocate(SimplexVector((1e-6, 0.5 - 0.5e-6, 0.5 - 0.5e-6)), 10).counts
        assert counts[0] == 1
        assert sum(counts) == 10

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            allocate(SimplexVector.uniform(3), 2)

    def test_budget_exact(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 6))
            beta = SimplexVector.normalize(rng.uniform(1e-3, 1.0, size=n))
            N = int(rng.integers(n, 5000))
            allocation = allocate(beta, N)
            assert allocation.total == N
            assert min(allocation) >= 1

    def test_monotone_in_budget(self, rng):
        """Away from the floor of one, a bigger budget never takes more than one sample from a technique."""
        for _ in range(50):
            beta = SimplexVector.normalize(rng.uniform(0.05, 1.0, size=3))
            start = max(3, math.ceil(1.0 / min(beta)))
            previous = allocate(beta, start).counts
            for N in range(start + 1, start + 200):
                current = allocate(beta, N).counts
                assert all(c >= p - 1 for c, p in zip(current, previous))
                previous = current

    def test_allocation_rejects_zero(self):
        with pytest.raises(ValidationError):
            Allocation((3, 0))


class TestProblem:

    def test_not_normalized(self):
        domain = Interval(0.0, 1.0)
        bad = Technique(lambda x: 2.0 * np.ones_like(x), lambda u: u, 1.0, "double")
        with pytest.raises(NotNormalized):
            Problem(np.exp, domain, (bad,))

    def test_coverage(self):
        domain = Interval(0.0, 1.0)
        half = Technique(lambda x: np.where(x <= 0.5, 2.0, 0.0), lambda u: 0.5 * u, 1.0, "left half")
        with pytest.raises(CoverageError):
            Problem(lambda x: np.ones_like(x), domain, (half,))

    def test_nonpositive_cost(self):
        with pytest.raises(NonPositiveValue):
            Technique(lambda x: x, lambda u: u, 0.0)

    def test_with_costs(self, ex1):
        priced = ex1.with_costs((1.0, 1.0, 1.0))
        assert priced.costs == (1.0, 1.0, 1.0)
        assert ex1.costs == model.PUBLISHED_COSTS
        assert priced.integrand is ex1.integrand

    def test_with_costs_length(self, ex1):
        with pytest.raises(ValidationError):
            ex1.with_costs((1.0, 2.0))

    def test_needs_techniques(self):
        with pytest.raises(ValidationError):
            Problem(np.exp, Interval(0.0, 1.0), ())

    def test_single_uniform_technique(self):
        domain = Interval(0.0, 2.0)
        problem = Problem(np.exp, domain, (uniform_technique(domain),))
        assert problem.n == 1


class TestExampleProblems:

    @pytest.mark.parametrize("problem_id,mu,tol", [(1, 10.29, 5e-3), (3, 15.47, 5e-3), (5, 2.31175, 5e-6)])
    def test_reference_mu(self, problem_id, mu, tol):
        assert example_problem(problem_id).reference_mu == pytest.approx(mu, abs=tol)

    def test_example4_mu(self, ex4):
        assert ex4.reference_mu == 100.0
        assert integrate(ex4.integrand, ex4.domain) == pytest.approx(100.0, rel=1e-10)

    @pytest.mark.parametrize("problem_id", [0, 6, "1"])
    def test_unknown(self, problem_id):
        with pytest.raises(UnknownExample):
            example_problem(problem_id)

    @pytest.mark.parametrize("problem_id", [1, 2, 3, 4, 5])
    def test_techniques_normalized(self, problem_id):
        problem = example_problem(problem_id)
        for t in problem.techniques:
            assert integrate(t.pdf, problem.domain) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("problem_id", [1, 5])
    def test_samplers_invert_the_cdf(self, problem_id):
        """sampler(CDF(x)) recovers x for every technique."""
        problem = example_problem(problem_id)
        domain = problem.domain
        xs = np.linspace(domain.lo, domain.hi, 9)[1:-1]
        for t in problem.techniques:
            u = np.array([integrate(t.pdf, Interval(domain.lo, x)) for x in xs])
            np.testing.assert_allclose(t.sampler(u), xs, atol=1e-8)

    def test_costs(self, ex1, ex5):
        assert ex1.costs == (1.0, 6.24, 3.28)
        assert ex5.costs == (1.0, 1.0)
        assert published_cost_profiles(5) == ((1.0, 1.0), (1.0, 5.0))
        assert published_cost_profiles(2) == ((1.0, 6.24, 3.28),)

    def test_identical_techniques(self, identical):
        assert identical.n == 2
        assert identical.reference_mu == pytest.approx(integrate(np.exp, identical.domain), rel=1e-12)


class TestStrategies:

    def test_builtin_names(self):
        assert [s.name for s in builtin_strategies()] == ["equal", "inv-variance", "inv-cost-variance"]

    def test_equal(self, ex1):
        assert get_strategy("equal")(ex1, None) == SimplexVector.uniform(3)

    def test_inv_variance_equal_v(self, ex1):
        table = SimpleNamespace(v=np.array([2.0, 2.0, 2.0]))
        alpha = get_strategy("inv-variance")(ex1, table)
        np.testing.assert_allclose(alpha.as_array(), [1 / 3] * 3, rtol=1e-15)

    def test_inv_variance_example1(self, ex1):
        from mis_balance.analysis import moments

        table = moments(ex1, SimplexVector.uniform(3))
        alpha = get_strategy("inv-variance")(ex1, table)
        expected = (1.0 / table.v) / np.sum(1.0 / table.v)
        np.testing.assert_allclose(alpha.as_array(), expected, rtol=1e-14)

    def test_inv_cost_variance(self, ex1):
        table = SimpleNamespace(v=np.array([1.0, 1.0, 1.0]))
        alpha = get_strategy("inv-cost-variance")(ex1, table)
        expected = 1.0 / np.array(ex1.costs)
        np.testing.assert_allclose(alpha.as_array(), expected / expected.sum(), rtol=1e-14)

    def test_zero_variance_rejected(self, ex1):
        table = SimpleNamespace(v=np.array([0.0, 1.0, 1.0]))
        with pytest.raises(NonPositiveValue):
            get_strategy("inv-variance")(ex1, table)

    def test_unknown(self):
        with pytest.raises(UnknownStrategy):
            get_strategy("m-squared")

    def test_register(self, monkeypatch, ex1):
        monkeypatch.setattr(model, "_REGISTRY", dict(model._REGISTRY))
        first_heavy = AlphaStrategy("first-heavy", lambda problem, table: [2.0] + [1.0] * (problem.n - 1))
        register_strategy(first_heavy)
        alpha = get_strategy("first-heavy")(ex1, None)
        assert alpha[0] == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            register_strategy(first_heavy)
        register_strategy(first_heavy, replace=True)

    def test_wrong_length(self, ex1):
        broken = AlphaStrategy("broken", lambda problem, table: SimplexVector.uniform(2))
        with pytest.raises(InvalidSimplex):
            broken(ex1, None)
