#!/usr/bin/env python3
"""
model.py
Problems, techniques and simplex coefficients, sample-count allocation, the
five built-in example problems and the alpha strategy registry.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Optional, Tuple

import numpy as np

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
from mis_balance.quadrature import DEFAULT_QUADRATURE, Interval, InverseCdf, integrate

if TYPE_CHECKING:
    from mis_balance.analysis import MomentTable

logger = logging.getLogger(__name__)

SIMPLEX_SUM_TOL = 1e-12
COVERAGE_GRID = 2049

PUBLISHED_COSTS = (1.0, 6.24, 3.28)
EXAMPLE5_COST_PROFILES = ((1.0, 1.0), (1.0, 5.0))


# --- Simplex coefficients ---

@dataclass(frozen=True)
class SimplexVector:
    """Strictly positive coefficients summing to one (alpha or beta)."""

    coeffs: Tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if not coeffs:
            raise InvalidSimplex("Simplex vector needs at least one entry")
        for c in coeffs:
            if not math.isfinite(c) or c <= 0.0:
                raise InvalidSimplex(f"Simplex entries must be finite and > 0, got {coeffs}")
        total = math.fsum(coeffs)
        if abs(total - 1.0) > SIMPLEX_SUM_TOL:
            raise InvalidSimplex(f"Simplex entries must sum to 1, got sum={total!r}")

    @classmethod
    def uniform(cls, n):
        if n < 1:
            raise InvalidSimplex(f"Simplex dimension must be >= 1, got {n}")
        return cls((1.0 / n,) * n)

    @classmethod
    def normalize(cls, weights):
        """Scale positive weights to sum to one."""
        w = np.asarray(weights, dtype=float)
        if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidSimplex(f"Cannot normalize weights {w.tolist()}: entries must be finite and > 0")
        w = w / math.fsum(w)
        # Push the rounding residue onto the largest entry so the sum is 1 to the ulp.
        k = int(np.argmax(w))
        w[k] = 1.0 - (math.fsum(w) - w[k])
        return cls(tuple(w.tolist()))

    def as_array(self):
        return np.array(self.coeffs)

    def __len__(self):
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    def __getitem__(self, i):
        return self.coeffs[i]


# --- Allocation ---

@dataclass(frozen=True)
class Allocation:
    counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 1 for c in counts):
            raise ValidationError(f"Every technique needs at least one sample, got {counts}")

    @property
    def total(self):
        return sum(self.counts)

    def __len__(self):
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def __getitem__(self, i):
        return self.counts[i]


def allocate(beta, N):
    """
    Round beta*N to integers by largest remainder, at least one sample per
    technique, with the counts summing to N exactly. Ties go to the lower index.
    """
    n = len(beta)
    N = int(N)
    if N < n:
        raise BudgetTooSmall(f"Budget N={N} is smaller than the number of techniques n={n}")

    target = beta.as_array() * N
    counts = np.maximum(np.floor(target).astype(np.int64), 1)

    while counts.sum() < N:
        # argmax returns the first maximal entry, so ties resolve by index
        counts[int(np.argmax(target - counts))] += 1
    while counts.sum() > N:
        surplus = np.where(counts > 1, counts - target, -np.inf)
        counts[int(np.argmax(surplus))] -= 1

    return Allocation(tuple(counts.tolist()))


# --- Techniques and problems ---

@dataclass(frozen=True)
class Technique:
    """One proposal: a normalized pdf, its sampler u -> x, and a sampling cost."""

    pdf: Callable
    sampler: Callable
    cost: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.cost) and self.cost > 0):
            raise NonPositiveValue(f"Technique {self.label!r} needs a positive cost, got {self.cost}")


@dataclass(frozen=True)
class Problem:
    integrand: Callable
    domain: Interval
    techniques: Tuple[Technique, ...]
    reference_mu: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "techniques", tuple(self.techniques))
        if not self.techniques:
            raise ValidationError("A problem needs at least one technique")
        self._check_normalized()
        self._check_coverage()

    def _check_normalized(self):
        for t in self.techniques:
            mass = integrate(t.pdf, self.domain)
            if abs(mass - 1.0) > 10 * DEFAULT_QUADRATURE.rel_tol:
                raise NotNormalized(f"Technique {t.label!r} pdf integrates to {mass!r}, not 1")

    def _check_coverage(self):
        x = np.linspace(self.domain.lo, self.domain.hi, COVERAGE_GRID)
        f = np.asarray(self.integrand(x), dtype=float)
        covered = np.zeros_like(x, dtype=bool)
        for t in self.techniques:
            covered |= np.asarray(t.pdf(x), dtype=float) > 0
        uncovered = (f != 0) & ~covered
        if np.any(uncovered):
            raise CoverageError(
                f"No technique has positive density at x={x[uncovered][0]!r} where f is nonzero"
            )

    @property
    def n(self):
        return len(self.techniques)

    @property
    def costs(self):
        return tuple(t.cost for t in self.techniques)

    def with_costs(self, costs):
        costs = tuple(float(c) for c in costs)
        if len(costs) != self.n:
            raise ValidationError(f"Expected {self.n} costs, got {len(costs)}")
        techniques = tuple(dataclasses.replace(t, cost=c) for t, c in zip(self.techniques, costs))
        return dataclasses.replace(self, techniques=techniques)


# --- Built-in examples ---

def _normalized(shape, domain):
    """Return (pdf, normalization constant) for a nonnegative shape function."""
    z = integrate(shape, domain)
    return (lambda x: shape(x) / z), z


def _technique_x(domain, cost):
    lo = domain.lo
    pdf, z = _normalized(lambda x: np.asarray(x, dtype=float), domain)

    def sampler(u):
        return np.clip(np.sqrt(lo * lo + 2.0 * z * np.asarray(u)), domain.lo, domain.hi)

    return Technique(pdf, sampler, cost, "x")


def _technique_quadratic(domain, cost):
    shape = lambda x: x * x - x / math.pi  # noqa: E731
    pdf, _ = _normalized(shape, domain)
    return Technique(pdf, InverseCdf(pdf, domain), cost, "x^2-x/pi")


def _technique_sin(domain, cost):
    pdf, z = _normalized(np.sin, domain)
    c0 = math.cos(domain.lo)

    def sampler(u):
        arg = np.clip(c0 - z * np.asarray(u), -1.0, 1.0)
        return np.clip(np.arccos(arg), domain.lo, domain.hi)

    return Technique(pdf, sampler, cost, "sin(x)")


def _technique_two_minus_x(domain, cost):
    lo = domain.lo
    pdf, z = _normalized(lambda x: 2.0 - x, domain)
    c0 = 2.0 * lo - lo * lo / 2.0

    def sampler(u):
        inner = np.maximum(4.0 - 2.0 * (c0 + z * np.asarray(u)), 0.0)
        return np.clip(2.0 - np.sqrt(inner), domain.lo, domain.hi)

    return Technique(pdf, sampler, cost, "2-x")


def _technique_sin_sq(domain, cost):
    pdf, _ = _normalized(lambda x: np.sin(x) ** 2, domain)
    return Technique(pdf, InverseCdf(pdf, domain), cost, "sin^2(x)")


def _benchmark_techniques(domain):
    cx, cq, cs = PUBLISHED_COSTS
    return (
        _technique_x(domain, cx),
        _technique_quadratic(domain, cq),
        _technique_sin(domain, cs),
    )


def _build(label, integrand, domain, techniques, reference_mu=None):
    if reference_mu is None:
        reference_mu = integrate(integrand, domain)
    return Problem(integrand, domain, techniques, reference_mu, label)


@lru_cache(maxsize=8)
def example_problem(id):
    """
    Example problems 1 to 5.

    Examples 1-4 integrate over [3/(2 pi), pi] with the techniques x,
    x^2 - x/pi and sin(x), costs (1, 6.24, 3.28). Example 5 integrates
    sqrt(x) + sin(x) over [0.01, pi/2] with techniques 2 - x and sin^2(x);
    its default costs are (1, 1), see EXAMPLE5_COST_PROFILES.
    """
    if id not in (1, 2, 3, 4, 5):
        raise UnknownExample(f"Unknown example problem {id!r}, expected 1..5")
    logger.debug(f"Building example problem {id}")

    if id == 5:
        domain = Interval(0.01, math.pi / 2)
        techniques = (
            _technique_two_minus_x(domain, EXAMPLE5_COST_PROFILES[0][0]),
            _technique_sin_sq(domain, EXAMPLE5_COST_PROFILES[0][1]),
        )
        return _build("Example 5", lambda x: np.sqrt(x) + np.sin(x), domain, techniques)

    domain = Interval(3.0 / (2.0 * math.pi), math.pi)
    techniques = _benchmark_techniques(domain)
    quadratic = lambda x: x * x - x / math.pi  # noqa: E731

    if id == 1:
        f = lambda x: x * quadratic(x) * np.sin(x)  # noqa: E731
    elif id == 2:
        f = lambda x: quadratic(x) * np.sin(x) ** 2  # noqa: E731
    elif id == 3:
        f = lambda x: x + quadratic(x) + np.sin(x)  # noqa: E731
    else:
        p1, p2, p3 = (t.pdf for t in techniques)
        f = lambda x: 30.0 * p1(x) + 30.0 * p2(x) + 40.0 * p3(x)  # noqa: E731
        return _build("Example 4", f, domain, techniques, reference_mu=100.0)

    return _build(f"Example {id}", f, domain, techniques)


@lru_cache(maxsize=None)
def two_identical_techniques_problem():
    """Symmetric problem: e^x on [0, 1] with two copies of the pdf (1 + x)/1.5."""
    domain = Interval(0.0, 1.0)

    def pdf(x):
        return (1.0 + np.asarray(x, dtype=float)) / 1.5

    def sampler(u):
        return np.clip(np.sqrt(1.0 + 3.0 * np.asarray(u)) - 1.0, 0.0, 1.0)

    techniques = (Technique(pdf, sampler, 1.0, "p"), Technique(pdf, sampler, 1.0, "p'"))
    return Problem(np.exp, domain, techniques, math.e - 1.0, "two identical techniques")


def published_cost_profiles(problem_id):
    """Cost vectors the efficiency table uses for one example."""
    if problem_id == 5:
        return EXAMPLE5_COST_PROFILES
    return (PUBLISHED_COSTS,)


# --- Alpha strategies ---

@dataclass(frozen=True)
class AlphaStrategy:
    name: str
    rule: Callable

    def __call__(self, problem, table: "MomentTable"):
        alpha = self.rule(problem, table)
        if not isinstance(alpha, SimplexVector):
            alpha = SimplexVector.normalize(alpha)
        if len(alpha) != problem.n:
            raise InvalidSimplex(
                f"Strategy {self.name!r} produced {len(alpha)} coefficients for {problem.n} techniques"
            )
        return alpha


def _positive_v(table, name):
    v = np.asarray(table.v, dtype=float)
    if np.any(v <= 0):
        raise NonPositiveValue(f"Strategy {name!r} needs every v_i > 0, got {v.tolist()}")
    return v


def _equal(problem, table):
    return SimplexVector.uniform(problem.n)


def _inv_variance(problem, table):
    return SimplexVector.normalize(1.0 / _positive_v(table, "inv-variance"))


def _inv_cost_variance(problem, table):
    v = _positive_v(table, "inv-cost-variance")
    return SimplexVector.normalize(1.0 / (np.asarray(problem.costs) * v))


_BUILTIN = (
    AlphaStrategy("equal", _equal),
    AlphaStrategy("inv-variance", _inv_variance),
    AlphaStrategy("inv-cost-variance", _inv_cost_variance),
)

_REGISTRY = {s.name: s for s in _BUILTIN}


def builtin_strategies():
    return list(_BUILTIN)


def register_strategy(strategy, replace=False):
    if strategy.name in _REGISTRY and not replace:
        raise ValidationError(f"Strategy {strategy.name!r} is already registered")
    _REGISTRY[strategy.name] = strategy
    logger.debug(f"Registered alpha strategy {strategy.name!r}")


def get_strategy(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownStrategy(
            f"Unknown strategy {name!r}; registered: {', '.join(sorted(_REGISTRY))}"
        ) from None


def strategy_names():
    return list(_REGISTRY)
