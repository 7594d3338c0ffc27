#!/usr/bin/env python3
"""
analysis.py
Exact (quadrature based) moments, variances and variance upper bounds of the
balance-heuristic estimators.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from mis_balance.errors import BiasedTechnique, NonPositiveValue, ValidationError
from mis_balance.model import SimplexVector
from mis_balance.quadrature import DEFAULT_QUADRATURE, integrate, panel_rule, quad

logger = logging.getLogger(__name__)

UNBIASED_TOL = 1e-8

ARITHMETIC = "arithmetic"
HARMONIC = "harmonic"
GEOMETRIC = "geometric"

LINEAR_EXPONENTS = {"l1": 1.0, "l2": 0.0, "l3": 0.5}


def _coeffs(weights):
    if isinstance(weights, SimplexVector):
        return weights.as_array()
    return np.asarray(weights, dtype=float)


def _readonly(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def mixture_pdf(problem, alpha, x):
    """psi_alpha(x) = sum_k alpha_k p_k(x); x may be a scalar or an array."""
    a = _coeffs(alpha)
    x = np.asarray(x, dtype=float)
    psi = np.zeros_like(x)
    for a_k, t in zip(a, problem.techniques):
        psi = psi + a_k * np.asarray(t.pdf(x), dtype=float)
    return psi if psi.ndim else float(psi)


# --- Moment tables ---

@dataclass(frozen=True, eq=False)
class TechniqueMoments:
    """Single-technique moments; independent of alpha."""

    mu: float
    mu_i: np.ndarray
    v: np.ndarray
    resolution_limited: bool


@dataclass(frozen=True, eq=False)
class MomentTable:
    alpha: SimplexVector
    mu_prime: np.ndarray
    sigma_prime_sq: np.ndarray
    v: np.ndarray
    mu_i: np.ndarray
    mu: float

    def __post_init__(self):
        n = len(self.alpha)
        for name in ("mu_prime", "sigma_prime_sq", "v", "mu_i"):
            arr = _readonly(getattr(self, name))
            if arr.shape != (n,):
                raise ValidationError(f"MomentTable.{name} needs {n} entries, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.sigma_prime_sq < 0):
            raise ValidationError(f"sigma'^2 must be >= 0, got {self.sigma_prime_sq.tolist()}")
        if np.any(self.v < 0):
            raise ValidationError(f"v must be >= 0, got {self.v.tolist()}")
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n(self):
        return len(self.alpha)

    @property
    def weights(self):
        return self.alpha.as_array()

    @property
    def sigma_prime(self):
        return np.sqrt(self.sigma_prime_sq)


def technique_moments(problem, cfg=DEFAULT_QUADRATURE):
    """
    mu = int f, and per technique mu_i = int f over {p_i > 0} and
    v_i = int f^2 / p_i - mu_i^2. Costs play no part, so problems that
    differ only in costs share one cache entry.
    """
    pdfs = tuple(t.pdf for t in problem.techniques)
    labels = tuple(t.label for t in problem.techniques)
    return _technique_moments(problem.integrand, problem.domain, pdfs, labels, problem.label, cfg)


@lru_cache(maxsize=64)
def _technique_moments(f, domain, pdfs, labels, problem_label, cfg):
    mu = integrate(f, domain, cfg)
    mu_i, v = [], []
    limited = False
    for pdf, label in zip(pdfs, labels):
        m = integrate(lambda x, p=pdf: np.where(np.asarray(p(x)) > 0, f(x), 0.0), domain, cfg)
        second = quad(lambda x, p=pdf: _ratio(np.asarray(f(x)) ** 2, np.asarray(p(x))), domain, cfg)
        if second.resolution_limited:
            logger.warning(
                f"v for technique {label!r} of {problem_label or 'problem'} is cut at "
                f"floating-point resolution: the integral of f^2/p diverges"
            )
            limited = True
        mu_i.append(m)
        v.append(max(second.value - m * m, 0.0))
    return TechniqueMoments(mu, _readonly(mu_i), _readonly(v), limited)


def mixture_moments(problem, alpha, cfg=DEFAULT_QUADRATURE):
    """(mu'_i, sigma'_i^2) of the weighted contribution f/psi_alpha under each p_i."""
    f = problem.integrand

    def psi(x):
        return mixture_pdf(problem, alpha, x)

    mu_prime, sigma_sq = [], []
    for t in problem.techniques:
        first = integrate(lambda x, p=t.pdf: _ratio(f(x) * p(x), psi(x)), problem.domain, cfg)
        second = integrate(lambda x, p=t.pdf: _ratio(f(x) ** 2 * p(x), psi(x) ** 2), problem.domain, cfg)
        mu_prime.append(first)
        # clamp round-off near zero-variance mixtures
        sigma_sq.append(max(second - first * first, 0.0))
    return np.array(mu_prime), np.array(sigma_sq)


def moments(problem, alpha, cfg=DEFAULT_QUADRATURE):
    if len(alpha) != problem.n:
        raise ValidationError(f"alpha has {len(alpha)} entries, problem has {problem.n} techniques")
    logger.debug(f"Computing moments for {problem.label or 'problem'} with alpha={alpha.coeffs}")
    single = technique_moments(problem, cfg)
    mu_prime, sigma_sq = mixture_moments(problem, alpha, cfg)
    return MomentTable(
        alpha=alpha,
        mu_prime=mu_prime,
        sigma_prime_sq=sigma_sq,
        v=single.v,
        mu_i=single.mu_i,
        mu=single.mu,
    )


# --- Fixed-rule tabulation for the alpha solvers ---

@dataclass(frozen=True, eq=False)
class MixtureTabulation:
    """
    f and every technique pdf tabulated on one fixed composite rule, so that
    mixture integrals become weighted sums that are smooth in alpha.
    """

    weights: np.ndarray
    f: np.ndarray
    pdfs: np.ndarray

    @classmethod
    def build(cls, problem, alpha, cfg=DEFAULT_QUADRATURE, cross=False):
        """Refine the rule for every mixture integrand at alpha (and the cross terms if asked)."""
        f = problem.integrand
        pdfs = [t.pdf for t in problem.techniques]

        def psi(x):
            return mixture_pdf(problem, alpha, x)

        integrands = []
        for p in pdfs:
            integrands.append(lambda x, p=p: _ratio(f(x) * p(x), psi(x)))
            integrands.append(lambda x, p=p: _ratio(f(x) ** 2 * p(x), psi(x) ** 2))
        if cross:
            for i, p in enumerate(pdfs):
                for q in pdfs[i:]:
                    integrands.append(lambda x, p=p, q=q: _ratio(f(x) * p(x) * q(x), psi(x) ** 2))
                    integrands.append(lambda x, p=p, q=q: _ratio(f(x) ** 2 * p(x) * q(x), psi(x) ** 3))

        rule = panel_rule(integrands, problem.domain, cfg)
        values = np.asarray(f(rule.nodes), dtype=float)
        table = np.vstack([np.asarray(p(rule.nodes), dtype=float) for p in pdfs])
        return cls(rule.weights, values, table)

    def mixture(self, alpha):
        return np.asarray(alpha, dtype=float) @ self.pdfs

    def mixture_moments(self, alpha):
        """(mu'_i, int f^2 p_i / psi^2) at a raw coefficient vector."""
        psi = self.mixture(alpha)
        ratio = _ratio(self.f, psi)
        first = self.pdfs @ (ratio * self.weights)
        second = self.pdfs @ (ratio * ratio * self.weights)
        return first, second

    def cross_moments(self, alpha):
        """C1_ij = int f p_i p_j / psi^2 and C2_ij = int f^2 p_i p_j / psi^3."""
        psi = self.mixture(alpha)
        ratio = _ratio(self.f, psi)
        w1 = _ratio(ratio * self.weights, psi)
        w2 = ratio * w1
        c1 = (self.pdfs * w1) @ self.pdfs.T
        c2 = (self.pdfs * w2) @ self.pdfs.T
        return c1, c2


# --- Variances ---

def variance_f1(m):
    return math.fsum(m.weights * m.sigma_prime_sq)


def variance_g1(m, beta):
    """sum alpha_i^2 sigma'_i^2 / beta_i; equals variance_f1(m) exactly when beta = alpha."""
    a = m.weights
    b = _coeffs(beta)
    if b.shape != a.shape:
        raise ValidationError(f"beta has {b.size} entries, expected {a.size}")
    if np.any(b <= 0):
        raise ValidationError(f"beta must be strictly positive, got {b.tolist()}")
    return math.fsum(a * (a / b) * m.sigma_prime_sq)


def variance_g(m, counts):
    """Variance of G for integer sample counts n_i: sum alpha_i^2 sigma'_i^2 / n_i."""
    a = m.weights
    n = np.asarray(counts, dtype=float)
    if n.shape != a.shape or np.any(n < 1):
        raise ValidationError(f"counts must be {a.size} integers >= 1, got {list(counts)}")
    return math.fsum(a * a * m.sigma_prime_sq / n)


def variance_gap(m):
    """V[randomized F^1] - V[F^1] = sum alpha_i mu'_i^2 - mu^2."""
    return math.fsum(m.weights * m.mu_prime ** 2) - m.mu ** 2


def variance_randomized(m):
    return variance_f1(m) + variance_gap(m)


def inverse_efficiency(m, beta, costs):
    """Total cost times variance: (sum beta_i c_i) * V[G^1]."""
    c = np.asarray(costs, dtype=float)
    if c.shape != (m.n,) or np.any(c <= 0):
        raise NonPositiveValue(f"costs must be {m.n} positive values, got {list(costs)}")
    return math.fsum(_coeffs(beta) * c) * variance_g1(m, beta)


# --- Weighted means ---

def weighted_mean(kind, values, weights):
    """
    Weighted arithmetic, harmonic or power mean.

    kind is "arithmetic", "harmonic", "geometric" or a real exponent p for
    the power mean (sum w x^p)^(1/p); p = 0 is the geometric limit.
    """
    x = np.asarray(values, dtype=float)
    w = _coeffs(weights)
    if x.shape != w.shape:
        raise ValidationError(f"values and weights differ in length: {x.size} vs {w.size}")
    if kind == ARITHMETIC:
        return math.fsum(w * x)

    p = {HARMONIC: -1.0, GEOMETRIC: 0.0}.get(kind, kind)
    if isinstance(p, str):
        raise ValidationError(f"Unknown mean kind {kind!r}")
    if np.any(x <= 0):
        raise NonPositiveValue(f"The {kind} mean needs positive values, got {x.tolist()}")
    p = float(p)
    if p == 0.0:
        return math.exp(math.fsum(w * np.log(x)))
    return math.fsum(w * x ** p) ** (1.0 / p)


@dataclass(frozen=True)
class BoundsReport:
    arithmetic_bound: float
    harmonic_bound: float
    power_half_bound: float
    harmonic_mean: float
    arithmetic_mean: float
    power_mean_neg_half: float
    variance_f1: float


def _positive_v(m):
    if np.any(m.v <= 0):
        raise NonPositiveValue(f"Bounds need every v_i > 0, got {m.v.tolist()}")
    return m.v


def _means(m):
    v = _positive_v(m)
    a = m.weights
    return (
        weighted_mean(HARMONIC, v, a),
        weighted_mean(ARITHMETIC, v, a),
        weighted_mean(-0.5, v, a),
    )


def is_unbiased(m):
    return bool(np.all(np.abs(m.mu_i - m.mu) <= UNBIASED_TOL * abs(m.mu)))


def bounds_unbiased(m):
    """The three upper bounds on V[F^1] when every technique is unbiased."""
    if not is_unbiased(m):
        raise BiasedTechnique(
            f"Technique means {m.mu_i.tolist()} differ from mu={m.mu!r}; use bounds_biased"
        )
    h, a, p = _means(m)
    mu_sq = m.mu ** 2
    h_sq_of_v = weighted_mean(HARMONIC, m.v ** 2, m.weights)
    return BoundsReport(
        arithmetic_bound=a,
        harmonic_bound=h + mu_sq * (h * h / h_sq_of_v - 1.0),
        power_half_bound=p + mu_sq * (p / h - 1.0),
        harmonic_mean=h,
        arithmetic_mean=a,
        power_mean_neg_half=p,
        variance_f1=variance_f1(m),
    )


def bounds_biased(m):
    """The three upper bounds on V[F^1] for techniques with their own means mu_i."""
    w = m.weights
    if abs(math.fsum(w * m.mu_i) - m.mu) > UNBIASED_TOL * max(abs(m.mu), 1.0):
        logger.warning(
            f"sum alpha_i mu_i = {math.fsum(w * m.mu_i)!r} does not reproduce mu={m.mu!r}; "
            f"biased bounds assume it does"
        )
    h, a, p = _means(m)
    mu_sq_i = m.mu_i ** 2
    mu_sq = m.mu ** 2
    return BoundsReport(
        arithmetic_bound=a + math.fsum(w * mu_sq_i) - mu_sq,
        harmonic_bound=h + h * h * math.fsum(w * mu_sq_i / m.v ** 2) - mu_sq,
        power_half_bound=p + p * math.fsum(w * mu_sq_i / m.v) - mu_sq,
        harmonic_mean=h,
        arithmetic_mean=a,
        power_mean_neg_half=p,
        variance_f1=variance_f1(m),
    )


def generalized_bound(m, t, biased=False, form="harmonic"):
    """
    The t-parameterized bound on V[F^1].

    Harmonic form: H(v^t)^2 / H(v^(2t-1)) + mu^2 (H(v^t)^2 / H(v^(2t)) - 1);
    t = 0, 1, 1/2 give B2, B1, B3. The arithmetic form at t is the harmonic
    form at -t. The biased variant replaces the mu^2 term by
    H(v^t)^2 / H(v^(2t) / mu_i^2) - mu^2.
    """
    if form not in ("harmonic", "arithmetic"):
        raise ValidationError(f"Unknown bound form {form!r}")
    v = _positive_v(m)
    w = m.weights
    e = -float(t) if form == "harmonic" else float(t)

    def s(power):
        return math.fsum(w * v ** power)

    base = s(e)
    spread = s(1.0 + 2.0 * e) / base ** 2
    if biased:
        return spread + math.fsum(w * m.mu_i ** 2 * v ** (2.0 * e)) / base ** 2 - m.mu ** 2
    return spread + m.mu ** 2 * (s(2.0 * e) / base ** 2 - 1.0)


# --- Constant-weight linear combinations ---

def combination_weights(alpha, v, kind):
    """Constant combination weights w_i proportional to alpha_i / v_i^t for kind l1, l2 or l3."""
    if kind not in LINEAR_EXPONENTS:
        raise ValidationError(f"Unknown linear combination {kind!r}, expected l1, l2 or l3")
    a = _coeffs(alpha)
    t = LINEAR_EXPONENTS[kind]
    if t == 0.0:
        return a.copy()
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise NonPositiveValue(f"Weights for {kind} need every v_i > 0, got {v.tolist()}")
    w = a / v ** t
    return w / math.fsum(w)


def linear_weights(m, kind):
    """Weights w_i proportional to alpha_i / v_i^t with t = 1 (l1), 0 (l2), 1/2 (l3)."""
    return combination_weights(m.alpha, m.v, kind)


def variance_linear(m, kind, randomized=False):
    """
    Variance per sample of sum_i w_i (1/n_i) sum_j f/p_i.

    Deterministic counts n_i = alpha_i N: sum w_i^2 v_i / alpha_i.
    Randomized technique draws: sum w_i^2 (v_i + mu_i^2) / alpha_i - (sum w_i mu_i)^2.
    """
    w = linear_weights(m, kind)
    a = m.weights
    if randomized:
        return math.fsum(w * w * (m.v + m.mu_i ** 2) / a) - math.fsum(w * m.mu_i) ** 2
    return math.fsum(w * w * m.v / a)
