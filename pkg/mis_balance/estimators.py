#!/usr/bin/env python3
"""
estimators.py
Seeded Monte Carlo versions of the balance-heuristic estimators F and G, the
one-sample randomized F, the constant-weight combinations Z_l1/l2/l3, and
empirical variance measurement over independent runs.

Sample j of technique i always comes from draw j of a Philox stream keyed by
(seed, stream, i), so results do not depend on scheduling.
"""

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from mis_balance.analysis import combination_weights, mixture_pdf, technique_moments
from mis_balance.errors import ValidationError, ZeroMixtureAtSample
from mis_balance.model import SimplexVector, allocate
from mis_balance.quadrature import DEFAULT_QUADRATURE

logger = logging.getLogger(__name__)

# key of the technique-index stream used by randomized estimators
INDEX_STREAM = 0xFFFFFFFF


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream) < 0:
            raise ValidationError(f"stream must be >= 0, got {self.stream}")

    def generator(self, key):
        """Counter-based generator for one (seed, stream, key) triple."""
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream), int(key)))
        return np.random.Generator(np.random.Philox(sequence))

    def offset(self, k):
        return RngSeed(self.seed, self.stream + k)


class AliasTable:
    """Walker/Vose alias table: O(1) draws of an index with probabilities p."""

    def __init__(self, probabilities):
        p = np.asarray(probabilities.coeffs if isinstance(probabilities, SimplexVector) else probabilities, dtype=float)
        n = p.size
        scaled = p * n / math.fsum(p)
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, big = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = big
            scaled[big] = scaled[big] + scaled[s] - 1.0
            (small if scaled[big] < 1.0 else large).append(big)
        # leftovers are 1 up to round-off
        for i in small + large:
            self.prob[i] = 1.0

    def draw(self, gen, size):
        column = gen.integers(0, self.prob.size, size=size)
        coin = gen.random(size)
        return np.where(coin < self.prob[column], column, self.alias[column])


class EstimatorKind(str, enum.Enum):
    F = "F"
    G = "G"
    RANDOMIZED_F = "randomized_F"
    Z_L1 = "Z_l1"
    Z_L2 = "Z_l2"
    Z_L3 = "Z_l3"


_LINEAR_KINDS = {"l1": EstimatorKind.Z_L1, "l2": EstimatorKind.Z_L2, "l3": EstimatorKind.Z_L3}


@dataclass(frozen=True)
class EstimateRun:
    """
    value == sum_i coefficients[i] * per_technique[i]. counts holds the
    samples drawn per technique; a randomized run may leave some at zero.
    """

    value: float
    per_technique: Tuple[float, ...]
    counts: Tuple[int, ...]
    estimator_kind: EstimatorKind
    coefficients: Tuple[float, ...]
    randomized: bool = False


def _check_alpha(problem, alpha, name="alpha"):
    if not isinstance(alpha, SimplexVector):
        raise ValidationError(f"{name} must be a SimplexVector, got {type(alpha).__name__}")
    if len(alpha) != problem.n:
        raise ValidationError(f"{name} has {len(alpha)} entries, problem has {problem.n} techniques")


def _samples(problem, i, count, seed):
    u = seed.generator(i).random(count)
    return np.asarray(problem.techniques[i].sampler(u), dtype=float)


def _ratios(f_values, den, x):
    """f/den at the samples; f = 0 contributes 0, den = 0 with f != 0 is a coverage failure."""
    bad = (den <= 0) & (f_values != 0)
    if np.any(bad):
        raise ZeroMixtureAtSample(f"Sampling density is zero at x={x[bad][0]!r} where f is nonzero")
    return np.divide(f_values, den, out=np.zeros_like(f_values), where=den > 0)


def _random_counts(problem, alpha, N, seed):
    index = AliasTable(alpha).draw(seed.generator(INDEX_STREAM), N)
    return np.bincount(index, minlength=problem.n)


def _run(kind, partial, counts, coefficients, randomized=False):
    value = math.fsum(c * s for c, s in zip(coefficients, partial))
    return EstimateRun(
        value=value,
        per_technique=tuple(float(s) for s in partial),
        counts=tuple(int(c) for c in counts),
        estimator_kind=kind,
        coefficients=tuple(float(c) for c in coefficients),
        randomized=randomized,
    )


def _balance_partials(problem, alpha, counts, seed):
    partial = []
    for i, count in enumerate(counts):
        x = _samples(problem, i, count, seed)
        f = np.asarray(problem.integrand(x), dtype=float)
        psi = np.atleast_1d(mixture_pdf(problem, alpha, x))
        partial.append(math.fsum(_ratios(f, psi, x)))
    return partial


def estimate_g(problem, alpha, beta, N, seed):
    """
    G = sum_i (alpha_i / n_i) sum_j f(X_ij) / psi_alpha(X_ij) with n_i from
    allocate(beta, N). With beta = alpha this is F.
    """
    _check_alpha(problem, alpha)
    _check_alpha(problem, beta, "beta")
    counts = allocate(beta, N)
    partial = _balance_partials(problem, alpha, counts, seed)
    coefficients = [a / n for a, n in zip(alpha, counts)]
    kind = EstimatorKind.F if beta == alpha else EstimatorKind.G
    return _run(kind, partial, counts, coefficients)


def estimate_f(problem, alpha, N, seed):
    return estimate_g(problem, alpha, alpha, N, seed)


def estimate_randomized(problem, alpha, N, seed):
    """One-sample balance heuristic: each of the N technique indices is drawn with probabilities alpha."""
    _check_alpha(problem, alpha)
    N = int(N)
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    counts = _random_counts(problem, alpha, N, seed)
    partial = _balance_partials(problem, alpha, counts, seed)
    return _run(EstimatorKind.RANDOMIZED_F, partial, counts, [1.0 / N] * problem.n, randomized=True)


def estimate_linear(problem, kind, alpha, N, seed, randomized=False, cfg=DEFAULT_QUADRATURE):
    """
    Constant-weight combination sum_i w_i (1/n_i) sum_j f/p_i with w_i
    proportional to alpha_i / v_i^t (t = 1, 0, 1/2 for l1, l2, l3). The v_i
    come from quadrature. Randomized runs draw technique indices with
    probabilities alpha and scale by w_i / (alpha_i N).
    """
    _check_alpha(problem, alpha)
    if kind not in _LINEAR_KINDS:
        raise ValidationError(f"Unknown linear combination {kind!r}, expected l1, l2 or l3")
    v = technique_moments(problem, cfg).v if kind != "l2" else None
    w = combination_weights(alpha, v, kind)

    if randomized:
        N = int(N)
        if N < 1:
            raise ValidationError(f"N must be >= 1, got {N}")
        counts = _random_counts(problem, alpha, N, seed)
        coefficients = [w_i / (a * N) for w_i, a in zip(w, alpha)]
    else:
        counts = allocate(alpha, N)
        coefficients = [w_i / n for w_i, n in zip(w, counts)]

    partial = []
    for i, count in enumerate(counts):
        x = _samples(problem, i, count, seed)
        f = np.asarray(problem.integrand(x), dtype=float)
        p = np.asarray(problem.techniques[i].pdf(x), dtype=float)
        partial.append(math.fsum(_ratios(f, p, x)))
    return _run(_LINEAR_KINDS[kind], partial, counts, coefficients, randomized)


# --- Empirical variance ---

@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run and with what parameters; see run()."""

    kind: EstimatorKind
    alpha: SimplexVector
    n_samples: int
    beta: Optional[SimplexVector] = None
    randomized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.kind == EstimatorKind.G and self.beta is None:
            raise ValidationError("Estimator G needs beta")

    def run(self, problem, seed):
        if self.kind == EstimatorKind.F:
            return estimate_f(problem, self.alpha, self.n_samples, seed)
        if self.kind == EstimatorKind.G:
            return estimate_g(problem, self.alpha, self.beta, self.n_samples, seed)
        if self.kind == EstimatorKind.RANDOMIZED_F:
            return estimate_randomized(problem, self.alpha, self.n_samples, seed)
        linear = {k: name for name, k in _LINEAR_KINDS.items()}[self.kind]
        return estimate_linear(problem, linear, self.alpha, self.n_samples, seed, self.randomized)


@dataclass(frozen=True)
class EmpiricalStats:
    mean: float
    variance_of_estimator: float
    runs: int
    std_error_of_variance: float


def summarize(values):
    """Mean, unbiased variance and the fourth-moment standard error of that variance."""
    x = np.asarray(values, dtype=float)
    r = x.size
    if r < 2:
        raise ValidationError(f"Need at least 2 runs, got {r}")
    mean = math.fsum(x) / r
    centred = x - mean
    s2 = math.fsum(centred ** 2) / (r - 1)
    m4 = math.fsum(centred ** 4) / r
    se = math.sqrt(max((m4 - (r - 3) / (r - 1) * s2 * s2) / r, 0.0))
    return EmpiricalStats(mean=mean, variance_of_estimator=s2, runs=r, std_error_of_variance=se)


def empirical_variance(problem, config, runs, base_seed, workers=1):
    """Run the estimator `runs` times, run r on stream base_seed.stream + r."""
    if runs < 2:
        raise ValidationError(f"Need at least 2 runs, got {runs}")
    logger.debug(f"Running {config.kind.value} {runs} times with N={config.n_samples}")

    def one(r):
        return config.run(problem, base_seed.offset(r)).value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, range(runs)))
    else:
        values = [one(r) for r in range(runs)]
    return summarize(values)
