#!/usr/bin/env python3
"""
optimize.py
Optimal sampling proportions beta for a fixed alpha, stationarity residuals
and a projected-gradient solver for alpha, and the likelihood-dominance test
that orders V[F] against V[G] when beta = 1/n.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from mis_balance.analysis import (
    MixtureTabulation,
    variance_f1,
    variance_g1,
    variance_randomized,
)
from mis_balance.errors import AllZeroVariance, DidNotConverge, NonPositiveValue, ValidationError
from mis_balance.model import SimplexVector
from mis_balance.quadrature import DEFAULT_QUADRATURE

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
ARMIJO = 1e-4
MIN_SHRINK = 1e-12
STEP_BOUNDS = (1e-12, 1e12)
MAX_REBUILDS = 3
# relative gap under which two products alpha_i sigma'_i^2 count as tied
TIE_TOL = 1e-12

CASE1 = "case1"
CASE3 = "case3"
CASE4 = "case4"
RANDOMIZED = "randomized"
OBJECTIVES = (CASE1, CASE3, CASE4, RANDOMIZED)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 500
    grad_tol: float = 1e-7
    step_init: float = 0.1
    simplex_floor: float = 1e-6

    def __post_init__(self):
        for name in ("max_iters", "grad_tol", "step_init", "simplex_floor"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"SolverConfig.{name} must be > 0, got {getattr(self, name)}")

    def check(self, n):
        if self.simplex_floor * n >= 1.0:
            raise ValidationError(f"simplex_floor={self.simplex_floor} must be below 1/n = {1.0 / n}")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class OptimalityResidual:
    """Per-technique deviations from stationarity relative to int f^2/psi; norm is their max."""

    per_technique: Tuple[float, ...]
    norm: float


@dataclass(frozen=True)
class SolverResult:
    alpha: SimplexVector
    objective: float
    residual: OptimalityResidual
    iterations: int
    converged: bool
    at_floor: bool
    history: Tuple[float, ...] = field(repr=False)


# --- Optimal beta ---

def _beta_from(weights, sigma_prime, floor):
    if not np.any(sigma_prime > 0):
        raise AllZeroVariance("Every sigma'_i is zero: any beta gives zero variance")
    w = weights / math.fsum(weights)
    w[sigma_prime <= 0] = floor
    return SimplexVector.normalize(w)


def optimal_beta(m, floor=DEFAULT_SOLVER.simplex_floor):
    """beta*_i proportional to alpha_i sigma'_i."""
    s = m.sigma_prime
    return _beta_from(m.weights * s, s, floor)


def optimal_beta_with_costs(m, costs, floor=DEFAULT_SOLVER.simplex_floor):
    """beta*_i proportional to alpha_i sigma'_i / sqrt(c_i)."""
    c = np.asarray(costs, dtype=float)
    if c.shape != (m.n,) or np.any(c <= 0):
        raise NonPositiveValue(f"costs must be {m.n} positive values, got {list(costs)}")
    s = m.sigma_prime
    return _beta_from(m.weights * s / np.sqrt(c), s, floor)


# --- Projection ---

def project_to_simplex(y, floor=0.0):
    """Euclidean projection of y onto {x >= floor, sum x = 1} by sorting."""
    y = np.asarray(y, dtype=float)
    n = y.size
    budget = 1.0 - n * floor
    if budget < 0:
        raise ValidationError(f"floor={floor} leaves no room on a simplex of dimension {n}")
    z = y - floor
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - budget
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(z - theta, 0.0) + floor


# --- Stationarity residuals ---

def _resolve(objective, beta, n):
    if objective not in OBJECTIVES:
        raise ValidationError(f"Unknown objective {objective!r}, expected one of {', '.join(OBJECTIVES)}")
    if objective == CASE3:
        if beta is None:
            raise ValidationError("Objective case3 needs a fixed beta")
        if len(beta) != n:
            raise ValidationError(f"beta has {len(beta)} entries, problem has {n} techniques")
        return np.asarray(beta.coeffs if isinstance(beta, SimplexVector) else beta, dtype=float)
    if objective == CASE4:
        return np.full(n, 1.0 / n)
    return None


def _expression(tab, objective, a, b):
    """
    Per-technique stationarity expression, its sign relative to the gradient
    and the scale it is measured against.

    case1: e_j = sigma'_j^2 + 2 mu'_j^2 - 2 sum_i alpha_i mu'_i C1_ij, gradient -e_j
    case3: d_j = alpha_j sigma'_j^2/beta_j - sum_i alpha_i^2/beta_i (C2_ij - mu'_i C1_ij),
           gradient 2 d_j
    randomized: sigma'_j^2 + mu'_j^2, gradient its negative

    The scale is int f^2/psi = sum_j alpha_j (sigma'_j^2 + mu'_j^2) >= mu^2,
    the size of every term above. The expressions themselves can all vanish
    at a zero-variance optimum, so they cannot serve as their own scale.
    """
    mu_p, second = tab.mixture_moments(a)
    sigma_sq = second - mu_p ** 2
    scale = math.fsum(a * second)
    if objective == RANDOMIZED:
        return second, 1.0, scale
    c1, c2 = tab.cross_moments(a)
    if objective == CASE1:
        e = sigma_sq + 2.0 * mu_p ** 2 - 2.0 * (a * mu_p) @ c1
        lam = math.fsum(a * e)
        logger.debug(f"case1 multiplier {lam!r} against sum alpha sigma'^2 = {math.fsum(a * sigma_sq)!r}")
        return e, 1.0, scale
    coef = a * a / b
    d = a * sigma_sq / b - coef @ (c2 - mu_p[:, None] * c1)
    return d, -1.0, scale


def _residual(expr, sign, a, floor, scale=1.0):
    """
    Deviation of each expression from the alpha-weighted mean over the free
    coordinates, relative to scale. A coordinate at the floor only counts
    when it violates the bound condition (it would gain from moving into the
    interior).
    """
    if floor:
        free = a > floor * (1.0 + 1e-9)
    else:
        free = np.ones_like(a, dtype=bool)
    if not np.any(free):
        free = np.ones_like(a, dtype=bool)
    mean = math.fsum(a[free] * expr[free]) / math.fsum(a[free])
    dev = (expr - mean) / (scale if scale > 0 else 1.0)
    dev = np.where(free | (sign * dev > 0), dev, 0.0)
    return OptimalityResidual(tuple(dev.tolist()), float(np.max(np.abs(dev))))


def _stationarity(tab, objective, a, b, floor):
    expr, sign, scale = _expression(tab, objective, a, b)
    return _residual(expr, sign, a, floor, scale)


def _residual_at(problem, objective, alpha, beta, cfg, floor):
    a = alpha.as_array()
    b = _resolve(objective, beta, problem.n)
    tab = MixtureTabulation.build(problem, alpha, cfg, cross=True)
    return _stationarity(tab, objective, a, b, floor)


def case1_residual(problem, alpha, cfg=DEFAULT_QUADRATURE, floor=None):
    """Stationarity of V[F^1] over the simplex: e_j equal for all j."""
    return _residual_at(problem, CASE1, alpha, None, cfg, floor)


def case3_residual(problem, alpha, beta, cfg=DEFAULT_QUADRATURE, floor=None):
    """Stationarity of V[G^1] for fixed beta: d_j equal for all j."""
    return _residual_at(problem, CASE3, alpha, beta, cfg, floor)


def randomized_residual(problem, alpha, cfg=DEFAULT_QUADRATURE, floor=None):
    """Stationarity of the one-sample estimator's variance: sigma'_j^2 + mu'_j^2 equal for all j."""
    return _residual_at(problem, RANDOMIZED, alpha, None, cfg, floor)


# --- Objectives ---

def _objective(tab, objective, a, b):
    """Objective on the fixed rule; spreads are computed centred, not as E[X^2] - E[X]^2."""
    psi = tab.mixture(a)
    ratio = np.divide(tab.f, psi, out=np.zeros_like(tab.f), where=psi > 0)
    if objective == RANDOMIZED:
        mu = float(tab.f @ tab.weights)
        return float((psi * (ratio - mu) ** 2) @ tab.weights)
    mu_p = tab.pdfs @ (ratio * tab.weights)
    spread = ((ratio[None, :] - mu_p[:, None]) ** 2 * tab.pdfs) @ tab.weights
    if objective == CASE1:
        return float(a @ spread)
    return float((a * a / b) @ spread)


def _fd_gradient(tab, objective, a, b):
    grad = np.empty_like(a)
    for j in range(a.size):
        step = np.zeros_like(a)
        step[j] = FD_STEP
        grad[j] = (_objective(tab, objective, a + step, b) - _objective(tab, objective, a - step, b)) / (2 * FD_STEP)
    return grad


def objective_value(m, objective, beta=None):
    """Analytic objective at a moment table: V[F^1], V[G^1] or the one-sample variance."""
    b = _resolve(objective, beta, m.n)
    if objective == CASE1:
        return variance_f1(m)
    if objective == RANDOMIZED:
        return variance_randomized(m)
    return variance_g1(m, b)


def solve_alpha(problem, objective=CASE1, beta=None, cfg=DEFAULT_SOLVER, start=None, quad_cfg=DEFAULT_QUADRATURE):
    """
    Minimize the chosen variance over alpha on the simplex.

    Spectral projected gradient: Barzilai-Borwein step lengths, monotone
    Armijo backtracking along the projected direction, central finite
    differences of the objective on a fixed quadrature rule. Convergence is
    declared on the stationarity residual, confirmed on a rule rebuilt at
    the final point.
    """
    n = problem.n
    if n < 2:
        raise ValidationError("solve_alpha needs at least two techniques")
    b = _resolve(objective, beta, n)
    cfg.check(n)
    floor = cfg.simplex_floor

    start = SimplexVector.uniform(n) if start is None else start
    x = project_to_simplex(start.as_array(), floor)
    logger.info(f"Solving {objective} for {problem.label or 'problem'} from alpha={np.round(x, 6).tolist()}")

    tab = MixtureTabulation.build(problem, SimplexVector.normalize(x), quad_cfg, cross=True)
    value = _objective(tab, objective, x, b)
    grad = _fd_gradient(tab, objective, x, b)
    step = cfg.step_init
    history = [value]
    rebuilds = 0
    converged = False
    iterations = 0
    residual = None

    while iterations < cfg.max_iters:
        residual = _stationarity(tab, objective, x, b, floor)
        if residual.norm <= cfg.grad_tol:
            fresh = MixtureTabulation.build(problem, SimplexVector.normalize(x), quad_cfg, cross=True)
            residual = _stationarity(fresh, objective, x, b, floor)
            if residual.norm <= cfg.grad_tol:
                converged = True
                break
            if rebuilds >= MAX_REBUILDS:
                break
            rebuilds += 1
            logger.debug(f"Rebuilding the quadrature rule at iteration {iterations}")
            tab = fresh
            value = _objective(tab, objective, x, b)
            grad = _fd_gradient(tab, objective, x, b)
            continue

        iterations += 1
        direction = project_to_simplex(x - step * grad, floor) - x
        slope = float(grad @ direction)
        if slope >= 0:
            logger.debug(f"No descent direction at iteration {iterations}")
            break

        shrink = 1.0
        while True:
            trial = x + shrink * direction
            trial_value = _objective(tab, objective, trial, b)
            if trial_value <= value + ARMIJO * shrink * slope:
                break
            shrink *= 0.5
            if shrink < MIN_SHRINK:
                break
        if shrink < MIN_SHRINK:
            logger.debug(f"Line search stalled at iteration {iterations}")
            break

        new_grad = _fd_gradient(tab, objective, trial, b)
        s = trial - x
        sy = float(s @ (new_grad - grad))
        step = float(np.clip(s @ s / sy, *STEP_BOUNDS)) if sy > 0 else STEP_BOUNDS[1]
        x, value, grad = trial, trial_value, new_grad
        history.append(value)

    alpha = SimplexVector.normalize(x)
    if not converged:
        residual = _residual_at(problem, objective, alpha, beta if objective == CASE3 else None, quad_cfg, floor)
        converged = residual.norm <= cfg.grad_tol

    at_floor = bool(np.any(x <= floor * (1.0 + 1e-9)))
    if at_floor:
        pinned = [problem.techniques[i].label or str(i) for i in np.nonzero(x <= floor * (1.0 + 1e-9))[0]]
        logger.warning(f"Solver stopped at the simplex floor for techniques {pinned}")

    result = SolverResult(
        alpha=alpha,
        objective=value,
        residual=residual,
        iterations=iterations,
        converged=converged,
        at_floor=at_floor,
        history=tuple(history),
    )
    if not converged:
        raise DidNotConverge(
            f"{objective} solver stopped after {iterations} iterations with residual {residual.norm:.3g} "
            f"> grad_tol={cfg.grad_tol}",
            result,
        )
    logger.info(f"Solver converged after {iterations} iterations, alpha={tuple(round(a, 6) for a in alpha)}")
    return result


# --- Likelihood dominance ---

class Dominance(enum.Flag):
    INCONCLUSIVE = 0
    F_GEQ_G = enum.auto()
    F_LEQ_G = enum.auto()


def dominance_compare(alpha, sigma_prime_sq):
    """
    Order V[F^1] = sum a_i against V[G^1] = n sum alpha_i a_i at beta = 1/n,
    where a_i = alpha_i sigma'_i^2.

    If alpha never increases as a increases, the sequences are oppositely
    ordered and V[F^1] >= V[G^1]; if alpha never decreases, V[F^1] <= V[G^1].
    Pairs with tied a impose no order. Both flags set means equality.
    """
    al = np.asarray(alpha.coeffs if isinstance(alpha, SimplexVector) else alpha, dtype=float)
    s = np.asarray(sigma_prime_sq, dtype=float)
    if al.shape != s.shape:
        raise ValidationError(f"alpha and sigma'^2 differ in length: {al.size} vs {s.size}")
    a = al * s
    scale = np.maximum(np.abs(a[:, None]), np.abs(a[None, :]))
    below = (a[None, :] - a[:, None]) > TIE_TOL * scale  # below[i, j]: a_i < a_j
    grows = al[None, :] > al[:, None]
    shrinks = al[None, :] < al[:, None]

    verdict = Dominance.INCONCLUSIVE
    if not np.any(below & grows):
        verdict |= Dominance.F_GEQ_G
    if not np.any(below & shrinks):
        verdict |= Dominance.F_LEQ_G
    return verdict
