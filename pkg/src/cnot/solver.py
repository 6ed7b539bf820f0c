"""Equilibrium computation in quantile coordinates.

The objective

    J(G) = (1/m) sum C(H_j - G_j) + congestion(G) + (1/m) sum v(G_j)
           + (1/(2 m^2)) sum_jk phi(G_j, G_k)

is minimized over non-decreasing ``G`` taking values in the action interval
(``H`` is the quantile of the fixed source measure ``mu``).  The congestion
term is the exact pushforward integral

    sum_j g_j F(1 / s_j),   g_j = G_{j+1} - G_j,   s_j = (m-1) g_j,

which reduces to ``-(1/(m-1)) sum log((m-1) g_j)`` (+ a bookkeeping constant)
for logarithmic congestion.  A second, independent route to the same
equilibria is the damped best-response iteration, which inverts the
first-order condition ``f(nu) = M - phi^c - interaction - v`` pointwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import brentq, isotonic_regression

from .energy import EnergyModel
from .measures import (
    SUPPORT_MODES,
    DiscreteDensity,
    Grid,
    QuantileFn,
    density_to_quantile,
    quantile_to_density,
)
from .transport import CostSpec, kantorovich_potential_1d

__all__ = [
    "Scenario",
    "SolverParams",
    "EquilibriumResult",
    "objective_eval",
    "objective_gradient",
    "project_monotone",
    "minimize_quantile",
    "best_response_iterate",
]


@dataclass(frozen=True)
class Scenario:
    """A complete equilibrium problem: source measure, cost, energy, resolution."""

    mu: DiscreteDensity
    cost: CostSpec
    model: EnergyModel
    m: int = 2048
    support_mode: str = "free"

    def __post_init__(self) -> None:
        if self.mu.grid != self.model.grid:
            raise ValueError("scenario source measure and energy model must share a grid")
        if self.m < 2:
            raise ValueError("quantile resolution m must be >= 2")
        if self.support_mode not in SUPPORT_MODES:
            raise ValueError(f"unknown support_mode {self.support_mode!r}")
        if np.any(self.mu.values <= 0.0):
            raise ValueError("source measure must be strictly positive on the grid")

    @property
    def grid(self) -> Grid:
        return self.model.grid

    @property
    def interval(self):
        return self.model.grid.interval

    @property
    def n(self) -> int:
        return self.model.grid.n


@dataclass(frozen=True)
class SolverParams:
    """Projected-Newton parameters (Armijo backtracking line search)."""

    max_iters: int = 5000
    grad_tol: float = 1e-6
    step0: float = 1.0
    beta: float = 0.5
    sigma: float = 1e-4
    monotone_projection: bool = True

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.grad_tol <= 0 or self.step0 <= 0:
            raise ValueError("solver parameters must be positive")
        if not (0.0 < self.beta < 1.0 and 0.0 < self.sigma < 1.0):
            raise ValueError("beta and sigma must lie in (0, 1)")


@dataclass(frozen=True)
class EquilibriumResult:
    """Solver output: the equilibrium measure with its certificate numbers."""

    nu: DiscreteDensity
    G: QuantileFn
    J_value: float
    M: float
    residual_sup: float
    residual_eq: float
    iterations: int
    converged: bool
    metadata: dict = field(default_factory=dict)


def _quantile_values(G) -> np.ndarray:
    values = G.values if isinstance(G, QuantileFn) else np.asarray(G, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("quantile needs at least m >= 2 values")
    return np.ascontiguousarray(values, dtype=float)


def _interaction_value(kernel, G: np.ndarray) -> float:
    m = G.size
    if kernel.kind == "quadratic_distance":
        s1 = G.sum()
        return float(kernel.kappa * (m * np.dot(G, G) - s1 * s1) / (m * m))
    if kernel.kind == "product":
        s1 = G.sum()
        return float(kernel.kappa * s1 * s1 / (2.0 * m * m))
    if kernel.kind == "cubic_distance":
        # G is sorted, so |G_j - G_k|^3 expands through exclusive prefix
        # sums; centering first keeps the cancelling cubes small
        Gc = G - G.mean()
        q1 = np.concatenate([[0.0], np.cumsum(Gc)])[:-1]
        q2 = np.concatenate([[0.0], np.cumsum(Gc * Gc)])[:-1]
        q3 = np.concatenate([[0.0], np.cumsum(Gc * Gc * Gc)])[:-1]
        j = np.arange(m)
        total = np.sum(j * Gc**3 - 3.0 * Gc * Gc * q1 + 3.0 * Gc * q2 - q3)
        return float(kernel.kappa * total / (m * m))
    total = 0.0
    chunk = max(1, int(4e6 // max(m, 1)))
    for s in range(0, m, chunk):
        total += float(np.sum(kernel.phi(G[s : s + chunk, None], G[None, :])))
    return total / (2.0 * m * m)


def _interaction_gradient(kernel, G: np.ndarray) -> np.ndarray:
    m = G.size
    if kernel.kind == "quadratic_distance":
        return 2.0 * kernel.kappa * (m * G - G.sum()) / (m * m)
    if kernel.kind == "product":
        return np.full(m, kernel.kappa * G.sum() / (m * m))
    if kernel.kind == "cubic_distance":
        Gc = G - G.mean()
        q1 = np.concatenate([[0.0], np.cumsum(Gc)])[:-1]
        q2 = np.concatenate([[0.0], np.cumsum(Gc * Gc)])[:-1]
        r1 = Gc.sum() - q1 - Gc
        r2 = np.dot(Gc, Gc) - q2 - Gc * Gc
        j = np.arange(m)
        left = j * Gc * Gc - 2.0 * Gc * q1 + q2
        right = (m - 1 - j) * Gc * Gc - 2.0 * Gc * r1 + r2
        return 3.0 * kernel.kappa * (left - right) / (m * m)
    out = np.empty(m)
    chunk = max(1, int(4e6 // max(m, 1)))
    for s in range(0, m, chunk):
        out[s : s + chunk] = np.sum(
            kernel.dphi_dy(G[s : s + chunk, None], G[None, :]), axis=1
        )
    return out / (m * m)


class _QuantileProblem:
    """Cached pieces of the objective for one scenario (plus optional proximal
    anchor ``(values, tau)`` contributing ``(1/(2 tau m)) sum (G - anchor)^2``)."""

    def __init__(self, scenario: Scenario, prox: Optional[tuple[np.ndarray, float]] = None):
        self.scenario = scenario
        self.m = scenario.m
        self.H = density_to_quantile(scenario.mu, scenario.m).values
        self.cost = scenario.cost
        self.model = scenario.model
        if prox is not None:
            anchor, tau = prox
            anchor = np.ascontiguousarray(anchor, dtype=float)
            if anchor.shape != (self.m,) or tau <= 0:
                raise ValueError("proximal anchor must have length m and tau > 0")
            prox = (anchor, float(tau))
        self.prox = prox

    def value(self, G: np.ndarray, barrier: bool = False) -> float:
        """Objective at ``G``; with ``barrier=True`` infeasible points give +inf."""
        gaps = np.diff(G)
        if np.any(gaps < 0.0):
            if barrier:
                return float("inf")
            raise ValueError("quantile values must be non-decreasing")
        m = self.m
        val = float(np.sum(self.cost.C(self.H - G)) / m)
        if np.any(gaps == 0.0):
            return float("inf")
        with np.errstate(over="ignore", divide="ignore"):
            u = 1.0 / ((m - 1) * gaps)
            val += float(np.sum(gaps * np.asarray(self.model.congestion.F(u), dtype=float)))
        if self.model.potential is not None:
            val += float(np.sum(self.model.potential.v(G)) / m)
        if self.model.kernel is not None:
            val += _interaction_value(self.model.kernel, G)
        if self.prox is not None:
            anchor, tau = self.prox
            val += float(np.sum((G - anchor) ** 2) / (2.0 * tau * m))
        if np.isnan(val):
            raise ValueError("objective produced NaN")
        return val

    def gradient(self, G: np.ndarray) -> np.ndarray:
        gaps = np.diff(G)
        if np.any(gaps <= 0.0):
            raise ValueError("gradient requires strictly increasing quantile values")
        m = self.m
        grad = -np.asarray(self.cost.C_prime(self.H - G), dtype=float) / m
        with np.errstate(over="ignore"):
            u = 1.0 / ((m - 1) * gaps)
            psi = np.asarray(self.model.congestion.F(u), dtype=float) - u * np.asarray(
                self.model.congestion.F_prime(u), dtype=float
            )
        grad[1:] += psi
        grad[:-1] -= psi
        if self.model.potential is not None:
            grad += np.asarray(self.model.potential.v_prime(G), dtype=float) / m
        if self.model.kernel is not None:
            grad += _interaction_gradient(self.model.kernel, G)
        if self.prox is not None:
            anchor, tau = self.prox
            grad += (G - anchor) / (tau * m)
        return grad

    def curvature(self, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positive-definite tridiagonal surrogate of the objective Hessian.

        Returns ``(diag, sub)`` with the subdiagonal in ``sub[:-1]``.  The
        congestion term is exactly tridiagonal in the quantile values; the
        separable cost/potential terms contribute their second derivatives
        (clipped to be non-negative) on the diagonal; interaction kernels
        keep only their diagonal part.  Entries are clipped to a positive
        range that keeps the banded Cholesky factorization finite — the
        line search absorbs any remaining model error.
        """
        m = self.m
        gaps = np.diff(G)
        with np.errstate(over="ignore", divide="ignore"):
            u = 1.0 / ((m - 1) * gaps)
            psi2 = (m - 1) * u**3 * np.asarray(self.model.congestion.f_prime(u), dtype=float)
        psi2 = np.where(np.isfinite(psi2), np.clip(psi2, 0.0, _CURV_MAX), _CURV_MAX)
        z = self.H - G
        h = 1e-6 * (1.0 + np.abs(z))
        c2 = (
            np.asarray(self.cost.C_prime(z + h), dtype=float)
            - np.asarray(self.cost.C_prime(z - h), dtype=float)
        ) / (2.0 * h)
        diag = np.clip(c2, 0.0, None) / m
        if self.model.potential is not None:
            h = 1e-6 * (1.0 + np.abs(G))
            v2 = (
                np.asarray(self.model.potential.v_prime(G + h), dtype=float)
                - np.asarray(self.model.potential.v_prime(G - h), dtype=float)
            ) / (2.0 * h)
            diag += np.clip(v2, 0.0, None) / m
        kernel = self.model.kernel
        if kernel is not None and kernel.kappa > 0.0:
            if kernel.kind == "quadratic_distance":
                diag += 2.0 * kernel.kappa * (m - 1) / (m * m)
            elif kernel.kind == "product":
                diag += kernel.kappa / (m * m)
            elif kernel.kind == "cubic_distance":
                Gc = G - G.mean()
                q1 = np.concatenate([[0.0], np.cumsum(Gc)])[:-1]
                r1 = Gc.sum() - q1 - Gc
                j = np.arange(m)
                absdist = (2.0 * j - m + 1.0) * Gc - q1 + r1
                diag += 6.0 * kernel.kappa * np.clip(absdist, 0.0, None) / (m * m)
        diag[:-1] += psi2
        diag[1:] += psi2
        if self.prox is not None:
            diag += 1.0 / (self.prox[1] * m)
        return np.clip(diag, _CURV_MIN / m, _CURV_MAX), -psi2


def objective_eval(scenario: Scenario, G) -> float:
    """Discretized ``J`` at a quantile function (see module docstring)."""
    return _QuantileProblem(scenario).value(_quantile_values(G))


def objective_gradient(scenario: Scenario, G) -> np.ndarray:
    """Exact gradient of ``objective_eval`` in the quantile values."""
    return _QuantileProblem(scenario).gradient(_quantile_values(G))


def _isotonic(y: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Projection onto non-decreasing vectors (weighted pool-adjacent-violators)."""
    return isotonic_regression(y, weights=weights).x


def project_monotone(G_raw, interval, support_mode: str = "free") -> QuantileFn:
    """Nearest non-decreasing vector (pool-adjacent-violators), clipped to the
    interval; ``fixed_endpoints`` additionally pins the first/last values."""
    y = np.ascontiguousarray(np.asarray(G_raw, dtype=float))
    if y.ndim != 1 or y.size < 2:
        raise ValueError("quantile needs at least m >= 2 values")
    if not np.all(np.isfinite(y)):
        raise ValueError("quantile values must be finite")
    if support_mode not in SUPPORT_MODES:
        raise ValueError(f"unknown support_mode {support_mode!r}")
    v = np.clip(_isotonic(y), interval.lo, interval.hi)
    if support_mode == "fixed_endpoints":
        v[0] = interval.lo
        v[-1] = interval.hi
    return QuantileFn(v, interval, support_mode=support_mode)


def _project_values(
    y: np.ndarray,
    scenario: Scenario,
    monotone: bool,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    iv = scenario.interval
    v = np.clip(_isotonic(y, weights) if monotone else y, iv.lo, iv.hi)
    if scenario.support_mode == "fixed_endpoints":
        v = v.copy() if v is y else v
        v[0] = iv.lo
        v[-1] = iv.hi
    return v


_MAX_BACKTRACKS = 60
_CURV_MAX = 1e30
_CURV_MIN = 1e-10
_EDGE_TOL = 1e-12


def _newton_direction(
    G: np.ndarray,
    grad: np.ndarray,
    diag: np.ndarray,
    sub: np.ndarray,
    scenario: Scenario,
) -> np.ndarray:
    """Solve the tridiagonal model system for a descent direction.

    Coordinates pressed against the box (or pinned endpoints) are frozen out
    of the system and given diagonally scaled components instead; if the
    banded solve fails or the result is not a descent direction, fall back
    to the diagonally preconditioned gradient.
    """
    iv = scenario.interval
    active = ((G <= iv.lo + _EDGE_TOL) & (grad > 0.0)) | (
        (G >= iv.hi - _EDGE_TOL) & (grad < 0.0)
    )
    if scenario.support_mode == "fixed_endpoints":
        active[0] = True
        active[-1] = True
    sub_masked = sub.copy()
    sub_masked[active[:-1] | active[1:]] = 0.0
    ab = np.zeros((2, G.size))
    ab[0] = diag
    ab[1, :-1] = sub_masked
    try:
        d = solveh_banded(ab, grad, lower=True)
    except np.linalg.LinAlgError:
        return grad / diag
    if active.any():
        d[active] = grad[active] / diag[active]
    if not np.all(np.isfinite(d)) or float(np.dot(d, grad)) <= 0.0:
        return grad / diag
    return d


def minimize_quantile(
    scenario: Scenario,
    params: Optional[SolverParams] = None,
    G0: Optional[QuantileFn] = None,
    prox: Optional[tuple[np.ndarray, float]] = None,
) -> EquilibriumResult:
    """Projected Newton descent on the quantile objective.

    Starts from the source quantile unless ``G0`` is given.  Each iteration
    solves the tridiagonal curvature model of the objective (the congestion
    Hessian is exactly tridiagonal in quantile coordinates, and it carries
    essentially all of the stiffness) for a Newton direction, then projects
    trial points onto the monotone cone in the diagonal curvature metric
    (plus the box and pinned endpoints) and accepts them under the Armijo
    rule ``J(cand) <= J + sigma * <grad, cand - G>``, backtracking from a
    trial step of ``step0``.  Stops when the unit-step projected-gradient
    sup-norm falls below ``grad_tol``.  ``prox`` adds a proximal anchor
    (see ``_QuantileProblem``) for minimizing-movement use.

    Non-convergence is reported through ``converged=False``, not an error.
    """
    params = params or SolverParams()
    problem = _QuantileProblem(scenario, prox=prox)
    if G0 is not None:
        G = _project_values(_quantile_values(G0).copy(), scenario, True)
        if G.size != scenario.m:
            raise ValueError("G0 must have the scenario's quantile resolution m")
    else:
        G = _project_values(problem.H.copy(), scenario, True)
    J = problem.value(G)
    if not np.isfinite(J):
        raise ValueError("initial quantile has non-positive gaps (infinite objective)")

    iterations = 0
    converged = False
    stalled = False
    pg_norm = float("inf")
    grad = problem.gradient(G)
    if not np.all(np.isfinite(grad)):
        raise RuntimeError("objective gradient overflowed; refine the resolution")
    for iterations in range(1, params.max_iters + 1):
        pg_norm = float(
            np.max(np.abs(G - _project_values(G - grad, scenario, params.monotone_projection)))
        )
        if pg_norm <= params.grad_tol:
            converged = True
            break
        diag, sub = problem.curvature(G)
        d = _newton_direction(G, grad, diag, sub, scenario)
        accepted = False
        # the Newton direction is not guaranteed to survive the projection as
        # a descent direction (the projection metric is only the diagonal of
        # the model); if the whole backtracking sweep rejects it, retry with
        # the diagonally preconditioned gradient, which always descends
        for d in (d, grad / diag):
            step = params.step0
            for _ in range(_MAX_BACKTRACKS):
                cand = _project_values(G - step * d, scenario, params.monotone_projection, diag)
                direction = cand - G
                decrease = float(np.dot(grad, direction))
                J_cand = problem.value(cand, barrier=True)
                if decrease <= 0.0 and J_cand <= J + params.sigma * decrease:
                    accepted = True
                    break
                step *= params.beta
            if accepted:
                break
        if not accepted or np.max(np.abs(direction)) <= 1e-16 * (1.0 + np.max(np.abs(G))):
            stalled = True
            break
        grad = problem.gradient(cand)
        if not np.all(np.isfinite(grad)):
            raise RuntimeError("objective gradient overflowed; refine the resolution")
        G, J = cand, J_cand

    quantile = QuantileFn(G, scenario.interval, support_mode=scenario.support_mode)
    nu = quantile_to_density(quantile, scenario.grid)
    from .verify import equilibrium_residual

    report = equilibrium_residual(scenario, nu)
    metadata = {
        "congestion_kind": scenario.model.congestion.kind,
        "congestion_convention": scenario.model.congestion.convention,
        "support_mode": scenario.support_mode,
        "m": scenario.m,
        "n": scenario.n,
        "grad_tol": params.grad_tol,
        "projected_gradient": pg_norm,
        "stalled": stalled,
        "proximal": prox is not None,
        "seed": None,
    }
    return EquilibriumResult(
        nu=nu,
        G=quantile,
        J_value=float(J),
        M=report.M,
        residual_sup=report.residual_sup,
        residual_eq=report.residual_eq,
        iterations=iterations,
        converged=converged,
        metadata=metadata,
    )


def _solve_mass_equation(model: EnergyModel, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Find ``M`` with ``integral f_inv(M - w) = 1``; return it with the density."""
    delta = model.grid.delta
    f_inv = model.congestion.f_inv

    def response(M: float) -> np.ndarray:
        # clip to the positive part (idle actions) and to a finite ceiling so
        # the bracketing phase stays finite even when f_inv overflows
        with np.errstate(over="ignore"):
            return np.clip(np.asarray(f_inv(M - w), dtype=float), 0.0, 1e300)

    def excess(M: float) -> float:
        return float(delta * np.sum(response(M)) - 1.0)

    center = float(np.median(w))
    radius = 1.0 + float(np.max(w) - np.min(w))
    lo, hi = center - radius, center + radius
    for _ in range(80):
        if excess(lo) < 0.0:
            break
        radius *= 2.0
        lo = center - radius
    else:
        raise ValueError(f"mass equation unsolvable (M bracket [{lo!r}, {hi!r}])")
    radius = 1.0 + float(np.max(w) - np.min(w))
    for _ in range(80):
        if excess(hi) > 0.0:
            break
        radius *= 2.0
        hi = center + radius
    else:
        raise ValueError(f"mass equation unsolvable (M bracket [{lo!r}, {hi!r}])")
    M = float(brentq(excess, lo, hi, xtol=1e-13, maxiter=200))
    return M, response(M)


def best_response_iterate(
    scenario: Scenario,
    nu0: DiscreteDensity,
    damping: float = 0.5,
    steps: int = 20,
) -> DiscreteDensity:
    """Damped best-response fixed-point iteration.

    Each round computes the Kantorovich potential of the current measure,
    inverts the pointwise optimality relation
    ``nu = f_inv(M - phi_c - interaction - v)`` with ``M`` chosen by
    bisection so the mass is one, and mixes ``(1 - damping) nu_k +
    damping BR(nu_k)``.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if nu0.grid != scenario.grid:
        raise ValueError("initial measure must live on the scenario grid")
    model = scenario.model
    nu = nu0
    for _ in range(steps):
        pair = kantorovich_potential_1d(scenario.mu, nu, scenario.cost)
        w = pair.phi_c + model.interaction_field(nu) + model.potential_values()
        _, br = _solve_mass_equation(model, w)
        br = br / (br.sum() * scenario.grid.delta)
        nu = DiscreteDensity(scenario.grid, (1.0 - damping) * nu.values + damping * br)
    return nu
