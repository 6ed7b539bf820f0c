"""Energy functionals: congestion, external potential, pairwise interaction.

The energy of a density ``nu`` is

    E[nu] = integral F(nu) + integral v dnu + 1/2 double-integral phi dnu dnu

with ``F' = f`` (up to an additive constant for the plain-entropy bookkeeping
convention, which changes nothing at first order against mass-preserving
perturbations).  Its first variation is

    V[nu](y) = f(nu(y)) + v(y) + integral phi(y, z) dnu(z).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .measures import DiscreteDensity, Grid, Interval

__all__ = [
    "CongestionSpec",
    "InteractionKernel",
    "PotentialSpec",
    "EnergyModel",
    "energy_eval",
    "first_variation",
    "marginal_externality",
    "mccann_check",
]

_PROBE_S = np.logspace(-2.0, 2.0, 81)


def _entropy_F_shifted(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0.0, s * np.log(np.where(s > 0.0, s, 1.0)) - s, 0.0)
    return out


def _entropy_F_plain(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0.0, s * np.log(np.where(s > 0.0, s, 1.0)), 0.0)
    return out


def _log(s: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class CongestionSpec:
    """Congestion cost ``f`` with antiderivative ``F`` and inverse.

    ``F_prime`` may differ from ``f`` by a constant only (bookkeeping
    conventions); the constructor probes monotonicity of ``f`` and the
    ``F' = f + const`` relation by finite differences.
    """

    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    f_inv: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    F_prime: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    convention: Optional[str] = None
    params: dict = field(default_factory=dict)
    satisfies_inada: bool = False
    satisfies_growth: bool = False
    satisfies_mccann: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        fv = np.asarray(self.f(_PROBE_S), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError("congestion f must be finite on (0, inf)")
        if np.any(np.diff(fv) <= 0.0):
            raise ValueError("congestion f must be strictly increasing")
        # F' = f up to an additive constant, by central differences
        h = 1e-6 * _PROBE_S
        fd = (np.asarray(self.F(_PROBE_S + h), dtype=float)
              - np.asarray(self.F(_PROBE_S - h), dtype=float)) / (2.0 * h)
        dev = fd - fv
        if np.max(np.abs(dev - dev.mean())) > 1e-6 * (1.0 + np.max(np.abs(fv))):
            raise ValueError("congestion F' must equal f up to a constant")
        # round-trip of the inverse on the probe range
        rt = np.asarray(self.f_inv(fv), dtype=float)
        if np.max(np.abs(rt - _PROBE_S) / _PROBE_S) > 1e-8:
            raise ValueError("congestion f_inv must invert f")
        object.__setattr__(self, "satisfies_mccann", mccann_check(self))

    @staticmethod
    def entropy(convention: str = "shifted") -> "CongestionSpec":
        """Logarithmic congestion ``f(s) = log s``.

        ``convention`` selects the antiderivative bookkeeping:
        ``"shifted"`` uses ``F(s) = s log s - s`` (so ``F' = f``),
        ``"plain"`` uses ``F(s) = s log s`` (so ``F' = f + 1``).
        """
        if convention not in ("shifted", "plain"):
            raise ValueError("entropy convention must be 'shifted' or 'plain'")
        shifted = convention == "shifted"
        return CongestionSpec(
            f=_log,
            F=_entropy_F_shifted if shifted else _entropy_F_plain,
            f_inv=np.exp,
            f_prime=lambda s: 1.0 / np.asarray(s, dtype=float),
            F_prime=_log if shifted else (lambda s: 1.0 + _log(s)),
            kind="entropy",
            convention=convention,
            satisfies_inada=True,
            satisfies_growth=False,
        )

    @staticmethod
    def power(alpha: float, a: float = 1.0) -> "CongestionSpec":
        """Power congestion ``f(s) = a s^alpha`` with ``alpha, a > 0``.

        The inverse uses the positive part, ``f_inv(t) = (t/a)_+^(1/alpha)``,
        so best responses may vanish on part of the domain.
        """
        if alpha <= 0 or a <= 0:
            raise ValueError("power congestion needs alpha > 0 and a > 0")

        def f(s: np.ndarray) -> np.ndarray:
            return a * np.asarray(s, dtype=float) ** alpha

        def F(s: np.ndarray) -> np.ndarray:
            return a * np.asarray(s, dtype=float) ** (alpha + 1.0) / (alpha + 1.0)

        def f_inv(t: np.ndarray) -> np.ndarray:
            return np.clip(np.asarray(t, dtype=float) / a, 0.0, None) ** (1.0 / alpha)

        def f_prime(s: np.ndarray) -> np.ndarray:
            return a * alpha * np.asarray(s, dtype=float) ** (alpha - 1.0)

        return CongestionSpec(
            f=f, F=F, f_inv=f_inv, f_prime=f_prime, F_prime=f,
            kind="power", params={"alpha": alpha, "a": a},
            satisfies_inada=False, satisfies_growth=True,
        )

    @staticmethod
    def custom(
        f: Callable[[np.ndarray], np.ndarray],
        F: Callable[[np.ndarray], np.ndarray],
        f_inv: Callable[[np.ndarray], np.ndarray],
        f_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        F_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        satisfies_inada: Optional[bool] = None,
        satisfies_growth: bool = False,
    ) -> "CongestionSpec":
        if f_prime is None:
            def f_prime(s, _f=f):  # type: ignore[misc]
                s = np.asarray(s, dtype=float)
                h = 1e-7 * (1.0 + np.abs(s))
                return (_f(s + h) - _f(s - h)) / (2.0 * h)
        if satisfies_inada is None:
            probe_lo = float(np.asarray(f(np.array([1e-12])), dtype=float)[0])
            probe_hi = float(np.asarray(f(np.array([1e12])), dtype=float)[0])
            satisfies_inada = probe_lo < -20.0 and probe_hi > 20.0
        return CongestionSpec(
            f=f, F=F, f_inv=f_inv, f_prime=f_prime, F_prime=F_prime or f,
            kind="custom", satisfies_inada=bool(satisfies_inada),
            satisfies_growth=satisfies_growth,
        )

    def marginal_externality(self, s: np.ndarray) -> np.ndarray:
        """``s f'(s)`` with its continuous limit at ``s = 0``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "entropy":
            return np.ones_like(s)
        if self.kind == "power":
            a, alpha = self.params["a"], self.params["alpha"]
            return a * alpha * s ** alpha
        tiny = 1e-12
        limit = float(tiny * np.asarray(self.f_prime(np.array([tiny])), dtype=float)[0])
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = np.where(s > 0.0, s * np.asarray(self.f_prime(np.where(s > 0, s, 1.0))), limit)
        return out


def marginal_externality(congestion: CongestionSpec, s: np.ndarray) -> np.ndarray:
    """``s f'(s)``, the external part of the marginal congestion cost."""
    return congestion.marginal_externality(s)


def mccann_check(congestion_or_F, dimension: int = 1) -> bool:
    """Probe displacement convexity: ``g(s) = s^d F(s^{-d})`` must be convex
    and non-increasing on a log-spaced grid (tolerance 1e-9)."""
    F = congestion_or_F.F if isinstance(congestion_or_F, CongestionSpec) else congestion_or_F
    d = float(dimension)
    s = _PROBE_S
    g = s**d * np.asarray(F(s ** (-d)), dtype=float)
    if not np.all(np.isfinite(g)):
        return False
    slopes = np.diff(g) / np.diff(s)
    convex = bool(np.all(np.diff(slopes) >= -1e-9))
    nonincreasing = bool(np.all(np.diff(g) <= 1e-9))
    return convex and nonincreasing


def _fd_partial(phi: Callable) -> Callable:
    def dphi(y: np.ndarray, z: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        h = 1e-7 * (1.0 + np.abs(y))
        return (phi(y + h, z) - phi(y - h, z)) / (2.0 * h)

    return dphi


@dataclass(frozen=True)
class InteractionKernel:
    """Symmetric pairwise interaction ``phi(y, z)``.

    Symmetry is probed at construction and non-symmetric kernels are
    rejected.  If ``declared_convex`` is set, joint midpoint convexity is
    probed on random segments of ``probe_interval ** 2`` and a failing
    probe is rejected as well.
    """

    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dphi_dy: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kind: str = "custom"
    kappa: float = 1.0
    declared_convex: bool = False
    declared_symmetric: bool = True
    probe_interval: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        self.validate_on(Interval(*self.probe_interval), hard=True)

    def validate_on(self, interval: Interval, hard: bool = True) -> None:
        rng = np.random.default_rng(1234)
        y = rng.uniform(interval.lo, interval.hi, size=64)
        z = rng.uniform(interval.lo, interval.hi, size=64)
        a = np.asarray(self.phi(y, z), dtype=float)
        b = np.asarray(self.phi(z, y), dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError("interaction kernel must be finite on the domain")
        scale = 1.0 + np.max(np.abs(a))
        if np.max(np.abs(a - b)) > 1e-12 * scale:
            raise ValueError("interaction kernel must be symmetric")
        if self.declared_convex:
            p = rng.uniform(interval.lo, interval.hi, size=(64, 2))
            q = rng.uniform(interval.lo, interval.hi, size=(64, 2))
            mid = 0.5 * (p + q)
            lhs = np.asarray(self.phi(mid[:, 0], mid[:, 1]), dtype=float)
            rhs = 0.5 * (
                np.asarray(self.phi(p[:, 0], p[:, 1]), dtype=float)
                + np.asarray(self.phi(q[:, 0], q[:, 1]), dtype=float)
            )
            if np.max(lhs - rhs) > 1e-9 * scale:
                message = "interaction kernel declared convex fails the midpoint probe"
                if hard:
                    raise ValueError(message)
                warnings.warn(message, stacklevel=2)

    @staticmethod
    def quadratic_distance(kappa: float, probe_interval=(0.0, 1.0)) -> "InteractionKernel":
        """``phi(y, z) = kappa |y - z|^2`` (jointly convex for kappa >= 0)."""
        return InteractionKernel(
            phi=lambda y, z: kappa * np.square(np.asarray(y) - np.asarray(z)),
            dphi_dy=lambda y, z: 2.0 * kappa * (np.asarray(y) - np.asarray(z)),
            kind="quadratic_distance", kappa=kappa,
            declared_convex=kappa >= 0.0, probe_interval=tuple(probe_interval),
        )

    @staticmethod
    def cubic_distance(kappa: float, probe_interval=(0.0, 1.0)) -> "InteractionKernel":
        """``phi(y, z) = kappa |y - z|^3`` (jointly convex for kappa >= 0)."""
        return InteractionKernel(
            phi=lambda y, z: kappa * np.abs(np.asarray(y) - np.asarray(z)) ** 3,
            dphi_dy=lambda y, z: 3.0 * kappa
            * np.abs(np.asarray(y) - np.asarray(z)) * (np.asarray(y) - np.asarray(z)),
            kind="cubic_distance", kappa=kappa,
            declared_convex=kappa >= 0.0, probe_interval=tuple(probe_interval),
        )

    @staticmethod
    def product(kappa: float, probe_interval=(0.0, 1.0)) -> "InteractionKernel":
        """``phi(y, z) = kappa * y * z`` (symmetric, indefinite: never declared convex)."""
        return InteractionKernel(
            phi=lambda y, z: kappa * np.asarray(y) * np.asarray(z),
            dphi_dy=lambda y, z: kappa * np.asarray(z) * np.ones_like(np.asarray(y, dtype=float)),
            kind="product", kappa=kappa,
            declared_convex=False, probe_interval=tuple(probe_interval),
        )

    @staticmethod
    def custom(
        phi: Callable[[np.ndarray, np.ndarray], np.ndarray],
        dphi_dy: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        declared_convex: bool = False,
        probe_interval=(0.0, 1.0),
    ) -> "InteractionKernel":
        return InteractionKernel(
            phi=phi, dphi_dy=dphi_dy or _fd_partial(phi), kind="custom",
            declared_convex=declared_convex, probe_interval=tuple(probe_interval),
        )


@dataclass(frozen=True)
class PotentialSpec:
    """External potential ``v`` with derivative.

    A declared-convexity probe failure warns instead of raising so that
    borderline configurations remain loadable (the flag is then cleared by
    the caller's own probes where it matters).
    """

    v: Callable[[np.ndarray], np.ndarray]
    v_prime: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    declared_convex: bool = False
    probe_interval: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        self.validate_on(Interval(*self.probe_interval))

    def validate_on(self, interval: Interval) -> None:
        t = np.linspace(interval.lo, interval.hi, 101)
        vals = np.asarray(self.v(t), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential must be finite on the interval")
        if self.declared_convex:
            second = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
            if np.min(second) < -1e-9 * (1.0 + np.max(np.abs(vals))):
                warnings.warn(
                    "potential declared convex fails its convexity probe on the interval",
                    stacklevel=2,
                )

    @staticmethod
    def poly(coeffs, declared_convex: bool = False, probe_interval=(0.0, 1.0)) -> "PotentialSpec":
        """Polynomial ``v(x) = sum coeffs[k] x^k`` with analytic derivative."""
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("poly potential needs a non-empty coefficient vector")
        dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
        return PotentialSpec(
            v=lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), c),
            v_prime=lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), dc),
            kind="poly", params={"coeffs": tuple(float(t) for t in c)},
            declared_convex=declared_convex, probe_interval=tuple(probe_interval),
        )

    @staticmethod
    def custom(
        v: Callable[[np.ndarray], np.ndarray],
        v_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        declared_convex: bool = False,
        probe_interval=(0.0, 1.0),
    ) -> "PotentialSpec":
        if v_prime is None:
            def v_prime(x, _v=v):  # type: ignore[misc]
                x = np.asarray(x, dtype=float)
                h = 1e-7 * (1.0 + np.abs(x))
                return (_v(x + h) - _v(x - h)) / (2.0 * h)
        return PotentialSpec(
            v=v, v_prime=v_prime, kind="custom",
            declared_convex=declared_convex, probe_interval=tuple(probe_interval),
        )


@dataclass(frozen=True)
class EnergyModel:
    """Congestion + optional potential + optional interaction on a grid."""

    grid: Grid
    congestion: CongestionSpec
    kernel: Optional[InteractionKernel] = None
    potential: Optional[PotentialSpec] = None

    def __post_init__(self) -> None:
        if self.kernel is not None:
            self.kernel.validate_on(self.grid.interval, hard=False)
        if self.potential is not None:
            self.potential.validate_on(self.grid.interval)

    def kernel_matrix(self) -> Optional[np.ndarray]:
        if self.kernel is None:
            return None
        y = self.grid.nodes
        return np.asarray(self.kernel.phi(y[:, None], y[None, :]), dtype=float)

    def potential_values(self) -> np.ndarray:
        y = self.grid.nodes
        if self.potential is None:
            return np.zeros_like(y)
        return np.asarray(self.potential.v(y), dtype=float)

    def interaction_field(self, nu: DiscreteDensity) -> np.ndarray:
        """``y -> integral phi(y, z) dnu(z)`` at the grid nodes.

        Structured kernels use closed-form moment expansions (prefix sums
        for the cubic kernel, which splits at ``z = y`` on the sorted
        nodes); only custom kernels materialize the dense matrix.
        """
        if self.kernel is None:
            return np.zeros(self.grid.n)
        k = self.kernel
        y = self.grid.nodes
        w = nu.masses
        if k.kind == "quadratic_distance":
            m0, m1, m2 = float(w.sum()), float(y @ w), float((y * y) @ w)
            return k.kappa * (y * y * m0 - 2.0 * y * m1 + m2)
        if k.kind == "product":
            return k.kappa * y * float(y @ w)
        if k.kind == "cubic_distance":
            yc = y - float(y.mean())
            c0, c1 = np.cumsum(w), np.cumsum(w * yc)
            c2, c3 = np.cumsum(w * yc * yc), np.cumsum(w * yc**3)
            left = yc**3 * c0 - 3.0 * yc**2 * c1 + 3.0 * yc * c2 - c3
            r0, r1, r2, r3 = c0[-1] - c0, c1[-1] - c1, c2[-1] - c2, c3[-1] - c3
            right = r3 - 3.0 * yc * r2 + 3.0 * yc**2 * r1 - yc**3 * r0
            return k.kappa * (left + right)
        K = self.kernel_matrix()
        return K @ w


def energy_eval(model: EnergyModel, nu: DiscreteDensity) -> float:
    """``E[nu]`` by midpoint quadrature on the grid (interaction halved)."""
    d = model.grid.delta
    Fv = np.asarray(model.congestion.F(nu.values), dtype=float)
    if not np.all(np.isfinite(Fv)):
        raise ValueError("energy model returned non-finite congestion values")
    total = float(d * Fv.sum())
    total += float(np.dot(model.potential_values(), nu.masses))
    if model.kernel is not None:
        total += 0.5 * float(nu.masses @ model.interaction_field(nu))
    if not np.isfinite(total):
        raise ValueError("energy model returned non-finite values")
    return total


def first_variation(model: EnergyModel, nu: DiscreteDensity) -> np.ndarray:
    """``V[nu] = f(nu) + v + integral phi(., z) dnu(z)`` at the grid nodes.

    Under Inada congestion the value is ``-inf`` on empty cells (an empty
    cell is infinitely attractive); NaN is never returned.
    """
    with np.errstate(divide="ignore"):
        fv = np.asarray(model.congestion.f(nu.values), dtype=float)
    out = fv + model.potential_values() + model.interaction_field(nu)
    if np.any(np.isnan(out)):
        raise ValueError("first variation produced NaN")
    return out
