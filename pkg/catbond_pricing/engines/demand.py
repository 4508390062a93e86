"""
Demand curves q(theta) and the premium-flow maximization behind the optimal
risk loading.

mu(z) = max over alpha in [0, m] of q(alpha) * (a * (1 + alpha) + z)
gamma(z) = smallest maximizer

Linear demand has closed forms; every other variant is maximized numerically
by a grid scan followed by golden-section refinement, vectorized over z so the
solver can evaluate a whole lattice slice at once.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from catbond_pricing.core.state import DemandValidation, MuResult

logger = logging.getLogger(__name__)

SCAN_POINTS = 1024
REFINE_TOLERANCE = 1e-10
CACHE_POINTS = 4096
QUAD_TOLERANCE = 1e-10
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class DemandCurve(BaseModel):
    """
    Number of clients as a function of the loading: M for theta <= 0, 0 for
    theta >= m, continuous and strictly decreasing in between.

    ``a`` is the fair premium the curve is priced against.
    """

    model_config = ConfigDict(frozen=True)

    m: float = Field(gt=0, description="Maximal loading (unitless)")
    M: float = Field(ge=1, description="Market size (count)")
    a: float = Field(gt=0, description="Fair premium (currency/year)")

    def _interior(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def q(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        inner = np.clip(self._interior(np.clip(theta, 0.0, self.m)), 0.0, self.M)
        return np.where(theta <= 0.0, self.M, np.where(theta >= self.m, 0.0, inner))

    def objective(self, alpha: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.q(alpha) * (self.a * (1.0 + alpha) + z)

    def maximize(self, z) -> Tuple[np.ndarray, np.ndarray]:
        """(mu(z), gamma(z)) for an array of z."""
        return _scan_and_refine(self, np.atleast_1d(np.asarray(z, dtype=float)), SCAN_POINTS)


class LinearDemand(DemandCurve):
    def _interior(self, theta: np.ndarray) -> np.ndarray:
        return self.M * (1.0 - theta / self.m)

    def maximize(self, z) -> Tuple[np.ndarray, np.ndarray]:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        a, m, M = self.a, self.m, self.M
        low = z <= -a * (m + 1.0)
        high = z >= a * (m - 1.0)
        middle_value = M * (a * (1.0 + m) + z) ** 2 / (4.0 * a * m)
        middle_argmax = (a * (m - 1.0) - z) / (2.0 * a)
        value = np.where(low, 0.0, np.where(high, M * (a + z), middle_value))
        argmax = np.where(low, m, np.where(high, 0.0, middle_argmax))
        return value, argmax


class PowerDemand(DemandCurve):
    """q(theta) = M * (1 - (theta / m)**nu) on [0, m]"""

    nu: float = Field(gt=0, description="Exponent (unitless)")

    def _interior(self, theta: np.ndarray) -> np.ndarray:
        return self.M * (1.0 - (theta / self.m) ** self.nu)


class HFamilyDemand(DemandCurve):
    """
    q(theta) = M - integral_0^theta exp(-2 xi / (1 + m)) H(xi) d xi with
    H(xi) = scale * P(xi) * exp(2 xi / (1 + m)) (``tilt``) or scale * P(xi).

    ``coefficients`` are the ascending coefficients of P. When ``scale`` is
    omitted it is chosen so that q(m) = 0. Values are cached on a fixed theta
    grid and interpolated with a monotone cubic.
    """

    coefficients: Tuple[float, ...] = Field(min_length=1)
    scale: Optional[float] = Field(default=None, gt=0)
    tilt: bool = True

    _scale: float = PrivateAttr(default=1.0)
    _cache: Optional[PchipInterpolator] = PrivateAttr(default=None)

    def model_post_init(self, __context) -> None:
        raw = self._integral(0.0, self.m, 1.0)
        if self.scale is None:
            if not raw > 0:
                raise ValueError("H-family polynomial integrates to a non-positive mass; cannot normalize")
            self._scale = self.M / raw
        else:
            self._scale = self.scale
        grid = np.linspace(0.0, self.m, CACHE_POINTS)
        pieces = [self._integral(lo, hi, self._scale) for lo, hi in zip(grid[:-1], grid[1:])]
        cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
        self._cache = PchipInterpolator(grid, self.M - cumulative)

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @property
    def exponent(self) -> float:
        return 2.0 / (1.0 + self.m) if self.tilt else 0.0

    @property
    def resolved_scale(self) -> float:
        return self._scale

    def H(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self._scale * self.polynomial(xi) * np.exp(self.exponent * xi)

    def H_prime(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        poly = self.polynomial
        return self._scale * np.exp(self.exponent * xi) * (poly.deriv()(xi) + self.exponent * poly(xi))

    def density(self, xi) -> np.ndarray:
        """exp(-2 xi / (1 + m)) * H(xi), i.e. -q'(xi)"""
        xi = np.asarray(xi, dtype=float)
        return self.H(xi) * np.exp(-2.0 * xi / (1.0 + self.m))

    def _integral(self, lo: float, hi: float, scale: float) -> float:
        poly = self.polynomial
        shift = self.exponent - 2.0 / (1.0 + self.m)
        value, _ = quad(lambda xi: scale * poly(xi) * math.exp(shift * xi), lo, hi, epsabs=0.0, epsrel=QUAD_TOLERANCE)
        return value

    def normalization(self) -> float:
        return self._integral(0.0, self.m, self._scale)

    def _interior(self, theta: np.ndarray) -> np.ndarray:
        return self._cache(theta)


class TabulatedDemand(DemandCurve):
    """Sampled (theta, q) pairs on [0, m], interpolated monotonically."""

    samples: Tuple[Tuple[float, float], ...] = Field(min_length=2)

    _cache: Optional[PchipInterpolator] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_samples(self) -> "TabulatedDemand":
        theta = np.array([s[0] for s in self.samples])
        q = np.array([s[1] for s in self.samples])
        if np.any(np.diff(theta) <= 0):
            raise ValueError("demand samples must have strictly increasing theta")
        if np.any(np.diff(q) >= 0):
            raise ValueError("demand samples must be strictly decreasing in q")
        if abs(theta[0]) > 1e-12 or abs(theta[-1] - self.m) > 1e-12 * self.m:
            raise ValueError("demand samples must span [0, m]")
        if abs(q[0] - self.M) > 1e-9 * self.M or abs(q[-1]) > 1e-9 * self.M:
            raise ValueError("demand samples must run from M down to 0")
        return self

    def model_post_init(self, __context) -> None:
        theta = np.array([s[0] for s in self.samples])
        q = np.array([s[1] for s in self.samples])
        self._cache = PchipInterpolator(theta, q)

    def _interior(self, theta: np.ndarray) -> np.ndarray:
        return self._cache(theta)


def _scan_and_refine(curve: DemandCurve, z: np.ndarray, grid_n: int) -> Tuple[np.ndarray, np.ndarray]:
    alphas = np.linspace(0.0, curve.m, grid_n + 1)
    q = curve.q(alphas)
    scan = q[None, :] * (curve.a * (1.0 + alphas)[None, :] + z[:, None])
    best = np.argmax(scan, axis=1)
    best_value = scan[np.arange(z.size), best]
    best_alpha = alphas[best]

    lo = alphas[np.maximum(best - 1, 0)]
    hi = alphas[np.minimum(best + 1, grid_n)]
    for _ in range(200):
        if np.all(hi - lo <= REFINE_TOLERANCE):
            break
        x1 = hi - _INV_PHI * (hi - lo)
        x2 = lo + _INV_PHI * (hi - lo)
        left = curve.objective(x1, z) >= curve.objective(x2, z)
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)

    refined_alpha = 0.5 * (lo + hi)
    refined_value = curve.objective(refined_alpha, z)
    better = refined_value > best_value
    return np.where(better, refined_value, best_value), np.where(better, refined_alpha, best_alpha)


def q_eval(curve: DemandCurve, theta: float) -> float:
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    return float(curve.q(theta))


def mu_gamma(curve: DemandCurve, z: float) -> MuResult:
    if not np.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    value, argmax = curve.maximize(z)
    return MuResult(value=float(value[0]), argmax=float(argmax[0]))


def brute_force_mu(curve: DemandCurve, z: float, grid_n: int = 100_000) -> MuResult:
    """Independent check of mu_gamma: dense scan, then bounded Brent refinement."""
    if grid_n < 1000:
        raise ValueError(f"grid_n must be at least 1000, got {grid_n}")
    alphas = np.linspace(0.0, curve.m, grid_n + 1)
    scan = curve.objective(alphas, z)
    best = int(np.argmax(scan))
    best_value, best_alpha = float(scan[best]), float(alphas[best])

    lo, hi = alphas[max(best - 1, 0)], alphas[min(best + 1, grid_n)]
    result = minimize_scalar(
        lambda alpha: -float(curve.objective(alpha, z)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": REFINE_TOLERANCE},
    )
    if -result.fun > best_value:
        return MuResult(value=float(-result.fun), argmax=float(result.x))
    return MuResult(value=best_value, argmax=best_alpha)


def hfamily_validate(curve: HFamilyDemand, grid_n: int = 4001) -> DemandValidation:
    """Checks H > 0, H' > 0 on (0, m) and the normalization integral = M."""
    if not isinstance(curve, HFamilyDemand):
        raise TypeError(f"expected an H-family curve, got {type(curve).__name__}")
    xi = np.linspace(0.0, curve.m, grid_n)[1:-1]
    violations = []
    if not np.all(np.isfinite(curve.H(xi))) or not np.all(curve.H(xi) > 0):
        violations.append("H must be positive on (0, m)")
    if not np.all(curve.H_prime(xi) > 0):
        violations.append("H' must be positive on (0, m)")
    mass = curve.normalization()
    if abs(mass - curve.M) > 1e-8 * curve.M:
        violations.append(f"normalization integral is {mass:.10g}, expected M={curve.M:.10g}")
    if violations:
        logger.info(f"H-family demand rejected: {'; '.join(violations)}")
    return DemandValidation(passed=not violations, violations=violations)
