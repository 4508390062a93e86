"""
Scalar moments of the claims model and payoff evaluation.

Everything here is deterministic and cheap; the solver and the demand
curves consume these numbers on every step.
"""

from __future__ import annotations

import logging

import numpy as np

from catbond_pricing.core.errors import NumericalBreakdownError
from catbond_pricing.core.state import ClaimModel, Payoff

logger = logging.getLogger(__name__)


def mean_claim(model: ClaimModel) -> float:
    """E(Y)"""
    return float(np.dot(model.sizes, model.probs))


def fair_premium(model: ClaimModel) -> float:
    """a = lambda * E(Y), the expected annual claim per client."""
    return model.lam * mean_claim(model)


def exp_jump_moment(model: ClaimModel, rho: float) -> float:
    """E(exp(rho * Y)); raises when the moment leaves the floating range."""
    if not np.isfinite(rho):
        raise ValueError(f"rho must be finite, got {rho}")
    if rho == 0.0:
        return 1.0
    with np.errstate(over="ignore"):
        value = float(np.dot(model.probs, np.exp(rho * model.sizes)))
    if not np.isfinite(value):
        logger.error(f"E(exp(rho*Y)) overflows for rho={rho:g}, max claim {model.sizes.max():g}")
        raise NumericalBreakdownError(f"E(exp({rho:g} * Y)) overflows the floating range")
    return value


def exp_jump_excess(model: ClaimModel, rho: float) -> float:
    """E(exp(rho * Y)) - 1 without cancellation for small rho."""
    exp_jump_moment(model, rho)
    return float(np.dot(model.probs, np.expm1(rho * model.sizes)))


def payoff_eval(payoff: Payoff, c: float) -> float:
    if c < 0:
        raise ValueError(f"index level must be non-negative, got {c}")
    return float(payoff.evaluate(c))


def utility_jump_drift(model: ClaimModel, rho: float) -> float:
    """
    -(lambda / rho) * E(exp(rho * Y) - 1): the argument of mu when the derivative
    is absent; tends to -a as rho -> 0.
    """
    if rho <= 0:
        raise ValueError(f"risk aversion must be positive, got {rho}")
    return -model.lam / rho * exp_jump_excess(model, rho)
