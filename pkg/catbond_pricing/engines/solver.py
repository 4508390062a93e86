"""
Backward integration of the lattice ODE systems.

W: nonlinear equation W_t = -M * W_hat - mu(W_bar) for the buyer's value.
g: linear Feynman-Kac equation for exp(beta * pi_s), the seller transform.
pi0: linear equation for the risk-neutral expectation of the payoff.

Nodes c_i = i * delta cover [0, L]; the node at L and everything above it
follow the closed-form tail rule of the surface.
"""

from __future__ import annotations

import logging
import time
from typing import Optional, Tuple

import numpy as np

from catbond_pricing.core.errors import NumericalBreakdownError
from catbond_pricing.core.state import (
    ClaimModel,
    Lattice,
    Payoff,
    SolverConfig,
    SurfaceKind,
    TailRule,
    ValueSurface,
)
from catbond_pricing.engines.claims import utility_jump_drift
from catbond_pricing.engines.demand import DemandCurve

logger = logging.getLogger(__name__)


def shifted_values(surface_slice: np.ndarray, lattice: Lattice, tail_value: float) -> np.ndarray:
    """f(c_i + Y_j) for every atom j (rows) and node i (columns)."""
    n = lattice.n_nodes
    if surface_slice.shape != (n,):
        raise ValueError(f"slice has shape {surface_slice.shape}, expected ({n},)")
    padded = np.concatenate([surface_slice[: n - 1], np.full(max(lattice.offsets) + 1, tail_value)])
    index = np.arange(n)[None, :] + np.asarray(lattice.offsets)[:, None]
    return padded[index]


def jump_expectation(surface_slice: np.ndarray, lattice: Lattice, weights, tail_value: float) -> np.ndarray:
    """E_Y[weight(Y) * f(c + Y)] per node, reading f from the tail at and above L."""
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(lattice.offsets),))
    shifted = shifted_values(np.asarray(surface_slice, dtype=float), lattice, tail_value)
    return (weights * np.asarray(lattice.probs)) @ shifted


def _first_bad_node(values: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) if bad.size else None


class BackwardSolver:
    """
    Fixed-step RK4 from t = T down to 0 on one lattice.

    The solver is stateless between calls; model, payoff and curve are shared
    read-only so several solvers can run side by side.
    """

    def __init__(
        self,
        model: ClaimModel,
        payoff: Payoff,
        curve: DemandCurve,
        config: Optional[SolverConfig] = None,
        delta: Optional[float] = None,
    ):
        self.model = model
        self.payoff = payoff
        self.curve = curve
        self.config = config or SolverConfig()
        self.lattice = Lattice.build(model, payoff, delta if delta is not None else float(model.sizes.min()))
        self.nodes = self.lattice.nodes
        self.terminal_payoff = payoff.evaluate(self.nodes)
        self._kappa: Optional[float] = None

    @property
    def kappa(self) -> float:
        """mu at the no-derivative argument; the drift of W when k = 0."""
        if self._kappa is None:
            z0 = utility_jump_drift(self.model, self.model.eta)
            value, _ = self.curve.maximize(z0)
            self._kappa = float(value[0])
        return self._kappa

    def tail_rule(self, kind: SurfaceKind, k: float) -> TailRule:
        A, T = self.payoff.A, self.model.T
        if kind is SurfaceKind.W:
            return TailRule(level=k * A, drift=self.kappa, horizon=T)
        if kind is SurfaceKind.G:
            return TailRule(level=self._exp_or_raise(self.model.beta * k * A), horizon=T)
        return TailRule(level=A, horizon=T)

    def terminal(self, kind: SurfaceKind, k: float) -> np.ndarray:
        if kind is SurfaceKind.W:
            return k * self.terminal_payoff
        if kind is SurfaceKind.G:
            with np.errstate(over="ignore"):
                values = np.exp(self.model.beta * k * self.terminal_payoff)
            node = _first_bad_node(values)
            if node is not None:
                raise NumericalBreakdownError("terminal exp(beta * k * psi) overflows", t=self.model.T, node=node)
            return values
        return self.terminal_payoff.copy()

    def _exp_or_raise(self, exponent: float) -> float:
        with np.errstate(over="ignore"):
            value = float(np.exp(exponent))
        if not np.isfinite(value):
            raise NumericalBreakdownError(f"exp({exponent:g}) overflows the floating range")
        return value

    def _differences(self, surface_slice: np.ndarray, tail_value: float) -> np.ndarray:
        return shifted_values(surface_slice, self.lattice, tail_value) - surface_slice[None, :]

    def w_hat_and_bar(self, surface_slice: np.ndarray, t: float, k: float) -> Tuple[np.ndarray, np.ndarray]:
        eta, lam = self.model.eta, self.model.lam
        if eta <= 0:
            raise ValueError("the W equation needs a positive risk aversion eta")
        tail_value = self.tail_rule(SurfaceKind.W, k).value(t)
        diff = self._differences(np.asarray(surface_slice, dtype=float), tail_value)
        probs = np.asarray(self.lattice.probs)[:, None]
        excess = np.expm1(eta * self.model.sizes)[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            w_hat = -lam / eta * np.sum(probs * np.expm1(-eta * diff), axis=0)
            w_bar = -lam / eta * np.sum(probs * excess * np.exp(-eta * diff), axis=0)
        node = _first_bad_node(w_hat)
        if node is None:
            node = _first_bad_node(w_bar)
        if node is not None:
            logger.error(f"exp(-eta * dW) left the floating range at t={t:.6g}")
            raise NumericalBreakdownError("exp(-eta * dW) overflows; eta is too large for the payoff scale", t=t, node=node)
        return w_hat, w_bar

    def w_bar(self, surface_slice: np.ndarray, t: float, k: float) -> np.ndarray:
        return self.w_hat_and_bar(surface_slice, t, k)[1]

    def rhs_w(self, surface_slice: np.ndarray, t: float, k: float) -> Tuple[np.ndarray, np.ndarray]:
        """Time derivative of W per node, and W_bar for policy extraction."""
        w_hat, w_bar = self.w_hat_and_bar(surface_slice, t, k)
        if np.any(w_bar > 0.0):
            node = int(np.flatnonzero(w_bar > 0.0)[0])
            raise NumericalBreakdownError("W_bar turned positive", t=t, node=node)
        mu, _ = self.curve.maximize(w_bar)
        return -self.model.M * w_hat - mu, w_bar

    def rhs_linear(self, surface_slice: np.ndarray, kind: SurfaceKind, k: float = 1.0) -> np.ndarray:
        """-M * lambda * (E f(c + Y) - f), the generator of the index."""
        kind = SurfaceKind(kind)
        if kind is SurfaceKind.W:
            raise ValueError("rhs_linear handles the g and pi0 equations only")
        surface_slice = np.asarray(surface_slice, dtype=float)
        tail_value = self.tail_rule(kind, k).value(self.model.T)
        expected = jump_expectation(surface_slice, self.lattice, 1.0, tail_value)
        return -self.model.jump_rate * (expected - surface_slice)

    def _rhs(self, kind: SurfaceKind, k: float, values: np.ndarray, t: float, tail: TailRule) -> np.ndarray:
        stage = values.copy()
        stage[-1] = tail.value(t)
        if kind is SurfaceKind.W:
            return self.rhs_w(stage, t, k)[0]
        return self.rhs_linear(stage, kind, k)

    def integrate_backward(self, kind: SurfaceKind, k: float = 1.0) -> ValueSurface:
        kind = SurfaceKind(kind)
        if kind is SurfaceKind.PI0:
            k = 1.0
        started = time.perf_counter()
        T, n_steps, stride = self.model.T, self.config.n_steps, self.config.stride
        dt = T / n_steps
        tail = self.tail_rule(kind, k)

        values = self.terminal(kind, k)
        values[-1] = tail.value(T)
        expected = self.terminal(kind, k)
        residual = float(np.max(np.abs(values - expected)))
        if residual > self.config.tol_check:
            raise NumericalBreakdownError(f"terminal residual {residual:g} exceeds {self.config.tol_check:g}", t=T)

        times, slices = [T], [values.copy()]
        for step in range(1, n_steps + 1):
            t = T * (n_steps - step + 1) / n_steps
            t_next = T * (n_steps - step) / n_steps
            h = -dt
            k1 = self._rhs(kind, k, values, t, tail)
            k2 = self._rhs(kind, k, values + 0.5 * h * k1, t + 0.5 * h, tail)
            k3 = self._rhs(kind, k, values + 0.5 * h * k2, t + 0.5 * h, tail)
            k4 = self._rhs(kind, k, values + h * k3, t_next, tail)
            with np.errstate(over="ignore", invalid="ignore"):
                values = values + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            values[-1] = tail.value(t_next)

            node = _first_bad_node(values)
            if node is not None:
                logger.error(f"{kind.value} integration broke down at t={t_next:.6g}, node {node}")
                raise NumericalBreakdownError(f"{kind.value} surface is not finite", t=t_next, node=node)
            if step % stride == 0 or step == n_steps:
                times.append(t_next)
                slices.append(values.copy())

        logger.info(
            f"Solved {kind.value} surface for k={k:g}: {n_steps} steps, {self.lattice.n_nodes} nodes, "
            f"{time.perf_counter() - started:.2f}s"
        )
        return ValueSurface(
            lattice=self.lattice,
            kind=kind,
            k=k,
            times=np.array(times),
            values=np.vstack(slices),
            tail=tail,
            kappa=self.kappa if kind is SurfaceKind.W else 0.0,
        )


def eval_surface(surface: ValueSurface, c: float, t: float) -> float:
    """Snap c down to its node, use the tail rule at and above L, interpolate linearly in t."""
    if c < 0:
        raise ValueError(f"index level must be non-negative, got {c}")
    if not 0.0 <= t <= surface.horizon:
        raise ValueError(f"t={t} is outside [0, {surface.horizon}]")
    lattice = surface.lattice
    index = int(lattice.index_of(c))
    if index >= lattice.n_nodes - 1:
        return surface.tail.value(t)
    return float(surface.slice_at(t)[index])
