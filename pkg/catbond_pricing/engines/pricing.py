"""
Prices and policies read off solved surfaces.
"""

from __future__ import annotations

import logging
import threading
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np

from catbond_pricing.core.errors import NumericalBreakdownError, SurfaceMissingError
from catbond_pricing.core.state import (
    ClaimModel,
    PolicySurface,
    PriceQuery,
    SurfaceKind,
    TailRule,
    ValueSurface,
)
from catbond_pricing.engines.claims import utility_jump_drift
from catbond_pricing.engines.demand import DemandCurve, mu_gamma
from catbond_pricing.engines.solver import BackwardSolver, eval_surface

logger = logging.getLogger(__name__)

Side = Literal["buy", "sell"]


def kappa(model: ClaimModel, curve: DemandCurve) -> float:
    """kappa = mu(-(lambda / eta) * (E exp(eta * Y) - 1)); W = kappa * (T - t) without the derivative."""
    return mu_gamma(curve, utility_jump_drift(model, model.eta)).value


def _key(kind: SurfaceKind, k: float) -> Tuple[str, float]:
    return SurfaceKind(kind).value, float(k)


class PricingEngine:
    """
    Holds solved surfaces keyed by (kind, k) and answers price queries.

    Every quantity has its own W and g surface; nothing is interpolated
    across k. Queries against a surface that was never solved raise
    SurfaceMissingError.
    """

    def __init__(self, solver: BackwardSolver):
        self.solver = solver
        self.model = solver.model
        self.curve = solver.curve
        self._surfaces: Dict[Tuple[str, float], ValueSurface] = {}
        self._lock = threading.Lock()

    def solve(self, kind: SurfaceKind, k: float = 1.0) -> ValueSurface:
        kind = SurfaceKind(kind)
        if kind is SurfaceKind.PI0:
            k = 1.0
        key = _key(kind, k)
        with self._lock:
            cached = self._surfaces.get(key)
        if cached is not None:
            return cached
        surface = self.solver.integrate_backward(kind, k)
        self.add(surface)
        return surface

    def add(self, surface: ValueSurface) -> None:
        with self._lock:
            self._surfaces[_key(surface.kind, surface.k)] = surface

    def surface(self, kind: SurfaceKind, k: float = 1.0) -> ValueSurface:
        kind = SurfaceKind(kind)
        if kind is SurfaceKind.PI0:
            k = 1.0
        with self._lock:
            surface = self._surfaces.get(_key(kind, k))
        if surface is None:
            raise SurfaceMissingError(kind.value, k)
        return surface

    def has(self, kind: SurfaceKind, k: float = 1.0) -> bool:
        try:
            self.surface(kind, k)
        except SurfaceMissingError:
            return False
        return True

    @property
    def kappa(self) -> float:
        return self.solver.kappa

    def _check_time(self, t: float) -> None:
        if not 0.0 <= t <= self.model.T:
            raise ValueError(f"t={t} is outside [0, {self.model.T}]")

    def _buyer(self, c: float, t: float, k: float) -> float:
        if k == 0.0:
            return 0.0
        surface = self.surface(SurfaceKind.W, k)
        return eval_surface(surface, c, t) - surface.kappa * (self.model.T - t)

    def indifference_price(self, query: PriceQuery, side: Side = "buy") -> float:
        """Buyer p_b(k) = W(c, t, k) - kappa * (T - t); seller p_s(k) = -p_b(-k)."""
        self._check_time(query.t)
        if side == "buy":
            return self._buyer(query.c, query.t, query.k)
        if side == "sell":
            return -self._buyer(query.c, query.t, -query.k)
        raise ValueError(f"side must be 'buy' or 'sell', got {side!r}")

    def price_surface(self, k: float = 1.0) -> ValueSurface:
        """The buyer's price on the whole lattice: W minus the no-derivative drift."""
        w = self.surface(SurfaceKind.W, k)
        drift = w.kappa * (self.model.T - w.times)
        return ValueSurface(
            lattice=w.lattice,
            kind=SurfaceKind.W,
            k=k,
            times=w.times,
            values=w.values - drift[:, None],
            tail=TailRule(level=k * self.solver.payoff.A, horizon=self.model.T),
        )

    def _no_derivative_loading(self) -> float:
        return mu_gamma(self.curve, utility_jump_drift(self.model, self.model.eta)).argmax

    def optimal_loading(self, query: PriceQuery) -> float:
        """theta* = gamma(W_bar(c, t)) read from the W surface for query.k."""
        self._check_time(query.t)
        if query.k == 0.0:
            return self._no_derivative_loading()
        surface = self.surface(SurfaceKind.W, query.k)
        index = int(surface.lattice.index_of(query.c))
        if index >= surface.lattice.n_nodes - 1:
            return self._no_derivative_loading()
        w_bar = self.solver.w_bar(surface.slice_at(query.t), query.t, query.k)
        return mu_gamma(self.curve, float(w_bar[index])).argmax

    def policy_surface(self, k: float = 1.0) -> PolicySurface:
        surface = self.surface(SurfaceKind.W, k)
        rows = []
        for t, values in zip(surface.times, surface.values):
            _, gamma = self.curve.maximize(self.solver.w_bar(values, float(t), k))
            rows.append(gamma)
        return PolicySurface(
            times=surface.times,
            values=np.vstack(rows),
            delta=surface.lattice.delta,
            tail_loading=self._no_derivative_loading(),
            m=self.curve.m,
        )

    def certainty_equivalence_seller(self, query: PriceQuery) -> float:
        """pi_s = (1 / beta) * log g(c, t) for the g surface of quantity k."""
        self._check_time(query.t)
        if query.k == 0.0:
            return 0.0
        g = eval_surface(self.surface(SurfaceKind.G, query.k), query.c, query.t)
        if not g > 0.0:
            logger.error(f"g={g!r} at c={query.c:g}, t={query.t:g}")
            raise NumericalBreakdownError("g surface is not positive", t=query.t)
        return float(np.log(g)) / self.model.beta

    def denomination_limit(self, query: PriceQuery, n_list: Sequence[int]) -> List[float]:
        """N * pi_s(c, t, 1 / N) for every N."""
        out = []
        for n in n_list:
            if n < 1:
                raise ValueError(f"denominations must be positive, got {n}")
            single = PriceQuery(c=query.c, t=query.t, k=1.0 / n)
            out.append(n * self.certainty_equivalence_seller(single))
        return out

    def risk_neutral_price(self, query: PriceQuery) -> float:
        self._check_time(query.t)
        return query.k * eval_surface(self.surface(SurfaceKind.PI0), query.c, query.t)

    def tradability_gap(self, query: PriceQuery) -> float:
        """p_b(c, t, 1) - pi0(c, t); non-negative for the reference parameters."""
        unit = PriceQuery(c=query.c, t=query.t, k=1.0)
        return self.indifference_price(unit) - self.risk_neutral_price(unit)

    def gap_surface(self) -> ValueSurface:
        price = self.price_surface(1.0)
        pi0 = self.surface(SurfaceKind.PI0)
        if not np.array_equal(price.times, pi0.times):
            raise ValueError("price and pi0 surfaces were solved on different time grids")
        return ValueSurface(
            lattice=price.lattice,
            kind=SurfaceKind.W,
            k=1.0,
            times=price.times,
            values=price.values - pi0.values,
            tail=TailRule(level=0.0, horizon=self.model.T),
        )
