from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Tuple

from catbond_pricing.config import RunConfig
from catbond_pricing.core.state import (
    ConstantPolicy,
    MonteCarloEstimate,
    PriceQuery,
    SurfaceKind,
    ValueSurface,
    VerificationReport,
    VerificationRow,
)
from catbond_pricing.engines.pricing import PricingEngine
from catbond_pricing.engines.simulate import mc_risk_neutral, verify_value_function
from catbond_pricing.engines.solver import BackwardSolver

logger = logging.getLogger(__name__)


class PricingSession:
    """
    One run: builds the domain objects from a RunConfig and solves surfaces
    on demand, caching them in the pricing engine.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.model = config.build_model()
        self.payoff = config.build_payoff()
        self.curve = config.build_curve(self.model)
        self.solver = BackwardSolver(
            self.model,
            self.payoff,
            self.curve,
            config.solver_config(),
            delta=config.solver.delta,
        )
        self.engine = PricingEngine(self.solver)

    def ensure(self, requests: Iterable[Tuple[SurfaceKind, float]]) -> List[ValueSurface]:
        """Solve every missing (kind, k) surface; independent surfaces run side by side."""
        wanted = []
        for kind, k in requests:
            kind = SurfaceKind(kind)
            if kind is SurfaceKind.PI0:
                k = 1.0
            if (kind, k) not in wanted:
                wanted.append((kind, k))
        missing = [(kind, k) for kind, k in wanted if not self.engine.has(kind, k)]
        workers = min(self.config.sim.n_workers, len(missing))
        if workers > 1:
            logger.info(f"Solving {len(missing)} surfaces on {workers} threads")
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda request: self.engine.solve(*request), missing))
        else:
            for kind, k in missing:
                self.engine.solve(kind, k)
        return [self.engine.surface(kind, k) for kind, k in wanted]

    def prepare_price(self, query: PriceQuery) -> None:
        requests = [(SurfaceKind.PI0, 1.0), (SurfaceKind.W, 1.0)]
        if query.k != 0.0:
            requests += [(SurfaceKind.W, query.k), (SurfaceKind.W, -query.k), (SurfaceKind.G, query.k)]
        requests += [(SurfaceKind.G, 1.0 / n) for n in self.config.output.denominations]
        self.ensure(requests)

    def policy_for(self, k: float):
        if k == 0.0:
            return ConstantPolicy(theta=self.engine.optimal_loading(PriceQuery(c=0.0, t=0.0, k=0.0)))
        self.ensure([(SurfaceKind.W, k)])
        return self.engine.policy_surface(k)

    def verify(self, query: PriceQuery) -> VerificationReport:
        """Value-function check at (c, 0, k) plus the risk-neutral cross-check at (c, t)."""
        w_surface, pi0_surface = self.ensure([(SurfaceKind.W, query.k), (SurfaceKind.PI0, 1.0)])
        sim = self.config.sim_config()
        report = verify_value_function(
            self.model,
            self.curve,
            self.payoff,
            query.k,
            w_surface,
            self.policy_for(query.k),
            self.config.model.x0,
            query.c,
            sim,
        )
        mc: MonteCarloEstimate = mc_risk_neutral(self.model, self.payoff, query.c, query.t, sim)
        analytic = self.engine.risk_neutral_price(PriceQuery(c=query.c, t=query.t, k=1.0))
        if mc.std_error == float("inf"):
            z = 0.0
        elif mc.std_error > 0.0:
            z = (mc.estimate - analytic) / mc.std_error
        else:
            # degenerate payoff: the estimate is exact
            z = 0.0 if abs(mc.estimate - analytic) <= 1e-9 * max(1.0, abs(analytic)) else float("inf")
        report.rows.append(
            VerificationRow(
                quantity=f"risk_neutral(c={query.c:g},t={query.t:g})",
                estimate=mc.estimate,
                std_error=mc.std_error,
                analytic=analytic,
                z_score=z,
            )
        )
        return report
