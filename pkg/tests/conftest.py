from pathlib import Path

import pytest

from catbond_pricing.config import RunConfig
from catbond_pricing.core.state import ClaimModel, Payoff, SolverConfig, SurfaceKind
from catbond_pricing.engines.claims import fair_premium
from catbond_pricing.engines.demand import LinearDemand
from catbond_pricing.engines.pricing import PricingEngine
from catbond_pricing.engines.solver import BackwardSolver

REFERENCE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "reference.json"
REFERENCE_ATOMS = ((1e5, 0.125), (2e5, 0.375), (3e5, 0.25), (4e5, 0.125), (5e5, 0.125))
DENOMINATIONS = (1, 10, 100, 1000)


def make_model(**changes) -> ClaimModel:
    fields = {"lam": 0.01, "M": 1e4, "T": 0.25, "eta": 1e-6, "atoms": REFERENCE_ATOMS}
    fields.update(changes)
    return ClaimModel(**fields)


def make_curve(model: ClaimModel, m: float = 2.0) -> LinearDemand:
    return LinearDemand(m=m, M=model.M, a=fair_premium(model))


@pytest.fixture(scope="session")
def reference_config() -> RunConfig:
    return RunConfig.from_file(REFERENCE_CONFIG)


@pytest.fixture(scope="session")
def reference_model() -> ClaimModel:
    return make_model()


@pytest.fixture(scope="session")
def reference_payoff() -> Payoff:
    return Payoff.spread(K=1e7, L=3e7)


@pytest.fixture(scope="session")
def linear_curve(reference_model) -> LinearDemand:
    return make_curve(reference_model)


@pytest.fixture(scope="session")
def reference_solver(reference_model, reference_payoff, linear_curve) -> BackwardSolver:
    return BackwardSolver(reference_model, reference_payoff, linear_curve, SolverConfig(n_steps=2000), delta=1e5)


@pytest.fixture(scope="session")
def reference_engine(reference_solver) -> PricingEngine:
    """Engine with every surface the pricing and simulation tests read."""
    engine = PricingEngine(reference_solver)
    for k in (0.0, 1.0, -1.0):
        engine.solve(SurfaceKind.W, k)
    engine.solve(SurfaceKind.PI0)
    for n in DENOMINATIONS:
        engine.solve(SurfaceKind.G, 1.0 / n)
    return engine
