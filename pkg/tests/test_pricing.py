"""Indifference prices, loadings, certainty equivalence and limits."""

import numpy as np
import pytest

from catbond_pricing.core.errors import SurfaceMissingError
from catbond_pricing.core.state import PriceQuery, SolverConfig, SurfaceKind
from catbond_pricing.engines.claims import fair_premium, utility_jump_drift
from catbond_pricing.engines.demand import brute_force_mu, mu_gamma
from catbond_pricing.engines.pricing import PricingEngine, kappa
from catbond_pricing.engines.simulate import convolution_certainty_equivalent, convolution_risk_neutral
from catbond_pricing.engines.solver import BackwardSolver
from tests.conftest import DENOMINATIONS, make_curve, make_model

A = 2e7
MID = 1.5e7


def test_kappa_reference_values(reference_model, linear_curve):
    """kappa and z0 for the reference parameters"""
    z0 = utility_jump_drift(reference_model, reference_model.eta)
    assert z0 == pytest.approx(-3262.05, abs=0.01)
    value = kappa(reference_model, linear_curve)
    assert value == pytest.approx(1.1309e7, rel=1e-4)
    assert value == pytest.approx(brute_force_mu(linear_curve, z0, grid_n=100_000).value, rel=1e-6)


def test_kappa_small_risk_aversion_limit():
    """kappa tends to mu(-fair premium) as eta vanishes"""
    model = make_model(eta=1e-12)
    curve = make_curve(model)
    assert kappa(model, curve) == pytest.approx(mu_gamma(curve, -fair_premium(model)).value, rel=1e-4)


def test_kappa_degenerate_demand(reference_model):
    """kappa with a vanishing loading cap reduces to M * max(a + z0, 0)"""
    curve = make_curve(reference_model, m=1e-6)
    z0 = utility_jump_drift(reference_model, reference_model.eta)
    assert kappa(reference_model, curve) == pytest.approx(reference_model.M * max(curve.a + z0, 0.0), abs=1e-6)


def test_zero_quantity_prices_vanish(reference_engine):
    """Every price of a zero quantity is zero"""
    for c in (0.0, MID, 4e7):
        for t in (0.0, 0.1, 0.25):
            query = PriceQuery(c=c, t=t, k=0.0)
            assert reference_engine.indifference_price(query) == 0.0
            assert reference_engine.indifference_price(query, "sell") == 0.0
            assert reference_engine.certainty_equivalence_seller(query) == 0.0


def test_tail_pinning(reference_engine):
    """Buyer price at and above L equals A at every stored time"""
    w = reference_engine.surface(SurfaceKind.W, 1.0)
    for t in w.times:
        for c in (3e7, 3.5e7, 5e7):
            price = reference_engine.indifference_price(PriceQuery(c=c, t=float(t), k=1.0))
            assert price == pytest.approx(A, rel=1e-8)


def test_terminal_price_is_payoff(reference_engine, reference_payoff):
    """Buyer price at maturity equals the payoff"""
    for c in (0.0, 1.2e7, 2e7, 2.95e7):
        assert reference_engine.indifference_price(PriceQuery(c=c, t=0.25, k=1.0)) == pytest.approx(reference_payoff.evaluate(c), abs=1e-6)
    assert reference_engine.indifference_price(PriceQuery(c=2e7, t=0.25, k=1.0)) == pytest.approx(1e7)


def test_price_bounds(reference_engine):
    """Buyer price surface stays within [0, A]"""
    price = reference_engine.price_surface(1.0)
    assert np.all(price.values >= -1e-8 * A)
    assert np.all(price.values <= A * (1 + 1e-8))


def test_seller_price_is_negated_buyer_price(reference_engine):
    """Seller price of k is minus the buyer price of -k"""
    for c in (0.0, 1e7, MID, 2.5e7):
        for t in (0.0, 0.125):
            sell = reference_engine.indifference_price(PriceQuery(c=c, t=t, k=1.0), "sell")
            buy_negative = reference_engine.indifference_price(PriceQuery(c=c, t=t, k=-1.0), "buy")
            assert sell == -buy_negative


def test_buyer_price_below_seller_price(reference_engine):
    """Buyer pays less than the seller asks"""
    query = PriceQuery(c=MID, t=0.0, k=1.0)
    assert reference_engine.indifference_price(query, "buy") < reference_engine.indifference_price(query, "sell")


def test_missing_surface_raises(reference_engine):
    """Unsolved quantities and out-of-horizon times raise"""
    with pytest.raises(SurfaceMissingError) as info:
        reference_engine.indifference_price(PriceQuery(c=MID, t=0.0, k=2.0))
    assert "k=2" in str(info.value)
    assert isinstance(info.value, KeyError)
    with pytest.raises(ValueError):
        reference_engine.indifference_price(PriceQuery(c=MID, t=0.3, k=1.0))


def test_no_derivative_loading(reference_engine):
    """Loading without a derivative is the constant gamma(z0)"""
    for c, t in ((0.0, 0.0), (MID, 0.1), (5e7, 0.2)):
        assert reference_engine.optimal_loading(PriceQuery(c=c, t=t, k=0.0)) == pytest.approx(1.0931, abs=5e-4)


def test_derivative_lowers_loading(reference_engine):
    """Holding the derivative lowers the loading below L only"""
    assert 0.90 <= reference_engine.optimal_loading(PriceQuery(c=MID, t=0.0, k=1.0)) <= 0.96
    for c in (3e7, 4e7):
        assert reference_engine.optimal_loading(PriceQuery(c=c, t=0.0, k=1.0)) == pytest.approx(1.0931, abs=5e-4)


def test_policy_surface_range(reference_engine, linear_curve):
    """Policy surface stays within [0, m] and matches the pointwise loading"""
    policy = reference_engine.policy_surface(1.0)
    assert np.all(policy.values >= 0.0) and np.all(policy.values <= linear_curve.m)
    assert policy.loading(np.array([MID]), 0.0)[0] == pytest.approx(
        reference_engine.optimal_loading(PriceQuery(c=MID, t=0.0, k=1.0)), abs=1e-12
    )
    flat = reference_engine.policy_surface(0.0)
    assert np.ptp(flat.values) < 1e-6


def test_certainty_equivalence_examples(reference_engine):
    """Certainty equivalence where the payoff is already certain"""
    assert reference_engine.certainty_equivalence_seller(PriceQuery(c=4e7, t=0.0, k=0.1)) == pytest.approx(0.1 * A, rel=1e-8)
    assert reference_engine.certainty_equivalence_seller(PriceQuery(c=3e7, t=0.2, k=1.0)) == pytest.approx(A, rel=1e-8)


def test_certainty_equivalence_small_seller_aversion(reference_payoff):
    """Certainty equivalence tends to pi0 as beta vanishes"""
    model = make_model(beta=1e-12)
    engine = PricingEngine(BackwardSolver(model, reference_payoff, make_curve(model), SolverConfig(n_steps=1000), delta=1e5))
    engine.solve(SurfaceKind.G, 1.0)
    engine.solve(SurfaceKind.PI0)
    query = PriceQuery(c=MID, t=0.0, k=1.0)
    assert engine.certainty_equivalence_seller(query) == pytest.approx(engine.risk_neutral_price(query), rel=1e-4)


def test_certainty_equivalence_matches_distribution(reference_engine, reference_model, reference_payoff, reference_solver):
    """g surface agrees with the Poisson convolution of the terminal law"""
    direct = convolution_certainty_equivalent(reference_model, reference_payoff, reference_solver.lattice, 0.0, 0.1)
    for c in (0.0, 1e7, MID, 2.5e7):
        index = int(c / 1e5)
        solved = reference_engine.certainty_equivalence_seller(PriceQuery(c=c, t=0.0, k=0.1))
        assert solved == pytest.approx(direct[index], rel=1e-6, abs=1e-6 * A)


def test_denomination_limit_approaches_risk_neutral(reference_engine):
    """Denomination limits approach pi0 at rate 1 / N"""
    query = PriceQuery(c=MID, t=0.0, k=1.0)
    limits = reference_engine.denomination_limit(query, DENOMINATIONS)
    pi0 = reference_engine.risk_neutral_price(query)
    assert limits[0] == reference_engine.certainty_equivalence_seller(query)
    distances = [abs(value - pi0) for value in limits]
    assert all(later < earlier for earlier, later in zip(distances, distances[1:]))
    assert distances[1] / distances[2] >= 5.0
    with pytest.raises(ValueError):
        reference_engine.denomination_limit(query, [0])


def test_denomination_limit_deterministic_payoff(reference_engine):
    """Denomination limits of a certain payoff are all A"""
    limits = reference_engine.denomination_limit(PriceQuery(c=4e7, t=0.0, k=1.0), DENOMINATIONS)
    np.testing.assert_allclose(limits, A, rtol=1e-8)


def test_risk_neutral_examples(reference_engine, reference_payoff):
    """pi0 at maturity and above L"""
    for c in (0.0, 1.2e7, 2.5e7):
        assert reference_engine.risk_neutral_price(PriceQuery(c=c, t=0.25, k=2.0)) == pytest.approx(2.0 * reference_payoff.evaluate(c))
    assert reference_engine.risk_neutral_price(PriceQuery(c=3.2e7, t=0.1, k=0.5)) == pytest.approx(0.5 * A)


def test_prices_at_huge_index_level(reference_engine, linear_curve):
    """Index level far above L prices like the capped payoff"""
    for t in (0.0, 0.1):
        query = PriceQuery(c=1e30, t=t, k=1.0)
        assert reference_engine.risk_neutral_price(query) == pytest.approx(A, rel=1e-8)
        assert reference_engine.indifference_price(query) == pytest.approx(A, rel=1e-8)
        assert reference_engine.certainty_equivalence_seller(query) == pytest.approx(A, rel=1e-8)
        assert reference_engine.optimal_loading(query) == pytest.approx(1.0931, abs=5e-4)
    policy = reference_engine.policy_surface(1.0)
    np.testing.assert_array_equal(policy.loading(np.array([1e30, np.inf]), 0.0), policy.tail_loading)
    assert 0.0 <= policy.tail_loading <= linear_curve.m


def test_w_surface_carries_kappa(reference_engine):
    """W surfaces record the drift that the buyer price subtracts"""
    assert reference_engine.surface(SurfaceKind.W, 1.0).kappa == reference_engine.kappa
    assert reference_engine.surface(SurfaceKind.PI0).kappa == 0.0
    price = reference_engine.price_surface(1.0)
    assert price.values[0, 0] == pytest.approx(reference_engine.indifference_price(PriceQuery(c=0.0, t=0.25, k=1.0)), abs=1e-6)


def test_risk_neutral_matches_poisson_convolution(reference_engine, reference_model, reference_payoff, reference_solver):
    """pi0 surface agrees with the Poisson convolution oracle"""
    oracle = convolution_risk_neutral(reference_model, reference_payoff, reference_solver.lattice, 0.0)
    solved = reference_engine.surface(SurfaceKind.PI0).values[-1]
    np.testing.assert_allclose(solved, oracle, rtol=1e-6, atol=1e-6 * A)


def test_tradability_gap(reference_engine):
    """Gap vanishes above L and at maturity and is otherwise non-negative"""
    for t in (0.0, 0.1):
        assert reference_engine.tradability_gap(PriceQuery(c=3e7, t=t)) == pytest.approx(0.0, abs=1e-8 * A)
    for c in (0.0, MID, 2.9e7):
        assert reference_engine.tradability_gap(PriceQuery(c=c, t=0.25)) == pytest.approx(0.0, abs=1e-8 * A)
    gap = reference_engine.gap_surface()
    assert np.all(gap.values >= -1e-6 * A)
    assert np.all(gap.values[-1] >= -1e-6 * A)


def test_indifference_price_tends_to_risk_neutral(reference_payoff):
    """Indifference price approaches pi0 as eta shrinks"""
    distances = []
    for eta in (1e-6, 1e-7, 1e-8):
        model = make_model(eta=eta)
        engine = PricingEngine(BackwardSolver(model, reference_payoff, make_curve(model), SolverConfig(n_steps=1000), delta=1e5))
        engine.solve(SurfaceKind.W, 1.0)
        engine.solve(SurfaceKind.PI0)
        query = PriceQuery(c=MID, t=0.0, k=1.0)
        distances.append(abs(engine.indifference_price(query) - engine.risk_neutral_price(query)))
    assert distances[0] > distances[1] > distances[2]
