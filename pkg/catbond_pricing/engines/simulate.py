"""
Monte-Carlo engine for the index and the controlled wealth process.

Paths are drawn in chunks, each chunk from its own counter-based stream
spawned off the root seed, so results only depend on
(seed, chunk_size, n_paths) and never on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from catbond_pricing.core.state import (
    ClaimModel,
    ConstantPolicy,
    FeedbackPolicy,
    IndexPathSet,
    Lattice,
    MonteCarloEstimate,
    Payoff,
    SimConfig,
    ValueSurface,
    VerificationReport,
    VerificationRow,
    WealthStatistics,
)
from catbond_pricing.engines.demand import DemandCurve
from catbond_pricing.engines.solver import eval_surface

logger = logging.getLogger(__name__)

Policy = Union[ConstantPolicy, FeedbackPolicy]

PERTURBATION = 0.1
MAX_POISSON_TERMS = 80


def chunk_generators(config: SimConfig) -> List[Tuple[int, np.random.SeedSequence]]:
    sizes = config.chunks()
    children = np.random.SeedSequence(config.seed).spawn(len(sizes))
    return list(zip(sizes, children))


def _generator(seed: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _check_start(model: ClaimModel, from_t: float) -> None:
    if not 0.0 <= from_t <= model.T:
        raise ValueError(f"start time {from_t} is outside [0, {model.T}]")


def _draw_index(rng: np.random.Generator, model: ClaimModel, from_c: float, from_t: float, n: int):
    horizon = model.T - from_t
    n_jumps = rng.poisson(model.jump_rate * horizon, size=n)
    owner = np.repeat(np.arange(n), n_jumps)
    times = from_t + rng.uniform(0.0, horizon, size=owner.size)
    times = times[np.lexsort((times, owner))]
    sizes = rng.choice(model.sizes, size=owner.size, p=model.probs)
    offsets = np.concatenate([[0], np.cumsum(n_jumps)])
    c_T = from_c + np.bincount(owner, weights=sizes, minlength=n)
    return n_jumps, offsets, times, sizes, c_T


def sample_index_paths(model: ClaimModel, from_c: float, from_t: float, config: SimConfig) -> IndexPathSet:
    """Compound Poisson paths of the index on (from_t, T], jump rate lambda * M."""
    _check_start(model, from_t)
    parts = []
    for n, seed in chunk_generators(config):
        parts.append(_draw_index(_generator(seed), model, from_c, from_t, n))
    n_jumps = np.concatenate([p[0] for p in parts])
    return IndexPathSet(
        from_c=from_c,
        from_t=from_t,
        n_jumps=n_jumps,
        offsets=np.concatenate([[0], np.cumsum(n_jumps)]),
        times=np.concatenate([p[2] for p in parts]),
        sizes=np.concatenate([p[3] for p in parts]),
        c_T=np.concatenate([p[4] for p in parts]),
    )


def _event_grid(policies: Sequence[Policy], from_t: float, T: float) -> np.ndarray:
    grids = [np.asarray(p.grid, dtype=float) for p in policies]
    grid = np.unique(np.concatenate(grids)) if grids else np.empty(0)
    return grid[(grid > from_t) & (grid < T)]


def _simulate_chunk(
    model: ClaimModel,
    curve: DemandCurve,
    policies: Sequence[Policy],
    x0: float,
    from_c: float,
    from_t: float,
    n: int,
    seed: np.random.SeedSequence,
):
    rng = _generator(seed)
    n_jumps, offsets, times, sizes, c_T = _draw_index(rng, model, from_c, from_t, n)
    marks = rng.uniform(size=times.size)
    grid = _event_grid(policies, from_t, model.T)
    P = len(policies)

    def flows(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        q = curve.q(theta)
        return curve.a * (1.0 + theta) * q, q / curve.M

    s = np.full(n, from_t)
    c = np.full(n, float(from_c))
    x = np.full((P, n), float(x0))
    owned = np.zeros((P, n), dtype=int)
    gap = np.full((P, n), np.inf)
    jump_ptr = np.zeros(n, dtype=int)
    grid_ptr = np.zeros(n, dtype=int)
    theta = np.vstack([p.loading(c, s) for p in policies])
    rate, share = flows(theta)
    active = np.ones(n, dtype=bool)

    while active.any():
        idx = np.flatnonzero(active)
        pos = offsets[idx] + jump_ptr[idx]
        has_jump = jump_ptr[idx] < n_jumps[idx]
        t_jump = np.full(idx.size, np.inf)
        t_jump[has_jump] = times[pos[has_jump]]
        has_grid = grid_ptr[idx] < grid.size
        t_grid = np.full(idx.size, np.inf)
        t_grid[has_grid] = grid[grid_ptr[idx][has_grid]]
        t_next = np.minimum(np.minimum(t_jump, t_grid), model.T)

        increment = rate[:, idx] * (t_next - s[idx])
        x[:, idx] += increment
        gap[:, idx] = np.minimum(gap[:, idx], increment - increment[0])
        s[idx] = t_next

        is_jump = has_jump & (t_jump <= t_next)
        if is_jump.any():
            j, where = idx[is_jump], pos[is_jump]
            hit = marks[where][None, :] <= share[:, j]
            x[:, j] -= hit * sizes[where][None, :]
            owned[:, j] += hit
            c[j] += sizes[where]
            jump_ptr[j] += 1
        is_grid = has_grid & (t_grid <= t_next)
        grid_ptr[idx[is_grid]] += 1

        finished = t_next >= model.T
        active[idx[finished]] = False
        moved = idx[~finished]
        if moved.size:
            theta[:, moved] = np.vstack([p.loading(c[moved], s[moved]) for p in policies])
            rate[:, moved], share[:, moved] = flows(theta[:, moved])

    return x, c_T, n_jumps, owned, gap


def simulate_wealth(
    model: ClaimModel,
    curve: DemandCurve,
    policy: Union[Policy, Sequence[Policy]],
    x0: float,
    from_c: float,
    from_t: float,
    config: SimConfig,
) -> WealthStatistics:
    """
    Simulate X under one policy, or several policies coupled on the same
    index paths and ownership uniforms (row p of x_T belongs to policy p).

    The loading is re-evaluated at the policies' grid times and at jumps;
    in between the premium flow a * (1 + theta) * q(theta) is integrated
    exactly. A jump is owned when U <= q(theta) / M for the loading in force
    just before it.
    """
    _check_start(model, from_t)
    policies = [policy] if isinstance(policy, (ConstantPolicy, FeedbackPolicy)) else list(policy)
    if not policies:
        raise ValueError("at least one policy is required")
    plan = chunk_generators(config)
    logger.info(f"Simulating {config.n_paths} paths in {len(plan)} chunks for {len(policies)} policies")
    args = [(model, curve, policies, x0, from_c, from_t, n, seed) for n, seed in plan]

    if config.n_workers <= 1 or len(plan) == 1:
        results = [_simulate_chunk(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=config.n_workers) as executor:
            results = list(executor.map(_simulate_chunk, *zip(*args)))
    for index, result in enumerate(results):
        logger.debug(f"Chunk {index}: {result[1].size} paths, {int(result[2].sum())} jumps")

    return WealthStatistics(
        x_T=np.concatenate([r[0] for r in results], axis=1),
        c_T=np.concatenate([r[1] for r in results]),
        n_jumps=np.concatenate([r[2] for r in results]),
        n_owned=np.concatenate([r[3] for r in results], axis=1),
        min_segment_gap=np.concatenate([r[4] for r in results], axis=1),
    )


def clamp_dominance(
    model: ClaimModel,
    curve: DemandCurve,
    policy: FeedbackPolicy,
    from_c: float,
    from_t: float,
    config: SimConfig,
) -> WealthStatistics:
    """Raw policy (row 0) and its clamp to [0, m] (row 1) on coupled paths."""
    return simulate_wealth(model, curve, [policy, policy.clamped(curve.m)], 0.0, from_c, from_t, config)


def _mean_and_error(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    if n < 2:
        return float(values.mean()), math.inf
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def verify_value_function(
    model: ClaimModel,
    curve: DemandCurve,
    payoff: Payoff,
    k: float,
    w_surface: ValueSurface,
    policy: Policy,
    x0: float,
    from_c: float,
    config: SimConfig,
) -> VerificationReport:
    """
    Expected utility -exp(-eta * (X_T + k * psi(C_T))) under the optimal
    policy against -exp(-eta * x0) * exp(-eta * W(c, 0, k)), plus policies
    shifted by +-0.1 on the same paths which must not do better.
    """
    eta = model.eta
    up = policy.shifted(PERTURBATION, 0.0, curve.m)
    down = policy.shifted(-PERTURBATION, 0.0, curve.m)
    stats = simulate_wealth(model, curve, [policy, up, down], x0, from_c, 0.0, config)
    utility = -np.exp(-eta * (stats.x_T + k * payoff.evaluate(stats.c_T)[None, :]))

    w = eval_surface(w_surface, from_c, 0.0)
    analytic = -math.exp(-eta * x0) * math.exp(-eta * w)
    estimate, error = _mean_and_error(utility[0])
    z = (estimate - analytic) / error if 0.0 < error < math.inf else 0.0
    label = f"c={from_c:g},k={k:g}"
    rows = [VerificationRow(quantity=f"utility({label})", estimate=estimate, std_error=error, analytic=analytic, z_score=z)]

    for name, row in (("up", 1), ("down", 2)):
        shifted_estimate, shifted_error = _mean_and_error(utility[row])
        _, paired_error = _mean_and_error(utility[row] - utility[0])
        excess = shifted_estimate - estimate
        z_shift = max(0.0, excess / paired_error) if 0.0 < paired_error < math.inf else 0.0
        rows.append(
            VerificationRow(
                quantity=f"perturbed_{name}({label})",
                estimate=shifted_estimate,
                std_error=shifted_error,
                analytic=estimate,
                z_score=z_shift,
            )
        )

    implied = -math.log(-estimate) / eta - x0 if estimate < 0 else None
    report = VerificationReport(rows=rows, implied_w=implied)
    logger.info(f"Value function check at {label}: z={z:.2f}, implied W={implied}, analytic W={w:.6g}")
    return report


def mc_risk_neutral(model: ClaimModel, payoff: Payoff, from_c: float, from_t: float, config: SimConfig) -> MonteCarloEstimate:
    """Plain Monte-Carlo mean of psi(C_T) given C_t = from_c."""
    paths = sample_index_paths(model, from_c, from_t, config)
    estimate, error = _mean_and_error(payoff.evaluate(paths.c_T))
    return MonteCarloEstimate(estimate=estimate, std_error=error, n_paths=paths.n_paths)


def terminal_index_law(model: ClaimModel, lattice: Lattice, t: float, max_jumps: int = MAX_POISSON_TERMS) -> np.ndarray:
    """
    Law of C_T - C_t in grid steps: a Poisson mixture of n-fold convolutions of
    the claim law. Index n_nodes - 1 collects every increment reaching L.
    """
    _check_start(model, t)
    n = lattice.n_nodes
    single = np.zeros(n)
    for offset, prob in zip(lattice.offsets, lattice.probs):
        single[min(offset, n - 1)] += prob
    weights = poisson.pmf(np.arange(max_jumps + 1), model.jump_rate * (model.T - t))

    law = np.zeros(n)
    current = np.zeros(n)
    current[0] = 1.0
    for weight in weights:
        law += weight * current
        full = np.convolve(current, single)
        current = full[:n].copy()
        current[n - 1] += full[n:].sum()
    return law


def _payoff_table(payoff: Payoff, lattice: Lattice) -> np.ndarray:
    n = lattice.n_nodes
    index = np.minimum(np.arange(n)[:, None] + np.arange(n)[None, :], n - 1)
    return payoff.evaluate(lattice.nodes)[index]


def convolution_risk_neutral(
    model: ClaimModel, payoff: Payoff, lattice: Lattice, t: float, max_jumps: int = MAX_POISSON_TERMS
) -> np.ndarray:
    """pi0(c_i, t) for every node from the distribution of C_T directly."""
    law = terminal_index_law(model, lattice, t, max_jumps)
    return _payoff_table(payoff, lattice) @ law


def convolution_certainty_equivalent(
    model: ClaimModel,
    payoff: Payoff,
    lattice: Lattice,
    t: float,
    k: float,
    max_jumps: int = MAX_POISSON_TERMS,
) -> np.ndarray:
    """pi_s(c_i, t, k) = (1 / beta) * log E exp(beta * k * psi(C_T)) for every node."""
    if k == 0.0:
        return np.zeros(lattice.n_nodes)
    beta = model.beta
    law = terminal_index_law(model, lattice, t, max_jumps)
    exponent = beta * k * _payoff_table(payoff, lattice)
    return logsumexp(exponent, b=law[None, :], axis=1) / beta


def poisson_mean(model: ClaimModel, from_t: float, rate_share: float = 1.0) -> float:
    """Expected number of jumps on (from_t, T] when a share of them is kept."""
    _check_start(model, from_t)
    return model.jump_rate * rate_share * (model.T - from_t)


def owned_count_law(model: ClaimModel, share: float, from_t: float, support: Optional[int] = None) -> np.ndarray:
    """Poisson pmf of the owned-claims count under a constant market share."""
    mean = poisson_mean(model, from_t, share)
    top = support if support is not None else int(poisson.ppf(1.0 - 1e-12, mean)) + 1
    return poisson.pmf(np.arange(top + 1), mean)
