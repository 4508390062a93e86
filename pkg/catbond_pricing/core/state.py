"""
Domain models shared by the engines.

Every model is frozen after validation. Arrays held by surfaces and policies
are marked read-only so one solved surface can be handed to several workers.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PROBABILITY_TOLERANCE = 1e-12
LATTICE_TOLERANCE = 1e-9


def _frozen_array(values: Any, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class SurfaceKind(str, Enum):
    """Which backward equation a surface solves"""
    W = "W"
    G = "g"
    PI0 = "pi0"


class ClaimModel(BaseModel):
    """
    Claims side of the market: per-client intensity, market size, horizon,
    risk aversions and the discrete claim-size law Y.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(alias="lambda", gt=0, description="Per-client claim intensity (1/year)")
    M: float = Field(ge=1, description="Market size (count of clients)")
    T: float = Field(gt=0, description="Horizon (years)")
    eta: float = Field(ge=0, description="Buyer risk aversion (1/currency)")
    beta: float = Field(gt=0, description="Seller risk aversion (1/currency); defaults to eta")
    atoms: Tuple[Tuple[float, float], ...] = Field(description="(size: currency, prob) pairs of Y")

    @model_validator(mode="before")
    @classmethod
    def _default_beta(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("beta") is None:
            data = {key: value for key, value in data.items() if key != "beta"}
            if data.get("eta"):
                data["beta"] = data["eta"]
        return data

    @field_validator("atoms")
    @classmethod
    def _normalize_atoms(cls, atoms: Tuple[Tuple[float, float], ...]) -> Tuple[Tuple[float, float], ...]:
        if not atoms:
            raise ValueError("claim-size law needs at least one atom")
        sizes = [float(size) for size, _ in atoms]
        probs = [float(prob) for _, prob in atoms]
        if any(not math.isfinite(size) or size <= 0 for size in sizes):
            raise ValueError("all claim sizes must be positive and finite")
        if any(not math.isfinite(prob) or prob <= 0 for prob in probs):
            raise ValueError("all claim probabilities must be positive")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"claim probabilities sum to {total!r}, expected 1 within {PROBABILITY_TOLERANCE}")
        return tuple((size, prob / total) for size, prob in zip(sizes, probs))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([size for size, _ in self.atoms], dtype=float)

    @property
    def probs(self) -> np.ndarray:
        return np.array([prob for _, prob in self.atoms], dtype=float)

    @property
    def jump_rate(self) -> float:
        """Arrival rate of index jumps, lambda * M"""
        return self.lam * self.M

    def multiples(self, delta: float) -> np.ndarray:
        """Atom sizes in units of the grid step; raises if a size is off-lattice."""
        if delta <= 0:
            raise ValueError("grid step must be positive")
        ratios = self.sizes / delta
        rounded = np.rint(ratios)
        if np.any(rounded < 1) or np.any(np.abs(ratios - rounded) > LATTICE_TOLERANCE * np.maximum(1.0, ratios)):
            raise ValueError(f"claim sizes {self.sizes.tolist()} are not positive multiples of delta={delta:g}")
        return rounded.astype(int)


class Payoff(BaseModel):
    """
    Bounded payoff psi(C_T), constant (= A) at and above the cutoff L.

    ``spread``: max(0, min(c - K, L - K)).
    ``tabulated``: node values on [0, L] with spacing ``step``, linear in between.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["spread", "tabulated"]
    K: Optional[float] = Field(default=None, ge=0, description="Strike (currency), spread only")
    L: float = Field(gt=0, description="Cutoff (currency)")
    step: Optional[float] = Field(default=None, gt=0, description="Tabulation step (currency)")
    values: Optional[Tuple[float, ...]] = Field(default=None, description="Tabulated values (currency)")

    @model_validator(mode="after")
    def _check_kind(self) -> "Payoff":
        if self.kind == "spread":
            if self.K is None or not self.K < self.L:
                raise ValueError("spread payoff needs 0 <= K < L")
        else:
            if self.step is None or self.values is None or len(self.values) < 2:
                raise ValueError("tabulated payoff needs a step and at least two values")
            if not all(math.isfinite(v) for v in self.values):
                raise ValueError("tabulated payoff values must be finite")
            span = (len(self.values) - 1) * self.step
            if abs(span - self.L) > LATTICE_TOLERANCE * self.L:
                raise ValueError(f"tabulated values span {span:g}, but cutoff L={self.L:g}")
        return self

    @classmethod
    def spread(cls, K: float, L: float) -> "Payoff":
        return cls(kind="spread", K=K, L=L)

    @classmethod
    def tabulated(cls, step: float, values: List[float]) -> "Payoff":
        return cls(kind="tabulated", step=step, values=tuple(values), L=step * (len(values) - 1))

    @property
    def A(self) -> float:
        """Tail level psi(c) for c >= L"""
        if self.kind == "spread":
            return self.L - self.K
        return self.values[-1]

    def evaluate(self, c: Any) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.kind == "spread":
            out = np.clip(c - self.K, 0.0, self.L - self.K)
        else:
            grid = np.arange(len(self.values)) * self.step
            out = np.interp(c, grid, np.asarray(self.values))
        return np.where(c >= self.L, self.A, out)


class Lattice(BaseModel):
    """Nodes c_i = i * delta on [0, L] plus the claim law expressed in steps."""

    model_config = ConfigDict(frozen=True)

    delta: float = Field(gt=0)
    n_nodes: int = Field(ge=2)
    offsets: Tuple[int, ...]
    probs: Tuple[float, ...]

    @classmethod
    def build(cls, model: ClaimModel, payoff: Payoff, delta: float) -> "Lattice":
        offsets = model.multiples(delta)
        intervals = payoff.L / delta
        if abs(intervals - round(intervals)) > LATTICE_TOLERANCE * max(1.0, intervals):
            raise ValueError(f"cutoff L={payoff.L:g} is not a multiple of delta={delta:g}")
        return cls(
            delta=delta,
            n_nodes=int(round(intervals)) + 1,
            offsets=tuple(int(o) for o in offsets),
            probs=tuple(model.probs.tolist()),
        )

    @property
    def cutoff(self) -> float:
        return (self.n_nodes - 1) * self.delta

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.delta

    def index_of(self, c: Any) -> np.ndarray:
        """Snap c down to its node; indices >= n_nodes - 1 denote the tail."""
        c = np.asarray(c, dtype=float)
        index = np.clip(np.floor(c / self.delta + LATTICE_TOLERANCE), 0, self.n_nodes - 1)
        return index.astype(int)


class TailRule(BaseModel):
    """Closed-form value for c >= L: level + drift * (horizon - t)"""

    model_config = ConfigDict(frozen=True)

    level: float
    drift: float = 0.0
    horizon: float

    def value(self, t: float) -> float:
        return self.level + self.drift * (self.horizon - t)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_steps: int = Field(default=2000, ge=100, description="RK4 step count")
    store_every: Optional[int] = Field(default=None, ge=1, description="Slice retention stride")
    tol_check: float = Field(default=0.0, ge=0, description="Terminal residual tolerance")

    @property
    def stride(self) -> int:
        if self.store_every is not None:
            return self.store_every
        return max(1, self.n_steps // 100)


class ValueSurface(BaseModel):
    """Solved values of W, g or pi^0 on lattice nodes at stored time slices (descending from T)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: Lattice
    kind: SurfaceKind
    k: float
    times: np.ndarray
    values: np.ndarray
    tail: TailRule
    kappa: float = 0.0  # no-derivative drift of W; zero for g and pi^0

    @field_validator("times", mode="before")
    @classmethod
    def _times(cls, v: Any) -> np.ndarray:
        times = _frozen_array(v, 1)
        if times.size > 1 and np.any(np.diff(times) >= 0):
            raise ValueError("surface times must be strictly decreasing")
        return times

    @field_validator("values", mode="before")
    @classmethod
    def _values(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, 2)

    @model_validator(mode="after")
    def _check_shape(self) -> "ValueSurface":
        if self.values.shape != (self.times.size, self.lattice.n_nodes):
            raise ValueError(f"values shape {self.values.shape} does not match times x nodes")
        return self

    @property
    def horizon(self) -> float:
        return self.tail.horizon

    def slice_at(self, t: float) -> np.ndarray:
        """Node values at time t, linear in t between stored slices."""
        if not (self.times[-1] - 1e-12 <= t <= self.times[0] + 1e-12):
            raise ValueError(f"t={t} outside stored range [{self.times[-1]}, {self.times[0]}]")
        t = min(max(t, float(self.times[-1])), float(self.times[0]))
        ascending = self.times[::-1]
        upper = int(np.searchsorted(ascending, t, side="left"))
        upper = min(max(upper, 0), ascending.size - 1)
        if ascending[upper] == t or upper == 0:
            return np.array(self.values[self.times.size - 1 - upper])
        lower = upper - 1
        t0, t1 = ascending[lower], ascending[upper]
        w = (t - t0) / (t1 - t0)
        v0 = self.values[self.times.size - 1 - lower]
        v1 = self.values[self.times.size - 1 - upper]
        return (1.0 - w) * v0 + w * v1


class PriceQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float = Field(ge=0, description="Index level (currency)")
    t: float = Field(ge=0, description="Valuation time (years)")
    k: float = Field(default=1.0, description="Quantity (signed, unitless)")


class MuResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    argmax: float


class DemandValidation(BaseModel):
    passed: bool
    violations: List[str] = Field(default_factory=list)


class ConstantPolicy(BaseModel):
    """theta(c, t) = theta everywhere; only re-evaluated at jumps."""

    model_config = ConfigDict(frozen=True)

    theta: float

    @property
    def grid(self) -> np.ndarray:
        return np.empty(0)

    def loading(self, c: Any, t: Any) -> np.ndarray:
        return np.full(np.shape(c), self.theta, dtype=float)

    def shifted(self, shift: float, lower: float, upper: float) -> "ConstantPolicy":
        return ConstantPolicy(theta=float(np.clip(self.theta + shift, lower, upper)))


class FeedbackPolicy(BaseModel):
    """
    Loading theta(c, t) tabulated on lattice nodes at a time grid, piecewise
    constant in t (slice at the latest grid time <= t) and snapped down in c.
    No range constraint: used for raw, unclamped controls.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    delta: float = Field(gt=0)
    tail_loading: float

    @field_validator("times", mode="before")
    @classmethod
    def _times(cls, v: Any) -> np.ndarray:
        times = _frozen_array(v, 1)
        if times.size > 1 and np.any(np.diff(times) >= 0):
            raise ValueError("policy times must be strictly decreasing")
        return times

    @field_validator("values", mode="before")
    @classmethod
    def _values(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, 2)

    @property
    def n_nodes(self) -> int:
        return int(self.values.shape[1])

    @property
    def grid(self) -> np.ndarray:
        return self.times[::-1]

    def loading(self, c: Any, t: Any) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        index = np.clip(np.floor(c / self.delta + LATTICE_TOLERANCE), 0, self.n_nodes - 1).astype(int)
        ascending = self.grid
        slot = np.searchsorted(ascending, np.asarray(t, dtype=float) + 1e-12, side="right") - 1
        row = self.times.size - 1 - np.clip(slot, 0, ascending.size - 1)
        inside = index < self.n_nodes - 1
        picked = self.values[np.broadcast_to(row, c.shape), index]
        return np.where(inside, picked, self.tail_loading)

    def shifted(self, shift: float, lower: float, upper: float) -> "FeedbackPolicy":
        return FeedbackPolicy(
            times=self.times,
            values=np.clip(self.values + shift, lower, upper),
            delta=self.delta,
            tail_loading=float(np.clip(self.tail_loading + shift, lower, upper)),
        )

    def clamped(self, m: float) -> "PolicySurface":
        return PolicySurface(
            times=self.times,
            values=np.clip(self.values, 0.0, m),
            delta=self.delta,
            tail_loading=float(np.clip(self.tail_loading, 0.0, m)),
            m=m,
        )


class PolicySurface(FeedbackPolicy):
    """Optimal loading theta*(c, t) = gamma(W_bar(c, t)); every entry in [0, m]."""

    m: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_range(self) -> "PolicySurface":
        if np.any(self.values < 0.0) or np.any(self.values > self.m) or not 0.0 <= self.tail_loading <= self.m:
            raise ValueError(f"policy loadings must lie in [0, {self.m}]")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_paths: int = Field(default=100_000, ge=1, description="Number of simulated paths")
    seed: int = Field(default=20_240_601, ge=0, lt=2**64, description="Root seed (64-bit)")
    chunk_size: int = Field(default=50_000, ge=1, description="Paths per RNG stream")
    n_workers: int = Field(default=1, ge=1, description="Worker processes")

    def chunks(self) -> List[int]:
        sizes = [self.chunk_size] * (self.n_paths // self.chunk_size)
        if self.n_paths % self.chunk_size:
            sizes.append(self.n_paths % self.chunk_size)
        return sizes


class IndexPathSet(BaseModel):
    """Ragged compound Poisson paths; path i owns entries offsets[i]:offsets[i+1]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    from_c: float
    from_t: float
    n_jumps: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    c_T: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.n_jumps.size)


class WealthStatistics(BaseModel):
    """Per-path outcomes of a wealth simulation for one or more coupled policies."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x_T: np.ndarray
    c_T: np.ndarray
    n_jumps: np.ndarray
    n_owned: np.ndarray
    min_segment_gap: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.x_T.mean(axis=1)

    @property
    def std_error(self) -> np.ndarray:
        n = self.x_T.shape[1]
        if n < 2:
            return np.full(self.x_T.shape[0], np.inf)
        return self.x_T.std(axis=1, ddof=1) / math.sqrt(n)


class MonteCarloEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    estimate: float
    std_error: float
    n_paths: int


class VerificationRow(BaseModel):
    quantity: str
    estimate: float
    std_error: float
    analytic: float
    z_score: float

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= 3.0


class VerificationReport(BaseModel):
    rows: List[VerificationRow] = Field(default_factory=list)
    implied_w: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def failing(self) -> List[VerificationRow]:
        return [row for row in self.rows if not row.passed]
