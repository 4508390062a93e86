"""
Run configuration.

A run is described by one JSON document; every block is validated and frozen
on load. Defaults reproduce the worked example shipped in
configs/reference.json.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, JsonConfigSettingsSource, SettingsConfigDict
from typing_extensions import Annotated

from catbond_pricing.core.state import ClaimModel, Payoff, PriceQuery, SimConfig, SolverConfig
from catbond_pricing.engines.claims import fair_premium
from catbond_pricing.engines.demand import (
    DemandCurve,
    HFamilyDemand,
    LinearDemand,
    PowerDemand,
    TabulatedDemand,
)

_BLOCK = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class ModelBlock(BaseModel):
    model_config = _BLOCK

    lam: float = Field(default=0.01, alias="lambda", gt=0, description="Per-client claim intensity (1/year)")
    M: float = Field(default=1e4, ge=1, description="Market size (count of clients)")
    T: float = Field(default=0.25, gt=0, description="Horizon (years)")
    eta: float = Field(default=1e-6, ge=0, description="Buyer risk aversion (1/currency)")
    beta: Optional[float] = Field(default=None, gt=0, description="Seller risk aversion (1/currency); eta when omitted")
    x0: float = Field(default=0.0, description="Initial wealth for verification (currency)")
    atoms: List[Tuple[float, float]] = Field(
        default=[(1e5, 0.125), (2e5, 0.375), (3e5, 0.25), (4e5, 0.125), (5e5, 0.125)],
        description="Claim-size law as (size: currency, probability) pairs",
    )


class PayoffBlock(BaseModel):
    model_config = _BLOCK

    type: Literal["spread", "tabulated"] = "spread"
    K: Optional[float] = Field(default=1e7, ge=0, description="Strike (currency), spread only")
    L: Optional[float] = Field(default=3e7, gt=0, description="Cutoff (currency), spread only")
    step: Optional[float] = Field(default=None, gt=0, description="Tabulation step (currency)")
    values: Optional[List[float]] = Field(default=None, description="Payoff at 0, step, 2*step, ... (currency)")


class LinearBlock(BaseModel):
    model_config = _BLOCK

    type: Literal["linear"] = "linear"
    m: float = Field(default=2.0, gt=0, description="Maximal loading (unitless)")


class PowerBlock(BaseModel):
    model_config = _BLOCK

    type: Literal["power"]
    m: float = Field(gt=0, description="Maximal loading (unitless)")
    nu: float = Field(gt=0, description="Exponent (unitless)")


class HFamilyBlock(BaseModel):
    model_config = _BLOCK

    type: Literal["hfamily"]
    m: float = Field(gt=0, description="Maximal loading (unitless)")
    coefficients: List[float] = Field(min_length=1, description="Ascending polynomial coefficients of P")
    scale: Optional[float] = Field(default=None, gt=0, description="Factor of H; normalized to M when omitted")
    tilt: bool = Field(default=True, description="Multiply P by exp(2 xi / (1 + m))")


class TabulatedBlock(BaseModel):
    model_config = _BLOCK

    type: Literal["tabulated"]
    m: float = Field(gt=0, description="Maximal loading (unitless)")
    samples: List[Tuple[float, float]] = Field(min_length=2, description="(theta, clients) pairs spanning [0, m]")


DemandBlock = Annotated[
    Union[LinearBlock, PowerBlock, HFamilyBlock, TabulatedBlock],
    Field(discriminator="type"),
]


class SolverBlock(BaseModel):
    model_config = _BLOCK

    n_steps: int = Field(default=2000, ge=100, description="RK4 steps over [0, T]")
    store_every: Optional[int] = Field(default=None, ge=1, description="Keep every n-th slice; n_steps/100 when omitted")
    delta: Optional[float] = Field(default=None, gt=0, description="Lattice step (currency); smallest claim when omitted")
    tol_check: float = Field(default=0.0, ge=0, description="Allowed terminal residual")


class SimBlock(BaseModel):
    model_config = _BLOCK

    n_paths: int = Field(default=100_000, ge=1, description="Simulated paths (count)")
    seed: int = Field(default=20_240_601, ge=0, lt=2**64, description="Root seed")
    chunk_size: int = Field(default=50_000, ge=1, description="Paths per random stream (count)")
    n_workers: int = Field(default=1, ge=1, description="Parallel workers (count)")


class QueryBlock(BaseModel):
    model_config = _BLOCK

    c: float = Field(ge=0, description="Index level (currency)")
    t: float = Field(default=0.0, ge=0, description="Valuation time (years)")
    k: float = Field(default=1.0, description="Quantity (unitless, signed)")


class OutputBlock(BaseModel):
    model_config = _BLOCK

    csv: Optional[Path] = Field(default=None, description="CSV destination; stdout when omitted")
    svg: Optional[Path] = Field(default=None, description="SVG destination for surface plots")
    denominations: List[int] = Field(default=[1, 10, 100, 1000], description="N values for N * pi_s(1/N)")
    queries: List[QueryBlock] = Field(
        default=[QueryBlock(c=1.5e7, t=0.0, k=1.0), QueryBlock(c=1.5e7, t=0.0, k=0.0)],
        description="Points checked by verify",
    )


class RunConfig(BaseSettings):
    """Validated run configuration; environment variables are never read."""

    model_config = SettingsConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    model: ModelBlock = ModelBlock()
    payoff: PayoffBlock = PayoffBlock()
    demand: DemandBlock = LinearBlock()
    solver: SolverBlock = SolverBlock()
    sim: SimBlock = SimBlock()
    output: OutputBlock = OutputBlock()

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
        return (init_settings,)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        return cls(**JsonConfigSettingsSource(cls, json_file=path)())

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Apply dotted-path overrides such as {"sim.seed": 7} and re-validate."""
        data = self.model_dump(by_alias=True)
        for dotted, value in overrides.items():
            if value is None:
                continue
            block, _, field = dotted.partition(".")
            if block not in data or not field:
                raise ValueError(f"unknown override {dotted!r}")
            data[block][field] = value
        return type(self)(**data)

    def build_model(self) -> ClaimModel:
        block = self.model
        return ClaimModel(
            lam=block.lam,
            M=block.M,
            T=block.T,
            eta=block.eta,
            beta=block.beta,
            atoms=tuple(tuple(atom) for atom in block.atoms),
        )

    def build_payoff(self) -> Payoff:
        block = self.payoff
        if block.type == "spread":
            return Payoff.spread(K=block.K, L=block.L)
        if block.step is None or block.values is None:
            raise ValueError("payoff.step and payoff.values are required for a tabulated payoff")
        return Payoff.tabulated(step=block.step, values=block.values)

    def build_curve(self, model: Optional[ClaimModel] = None) -> DemandCurve:
        model = model or self.build_model()
        block = self.demand
        common = {"m": block.m, "M": model.M, "a": fair_premium(model)}
        if isinstance(block, LinearBlock):
            return LinearDemand(**common)
        if isinstance(block, PowerBlock):
            return PowerDemand(nu=block.nu, **common)
        if isinstance(block, HFamilyBlock):
            return HFamilyDemand(coefficients=tuple(block.coefficients), scale=block.scale, tilt=block.tilt, **common)
        return TabulatedDemand(samples=tuple(tuple(s) for s in block.samples), **common)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(n_steps=self.solver.n_steps, store_every=self.solver.store_every, tol_check=self.solver.tol_check)

    def sim_config(self) -> SimConfig:
        return SimConfig(**self.sim.model_dump())

    def queries(self) -> List[PriceQuery]:
        return [PriceQuery(c=q.c, t=q.t, k=q.k) for q in self.output.queries]
