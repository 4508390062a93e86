"""Subcommand implementations; each returns the process exit code."""

from __future__ import annotations

import logging
import sys
from typing import List, Optional

from catbond_pricing.cli.schemas import DenominationRecord, PriceRecord
from catbond_pricing.config import RunConfig
from catbond_pricing.core.session import PricingSession
from catbond_pricing.core.state import PriceQuery, SurfaceKind, TailRule, ValueSurface, VerificationReport
from catbond_pricing.tools.reporting import (
    plot_surface_svg,
    surface_frame,
    verification_frame,
    write_csv,
)

logger = logging.getLogger(__name__)

SURFACE_KINDS = ("price", "loading", "gap", "pi0")
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2


def price_record(session: PricingSession, query: PriceQuery) -> PriceRecord:
    session.prepare_price(query)
    engine = session.engine
    buyer = engine.indifference_price(query, "buy")
    seller = engine.indifference_price(query, "sell")
    unit_buyer = engine.indifference_price(PriceQuery(c=query.c, t=query.t, k=1.0), "buy")
    denominations = session.config.output.denominations
    limits = engine.denomination_limit(query, denominations)
    return PriceRecord(
        c=query.c,
        t=query.t,
        k=query.k,
        kappa=engine.kappa,
        buyer_price=buyer,
        seller_price=seller,
        buyer_below_seller=buyer < seller,
        certainty_equivalent=engine.certainty_equivalence_seller(query),
        denominations=[
            DenominationRecord(N=n, value=value, tradable=unit_buyer >= value) for n, value in zip(denominations, limits)
        ],
        risk_neutral=engine.risk_neutral_price(query),
        tradability_gap=engine.tradability_gap(query),
        optimal_loading=engine.optimal_loading(query),
    )


def cmd_price(config: RunConfig, c: float, t: float, k: float) -> int:
    record = price_record(PricingSession(config), PriceQuery(c=c, t=t, k=k))
    sys.stdout.write(record.model_dump_json(indent=2) + "\n")
    return EXIT_OK


def surface_for(session: PricingSession, kind: str, k: float) -> ValueSurface:
    engine = session.engine
    if kind == "price":
        session.ensure([(SurfaceKind.W, k)])
        return engine.price_surface(k)
    if kind == "loading":
        session.ensure([(SurfaceKind.W, k)])
        policy = engine.policy_surface(k)
        return ValueSurface(
            lattice=session.solver.lattice,
            kind=SurfaceKind.W,
            k=k,
            times=policy.times,
            values=policy.values,
            tail=TailRule(level=policy.tail_loading, horizon=session.model.T),
        )
    if kind == "gap":
        session.ensure([(SurfaceKind.W, 1.0), (SurfaceKind.PI0, 1.0)])
        return engine.gap_surface()
    if kind == "pi0":
        return session.ensure([(SurfaceKind.PI0, 1.0)])[0]
    raise ValueError(f"unknown surface kind {kind!r}; expected one of {', '.join(SURFACE_KINDS)}")


def cmd_surface(config: RunConfig, kind: str, k: float = 1.0) -> int:
    session = PricingSession(config)
    surface = surface_for(session, kind, k)
    write_csv(surface_frame(surface), config.output.csv)
    if config.output.svg is not None:
        labels = {"price": "indifference price", "loading": "risk loading", "gap": "price minus pi0", "pi0": "pi0"}
        plot_surface_svg(surface, config.output.svg, labels[kind], in_millions=kind != "loading")
    return EXIT_OK


def cmd_verify(config: RunConfig, queries: Optional[List[PriceQuery]] = None) -> int:
    session = PricingSession(config)
    queries = queries or config.queries()
    rows = []
    for query in queries:
        rows.extend(session.verify(query).rows)
    combined = VerificationReport(rows=rows)
    write_csv(verification_frame(combined), config.output.csv)
    failing = combined.failing()
    if failing:
        for row in failing:
            sys.stderr.write(f"FAILED {row.quantity}: estimate={row.estimate:.9e} analytic={row.analytic:.9e} z={row.z_score:.2f}\n")
        logger.warning(f"{len(failing)} of {len(rows)} verification rows exceed |z| <= 3")
        return EXIT_VERIFICATION_FAILED
    return EXIT_OK
