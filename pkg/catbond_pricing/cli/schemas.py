"""CLI output records."""

from typing import List

from pydantic import BaseModel


class DenominationRecord(BaseModel):
    N: int
    value: float
    tradable: bool


class PriceRecord(BaseModel):
    c: float
    t: float
    k: float
    kappa: float
    buyer_price: float
    seller_price: float
    buyer_below_seller: bool
    certainty_equivalent: float
    denominations: List[DenominationRecord]
    risk_neutral: float
    tradability_gap: float
    optimal_loading: float
