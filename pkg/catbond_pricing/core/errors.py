"""
Exceptions raised by the engines.

Invariant violations on construction surface as pydantic ``ValidationError``;
everything that goes wrong while computing lands here.
"""

from __future__ import annotations

from typing import Optional


class PricingError(RuntimeError):
    """Base class for computation failures"""


class NumericalBreakdownError(PricingError):
    """Raised when an integration or transform leaves the floating range."""

    def __init__(self, message: str, t: Optional[float] = None, node: Optional[int] = None):
        location = []
        if t is not None:
            location.append(f"t={t:.6g}")
        if node is not None:
            location.append(f"node={node}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.t = t
        self.node = node


class SurfaceMissingError(PricingError, KeyError):
    def __init__(self, kind: str, k: float):
        super().__init__(f"No {kind} surface solved for k={k:g}; solve it before querying")
        self.kind = kind
        self.k = k

    def __str__(self) -> str:
        return self.args[0]
