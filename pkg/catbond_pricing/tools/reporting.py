"""
CSV and SVG output.

CSV files are locale independent: dot decimals, "\\n" line endings and
scientific notation with 10 significant digits.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from catbond_pricing.core.state import ValueSurface, VerificationReport  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9e"
VERIFICATION_COLUMNS = ["quantity", "estimate", "std_error", "analytic", "z_score"]


def surface_frame(surface: ValueSurface) -> pd.DataFrame:
    """
    Flatten a surface into one row per (time slice, node).

    Args:
        surface: Solved or derived surface

    Returns:
        DataFrame with columns c, t, value; slices in stored order (t descending)
    """
    nodes = surface.lattice.nodes
    times = surface.times
    return pd.DataFrame(
        {
            "c": np.tile(nodes, times.size),
            "t": np.repeat(times, nodes.size),
            "value": surface.values.reshape(-1),
        }
    )


def verification_frame(report: VerificationReport) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in report.rows], columns=VERIFICATION_COLUMNS)


def write_csv(frame: pd.DataFrame, path: Optional[Path] = None) -> None:
    """
    Write a frame as CSV to a file, or to stdout when no path is given.

    Raises:
        OSError: the destination cannot be written
    """
    target = sys.stdout if path is None else Path(path)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if path is not None:
        logger.info(f"Wrote {len(frame)} rows to {path}")


def plot_surface_svg(surface: ValueSurface, path: Path, ylabel: str, in_millions: bool = True) -> None:
    """
    One polyline per stored slice; lighter gray for earlier times. The index
    axis is in millions, and so is the value axis unless ``in_millions`` is off.
    """
    horizon = surface.horizon
    scale = 1e6 if in_millions else 1.0
    fig, ax = plt.subplots(figsize=(8, 5))
    try:
        for t, values in zip(surface.times, surface.values):
            shade = 0.25 + 0.75 * (t / horizon if horizon > 0 else 1.0)
            ax.plot(surface.lattice.nodes / 1e6, values / scale, color=plt.cm.Greys(shade), linewidth=0.8)
        ax.set_xlabel("index level (millions)")
        ax.set_ylabel(f"{ylabel} (millions)" if in_millions else ylabel)
        ax.set_xlim(0.0, surface.lattice.cutoff / 1e6)
        fig.tight_layout()
        fig.savefig(Path(path), format="svg")
    finally:
        plt.close(fig)
    logger.info(f"Wrote {surface.times.size} slices to {path}")
