"""Output helpers"""

from .reporting import plot_surface_svg, surface_frame, verification_frame, write_csv

__all__ = ["plot_surface_svg", "surface_frame", "verification_frame", "write_csv"]
