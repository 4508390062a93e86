"""Command-line surface"""

from .commands import cmd_price, cmd_surface, cmd_verify

__all__ = ["cmd_price", "cmd_surface", "cmd_verify"]
