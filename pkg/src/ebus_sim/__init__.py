"""Battery-electric bus fleet simulation, sizing sweep and cost-of-ownership tools."""

__version__ = "0.1.0"

from . import demand, route  # noqa: E402

__all__ = ["__version__", "demand", "route"]
