"""Six-degree-of-freedom aircraft landing trajectory optimization by sequential convex programming."""

__version__ = "0.1.0"
