"""Incident-to-control mapping: catalog, mining, training, triage, gateway."""

from .errors import AttackMapperError

__version__ = "0.1.0"

__all__ = ["AttackMapperError", "__version__"]
